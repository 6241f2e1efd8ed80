//! Offset prediction and deformable 3x3 gathering of reference frames.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::conv::ConvSpec;
use crate::nn::ops::pixel_shuffle;
use crate::nn::weights::{run_stack, ConvLayer, WeightStore};
use crate::nn::HIDDEN_CHANNELS;
use crate::tensor::{Plane, Tensor};

/// Kernel slots per output pixel.
pub const TAPS: usize = 9;
pub const OFFSET_CHANNELS: usize = 2 * TAPS;

/// Per-pixel `(dy, dx)` displacements for the nine kernel slots, in full
/// resolution pixels. Channel `2k` is `dy` and `2k + 1` is `dx` for slot `k`;
/// slots are the 3x3 base grid in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetField(Tensor);

impl OffsetField {
    pub fn new(t: Tensor) -> Result<Self> {
        if t.channels() != OFFSET_CHANNELS {
            return Err(Error::shape(
                "offset field",
                &[OFFSET_CHANNELS, t.height(), t.width()],
                &t.shape(),
            ));
        }
        Ok(Self(t))
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self(Tensor::zeros(OFFSET_CHANNELS, height, width))
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    #[inline]
    pub fn dy(&self, slot: usize, r: usize, c: usize) -> f32 {
        self.0.get(2 * slot, r, c)
    }

    #[inline]
    pub fn dx(&self, slot: usize, r: usize, c: usize) -> f32 {
        self.0.get(2 * slot + 1, r, c)
    }
}

/// Four 3x3 convolutions over `[feat_i, feat_ref]` then a 2x pixel shuffle.
#[derive(Debug, Clone)]
pub struct OffsetNet {
    layers: Vec<ConvLayer>,
}

pub const OFFSET_LAYERS: usize = 4;

impl OffsetNet {
    pub fn layer_specs() -> Vec<(String, ConvSpec)> {
        (0..OFFSET_LAYERS)
            .map(|i| {
                let cin = if i == 0 { 2 * HIDDEN_CHANNELS } else { HIDDEN_CHANNELS };
                let cout = if i + 1 == OFFSET_LAYERS { 4 * OFFSET_CHANNELS } else { HIDDEN_CHANNELS };
                (format!("offset.{i}"), ConvSpec::same(cin, cout, 3))
            })
            .collect()
    }

    pub fn from_store(store: &WeightStore) -> Result<Self> {
        let layers = Self::layer_specs()
            .into_iter()
            .map(|(name, spec)| ConvLayer::from_store(store, &name, spec))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    /// Offsets at twice the feature resolution.
    pub fn forward(&self, feat_i: &Tensor, feat_ref: &Tensor) -> Result<OffsetField> {
        if feat_i.shape() != feat_ref.shape() {
            return Err(Error::shape("reference features", &feat_i.shape(), &feat_ref.shape()));
        }
        if feat_i.channels() != HIDDEN_CHANNELS {
            return Err(Error::shape(
                "features",
                &[HIDDEN_CHANNELS, feat_i.height(), feat_i.width()],
                &feat_i.shape(),
            ));
        }
        let x = Tensor::concat(&[feat_i, feat_ref])?;
        let y = run_stack(&self.layers, &x)?;
        OffsetField::new(pixel_shuffle(&y, 2)?)
    }
}

pub fn predict_offsets(feat_i: &Tensor, feat_ref: &Tensor, weights: &WeightStore) -> Result<OffsetField> {
    OffsetNet::from_store(weights)?.forward(feat_i, feat_ref)
}

/// Gathers nine bilinear samples per pixel into a `3H x 3W` plane.
///
/// Slot `k` of output pixel `(r, c)` samples `reference` at
/// `(r + by + dy, c + bx + dx)` where `(by, bx)` is the slot's position in the
/// 3x3 base grid. Coordinates are clamped into the frame, which matches
/// replicate padding. The offset field may be larger than the reference
/// (odd frame sizes); only its top-left `H x W` window is read.
pub fn deform(reference: &Plane, offsets: &OffsetField) -> Result<Plane> {
    let (h, w) = reference.dims();
    if offsets.height() < h || offsets.width() < w {
        return Err(Error::shape(
            "offset field",
            &[OFFSET_CHANNELS, h, w],
            &offsets.tensor().shape(),
        ));
    }
    let ow = 3 * w;
    let mut out = vec![0.0f32; 9 * h * w];
    let (hmax, wmax) = ((h - 1) as f64, (w - 1) as f64);
    out.par_chunks_mut(3 * ow).enumerate().for_each(|(r, rows)| {
        for c in 0..w {
            for slot in 0..TAPS {
                let by = (slot / 3) as f64 - 1.0;
                let bx = (slot % 3) as f64 - 1.0;
                let y = (r as f64 + by + offsets.dy(slot, r, c) as f64).clamp(0.0, hmax);
                let x = (c as f64 + bx + offsets.dx(slot, r, c) as f64).clamp(0.0, wmax);
                rows[(slot / 3) * ow + 3 * c + slot % 3] = bilinear(reference, y, x);
            }
        }
    });
    Plane::from_vec(3 * h, ow, out)
}

/// Bilinear sample at in-bounds coordinates.
#[inline]
fn bilinear(p: &Plane, y: f64, x: f64) -> f32 {
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let (y0, x0) = (y0 as usize, x0 as usize);
    let y1 = (y0 + 1).min(p.height() - 1);
    let x1 = (x0 + 1).min(p.width() - 1);
    let top = (1.0 - fx) * p.get(y0, x0) as f64 + fx * p.get(y0, x1) as f64;
    let bottom = (1.0 - fx) * p.get(y1, x0) as f64 + fx * p.get(y1, x1) as f64;
    ((1.0 - fy) * top + fy * bottom) as f32
}
