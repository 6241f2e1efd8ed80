//! Spatial compensation and the spatial-temporal LUT enhancement stage.
//!
//! Three residual branches run on quantized inputs:
//!
//! * **S**: four pixels (`p`, right, down, diagonal) of the compensated frame,
//!   averaged over a four-way rotation ensemble.
//! * **T1**: a vertical pixel pair anchored at the centre of each 3x3 patch,
//!   taken from the upsampled current frame and both deformed references,
//!   with the same rotation ensemble.
//! * **T2**: the four corners of each deformed 3x3 patch, one query per
//!   reference, averaged over references.
//!
//! Each branch is either looked up in a [`LookupTable`] or evaluated directly
//! with the [`EnhancementNet`] the table was built from. Both routes share
//! the index gathering and the ensemble reduction, so on lattice-aligned
//! inputs they agree exactly.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lut::{build_lut_batched, LatticeOracle, LookupTable, LutKind, LutSet, LutSpec};
use crate::nn::conv::ConvSpec;
use crate::nn::ops::pixel_shuffle;
use crate::nn::weights::{run_stack, ConvLayer, WeightStore};
use crate::nn::HIDDEN_CHANNELS;
use crate::quant::QuantParams;
use crate::tensor::{Plane, QuantPlane, Raster, Tensor};

pub const COMP_LAYERS: usize = 3;

/// Three 3x3 convolutions on the shared features, 2x pixel shuffle, added to
/// the input frame.
#[derive(Debug, Clone)]
pub struct CompNet {
    layers: Vec<ConvLayer>,
}

impl CompNet {
    pub fn layer_specs() -> Vec<(String, ConvSpec)> {
        (0..COMP_LAYERS)
            .map(|i| {
                let cout = if i + 1 == COMP_LAYERS { 4 } else { HIDDEN_CHANNELS };
                (format!("comp.{i}"), ConvSpec::same(HIDDEN_CHANNELS, cout, 3))
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

    pub fn forward(&self, x: &Plane, feat: &Tensor) -> Result<Plane> {
        let (h, w) = x.dims();
        if feat.height() != h.div_ceil(2) || feat.width() != w.div_ceil(2) {
            return Err(Error::shape(
                "compensation features",
                &[HIDDEN_CHANNELS, h.div_ceil(2), w.div_ceil(2)],
                &feat.shape(),
            ));
        }
        let residual = pixel_shuffle(&run_stack(&self.layers, feat)?, 2)?.plane(0);
        Ok(Plane::from_fn(h, w, |r, c| x.get(r, c) + residual.get(r, c)))
    }
}

pub fn spatial_complement(x: &Plane, feat: &Tensor, weights: &WeightStore) -> Result<Plane> {
    CompNet::from_store(weights)?.forward(x, feat)
}

/// Repeats every sample into a 3x3 block.
pub fn upsample3<T: Copy>(x: &Raster<T>) -> Raster<T> {
    Raster::from_fn(3 * x.height(), 3 * x.width(), |r, c| x.get(r / 3, c / 3))
}

/// S-branch index offsets `(dy, dx)` for each rotation of the ensemble.
pub const S_PATTERNS: [[(isize, isize); 4]; 4] = [
    [(0, 0), (0, 1), (1, 0), (1, 1)],
    [(0, 0), (-1, 0), (0, 1), (-1, 1)],
    [(0, 0), (0, -1), (-1, 0), (-1, -1)],
    [(0, 0), (1, 0), (0, -1), (1, -1)],
];

/// T1-branch pair direction from the patch centre for each rotation.
pub const T1_DIRS: [(isize, isize); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// T2-branch corners of the 3x3 patch, relative to its top-left sample.
pub const T2_CORNERS: [(usize, usize); 4] = [(0, 0), (0, 2), (2, 0), (2, 2)];

/// S patterns of row `r` for the four rotations, pixel-major.
fn s_row(x: &QuantPlane, r: usize, out: &mut Vec<[u8; 4]>) {
    let (h, w) = x.dims();
    let up = x.row(r.saturating_sub(1));
    let mid = x.row(r);
    let down = x.row((r + 1).min(h - 1));
    for c in 0..w {
        let (l, rt) = (c.saturating_sub(1), (c + 1).min(w - 1));
        let p = mid[c] as u8;
        let v = |row: &[i32], i: usize| row[i] as u8;
        out.push([p, v(mid, rt), v(down, c), v(down, rt)]);
        out.push([p, v(up, c), v(mid, rt), v(up, rt)]);
        out.push([p, v(mid, l), v(up, c), v(up, l)]);
        out.push([p, v(down, c), v(mid, l), v(down, l)]);
    }
}

/// T1 patterns of patch row `r` for the four rotations, pixel-major.
fn t1_row(planes: [&QuantPlane; 3], r: usize, out: &mut Vec<[u8; 6]>) {
    let w = planes[0].width() / 3;
    let rows = planes.map(|p| [p.row(3 * r), p.row(3 * r + 1), p.row(3 * r + 2)]);
    for c in 0..w {
        let q = 3 * c + 1;
        for (dy, dx) in T1_DIRS {
            let mut pat = [0u8; 6];
            for (k, [top, mid, bottom]) in rows.iter().enumerate() {
                pat[2 * k] = mid[q] as u8;
                let n = match dy {
                    1 => bottom,
                    -1 => top,
                    _ => mid,
                };
                pat[2 * k + 1] = n[(q as isize + dx) as usize] as u8;
            }
            out.push(pat);
        }
    }
}

/// T2 corner patterns of patch row `r`.
fn t2_row(x: &QuantPlane, r: usize, out: &mut Vec<[u8; 4]>) {
    let (top, bottom) = (x.row(3 * r), x.row(3 * r + 2));
    for c in 0..x.width() / 3 {
        let (a, b) = (3 * c, 3 * c + 2);
        out.push([top[a] as u8, top[b] as u8, bottom[a] as u8, bottom[b] as u8]);
    }
}

/// Mean of the four rotation results. Summation order depends only on the
/// values, so permuting the rotations cannot change the result.
#[inline]
pub fn ensemble_mean(v: [f32; 4]) -> f32 {
    // sorting network on keys that order like `f32::total_cmp`
    let key = |x: f32| {
        let b = x.to_bits() as i32;
        b ^ (((b >> 31) as u32) >> 1) as i32
    };
    let back = |k: i32| f32::from_bits((k ^ (((k >> 31) as u32) >> 1) as i32) as u32);
    let mut k = v.map(key);
    for (a, b) in [(0, 1), (2, 3), (0, 2), (1, 3), (1, 2)] {
        let (lo, hi) = (k[a].min(k[b]), k[a].max(k[b]));
        k[a] = lo;
        k[b] = hi;
    }
    let s = k.map(back);
    ((s[0] + s[1]) + (s[2] + s[3])) * 0.25
}

#[inline]
fn pair_mean(a: f32, b: f32) -> f32 {
    (a + b) * 0.5
}

fn check_indices(x: &QuantPlane, what: &str) -> Result<()> {
    if let Some(i) = x.data().iter().position(|v| !(0..=255).contains(v)) {
        return Err(Error::OutOfRange {
            value: x.data()[i] as i64,
            min: 0,
            max: 255,
            location: format!("{what} ({}, {})", i / x.width(), i % x.width()),
        });
    }
    Ok(())
}

fn check_lut(lut: &LookupTable, kind: LutKind) -> Result<()> {
    let spec = lut.spec();
    if spec.kind != kind || spec.dims != kind.dims() {
        return Err(Error::config(format!(
            "expected a {kind} table with {} dimensions, got {} with {}",
            kind.dims(),
            spec.kind,
            spec.dims
        )));
    }
    Ok(())
}

fn check_up(up: &QuantPlane, h: usize, w: usize, what: &str) -> Result<()> {
    if up.dims() != (3 * h, 3 * w) {
        return Err(Error::shape(what, &[3 * h, 3 * w], &[up.height(), up.width()]));
    }
    Ok(())
}

/// Fills a residual plane row by row in parallel.
fn residual_rows(h: usize, w: usize, f: impl Fn(usize, &mut [f32]) + Sync) -> Plane {
    let mut data = vec![0.0f32; h * w];
    data.par_chunks_mut(w.max(1))
        .enumerate()
        .for_each(|(r, row)| f(r, row));
    Plane::from_vec(h, w, data).expect("residual size")
}

fn ens4(v: &[f32]) -> f32 {
    ensemble_mean([v[0], v[1], v[2], v[3]])
}

/// Looks up a row's patterns as one batch and reduces them per pixel.
fn lut_row<const D: usize>(
    lut: &LookupTable,
    row: &mut [f32],
    per_pixel: usize,
    gather: impl Fn(&mut Vec<[u8; D]>),
    reduce: impl Fn(&[f32]) -> f32,
) {
    let mut points = Vec::with_capacity(row.len() * per_pixel);
    gather(&mut points);
    let mut values = vec![0.0f32; points.len()];
    lut.query_batch(&points, &mut values);
    for (out, v) in row.iter_mut().zip(values.chunks_exact(per_pixel)) {
        *out = reduce(v);
    }
}

/// S-LUT residuals of a quantized `H x W` frame.
pub fn slut_query(x: &QuantPlane, lut: &LookupTable) -> Result<Plane> {
    check_lut(lut, LutKind::S)?;
    check_indices(x, "S-LUT input")?;
    let (h, w) = x.dims();
    Ok(residual_rows(h, w, |r, row| {
        lut_row(lut, row, 4, |p| s_row(x, r, p), ens4)
    }))
}

/// T1-LUT residuals from the upsampled current frame and two deformed
/// references (all `3H x 3W`).
pub fn tlut1_query(
    current_up: &QuantPlane,
    ref1: &QuantPlane,
    ref2: &QuantPlane,
    lut: &LookupTable,
) -> Result<Plane> {
    check_lut(lut, LutKind::T1)?;
    let (uh, uw) = current_up.dims();
    if uh % 3 != 0 || uw % 3 != 0 {
        return Err(Error::config(format!("{uh}x{uw} is not a 3x upsampled plane")));
    }
    let (h, w) = (uh / 3, uw / 3);
    check_up(ref1, h, w, "first deformed reference")?;
    check_up(ref2, h, w, "second deformed reference")?;
    for (p, what) in [(current_up, "T1 current"), (ref1, "T1 ref1"), (ref2, "T1 ref2")] {
        check_indices(p, what)?;
    }
    let planes = [current_up, ref1, ref2];
    Ok(residual_rows(h, w, |r, row| {
        lut_row(lut, row, 4, |p| t1_row(planes, r, p), ens4)
    }))
}

/// T2-LUT residuals of one deformed reference (`3H x 3W`).
pub fn tlut2_query(reference: &QuantPlane, lut: &LookupTable) -> Result<Plane> {
    check_lut(lut, LutKind::T2)?;
    let (uh, uw) = reference.dims();
    if uh % 3 != 0 || uw % 3 != 0 {
        return Err(Error::config(format!("{uh}x{uw} is not a 3x deformed plane")));
    }
    check_indices(reference, "T2 reference")?;
    Ok(residual_rows(uh / 3, uw / 3, |r, row| {
        lut_row(lut, row, 1, |p| t2_row(reference, r, p), |v| v[0])
    }))
}

/// Averages the per-reference T2 residuals.
pub fn tlut2_query_pair(refs: [&QuantPlane; 2], lut: &LookupTable) -> Result<Plane> {
    let a = tlut2_query(refs[0], lut)?;
    let b = tlut2_query(refs[1], lut)?;
    Ok(combine(&a, &b, pair_mean))
}

fn combine(a: &Plane, b: &Plane, f: impl Fn(f32, f32) -> f32) -> Plane {
    Plane::from_vec(
        a.height(),
        a.width(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
    .expect("same dims")
}

/// `x + r_s + (r_t1 + r_t2)`.
pub fn fuse(x: &Plane, r_s: &Plane, r_t1: &Plane, r_t2: &Plane) -> Result<Plane> {
    for (p, what) in [(r_s, "S residual"), (r_t1, "T1 residual"), (r_t2, "T2 residual")] {
        if !p.same_dims(x) {
            return Err(Error::shape(what, &[x.height(), x.width()], &[p.height(), p.width()]));
        }
    }
    let data = x
        .data()
        .iter()
        .zip(r_s.data())
        .zip(r_t1.data().iter().zip(r_t2.data()))
        .map(|((&x, &s), (&t1, &t2))| x + s + (t1 + t2))
        .collect();
    Plane::from_vec(x.height(), x.width(), data)
}

/// Quantized inputs of the enhancement stage for one frame.
#[derive(Debug, Clone, Copy)]
pub struct StageInputs<'a> {
    /// Compensated frame, `H x W`.
    pub current: &'a QuantPlane,
    /// Same frame with every sample repeated 3x3, `3H x 3W`.
    pub current_up: &'a QuantPlane,
    /// Deformed references, `3H x 3W` each.
    pub refs: [&'a QuantPlane; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub s: Plane,
    pub t1: Plane,
    pub t2: Plane,
}

/// All three LUT branches.
pub fn lut_residuals(inputs: &StageInputs<'_>, luts: &LutSet) -> Result<Residuals> {
    Ok(Residuals {
        s: slut_query(inputs.current, &luts.s)?,
        t1: tlut1_query(inputs.current_up, inputs.refs[0], inputs.refs[1], &luts.t1)?,
        t2: tlut2_query_pair(inputs.refs, &luts.t2)?,
    })
}

const LANES: usize = 16;
const MAX_DIMS: usize = 6;

#[derive(Debug, Clone)]
struct Dense {
    out: usize,
    inp: usize,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

/// One enhancement branch: a kind-specific first convolution followed by
/// ten 1x1 convolutions, evaluated on the `D` index pixels of one output
/// sample.
///
/// Inputs are quantizer indices; each slot is multiplied by its quantizer
/// step before entering the network, so the LUT (indexed by integers) and
/// the network (fed dequantized values) describe the same function.
#[derive(Debug, Clone)]
pub struct EnhancementNet {
    kind: LutKind,
    scales: Vec<f32>,
    layers: Vec<Dense>,
}

pub const ENH_TAIL_LAYERS: usize = 10;

impl EnhancementNet {
    pub fn prefix(kind: LutKind) -> &'static str {
        match kind {
            LutKind::S => "enh_s",
            LutKind::T1 => "enh_t1",
            LutKind::T2 => "enh_t2",
        }
    }

    pub fn first_spec(kind: LutKind) -> ConvSpec {
        let base = ConvSpec::same(1, HIDDEN_CHANNELS, 2);
        match kind {
            LutKind::S => base,
            LutKind::T1 => ConvSpec {
                in_channels: 3,
                kernel_w: 1,
                ..base
            },
            LutKind::T2 => ConvSpec {
                dilation: 2,
                ..base
            },
        }
    }

    pub fn layer_specs(kind: LutKind) -> Vec<(String, ConvSpec)> {
        let prefix = Self::prefix(kind);
        let mut specs = vec![(format!("{prefix}.0"), Self::first_spec(kind))];
        for i in 1..=ENH_TAIL_LAYERS {
            let cout = if i == ENH_TAIL_LAYERS { 1 } else { HIDDEN_CHANNELS };
            specs.push((format!("{prefix}.{i}"), ConvSpec::same(HIDDEN_CHANNELS, cout, 1)));
        }
        specs
    }

    pub fn from_store(store: &WeightStore, kind: LutKind, quant: &QuantPair) -> Result<Self> {
        let layers = Self::layer_specs(kind)
            .into_iter()
            .map(|(name, spec)| {
                let l = ConvLayer::from_store(store, &name, spec)?;
                let inp = spec.in_channels * spec.kernel_h * spec.kernel_w;
                Ok(Dense {
                    out: spec.out_channels,
                    inp,
                    weight: l.weight().to_vec(),
                    bias: l.bias().to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (si, sr) = (quant.input.step, quant.reference.step);
        let scales = match kind {
            LutKind::S => vec![si; 4],
            LutKind::T1 => vec![si, si, sr, sr, sr, sr],
            LutKind::T2 => vec![sr; 4],
        };
        Ok(Self {
            kind,
            scales,
            layers,
        })
    }

    pub fn kind(&self) -> LutKind {
        self.kind
    }

    /// Evaluates a single sample.
    pub fn eval(&self, indices: &[f32]) -> f32 {
        let mut out = [0.0f32];
        self.eval_batch(indices, &mut out);
        out[0]
    }

    /// `inputs` holds `out.len()` rows of `D` index values.
    ///
    /// Samples are processed in lanes; every sample sees the same operation
    /// order wherever it sits in the batch.
    pub fn eval_batch(&self, inputs: &[f32], out: &mut [f32]) {
        let d = self.scales.len();
        debug_assert_eq!(inputs.len(), out.len() * d);
        let mut x = [[0.0f32; LANES]; MAX_DIMS];
        let mut a = vec![[0.0f32; LANES]; HIDDEN_CHANNELS];
        let mut b = vec![[0.0f32; LANES]; HIDDEN_CHANNELS];
        for (rows, dst) in inputs.chunks(LANES * d).zip(out.chunks_mut(LANES)) {
            for lane in x.iter_mut().take(d) {
                lane.fill(0.0);
            }
            for (l, row) in rows.chunks_exact(d).enumerate() {
                for k in 0..d {
                    x[k][l] = row[k] * self.scales[k];
                }
            }
            let first = &self.layers[0];
            dense_lanes(first, &x[..d], &mut a, true);
            let n = self.layers.len();
            for (i, layer) in self.layers[1..].iter().enumerate() {
                let relu = i + 2 < n;
                dense_lanes(layer, &a, &mut b, relu);
                std::mem::swap(&mut a, &mut b);
            }
            dst.copy_from_slice(&a[0][..dst.len()]);
        }
    }
}

#[inline]
fn dense_lanes(layer: &Dense, input: &[[f32; LANES]], output: &mut [[f32; LANES]], relu: bool) {
    for (o, dst) in output[..layer.out].iter_mut().enumerate() {
        let mut acc = [layer.bias[o]; LANES];
        let wrow = &layer.weight[o * layer.inp..(o + 1) * layer.inp];
        for (w, x) in wrow.iter().zip(input) {
            for l in 0..LANES {
                acc[l] += w * x[l];
            }
        }
        if relu {
            for v in acc.iter_mut() {
                *v = v.max(0.0);
            }
        }
        *dst = acc;
    }
}

impl LatticeOracle for EnhancementNet {
    fn dims(&self) -> usize {
        self.scales.len()
    }

    fn eval_batch(&self, inputs: &[f32], out: &mut [f32]) {
        EnhancementNet::eval_batch(self, inputs, out)
    }
}

/// Input and reference quantizers of the enhancement stage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuantPair {
    pub input: QuantParams,
    pub reference: QuantParams,
}

impl QuantPair {
    pub const INPUT_STEP: &'static str = "quant.s_input";
    pub const REF_STEP: &'static str = "quant.s_ref";

    /// Trained steps from the store, 1.0 when absent.
    pub fn from_store(store: &WeightStore) -> Result<Self> {
        Ok(Self {
            input: QuantParams::image(store.scalar(Self::INPUT_STEP)?.unwrap_or(1.0))?,
            reference: QuantParams::image(store.scalar(Self::REF_STEP)?.unwrap_or(1.0))?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct EnhancementNets {
    pub s: EnhancementNet,
    pub t1: EnhancementNet,
    pub t2: EnhancementNet,
}

impl EnhancementNets {
    pub fn from_store(store: &WeightStore, quant: &QuantPair) -> Result<Self> {
        Ok(Self {
            s: EnhancementNet::from_store(store, LutKind::S, quant)?,
            t1: EnhancementNet::from_store(store, LutKind::T1, quant)?,
            t2: EnhancementNet::from_store(store, LutKind::T2, quant)?,
        })
    }

    pub fn get(&self, kind: LutKind) -> &EnhancementNet {
        match kind {
            LutKind::S => &self.s,
            LutKind::T1 => &self.t1,
            LutKind::T2 => &self.t2,
        }
    }
}

/// Evaluates a row's patterns as one batch and reduces them per pixel.
fn direct_row<const D: usize>(
    net: &EnhancementNet,
    row: &mut [f32],
    per_pixel: usize,
    gather: impl Fn(&mut Vec<[u8; D]>),
    reduce: impl Fn(&[f32]) -> f32,
) {
    let mut points = Vec::with_capacity(row.len() * per_pixel);
    gather(&mut points);
    let inputs: Vec<f32> = points.iter().flatten().map(|&v| v as f32).collect();
    let mut values = vec![0.0f32; points.len()];
    net.eval_batch(&inputs, &mut values);
    for (out, v) in row.iter_mut().zip(values.chunks_exact(per_pixel)) {
        *out = reduce(v);
    }
}

/// Residuals computed by the enhancement networks on the same index
/// patterns the tables use.
pub fn enhance_direct(
    current: &QuantPlane,
    refs: [&QuantPlane; 2],
    nets: &EnhancementNets,
) -> Result<Residuals> {
    let current_up = upsample3(current);
    direct_residuals(
        &StageInputs {
            current,
            current_up: &current_up,
            refs,
        },
        nets,
    )
}

pub fn direct_residuals(inputs: &StageInputs<'_>, nets: &EnhancementNets) -> Result<Residuals> {
    let x = inputs.current;
    let (h, w) = x.dims();
    check_indices(x, "direct S input")?;
    check_up(inputs.current_up, h, w, "upsampled current frame")?;
    for (i, r) in inputs.refs.iter().enumerate() {
        check_up(r, h, w, "deformed reference")?;
        check_indices(r, if i == 0 { "direct ref1" } else { "direct ref2" })?;
    }
    check_indices(inputs.current_up, "direct T1 current")?;
    let planes = [inputs.current_up, inputs.refs[0], inputs.refs[1]];

    let s = residual_rows(h, w, |r, row| direct_row(&nets.s, row, 4, |p| s_row(x, r, p), ens4));
    let t1 = residual_rows(h, w, |r, row| direct_row(&nets.t1, row, 4, |p| t1_row(planes, r, p), ens4));
    let t2 = residual_rows(h, w, |r, row| {
        let gather = |p: &mut Vec<[u8; 4]>| {
            let (mut a, mut b) = (Vec::with_capacity(w), Vec::with_capacity(w));
            t2_row(inputs.refs[0], r, &mut a);
            t2_row(inputs.refs[1], r, &mut b);
            p.extend(a.into_iter().zip(b).flat_map(|(a, b)| [a, b]));
        };
        direct_row(&nets.t2, row, 2, gather, |v| pair_mean(v[0], v[1]))
    });
    Ok(Residuals { s, t1, t2 })
}

/// Tabulates all three networks.
pub fn build_all_luts(nets: &EnhancementNets, specs: [LutSpec; 3]) -> Result<LutSet> {
    let mut tables = Vec::with_capacity(3);
    for (spec, kind) in specs.into_iter().zip(LutKind::ALL) {
        if spec.kind != kind || spec.dims != kind.dims() {
            return Err(Error::config(format!(
                "{kind} table needs {} dimensions, spec asks for a {} table with {}",
                kind.dims(),
                spec.kind,
                spec.dims
            )));
        }
        tables.push(build_lut_batched(nets.get(kind), spec)?);
    }
    let t2 = tables.pop().expect("three tables");
    let t1 = tables.pop().expect("three tables");
    let s = tables.pop().expect("three tables");
    Ok(LutSet { s, t1, t2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lut::build_lut;
    use crate::model::{init_store, Init};
    use crate::nn::conv::conv2d;
    use crate::nn::ParamBlock;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gather_s(x: &QuantPlane, r: usize, c: usize, j: usize) -> [u8; 4] {
        S_PATTERNS[j].map(|(dy, dx)| x.get_clamped(r as isize + dy, c as isize + dx) as u8)
    }

    fn gather_t1(planes: [&QuantPlane; 3], r: usize, c: usize, j: usize) -> [u8; 6] {
        let (qy, qx) = (3 * r as isize + 1, 3 * c as isize + 1);
        let (dy, dx) = T1_DIRS[j];
        let mut out = [0u8; 6];
        for (p, plane) in planes.iter().enumerate() {
            out[2 * p] = plane.get_clamped(qy, qx) as u8;
            out[2 * p + 1] = plane.get_clamped(qy + dy, qx + dx) as u8;
        }
        out
    }

    #[test]
    fn row_gathers_match_pattern_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for (h, w) in [(1, 1), (1, 5), (4, 1), (5, 7)] {
            let x = random_quant(h, w, &mut rng);
            let planes = [&random_quant(3 * h, 3 * w, &mut rng), &random_quant(3 * h, 3 * w, &mut rng), &random_quant(3 * h, 3 * w, &mut rng)];
            for r in 0..h {
                let mut s = Vec::new();
                s_row(&x, r, &mut s);
                let mut t1 = Vec::new();
                t1_row(planes, r, &mut t1);
                let mut t2 = Vec::new();
                t2_row(planes[1], r, &mut t2);
                for c in 0..w {
                    for j in 0..4 {
                        assert_eq!(s[4 * c + j], gather_s(&x, r, c, j));
                        assert_eq!(t1[4 * c + j], gather_t1(planes, r, c, j));
                    }
                    let corners = T2_CORNERS.map(|(dy, dx)| planes[1].get(3 * r + dy, 3 * c + dx) as u8);
                    assert_eq!(t2[c], corners);
                }
            }
        }
    }

    fn small_specs() -> [LutSpec; 3] {
        [
            LutSpec::for_kind(LutKind::S, 64).unwrap(),
            LutSpec::for_kind(LutKind::T1, 128).unwrap(),
            LutSpec::for_kind(LutKind::T2, 64).unwrap(),
        ]
    }

    fn random_quant(h: usize, w: usize, rng: &mut ChaCha8Rng) -> QuantPlane {
        QuantPlane::from_fn(h, w, |_, _| rng.random_range(0..=255))
    }

    #[test]
    fn upsample_examples() {
        let one = Plane::from_vec(1, 1, vec![7.0]).unwrap();
        assert_eq!(upsample3(&one), Plane::filled(3, 3, 7.0));
        let col = Plane::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        let up = upsample3(&col);
        assert_eq!(up.dims(), (6, 3));
        for r in 0..6 {
            for c in 0..3 {
                assert_eq!(up.get(r, c), if r < 3 { 1.0 } else { 2.0 });
            }
        }
    }

    #[test]
    fn upsample_blocks_are_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Plane::from_fn(5, 4, |_, _| rng.random_range(-10.0..10.0));
        let up = upsample3(&p);
        for r in 0..15 {
            for c in 0..12 {
                assert_eq!(up.get(r, c), up.get(r / 3 * 3, c / 3 * 3));
            }
        }
    }

    #[test]
    fn zero_comp_weights_leave_frame_unchanged() {
        let store = init_store(Init::Zero);
        let x = Plane::from_fn(6, 8, |r, c| (r * 8 + c) as f32);
        let out = spatial_complement(&x, &Tensor::zeros(32, 3, 4), &store).unwrap();
        assert_eq!(out, x);
        assert!(spatial_complement(&x, &Tensor::zeros(32, 4, 4), &store).is_err());
    }

    #[test]
    fn constant_comp_residual() {
        let mut store = init_store(Init::Zero);
        // replace the final bias so every output channel emits 1.5
        let mut patched = WeightStore::new();
        for (name, block) in store.iter() {
            let block = if name == "comp.2.bias" {
                ParamBlock::new(vec![4], vec![1.5; 4]).unwrap()
            } else {
                block.clone()
            };
            patched.insert(name, block).unwrap();
        }
        store = patched;
        let x = Plane::from_fn(4, 6, |r, c| (r + c) as f32);
        let out = spatial_complement(&x, &Tensor::zeros(32, 2, 3), &store).unwrap();
        for (a, b) in out.data().iter().zip(x.data()) {
            assert_eq!(*a, b + 1.5);
        }
    }

    #[test]
    fn constant_frame_gives_single_query() {
        let lut = build_lut(
            |v| v[0] * 0.1 - v[1] * 0.3 + v[2] * 0.05 + v[3] * 0.2,
            LutSpec::for_kind(LutKind::S, 64).unwrap(),
        )
        .unwrap();
        let x = QuantPlane::filled(4, 5, 77);
        let r = slut_query(&x, &lut).unwrap();
        let single = lut.query_simplex(&[77; 4]).unwrap();
        assert!(r.data().iter().all(|&v| v == single));
    }

    #[test]
    fn zero_luts_give_zero_residuals() {
        let set = build_all_luts(&EnhancementNets::from_store(&init_store(Init::Zero), &QuantPair::default()).unwrap(), small_specs())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_quant(4, 4, &mut rng);
        let up = upsample3(&x);
        let r1 = random_quant(12, 12, &mut rng);
        let r2 = random_quant(12, 12, &mut rng);
        let res = lut_residuals(
            &StageInputs {
                current: &x,
                current_up: &up,
                refs: [&r1, &r2],
            },
            &set,
        )
        .unwrap();
        for p in [&res.s, &res.t1, &res.t2] {
            assert!(p.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn slut_center_of_toy_frame() {
        // oracle by hand: enumerate the four rotated patterns at the centre
        let lut = build_lut(
            |v| v[0] + 2.0 * v[1] - v[2] + 0.5 * v[3] + (v[1] * v[3]) / 256.0,
            LutSpec::for_kind(LutKind::S, 128).unwrap(),
        )
        .unwrap();
        let x = QuantPlane::from_vec(3, 3, vec![0, 64, 0, 64, 128, 64, 0, 64, 0]).unwrap();
        let r = slut_query(&x, &lut).unwrap();
        // every rotation at the centre reads (128, 64, 64, 0)
        let q = lut.query_simplex(&[128, 64, 64, 0]).unwrap();
        let expect = ensemble_mean([q, q, q, q]);
        assert_eq!(r.get(1, 1), expect);
    }

    #[test]
    fn tlut1_constant_planes() {
        let lut = build_lut(
            |v| v.iter().enumerate().map(|(i, x)| x * (i as f32 - 2.5)).sum(),
            LutSpec::for_kind(LutKind::T1, 128).unwrap(),
        )
        .unwrap();
        let p = QuantPlane::filled(6, 9, 90);
        let r = tlut1_query(&p, &p, &p, &lut).unwrap();
        assert_eq!(r.dims(), (2, 3));
        let single = lut.query_simplex(&[90; 6]).unwrap();
        assert!(r.data().iter().all(|&v| v == single));
    }

    #[test]
    fn tlut1_refs_matching_current_give_zero() {
        // f = mean(refs) - mean(current); refs equal to the current patches
        let lut = build_lut(
            |v| (v[2] + v[3] + v[4] + v[5]) / 4.0 - (v[0] + v[1]) / 2.0,
            LutSpec::for_kind(LutKind::T1, 64).unwrap(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_quant(3, 4, &mut rng);
        let up = upsample3(&x);
        let r = tlut1_query(&up, &up, &up, &lut).unwrap();
        for &v in r.data() {
            assert!(v.abs() < 1e-5, "{v}");
        }
    }

    #[test]
    fn tlut2_examples() {
        let lut = build_lut(
            |v| v[0] - v[1] + 0.25 * v[2] + v[3] * 0.125,
            LutSpec::for_kind(LutKind::T2, 64).unwrap(),
        )
        .unwrap();
        let c = QuantPlane::filled(6, 6, 33);
        let r = tlut2_query(&c, &lut).unwrap();
        let single = lut.query_simplex(&[33; 4]).unwrap();
        assert!(r.data().iter().all(|&v| v == single));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_quant(6, 6, &mut rng);
        let b = random_quant(6, 6, &mut rng);
        let ra = tlut2_query(&a, &lut).unwrap();
        let rb = tlut2_query(&b, &lut).unwrap();
        let both = tlut2_query_pair([&a, &b], &lut).unwrap();
        for i in 0..4 {
            assert_eq!(both.data()[i], (ra.data()[i] + rb.data()[i]) / 2.0);
        }
        // corners of the first patch
        let v: Vec<i32> = T2_CORNERS.iter().map(|&(y, x)| a.get(y, x)).collect();
        assert_eq!(ra.get(0, 0), lut.query_simplex(&v).unwrap());
    }

    #[test]
    fn queries_reject_bad_inputs() {
        let lut_s = build_lut(|_| 0.0, LutSpec::for_kind(LutKind::S, 64).unwrap()).unwrap();
        let lut_t2 = build_lut(|_| 0.0, LutSpec::for_kind(LutKind::T2, 64).unwrap()).unwrap();
        let bad = QuantPlane::from_vec(1, 2, vec![0, 300]).unwrap();
        assert!(slut_query(&bad, &lut_s).is_err());
        // wrong kind
        assert!(slut_query(&QuantPlane::new(2, 2), &lut_t2).is_err());
        let up = QuantPlane::new(6, 6);
        let small = QuantPlane::new(3, 6);
        let lut_t1 = build_lut(|_| 0.0, LutSpec::for_kind(LutKind::T1, 128).unwrap()).unwrap();
        assert!(tlut1_query(&up, &small, &up, &lut_t1).is_err());
        assert!(tlut2_query(&QuantPlane::new(4, 6), &lut_t2).is_err());
    }

    #[test]
    fn fuse_examples() {
        let x = Plane::from_fn(2, 3, |r, c| (r * 3 + c) as f32);
        let z = Plane::new(2, 3);
        assert_eq!(fuse(&x, &z, &z, &z).unwrap(), x);
        let y = fuse(&x, &Plane::filled(2, 3, 1.0), &Plane::filled(2, 3, 2.0), &Plane::filled(2, 3, 3.0))
            .unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_eq!(*a, b + 6.0);
        }
        let once = fuse(&x, &z, &z, &z).unwrap();
        assert_eq!(fuse(&once, &z, &z, &z).unwrap(), once);
        assert!(fuse(&x, &Plane::new(3, 2), &z, &z).is_err());
    }

    #[test]
    fn ensemble_mean_is_permutation_invariant() {
        let v = [0.1f32, 1e7, -3.3, 2.2e-3];
        let base = ensemble_mean(v);
        for perm in [[1, 0, 2, 3], [3, 2, 1, 0], [2, 3, 0, 1], [1, 3, 0, 2]] {
            assert_eq!(ensemble_mean(perm.map(|i| v[i])), base);
        }
    }

    #[test]
    fn net_first_layer_matches_conv_on_frame() {
        // rotation-0 S patterns are exactly a replicate-padded 2x2 conv
        let store = init_store(Init::Random { seed: 4 });
        let quant = QuantPair::default();
        let net = EnhancementNet::from_store(&store, LutKind::S, &quant).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_quant(5, 6, &mut rng);
        let mut t = Tensor::from_plane(&x.map(|v| v as f32));
        for (i, (name, spec)) in EnhancementNet::layer_specs(LutKind::S).into_iter().enumerate() {
            let w = store.require(&format!("{name}.weight")).unwrap();
            let b = store.require(&format!("{name}.bias")).unwrap();
            t = conv2d(&t, w, b, &spec).unwrap();
            if i < ENH_TAIL_LAYERS {
                crate::nn::ops::relu_in_place(&mut t);
            }
        }
        for r in 0..5 {
            for c in 0..6 {
                let idx = gather_s(&x, r, c, 0).map(|v| v as f32);
                assert_eq!(net.eval(&idx), t.get(0, r, c));
            }
        }
    }

    #[test]
    fn lattice_aligned_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let store = init_store(Init::Random { seed: 21 });
        let quant = QuantPair {
            input: QuantParams::image(0.75).unwrap(),
            reference: QuantParams::image(1.25).unwrap(),
        };
        let nets = EnhancementNets::from_store(&store, &quant).unwrap();
        let luts = build_all_luts(&nets, small_specs()).unwrap();
        let on_lattice = |rng: &mut ChaCha8Rng, h, w, step: i32| {
            QuantPlane::from_fn(h, w, |_, _| rng.random_range(0..=255 / step) * step)
        };
        // T1 uses the coarser interval; every plane must sit on its own table's lattice
        let x = on_lattice(&mut rng, 5, 7, 128);
        let up = upsample3(&x);
        let r1 = on_lattice(&mut rng, 15, 21, 128);
        let r2 = on_lattice(&mut rng, 15, 21, 128);
        let inputs = StageInputs {
            current: &x,
            current_up: &up,
            refs: [&r1, &r2],
        };
        let a = lut_residuals(&inputs, &luts).unwrap();
        let b = direct_residuals(&inputs, &nets).unwrap();
        assert_eq!(a, b);
        assert_eq!(enhance_direct(&x, [&r1, &r2], &nets).unwrap(), b);
    }

    #[test]
    fn build_all_luts_checks_specs() {
        let nets = EnhancementNets::from_store(&init_store(Init::Zero), &QuantPair::default()).unwrap();
        let mut specs = small_specs();
        specs.swap(0, 1);
        assert!(build_all_luts(&nets, specs).is_err());
        let set = build_all_luts(&nets, small_specs()).unwrap();
        assert_eq!(set.s.values().len(), 625);
        assert_eq!(set.t1.values().len(), 729);
        assert!(set.validate().is_ok());
    }
}
