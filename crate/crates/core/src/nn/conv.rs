use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::weights::ParamBlock;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Edge samples are repeated outward; stride-1 output keeps the input size.
    Replicate,
    /// Valid positions only.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: Padding,
}

impl ConvSpec {
    /// Stride-1, replicate-padded square convolution.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride: 1,
            dilation: 1,
            padding: Padding::Replicate,
        }
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel_h, self.kernel_w]
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0
            || self.out_channels == 0
            || self.kernel_h == 0
            || self.kernel_w == 0
        {
            return Err(Error::config("conv channels and kernel sizes must be positive"));
        }
        if self.stride == 0 || self.dilation == 0 {
            return Err(Error::config("conv stride and dilation must be at least 1"));
        }
        Ok(())
    }

    /// (top, bottom, left, right). The odd sample of an even footprint goes
    /// to the bottom/right so a 2x2 kernel at `p` reads `p` and its
    /// right/down/diagonal neighbors.
    fn pads(&self) -> (usize, usize, usize, usize) {
        match self.padding {
            Padding::None => (0, 0, 0, 0),
            Padding::Replicate => {
                let span_h = (self.kernel_h - 1) * self.dilation;
                let span_w = (self.kernel_w - 1) * self.dilation;
                (span_h / 2, span_h - span_h / 2, span_w / 2, span_w - span_w / 2)
            }
        }
    }

    pub fn output_size(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        let (t, b, l, r) = self.pads();
        let hp = height + t + b;
        let wp = width + l + r;
        let span_h = (self.kernel_h - 1) * self.dilation + 1;
        let span_w = (self.kernel_w - 1) * self.dilation + 1;
        if hp < span_h || wp < span_w {
            return None;
        }
        Some(((hp - span_h) / self.stride + 1, (wp - span_w) / self.stride + 1))
    }
}

/// 2-D cross-correlation.
///
/// Every output element is accumulated as `bias + sum(w * x)` over
/// (input channel, kernel row, kernel column) in ascending order, so results
/// are bit-stable regardless of how rows are distributed across threads.
pub fn conv2d(
    input: &Tensor,
    weight: &ParamBlock,
    bias: &ParamBlock,
    spec: &ConvSpec,
) -> Result<Tensor> {
    check_conv_params("weight", weight, "bias", bias, spec)?;
    conv2d_checked(input, weight.data(), bias.data(), spec)
}

pub(crate) fn check_conv_params(
    weight_name: &str,
    weight: &ParamBlock,
    bias_name: &str,
    bias: &ParamBlock,
    spec: &ConvSpec,
) -> Result<()> {
    spec.validate()?;
    if weight.dims() != spec.weight_dims() {
        return Err(Error::shape(weight_name, &spec.weight_dims(), weight.dims()));
    }
    if bias.dims() != [spec.out_channels] {
        return Err(Error::shape(bias_name, &[spec.out_channels], bias.dims()));
    }
    Ok(())
}

pub(crate) fn conv2d_checked(
    input: &Tensor,
    weight: &[f32],
    bias: &[f32],
    spec: &ConvSpec,
) -> Result<Tensor> {
    if input.channels() != spec.in_channels {
        return Err(Error::shape(
            "input",
            &[spec.in_channels, input.height(), input.width()],
            &input.shape(),
        ));
    }
    let (ho, wo) = spec.output_size(input.height(), input.width()).ok_or_else(|| {
        Error::config(format!(
            "input {}x{} smaller than the conv footprint",
            input.height(),
            input.width()
        ))
    })?;
    let padded = pad(input, spec);
    let (hp, wp) = (padded.height, padded.width);
    let cin = spec.in_channels;
    let cout = spec.out_channels;
    let (kh, kw, d, s) = (spec.kernel_h, spec.kernel_w, spec.dilation, spec.stride);

    // One output row (all channels) per task keeps the source rows hot.
    let rows: Vec<Vec<f32>> = (0..ho)
        .into_par_iter()
        .map(|y| {
            let mut out = vec![0.0f32; cout * wo];
            let mut o = 0;
            while o < cout {
                let block = (cout - o).min(4);
                let (head, _) = out[o * wo..].split_at_mut(block * wo);
                for (i, acc) in head.chunks_exact_mut(wo).enumerate() {
                    acc.fill(bias[o + i]);
                }
                for c in 0..cin {
                    for ky in 0..kh {
                        let row_start = (c * hp + y * s + ky * d) * wp;
                        let src = &padded.data[row_start..row_start + wp];
                        for kx in 0..kw {
                            let off = kx * d;
                            let widx = |oo: usize| ((oo * cin + c) * kh + ky) * kw + kx;
                            if block == 4 && s == 1 {
                                let w0 = weight[widx(o)];
                                let w1 = weight[widx(o + 1)];
                                let w2 = weight[widx(o + 2)];
                                let w3 = weight[widx(o + 3)];
                                let (a0, rest) = head.split_at_mut(wo);
                                let (a1, rest) = rest.split_at_mut(wo);
                                let (a2, a3) = rest.split_at_mut(wo);
                                let src = &src[off..off + wo];
                                for x in 0..wo {
                                    let v = src[x];
                                    a0[x] += w0 * v;
                                    a1[x] += w1 * v;
                                    a2[x] += w2 * v;
                                    a3[x] += w3 * v;
                                }
                            } else {
                                for (i, acc) in head.chunks_exact_mut(wo).enumerate() {
                                    let w = weight[widx(o + i)];
                                    if s == 1 {
                                        for (a, &v) in acc.iter_mut().zip(&src[off..off + wo]) {
                                            *a += w * v;
                                        }
                                    } else {
                                        for (x, a) in acc.iter_mut().enumerate() {
                                            *a += w * src[off + x * s];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                o += block;
            }
            out
        })
        .collect();

    let mut data = vec![0.0f32; cout * ho * wo];
    for (y, row) in rows.iter().enumerate() {
        for o in 0..cout {
            let dst = (o * ho + y) * wo;
            data[dst..dst + wo].copy_from_slice(&row[o * wo..(o + 1) * wo]);
        }
    }
    Tensor::from_vec(cout, ho, wo, data)
}

struct Padded {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

fn pad(input: &Tensor, spec: &ConvSpec) -> Padded {
    let (t, b, l, r) = spec.pads();
    let (h, w) = (input.height(), input.width());
    let (hp, wp) = (h + t + b, w + l + r);
    let mut data = Vec::with_capacity(input.channels() * hp * wp);
    for c in 0..input.channels() {
        let ch = input.channel(c);
        for yp in 0..hp {
            let y = yp.saturating_sub(t).min(h - 1);
            let row = &ch[y * w..(y + 1) * w];
            data.extend(std::iter::repeat_n(row[0], l));
            data.extend_from_slice(row);
            data.extend(std::iter::repeat_n(row[w - 1], r));
        }
    }
    Padded {
        height: hp,
        width: wp,
        data,
    }
}
