use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    relu_in_place(&mut out);
    out
}

pub fn relu_in_place(t: &mut Tensor) {
    for v in t.data_mut() {
        *v = v.max(0.0);
    }
}

/// Depth-to-space: `(C*r*r) x H x W -> C x (H*r) x (W*r)`.
pub fn pixel_shuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    let rr = r * r;
    if r == 0 || !input.channels().is_multiple_of(rr) {
        return Err(Error::config(format!(
            "pixel_shuffle: {} channels not divisible by {r}^2",
            input.channels()
        )));
    }
    let (c_out, h, w) = (input.channels() / rr, input.height(), input.width());
    let mut out = Tensor::zeros(c_out, h * r, w * r);
    for c in 0..c_out {
        for dy in 0..r {
            for dx in 0..r {
                let src = input.channel(c * rr + dy * r + dx);
                for y in 0..h {
                    for x in 0..w {
                        out.set(c, y * r + dy, x * r + dx, src[y * w + x]);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Space-to-depth, the inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    if r == 0 || !input.height().is_multiple_of(r) || !input.width().is_multiple_of(r) {
        return Err(Error::config(format!(
            "pixel_unshuffle: {}x{} not divisible by {r}",
            input.height(),
            input.width()
        )));
    }
    let (h, w) = (input.height() / r, input.width() / r);
    let mut out = Tensor::zeros(input.channels() * r * r, h, w);
    for c in 0..input.channels() {
        for dy in 0..r {
            for dx in 0..r {
                for y in 0..h {
                    for x in 0..w {
                        out.set(c * r * r + dy * r + dx, y, x, input.get(c, y * r + dy, x * r + dx));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// 2x2 mean pooling. Odd heights or widths repeat the last row or column first.
pub fn downsample2x(input: &Tensor) -> Tensor {
    let (h, w) = (input.height(), input.width());
    let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Tensor::zeros(input.channels(), ho, wo);
    for c in 0..input.channels() {
        let src = input.channel(c);
        let at = |y: usize, x: usize| src[y.min(h - 1) * w + x.min(w - 1)];
        for y in 0..ho {
            for x in 0..wo {
                let (y0, x0) = (2 * y, 2 * x);
                let sum = at(y0, x0) + at(y0, x0 + 1) + at(y0 + 1, x0) + at(y0 + 1, x0 + 1);
                out.set(c, y, x, sum * 0.25);
            }
        }
    }
    out
}
