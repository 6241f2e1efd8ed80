//! Learned-step quantization for inference and the MSB/LSB index split.

use crate::error::{Error, Result};
use crate::tensor::{Plane, QuantPlane};

/// Step `s` and clip bounds `[-q_n, q_p]` of a learned-step quantizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub step: f32,
    pub q_n: u32,
    pub q_p: u32,
}

impl QuantParams {
    /// 8-bit image-domain quantizer with a (possibly trained) step.
    pub fn image(step: f32) -> Result<Self> {
        let p = Self {
            step,
            q_n: 0,
            q_p: 255,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::config(format!(
                "quantizer step must be positive and finite, got {}",
                self.step
            )));
        }
        if self.q_p == 0 {
            return Err(Error::config("quantizer upper clip must be positive"));
        }
        Ok(())
    }

    #[inline]
    pub fn quantize_value(&self, x: f32) -> i32 {
        (x / self.step)
            .clamp(-(self.q_n as f32), self.q_p as f32)
            .round() as i32
    }
}

impl Default for QuantParams {
    fn default() -> Self {
        Self {
            step: 1.0,
            q_n: 0,
            q_p: 255,
        }
    }
}

/// `round(clip(x / s, -Q_N, Q_P))`, ties away from zero.
pub fn quantize(x: &Plane, p: &QuantParams) -> Result<QuantPlane> {
    p.validate()?;
    if let Some((r, c)) = x.find_non_finite() {
        return Err(Error::NonFinite(format!("quantizer input ({r}, {c})")));
    }
    Ok(x.map(|v| p.quantize_value(v)))
}

/// `q * s`.
pub fn dequantize(q: &QuantPlane, p: &QuantParams) -> Result<Plane> {
    p.validate()?;
    let (lo, hi) = (-(p.q_n as i64), p.q_p as i64);
    if let Some(i) = q
        .data()
        .iter()
        .position(|&v| (v as i64) < lo || (v as i64) > hi)
    {
        return Err(Error::OutOfRange {
            value: q.data()[i] as i64,
            min: lo,
            max: hi,
            location: format!("({}, {})", i / q.width(), i % q.width()),
        });
    }
    Ok(q.map(|v| v as f32 * p.step))
}

/// Checks that `interval` is a power of two in `2..=128`.
pub fn validate_interval(interval: u32) -> Result<()> {
    if interval.is_power_of_two() && (2..=128).contains(&interval) {
        Ok(())
    } else {
        Err(Error::config(format!(
            "sampling interval must be a power of two in [2, 128], got {interval}"
        )))
    }
}

/// Splits an 8-bit index into lattice coordinate and in-cell offset.
pub fn index_split(v: i32, interval: u32) -> Result<(u32, u32)> {
    validate_interval(interval)?;
    if !(0..=255).contains(&v) {
        return Err(Error::OutOfRange {
            value: v as i64,
            min: 0,
            max: 255,
            location: "LUT index".into(),
        });
    }
    let v = v as u32;
    Ok((v / interval, v % interval))
}
