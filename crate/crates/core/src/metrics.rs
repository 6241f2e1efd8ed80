//! Luma quality metrics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::{StreamHeader, VideoReader};
use crate::tensor::Plane;

pub const PSNR_CAP_DB: f64 = 99.0;
const PEAK: f64 = 255.0;

fn check_dims(a: &Plane, b: &Plane) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::shape("test plane", &[a.height(), a.width()], &[b.height(), b.width()]));
    }
    if a.data().is_empty() {
        return Err(Error::config("cannot compare empty planes"));
    }
    Ok(())
}

pub fn mse(reference: &Plane, test: &Plane) -> Result<f64> {
    check_dims(reference, test)?;
    let sum: f64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(sum / reference.data().len() as f64)
}

/// `10 log10(255^2 / MSE)`, capped at 99 dB.
pub fn psnr(reference: &Plane, test: &Plane) -> Result<f64> {
    let m = mse(reference, test)?;
    if m < PEAK * PEAK * 10f64.powf(-PSNR_CAP_DB / 10.0) {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * (PEAK * PEAK / m).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn gaussian(size: usize) -> Vec<f64> {
    let centre = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - centre;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Valid-mode separable filtering.
fn filter_valid(data: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = k.iter().enumerate().map(|(i, kv)| kv * data[r * w + c + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = k.iter().enumerate().map(|(i, kv)| kv * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}

/// Mean SSIM over all valid 11x11 Gaussian windows. Planes smaller than the
/// window use the largest window that fits.
pub fn ssim(reference: &Plane, test: &Plane) -> Result<f64> {
    check_dims(reference, test)?;
    let (h, w) = reference.dims();
    let k = gaussian(SSIM_WINDOW.min(h).min(w));
    let a: Vec<f64> = reference.data().iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = test.data().iter().map(|&v| v as f64).collect();
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(&a, h, w, &k);
    let mu_b = filter_valid(&b, h, w, &k);
    let e_aa = filter_valid(&prod(&a, &a), h, w, &k);
    let e_bb = filter_valid(&prod(&b, &b), h, w, &k);
    let e_ab = filter_valid(&prod(&a, &b), h, w, &k);
    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        total += num / den;
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: Vec<FrameMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl MetricsReport {
    pub fn from_frames(frames: Vec<FrameMetrics>) -> Self {
        let n = frames.len().max(1) as f64;
        let mean_psnr = frames.iter().map(|f| f.psnr).sum::<f64>() / n;
        let mean_ssim = frames.iter().map(|f| f.ssim).sum::<f64>() / n;
        Self {
            frames,
            mean_psnr,
            mean_ssim,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,psnr,ssim\n");
        for f in &self.frames {
            s.push_str(&format!("{},{:.4},{:.6}\n", f.frame, f.psnr, f.ssim));
        }
        s
    }
}

/// Per-frame luma PSNR/SSIM of two raw streams with a shared layout.
pub fn compare_streams(reference: &Path, test: &Path, header: StreamHeader) -> Result<MetricsReport> {
    let a = VideoReader::open(reference, header)?;
    let b = VideoReader::open(test, header)?;
    let mut frames = Vec::with_capacity(header.frame_count);
    for (i, (fa, fb)) in a.zip(b).enumerate() {
        let (fa, fb) = (fa?, fb?);
        frames.push(FrameMetrics {
            frame: i,
            psnr: psnr(&fa.y, &fb.y)?,
            ssim: ssim(&fa.y, &fb.y)?,
        });
    }
    Ok(MetricsReport::from_frames(frames))
}
