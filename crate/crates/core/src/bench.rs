//! Per-frame latency measurement.
//!
//! Latency of frame `i` is `LT = T_process + T_wait` with
//! `T_wait = N_f / FPS`, where `N_f` counts future frames the method waits
//! for. This engine only reads past and current frames, so `N_f = 0`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{Engine, EngineConfig, Mode, StageTimes};
use crate::error::{Error, Result};
use crate::stream::{read_stream, YuvFrame};

pub const DEFAULT_FPS: f64 = 30.0;
pub const DEFAULT_WARMUP: usize = 3;

/// `N_f / FPS` in milliseconds.
pub fn t_wait_ms(future_frames: usize, fps: f64) -> f64 {
    future_frames as f64 / fps * 1000.0
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub mode: Mode,
    pub frames: usize,
    /// Leading frames excluded from the aggregates.
    pub warmup: usize,
    pub future_frames: usize,
    pub fps: f64,
    pub t_wait_ms: f64,
    /// `T_process` of every frame, warmup included.
    pub process_ms: Vec<f64>,
    pub mean_process_ms: f64,
    pub p95_process_ms: f64,
    pub mean_latency_ms: f64,
    pub p95_latency_ms: f64,
    pub achieved_fps: f64,
    /// Mean per-stage breakdown over the measured frames.
    pub stages: StageTimes,
}

impl LatencyReport {
    pub fn from_samples(mode: Mode, samples: &[StageTimes], warmup: usize, fps: f64) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::config(format!("fps must be positive, got {fps}")));
        }
        if samples.is_empty() {
            return Err(Error::config("no frames were timed"));
        }
        let warmup = warmup.min(samples.len() - 1);
        let measured = &samples[warmup..];
        let mut sorted: Vec<f64> = measured.iter().map(|s| s.total_ms).collect();
        sorted.sort_by(f64::total_cmp);
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        let p95 = percentile(&sorted, 95.0);
        let future_frames = 0;
        let wait = t_wait_ms(future_frames, fps);
        Ok(Self {
            mode,
            frames: samples.len(),
            warmup,
            future_frames,
            fps,
            t_wait_ms: wait,
            process_ms: samples.iter().map(|s| s.total_ms).collect(),
            mean_process_ms: mean,
            p95_process_ms: p95,
            mean_latency_ms: mean + wait,
            p95_latency_ms: p95 + wait,
            achieved_fps: 1000.0 / mean,
            stages: StageTimes::mean(measured),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub fps: f64,
    pub warmup: usize,
    pub window: usize,
    pub compare_direct: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            fps: DEFAULT_FPS,
            warmup: DEFAULT_WARMUP,
            window: crate::propagation::DEFAULT_WINDOW,
            compare_direct: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub lut: LatencyReport,
    pub direct: Option<LatencyReport>,
    /// Direct over LUT mean frame time.
    pub frame_speedup: Option<f64>,
    /// Direct over LUT mean enhancement-stage time.
    pub enhance_speedup: Option<f64>,
}

/// Times the per-frame compute of `frames`. Frames are already decoded, so
/// file I/O stays outside the timed region.
pub fn time_frames(engine: &Engine, frames: &[(YuvFrame, i32)], config: EngineConfig) -> Result<Vec<StageTimes>> {
    let mut enhancer = engine.stream(config)?;
    frames
        .iter()
        .map(|(f, qp)| enhancer.enhance_frame(&f.y, *qp).map(|o| o.times))
        .collect()
}

pub fn bench(input: &Path, sidecar: &Path, engine: &Engine, config: BenchConfig) -> Result<BenchReport> {
    let frames: Vec<(YuvFrame, i32)> = read_stream(input, sidecar)?.collect::<Result<_>>()?;
    bench_frames(engine, &frames, config)
}

pub fn bench_frames(engine: &Engine, frames: &[(YuvFrame, i32)], config: BenchConfig) -> Result<BenchReport> {
    let run = |mode| -> Result<LatencyReport> {
        let times = time_frames(
            engine,
            frames,
            EngineConfig {
                window: config.window,
                mode,
            },
        )?;
        LatencyReport::from_samples(mode, &times, config.warmup, config.fps)
    };
    let lut = run(Mode::Lut)?;
    let direct = if config.compare_direct {
        Some(run(Mode::Direct)?)
    } else {
        None
    };
    let frame_speedup = direct.as_ref().map(|d| d.mean_process_ms / lut.mean_process_ms);
    let enhance_speedup = direct.as_ref().map(|d| d.stages.enhance_ms / lut.stages.enhance_ms);
    Ok(BenchReport {
        lut,
        direct,
        frame_speedup,
        enhance_speedup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn times(v: &[f64]) -> Vec<StageTimes> {
        v.iter()
            .map(|&t| StageTimes {
                total_ms: t,
                enhance_ms: t / 2.0,
                ..Default::default()
            })
            .collect()
    }

    #[test]
    fn wait_formula() {
        assert_eq!(t_wait_ms(0, 30.0), 0.0);
        assert!((t_wait_ms(2, 30.0) - 66.67).abs() < 0.005);
    }

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 95.0), 19.0);
        assert_eq!(percentile(&v, 100.0), 20.0);
        assert_eq!(percentile(&[3.0], 95.0), 3.0);
    }

    #[test]
    fn report_aggregates_after_warmup() {
        let r = LatencyReport::from_samples(Mode::Lut, &times(&[100.0, 90.0, 80.0, 10.0, 20.0, 30.0]), 3, 30.0)
            .unwrap();
        assert_eq!(r.mean_process_ms, 20.0);
        assert_eq!(r.mean_latency_ms, r.mean_process_ms);
        assert_eq!(r.p95_process_ms, 30.0);
        assert_eq!(r.achieved_fps, 50.0);
        assert_eq!(r.stages.enhance_ms, 10.0);
        assert_eq!(r.process_ms.len(), 6);
    }

    #[test]
    fn short_streams_shrink_warmup() {
        let r = LatencyReport::from_samples(Mode::Lut, &times(&[5.0, 4.0]), 3, 30.0).unwrap();
        assert_eq!(r.warmup, 1);
        assert_eq!(r.mean_process_ms, 4.0);
        assert!(LatencyReport::from_samples(Mode::Lut, &[], 3, 30.0).is_err());
        assert!(LatencyReport::from_samples(Mode::Lut, &times(&[1.0]), 0, 0.0).is_err());
    }
}
