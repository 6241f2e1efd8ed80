//! Per-frame online loop and whole-stream enhancement.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::align::deform;
use crate::enhance::{direct_residuals, fuse, lut_residuals, upsample3, Residuals, StageInputs};
use crate::error::{Error, Result};
use crate::lut::LutSet;
use crate::model::Model;
use crate::propagation::{bootstrap_refs, CacheEntry, RefView, ReferenceWindow, DEFAULT_WINDOW};
use crate::quant::quantize;
use crate::stream::{read_stream, StreamHeader, VideoWriter, YuvFrame};
use crate::tensor::{Plane, QuantPlane};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Residuals from the lookup tables.
    #[default]
    Lut,
    /// Residuals from the enhancement networks.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub window: usize,
    pub mode: Mode,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            mode: Mode::Lut,
        }
    }
}

/// Loaded networks and (optionally) tables. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Engine {
    model: Arc<Model>,
    luts: Option<Arc<LutSet>>,
}

impl Engine {
    pub fn new(model: Arc<Model>, luts: Option<Arc<LutSet>>) -> Self {
        Self { model, luts }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn luts(&self) -> Option<&LutSet> {
        self.luts.as_deref()
    }

    pub fn stream(&self, config: EngineConfig) -> Result<StreamEnhancer> {
        if config.mode == Mode::Lut && self.luts.is_none() {
            return Err(Error::config("LUT mode needs a LUT directory"));
        }
        Ok(StreamEnhancer {
            engine: self.clone(),
            mode: config.mode,
            window: ReferenceWindow::new(config.window)?,
            next_index: 0,
        })
    }
}

/// Wall time of each pipeline stage for one frame, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimes {
    pub features_ms: f64,
    pub compensate_ms: f64,
    pub align_ms: f64,
    pub enhance_ms: f64,
    pub total_ms: f64,
}

impl StageTimes {
    pub fn mean(samples: &[StageTimes]) -> StageTimes {
        let n = samples.len().max(1) as f64;
        let sum = |f: fn(&StageTimes) -> f64| samples.iter().map(f).sum::<f64>() / n;
        StageTimes {
            features_ms: sum(|s| s.features_ms),
            compensate_ms: sum(|s| s.compensate_ms),
            align_ms: sum(|s| s.align_ms),
            enhance_ms: sum(|s| s.enhance_ms),
            total_ms: sum(|s| s.total_ms),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub frame_index: usize,
    /// Enhanced luma before 8-bit encoding.
    pub y: Arc<Plane>,
    /// Frame indices of the two references; `None` is the frame itself.
    pub refs: [Option<usize>; 2],
    pub times: StageTimes,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Online state for one stream: the reference window and frame counter.
#[derive(Debug)]
pub struct StreamEnhancer {
    engine: Engine,
    mode: Mode,
    window: ReferenceWindow,
    next_index: usize,
}

impl StreamEnhancer {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn frames_done(&self) -> usize {
        self.next_index
    }

    pub fn window(&self) -> &ReferenceWindow {
        &self.window
    }

    /// Enhances the next frame of the stream and caches it.
    pub fn enhance_frame(&mut self, y: &Plane, qp: i32) -> Result<FrameOutput> {
        let index = self.next_index;
        let out = self.run(y, qp, index).map_err(|e| e.in_frame(index))?;
        self.next_index += 1;
        Ok(out)
    }

    fn run(&mut self, y: &Plane, qp: i32, index: usize) -> Result<FrameOutput> {
        if let Some((r, c)) = y.find_non_finite() {
            return Err(Error::NonFinite(format!("input luma ({r}, {c})")));
        }
        if let Some(first) = self.window.entries().next() {
            if !first.enhanced.same_dims(y) {
                return Err(Error::shape(
                    "frame",
                    &[first.enhanced.height(), first.enhanced.width()],
                    &[y.height(), y.width()],
                ));
            }
        }
        let model = &*self.engine.model;
        let start = Instant::now();

        let t = Instant::now();
        let features = Arc::new(model.mafe.forward(y)?);
        let features_ms = ms(t);

        let t = Instant::now();
        let compensated = model.comp.forward(y, &features)?;
        let compensate_ms = ms(t);

        let t = Instant::now();
        let selected = self.window.select_refs();
        let current = RefView {
            frame_index: None,
            features: &features,
            frame: &compensated,
        };
        let views = bootstrap_refs(current, &selected);
        let refs = views.map(|v| v.frame_index);
        let deform_one = |v: &RefView<'_>| -> Result<QuantPlane> {
            let offsets = model.offsets.forward(&features, v.features)?;
            quantize(&deform(v.frame, &offsets)?, &model.quant.reference)
        };
        let first = deform_one(&views[0])?;
        let second = if refs[0] == refs[1] {
            first.clone()
        } else {
            deform_one(&views[1])?
        };
        let align_ms = ms(t);

        let t = Instant::now();
        let current_q = quantize(&compensated, &model.quant.input)?;
        let current_up = upsample3(&current_q);
        let inputs = StageInputs {
            current: &current_q,
            current_up: &current_up,
            refs: [&first, &second],
        };
        let Residuals { s, t1, t2 } = match self.mode {
            Mode::Lut => {
                let luts = self.engine.luts.as_deref().expect("checked at construction");
                lut_residuals(&inputs, luts)?
            }
            Mode::Direct => direct_residuals(&inputs, &model.enh)?,
        };
        let enhanced = fuse(&compensated, &s, &t1, &t2)?;
        let enhance_ms = ms(t);

        if let Some((r, c)) = enhanced.find_non_finite() {
            return Err(Error::NonFinite(format!("enhanced luma ({r}, {c})")));
        }
        let enhanced = Arc::new(enhanced);
        self.window.push(CacheEntry {
            frame_index: index,
            qp,
            features,
            enhanced: Arc::clone(&enhanced),
        })?;
        Ok(FrameOutput {
            frame_index: index,
            y: enhanced,
            refs,
            times: StageTimes {
                features_ms,
                compensate_ms,
                align_ms,
                enhance_ms,
                total_ms: ms(start),
            },
        })
    }
}

/// What the loop could see while each frame was processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalStep {
    pub frame: usize,
    /// Highest input frame index read from disk so far.
    pub max_input_read: usize,
    pub refs: [Option<usize>; 2],
}

impl CausalStep {
    pub fn is_causal(&self) -> bool {
        self.max_input_read <= self.frame && self.refs.iter().flatten().all(|&r| r < self.frame)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub header: StreamHeader,
    pub steps: Vec<CausalStep>,
    /// Peak bytes held by the reference window.
    pub peak_cache_bytes: usize,
}

impl StreamSummary {
    pub fn future_reads(&self) -> usize {
        self.steps.iter().filter(|s| !s.is_causal()).count()
    }
}

/// Enhances a raw stream into `output`, one frame at a time.
pub fn enhance_stream(
    input: &Path,
    sidecar: &Path,
    output: &Path,
    engine: &Engine,
    config: EngineConfig,
) -> Result<StreamSummary> {
    let mut stream = read_stream(input, sidecar)?;
    let header = *stream.header();
    let mut enhancer = engine.stream(config)?;
    let mut writer = VideoWriter::create(output, header)?;
    let mut steps = Vec::with_capacity(header.frame_count);
    let mut peak_cache_bytes = 0;
    while let Some(item) = stream.next() {
        let index = enhancer.frames_done();
        let (frame, qp) = item.map_err(|e| e.in_frame(index))?;
        let out = enhancer.enhance_frame(&frame.y, qp)?;
        steps.push(CausalStep {
            frame: index,
            max_input_read: stream.frames_read() - 1,
            refs: out.refs,
        });
        peak_cache_bytes = peak_cache_bytes.max(enhancer.window().footprint());
        writer
            .write_frame(&YuvFrame {
                y: Arc::unwrap_or_clone(out.y),
                u: frame.u,
                v: frame.v,
            })
            .map_err(|e| e.in_frame(index))?;
    }
    writer.finish()?;
    Ok(StreamSummary {
        header,
        steps,
        peak_cache_bytes,
    })
}
