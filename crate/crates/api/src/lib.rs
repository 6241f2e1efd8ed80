//! Request and response bodies of the HTTP API.
//!
//! | method | path                        | body                 | reply              |
//! |--------|-----------------------------|----------------------|--------------------|
//! | GET    | `/health`                   |                      | [`Health`]         |
//! | POST   | `/v1/weights/init`          | [`InitWeightsRequest`] | [`InitWeightsResponse`] |
//! | POST   | `/v1/build-luts`            | [`BuildLutsRequest`] | [`BuildLutsResponse`] |
//! | POST   | `/v1/enhance`               | [`EnhanceRequest`]   | [`EnhanceResponse`] |
//! | POST   | `/v1/metrics`               | [`MetricsRequest`]   | `MetricsReport`    |
//! | POST   | `/v1/bench`                 | [`BenchRequest`]     | `BenchReport`      |
//! | POST   | `/v1/sessions`              | [`SessionRequest`]   | [`SessionCreated`] |
//! | POST   | `/v1/sessions/{id}/frames`  | [`FrameRequest`]     | [`FrameResponse`]  |
//! | DELETE | `/v1/sessions/{id}`         |                      | [`SessionClosed`]  |
//!
//! Paths are resolved on the server. Failures come back as [`ApiError`].

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use stlut_core::bench::{BenchReport, LatencyReport};
pub use stlut_core::engine::{Mode, StageTimes};
pub use stlut_core::metrics::{FrameMetrics, MetricsReport};
pub use stlut_core::ErrorClass;
pub use stlut_core::LutKind;

pub const DEFAULT_ADDR: &str = "127.0.0.1:8750";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numeric => 3,
        }
    }
}

impl From<ErrorClass> for ErrorKind {
    fn from(c: ErrorClass) -> Self {
        match c {
            ErrorClass::Usage => ErrorKind::Usage,
            ErrorClass::Data => ErrorKind::Data,
            ErrorClass::Numeric => ErrorKind::Numeric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub sessions: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitWeightsRequest {
    pub out: PathBuf,
    /// Seed for random weights; ignored with `zero`.
    #[serde(default)]
    pub seed: u64,
    /// All-zero weights, which make the enhancer an identity.
    #[serde(default)]
    pub zero: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitWeightsResponse {
    pub path: PathBuf,
    pub tensors: usize,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildLutsRequest {
    pub weights: PathBuf,
    pub out: PathBuf,
    pub interval_s: Option<u32>,
    pub interval_t1: Option<u32>,
    pub interval_t2: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutFile {
    pub kind: LutKind,
    pub path: PathBuf,
    pub dims: usize,
    pub interval: u32,
    pub entries: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildLutsResponse {
    pub files: Vec<LutFile>,
    pub total_bytes: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnhanceRequest {
    pub input: PathBuf,
    pub sidecar: PathBuf,
    pub weights: PathBuf,
    /// Required unless `direct`.
    pub luts: Option<PathBuf>,
    pub out: PathBuf,
    pub window: Option<usize>,
    #[serde(default)]
    pub direct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceResponse {
    pub out: PathBuf,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub mode: Mode,
    /// Steps that read a frame later than the one being enhanced.
    pub future_reads: usize,
    pub peak_cache_bytes: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsRequest {
    pub reference: PathBuf,
    pub test: PathBuf,
    /// Sidecar describing the layout of both streams.
    pub sidecar: Option<PathBuf>,
    /// `WIDTHxHEIGHT`; the frame count follows from the file size.
    pub size: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRequest {
    pub input: PathBuf,
    pub sidecar: PathBuf,
    pub weights: PathBuf,
    pub luts: PathBuf,
    pub fps: Option<f64>,
    pub warmup: Option<usize>,
    pub window: Option<usize>,
    #[serde(default)]
    pub compare_direct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRequest {
    pub weights: PathBuf,
    pub luts: Option<PathBuf>,
    pub width: usize,
    pub height: usize,
    pub window: Option<usize>,
    #[serde(default)]
    pub direct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
}

/// One luma plane, 8-bit, row-major, base64.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRequest {
    pub qp: i32,
    pub y: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResponse {
    pub frame_index: usize,
    /// Enhanced luma, 8-bit, base64.
    pub y: String,
    pub refs: [Option<usize>; 2],
    pub times: StageTimes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionClosed {
    pub id: String,
    pub frames: usize,
}
