//! Online video quality enhancement with spatial-temporal lookup tables.
//!
//! Frames are enhanced strictly in display order. Each frame goes through
//! shared feature extraction, reference selection from a temporal cache,
//! deformable alignment of the references, spatial compensation, and three
//! lookup-table residual branches that are fused into the output.

pub mod align;
pub mod bench;
pub mod engine;
pub mod enhance;
pub mod error;
pub mod lut;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod propagation;
pub mod quant;
pub mod stream;
pub mod tensor;

pub use engine::{enhance_stream, Engine, EngineConfig, FrameOutput, Mode, StreamEnhancer};
pub use error::{Error, ErrorClass, Result};
pub use lut::{LookupTable, LutKind, LutSet, LutSpec};
pub use model::{init_store, Init, Model};
pub use nn::WeightStore;
pub use tensor::{Plane, QuantPlane, Tensor};
