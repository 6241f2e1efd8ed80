//! Deterministic forward-pass kernels and the shared feature extractor.

pub mod conv;
pub mod mafe;
pub mod ops;
pub mod weights;

pub use conv::{conv2d, ConvSpec, Padding};
pub use mafe::{mafe_forward, Mafe};
pub use ops::{downsample2x, pixel_shuffle, pixel_unshuffle, relu};
pub use weights::{ConvLayer, ParamBlock, WeightStore};

/// Width of every hidden layer.
pub const HIDDEN_CHANNELS: usize = 32;
