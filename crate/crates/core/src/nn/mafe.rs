use crate::error::Result;
use crate::nn::conv::ConvSpec;
use crate::nn::ops::downsample2x;
use crate::nn::weights::{run_stack, ConvLayer, WeightStore};
use crate::nn::HIDDEN_CHANNELS;
use crate::tensor::{Plane, Tensor};

pub const MAFE_LAYERS: usize = 11;

/// Feature extractor shared by propagation, alignment and compensation.
///
/// Runs on the 2x-downsampled luma: eleven 3x3 convolutions, 32 channels,
/// relu between layers. Output is `32 x H/2 x W/2`.
#[derive(Debug, Clone)]
pub struct Mafe {
    layers: Vec<ConvLayer>,
}

impl Mafe {
    pub fn layer_specs() -> Vec<(String, ConvSpec)> {
        (0..MAFE_LAYERS)
            .map(|i| {
                let cin = if i == 0 { 1 } else { HIDDEN_CHANNELS };
                (format!("mafe.{i}"), ConvSpec::same(cin, HIDDEN_CHANNELS, 3))
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

    pub fn forward(&self, y_plane: &Plane) -> Result<Tensor> {
        let x = downsample2x(&Tensor::from_plane(y_plane));
        run_stack(&self.layers, &x)
    }
}

pub fn mafe_forward(y_plane: &Plane, weights: &WeightStore) -> Result<Tensor> {
    Mafe::from_store(weights)?.forward(y_plane)
}
