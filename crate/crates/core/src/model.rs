//! Complete parameter set of the enhancer and weight initialisation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::align::OffsetNet;
use crate::enhance::{CompNet, EnhancementNet, EnhancementNets, QuantPair};
use crate::error::Result;
use crate::lut::LutKind;
use crate::nn::conv::ConvSpec;
use crate::nn::{Mafe, ParamBlock, WeightStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Every weight and bias zero; the enhancer is then the identity.
    Zero,
    /// He-uniform hidden layers, small output layers, seeded.
    Random { seed: u64 },
}

/// Every convolution of the model with its final-layer flag.
pub fn all_layer_specs() -> Vec<(String, ConvSpec, bool)> {
    let mut out = Vec::new();
    let mut push = |specs: Vec<(String, ConvSpec)>, head: bool| {
        let n = specs.len();
        for (i, (name, spec)) in specs.into_iter().enumerate() {
            out.push((name, spec, head && i + 1 == n));
        }
    };
    push(Mafe::layer_specs(), false);
    push(OffsetNet::layer_specs(), true);
    push(CompNet::layer_specs(), true);
    for kind in LutKind::ALL {
        push(EnhancementNet::layer_specs(kind), true);
    }
    out
}

/// A full weight store in layer order, including unit quantizer steps.
pub fn init_store(init: Init) -> WeightStore {
    let mut rng = match init {
        Init::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Init::Zero => None,
    };
    let mut store = WeightStore::new();
    for (name, spec, head) in all_layer_specs() {
        let dims = spec.weight_dims().to_vec();
        let count: usize = dims.iter().product();
        let fan_in = spec.in_channels * spec.kernel_h * spec.kernel_w;
        let (weight, bias) = match rng.as_mut() {
            None => (vec![0.0; count], vec![0.0; spec.out_channels]),
            Some(rng) => {
                let mut bound = (6.0 / fan_in as f32).sqrt();
                if head {
                    bound *= 0.01;
                }
                let w = (0..count).map(|_| rng.random_range(-bound..bound)).collect();
                let b = (0..spec.out_channels).map(|_| rng.random_range(-0.01..0.01)).collect();
                (w, b)
            }
        };
        store
            .insert(format!("{name}.weight"), ParamBlock::new(dims, weight).expect("dims"))
            .expect("unique");
        store
            .insert(format!("{name}.bias"), ParamBlock::new(vec![spec.out_channels], bias).expect("dims"))
            .expect("unique");
    }
    for name in [QuantPair::INPUT_STEP, QuantPair::REF_STEP] {
        store.insert(name, ParamBlock::scalar(1.0)).expect("unique");
    }
    store
}

/// All networks of the enhancer, resolved from a weight store.
#[derive(Debug, Clone)]
pub struct Model {
    pub mafe: Mafe,
    pub offsets: OffsetNet,
    pub comp: CompNet,
    pub enh: EnhancementNets,
    pub quant: QuantPair,
}

impl Model {
    pub fn from_store(store: &WeightStore) -> Result<Self> {
        let quant = QuantPair::from_store(store)?;
        Ok(Self {
            mafe: Mafe::from_store(store)?,
            offsets: OffsetNet::from_store(store)?,
            comp: CompNet::from_store(store)?,
            enh: EnhancementNets::from_store(store, &quant)?,
            quant,
        })
    }
}
