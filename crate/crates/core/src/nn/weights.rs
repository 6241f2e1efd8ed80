//! Named parameter blocks and the `STWT` weights container.
//!
//! Layout (little-endian, no padding):
//!
//! ```text
//! "STWT" | u32 version (=1) | u32 tensor count
//! per tensor: u32 name length | name bytes | u32 rank | u32 dims[rank] | f32 data[prod(dims)]
//! ```

use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, FormatError, Result};
use crate::nn::conv::{check_conv_params, conv2d_checked, ConvSpec};
use crate::tensor::Tensor;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"STWT";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl ParamBlock {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::shape("parameter block", &dims, &[data.len()]));
        }
        Ok(Self { dims, data })
    }

    pub fn scalar(v: f32) -> Self {
        Self {
            dims: vec![1],
            data: vec![v],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Ordered map from parameter name to block. Insertion order is the file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    blocks: IndexMap<String, ParamBlock>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, block: ParamBlock) -> Result<()> {
        let name = name.into();
        if self.blocks.contains_key(&name) {
            return Err(FormatError::DuplicateName(name).into());
        }
        self.blocks.insert(name, block);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&ParamBlock> {
        self.get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    /// Value of a one-element block, if present.
    pub fn scalar(&self, name: &str) -> Result<Option<f32>> {
        match self.get(name) {
            None => Ok(None),
            Some(b) if b.data.len() == 1 => Ok(Some(b.data[0])),
            Some(b) => Err(Error::shape(name, &[1], &b.dims)),
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamBlock)> {
        self.blocks.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for (name, block) in &self.blocks {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(block.dims.len() as u32).to_le_bytes());
            for &d in &block.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &block.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = ByteReader::new(bytes);
        let magic = rd.array::<4>()?;
        if magic != WEIGHTS_MAGIC {
            return Err(FormatError::BadMagic {
                expected: WEIGHTS_MAGIC,
                found: magic,
            }
            .into());
        }
        let version = rd.u32()?;
        if version != WEIGHTS_VERSION {
            return Err(FormatError::UnsupportedVersion(version).into());
        }
        let count = rd.u32()? as usize;
        let mut store = WeightStore::new();
        for _ in 0..count {
            let name_len = rd.u32()? as usize;
            let name = std::str::from_utf8(rd.take(name_len)?)
                .map_err(|_| FormatError::InvalidName)?
                .to_string();
            let rank = rd.u32()? as usize;
            let mut dims = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                dims.push(rd.u32()? as usize);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| FormatError::InvalidHeader(format!("`{name}` dims overflow")))?;
            let raw = rd.take(n.checked_mul(4).ok_or_else(|| {
                FormatError::InvalidHeader(format!("`{name}` payload overflow"))
            })?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            store.insert(name, ParamBlock { dims, data })?;
        }
        if rd.remaining() > 0 {
            return Err(FormatError::TrailingBytes(rd.remaining()).into());
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let avail = self.bytes.len() - self.pos;
        if n > avail {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n - avail,
            }
            .into());
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let s = self.take(N)?;
        let mut a = [0u8; N];
        a.copy_from_slice(s);
        Ok(a)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array::<4>()?))
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// A convolution whose parameters were resolved from a [`WeightStore`].
#[derive(Debug, Clone)]
pub struct ConvLayer {
    name: String,
    spec: ConvSpec,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl ConvLayer {
    /// Looks up `{name}.weight` and `{name}.bias` and checks them against `spec`.
    pub fn from_store(store: &WeightStore, name: &str, spec: ConvSpec) -> Result<Self> {
        let wname = format!("{name}.weight");
        let bname = format!("{name}.bias");
        let weight = store.require(&wname)?;
        let bias = store.require(&bname)?;
        check_conv_params(&wname, weight, &bname, bias, &spec)?;
        Ok(Self {
            name: name.to_string(),
            spec,
            weight: weight.data.clone(),
            bias: bias.data.clone(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub fn weight(&self) -> &[f32] {
        &self.weight
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        conv2d_checked(input, &self.weight, &self.bias, &self.spec).map_err(|e| match e {
            Error::Shape {
                name,
                expected,
                found,
            } if name == "input" => Error::Shape {
                name: format!("{} input", self.name),
                expected,
                found,
            },
            other => other,
        })
    }
}

/// Runs `layers` in order with relu between them (none after the last).
pub fn run_stack(layers: &[ConvLayer], input: &Tensor) -> Result<Tensor> {
    let mut x = input.clone();
    for (i, layer) in layers.iter().enumerate() {
        x = layer.forward(&x)?;
        if i + 1 < layers.len() {
            crate::nn::ops::relu_in_place(&mut x);
        }
    }
    Ok(x)
}
