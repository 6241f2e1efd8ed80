//! Dense rasters used throughout the engine.
//!
//! [`Raster`] is a single-channel `height x width` grid stored row-major.
//! [`Plane`] (floating point samples) and [`QuantPlane`] (integer quantizer
//! output) are the two instantiations the pipeline uses. [`Tensor`] is the
//! `channels x height x width` layout consumed by the convolution kernels.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

pub type Plane = Raster<f32>;
pub type QuantPlane = Raster<i32>;

impl<T: Copy + Default> Raster<T> {
    pub fn new(height: usize, width: usize) -> Self {
        Self::filled(height, width, T::default())
    }
}

impl<T: Copy> Raster<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape("raster", &[height, width], &[data.len()]));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.width + c] = v;
    }

    /// Sample with coordinates clamped into the raster (replicate padding).
    #[inline]
    pub fn get_clamped(&self, r: isize, c: isize) -> T {
        let r = r.clamp(0, self.height as isize - 1) as usize;
        let c = c.clamp(0, self.width as isize - 1) as usize;
        self.get(r, c)
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.width..(r + 1) * self.width]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Raster<U> {
        Raster {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Rotate by 90 degrees counter-clockwise.
    pub fn rot90(&self) -> Self {
        let (h, w) = (self.height, self.width);
        Raster::from_fn(w, h, |r, c| self.get(c, w - 1 - r))
    }

    /// Crop the top-left `height x width` window.
    pub fn crop(&self, height: usize, width: usize) -> Self {
        assert!(height <= self.height && width <= self.width);
        Raster::from_fn(height, width, |r, c| self.get(r, c))
    }

    pub fn same_dims<U>(&self, other: &Raster<U>) -> bool {
        self.height == other.height && self.width == other.width
    }
}

impl Plane {
    /// Location of the first non-finite sample, if any.
    pub fn find_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|i| (i / self.width, i % self.width))
    }

    pub fn from_u8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::from_vec(height, width, bytes.iter().map(|&b| f32::from(b)).collect())
    }

    /// Round to nearest and clamp to the 8-bit range.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

/// `channels x height x width` feature map, row-major within each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(
                "tensor",
                &[channels, height, width],
                &[data.len()],
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_plane(plane: &Plane) -> Self {
        Self {
            channels: 1,
            height: plane.height(),
            width: plane.width(),
            data: plane.data().to_vec(),
        }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    /// Extract one channel as a plane.
    pub fn plane(&self, c: usize) -> Plane {
        Plane::from_vec(self.height, self.width, self.channel(c).to_vec())
            .expect("channel length matches")
    }

    /// Channel-wise concatenation; spatial sizes must agree.
    pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::config("concat of zero tensors"))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::new();
        let mut channels = 0;
        for t in parts {
            if t.height != h || t.width != w {
                return Err(Error::shape(
                    "concat",
                    &[t.channels, h, w],
                    &[t.channels, t.height, t.width],
                ));
            }
            channels += t.channels;
            data.extend_from_slice(&t.data);
        }
        Tensor::from_vec(channels, h, w, data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bytes held by the sample buffer.
    pub fn byte_size(&self) -> usize {
        self.data.len() * std::mem::size_of::<f32>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rot90_four_times_is_identity() {
        let p = Plane::from_fn(3, 5, |r, c| (r * 5 + c) as f32);
        let q = p.rot90();
        assert_eq!(q.dims(), (5, 3));
        // top-left of the rotated raster is the top-right of the source
        assert_eq!(q.get(0, 0), p.get(0, 4));
        assert_eq!(q.rot90().rot90().rot90(), p);
    }

    #[test]
    fn to_u8_rounds_and_clamps() {
        let p = Plane::from_vec(1, 4, vec![-3.0, 12.5, 254.6, 300.0]).unwrap();
        assert_eq!(p.to_u8(), vec![0, 13, 255, 255]);
    }

    #[test]
    fn concat_rejects_mismatched_sizes() {
        let a = Tensor::zeros(2, 4, 4);
        let b = Tensor::zeros(1, 4, 5);
        assert!(Tensor::concat(&[&a, &b]).is_err());
        let c = Tensor::concat(&[&a, &a]).unwrap();
        assert_eq!(c.shape(), [4, 4, 4]);
    }
}
