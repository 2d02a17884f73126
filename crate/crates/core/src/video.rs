//! Pixel-space and latent-space video containers.

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// `[frames, height, width, 3]` clip with values in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoTensor(Tensor<f32>);

impl VideoTensor {
    pub fn new(t: Tensor<f32>) -> Result<Self> {
        if t.ndim() != 4 || t.shape()[3] != 3 {
            return Err(Error::shape(format!(
                "video must be [frames, height, width, 3], got {:?}",
                t.shape()
            )));
        }
        if let Some(bad) = t.data().iter().find(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(Error::Numeric(format!("pixel value {bad} outside [-1, 1]")));
        }
        Ok(VideoTensor(t))
    }

    /// Clamps into `[-1, 1]` (non-finite values are rejected).
    pub fn clamped(t: Tensor<f32>) -> Result<Self> {
        if !t.is_finite() {
            return Err(Error::Numeric("non-finite pixels".into()));
        }
        Self::new(t.map(|v| v.clamp(-1.0, 1.0)))
    }

    /// From 8-bit pixels: `0 -> -1`, `255 -> 1`.
    pub fn from_u8(shape: &[usize], bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| b as f32 / 127.5 - 1.0).collect();
        Self::new(Tensor::new(shape.to_vec(), data)?)
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.0
            .data()
            .iter()
            .map(|&v| ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn frames(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[2]
    }

    pub fn shape(&self) -> &[usize] {
        self.0.shape()
    }

    /// True when the frame count has the `1 + 4k` form the VAE expects.
    pub fn is_vae_compatible(&self) -> bool {
        self.frames() % 4 == 1 && self.height().is_multiple_of(8) && self.width().is_multiple_of(8)
    }

    pub fn frame(&self, i: usize) -> Result<Tensor<f32>> {
        if i >= self.frames() {
            return Err(Error::shape(format!("frame {i} of {}", self.frames())));
        }
        let size = self.height() * self.width() * 3;
        Tensor::new(
            vec![self.height(), self.width(), 3],
            self.0.data()[i * size..(i + 1) * size].to_vec(),
        )
    }

    /// First `n` frames.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n > self.frames() {
            return Err(Error::shape(format!(
                "cannot take {n} frames from a {}-frame clip",
                self.frames()
            )));
        }
        let size = self.height() * self.width() * 3;
        Ok(VideoTensor(Tensor::new(
            vec![n, self.height(), self.width(), 3],
            self.0.data()[..n * size].to_vec(),
        )?))
    }

    /// Frames reordered by `order`.
    pub fn reorder(&self, order: &[usize]) -> Result<Self> {
        let frames: Vec<Tensor<f32>> = order.iter().map(|&i| self.frame(i)).collect::<Result<_>>()?;
        let refs: Vec<&Tensor<f32>> = frames.iter().collect();
        Ok(VideoTensor(Tensor::stack(&refs)?))
    }

    pub fn as_tensor(&self) -> &Tensor<f32> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.0
    }
}

/// `[T', H', W', C_lat]` latent produced by the VAE encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVideo(Tensor<f32>);

impl LatentVideo {
    pub fn new(t: Tensor<f32>) -> Result<Self> {
        if t.ndim() != 4 {
            return Err(Error::shape(format!(
                "latent must be [T', H', W', C], got {:?}",
                t.shape()
            )));
        }
        if !t.is_finite() {
            return Err(Error::Numeric("non-finite latent".into()));
        }
        Ok(LatentVideo(t))
    }

    pub fn shape(&self) -> &[usize] {
        self.0.shape()
    }

    pub fn as_tensor(&self) -> &Tensor<f32> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_bad_rank() {
        assert!(VideoTensor::new(Tensor::full(&[1, 8, 8, 3], 1.5)).is_err());
        assert!(VideoTensor::new(Tensor::zeros(&[8, 8, 3])).is_err());
        assert!(VideoTensor::new(Tensor::zeros(&[1, 8, 8, 4])).is_err());
        assert!(VideoTensor::clamped(Tensor::full(&[1, 8, 8, 3], 1.5)).is_ok());
    }

    #[test]
    fn u8_conversion_endpoints() {
        let v = VideoTensor::from_u8(&[1, 1, 1, 3], &[0, 255, 128]).unwrap();
        assert_eq!(v.as_tensor().data()[0], -1.0);
        assert_eq!(v.as_tensor().data()[1], 1.0);
        assert_eq!(v.to_u8(), vec![0, 255, 128]);
    }
}
