//! Image containers shared by every stage of the pipeline.
//!
//! [`Frame`] holds interleaved channel data in `[0, 1]`. [`Mask`] and
//! [`WeightMap`] are single-channel per-pixel fields of the same footprint.

use crate::error::{Error, Result};

/// Luma weights used whenever a color frame is reduced to one channel.
pub const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// An H×W×C image with channels stored interleaved, row-major, top-left origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Frame {
    /// Builds a frame, checking the length and that every value is finite and in `[0, 1]`.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidFrame(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidFrame(format!(
                "expected {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(pos) = data
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(Error::InvalidFrame(format!(
                "value {} at offset {pos} outside [0, 1]",
                data[pos]
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Internal constructor for data already known to satisfy the invariants.
    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    /// Builds a frame from a per-pixel closure `f(x, y, c)`; values are clamped to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c).clamp(0.0, 1.0));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    /// Assembles a frame from separate channel planes, clamping to `[0, 1]`.
    pub fn from_planes(width: usize, height: usize, planes: &[Vec<f32>]) -> Result<Self> {
        let channels = planes.len();
        if planes.iter().any(|p| p.len() != width * height) {
            return Err(Error::InvalidFrame("plane length mismatch".into()));
        }
        let mut data = vec![0.0; width * height * channels];
        for (c, plane) in planes.iter().enumerate() {
            for (i, v) in plane.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidFrame(format!(
                        "non-finite value at pixel {i}"
                    )));
                }
                data[i * channels + c] = v.clamp(0.0, 1.0);
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Extracts channel `c` as a contiguous plane.
    pub fn plane(&self, c: usize) -> Vec<f32> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Luma plane (`0.299R + 0.587G + 0.114B`), or the single channel of a gray frame.
    pub fn luma(&self) -> Vec<f32> {
        match self.channels {
            1 => self.data.clone(),
            _ => self
                .data
                .chunks_exact(self.channels)
                .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
                .collect(),
        }
    }

    pub fn ensure_same_shape(&self, other: &Frame) -> Result<()> {
        if self.dims() != other.dims() || self.channels != other.channels {
            return Err(Error::ResolutionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }
}

pub(crate) fn ensure_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::ResolutionMismatch { expected, found });
    }
    Ok(())
}

/// Per-pixel scalar in `[0, 1]`, e.g. warp validity or a non-occlusion mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl Mask {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidFrame("mask length mismatch".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidFrame("mask value outside [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![1.0; width * height],
        }
    }

    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<f32>) -> Self {
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Number of pixels with a non-zero mask value.
    pub fn count_set(&self) -> usize {
        self.values.iter().filter(|v| **v > 0.0).count()
    }
}

/// Non-negative per-pixel weight field (`w_p`, `w_n`, `w_c`).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl WeightMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidFrame("weight map length mismatch".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidFrame(
                "weights must be finite and >= 0".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            values: vec![value.max(0.0); width * height],
        }
    }

    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<f32>) -> Self {
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_values() {
        assert!(Frame::new(1, 1, 1, vec![1.5]).is_err());
        assert!(Frame::new(1, 1, 1, vec![f32::NAN]).is_err());
        assert!(Frame::new(2, 1, 1, vec![0.5]).is_err());
        assert!(matches!(
            Frame::new(0, 3, 1, vec![]),
            Err(Error::EmptyImage)
        ));
    }

    #[test]
    fn planes_roundtrip() {
        let f = Frame::from_fn(3, 2, 3, |x, y, c| (x + y * 3 + c) as f32 / 20.0).unwrap();
        let planes: Vec<_> = (0..3).map(|c| f.plane(c)).collect();
        let g = Frame::from_planes(3, 2, &planes).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn luma_of_white_is_one() {
        let f = Frame::filled(2, 2, 3, 1.0).unwrap();
        for v in f.luma() {
            assert!((v - 1.0).abs() < 1e-6);
        }
    }
}
