//! Planar-free RGB image buffer used by the degradation pipeline and
//! evaluation. Values are f64 in [0,1], interleaved row-major (r,g,b per
//! pixel).

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height < 8 || width < 8 {
            return Err(Error::invalid(format!(
                "image dimensions must be >= 8, got {height}x{width}"
            )));
        }
        Ok(ImageBuffer { height, width, data: vec![0.0; height * width * CHANNELS] })
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * CHANNELS {
            return Err(Error::shape(format!(
                "expected {} values for {height}x{width}x3, got {}",
                height * width * CHANNELS,
                data.len()
            )));
        }
        if height < 8 || width < 8 {
            return Err(Error::invalid(format!(
                "image dimensions must be >= 8, got {height}x{width}"
            )));
        }
        Ok(ImageBuffer { height, width, data })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        let mut img = Self::new(height, width)?;
        img.data.fill(value);
        Ok(img)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * CHANNELS + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        self.data[(row * self.width + col) * CHANNELS + ch] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Clamp all values into [0,1]. Every degradation ends with this.
    pub fn clip(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn is_valid(&self) -> bool {
        self.data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageBuffer {
        ImageBuffer {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<ImageBuffer> {
        if top + h > self.height || left + w > self.width {
            return Err(Error::invalid(format!(
                "crop {h}x{w} at ({top},{left}) exceeds image {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(h * w * CHANNELS);
        for r in top..top + h {
            let start = (r * self.width + left) * CHANNELS;
            data.extend_from_slice(&self.data[start..start + w * CHANNELS]);
        }
        Ok(ImageBuffer { height: h, width: w, data })
    }

    pub fn max_abs_diff(&self, other: &ImageBuffer) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Scene depth in [0,1], same spatial size as the image it pairs with.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl DepthMap {
    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "expected {} depth values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(DepthMap { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}
