//! Per-pixel multichannel fields (`channels × height × width`, channel-major)
//! used for coefficients, abundances and latents.

use crate::{Error, HsiCube, Result};

/// Tolerance on negative abundance entries.
pub const NONNEG_TOL: f64 = 1e-9;
/// Tolerance on the per-pixel abundance sum.
pub const UNITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "field dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "field {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    /// Gathers the channel vector of pixel `p` (row-major pixel index).
    pub fn pixel(&self, p: usize) -> Vec<f64> {
        let n = self.pixels();
        (0..self.channels).map(|c| self.data[c * n + p]).collect()
    }

    pub fn set_pixel(&mut self, p: usize, v: &[f64]) {
        let n = self.pixels();
        for (c, &x) in v.iter().enumerate() {
            self.data[c * n + p] = x;
        }
    }

    /// Builds a field from per-pixel vectors given in row-major pixel order.
    pub fn from_pixels(channels: usize, height: usize, width: usize, pixels: &[Vec<f64>]) -> Self {
        let mut f = Self::zeros(channels, height, width);
        for (p, v) in pixels.iter().enumerate() {
            f.set_pixel(p, v);
        }
        f
    }

    pub fn to_cube(&self) -> HsiCube {
        HsiCube {
            bands: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| v as f32).collect(),
            band_names: None,
        }
    }

    pub fn from_cube(cube: &HsiCube) -> Self {
        Self {
            channels: cube.bands,
            height: cube.height,
            width: cube.width,
            data: cube.data.iter().map(|&v| v as f64).collect(),
        }
    }
}

/// Unconstrained per-pixel least-squares coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField(pub Field);

/// Per-pixel abundances on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceField(Field);

impl AbundanceField {
    /// Checks non-negativity and unity for every pixel.
    pub fn new(field: Field) -> Result<Self> {
        let n = field.pixels();
        if let Some(i) = field.data.iter().position(|&v| v < -NONNEG_TOL) {
            return Err(Error::Invalid(format!(
                "abundance entry {} at index {i} is negative",
                field.data[i]
            )));
        }
        for p in 0..n {
            let s: f64 = (0..field.channels).map(|c| field.data[c * n + p]).sum();
            if (s - 1.0).abs() > UNITY_TOL {
                return Err(Error::Invalid(format!(
                    "abundances at pixel {p} sum to {s}, not 1"
                )));
            }
        }
        Ok(Self(field))
    }

    pub(crate) fn new_unchecked(field: Field) -> Self {
        Self(field)
    }

    pub fn field(&self) -> &Field {
        &self.0
    }

    pub fn into_field(self) -> Field {
        self.0
    }

    pub fn d(&self) -> usize {
        self.0.channels
    }
}

/// Unconstrained latent field the diffusion model operates on.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentField(pub Field);
