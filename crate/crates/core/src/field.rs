//! Plain 3D grids used for parameter maps and masks.
//!
//! Storage order matches [`crate::Volume4D`]: `x` varies fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[inline]
pub(crate) fn linear_index(shape: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + shape[0] * (y + shape[1] * z)
}

/// Real-valued 3D map (σ_g field, N field, τ profile, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field3 {
    shape: [usize; 3],
    values: Vec<f64>,
}

impl Field3 {
    pub fn new(shape: [usize; 3], values: Vec<f64>) -> Result<Self> {
        let expected = shape.iter().product::<usize>();
        if shape.contains(&0) || values.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: shape.to_vec(),
                actual: vec![values.len()],
            });
        }
        Ok(Self { shape, values })
    }

    pub fn filled(shape: [usize; 3], value: f64) -> Self {
        Self {
            shape,
            values: vec![value; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[linear_index(self.shape, x, y, z)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Boolean 3D mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask3 {
    shape: [usize; 3],
    values: Vec<bool>,
}

impl Mask3 {
    pub fn new(shape: [usize; 3], values: Vec<bool>) -> Result<Self> {
        let expected = shape.iter().product::<usize>();
        if shape.contains(&0) || values.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: shape.to_vec(),
                actual: vec![values.len()],
            });
        }
        Ok(Self { shape, values })
    }

    pub fn filled(shape: [usize; 3], value: bool) -> Self {
        Self {
            shape,
            values: vec![value; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [bool] {
        &mut self.values
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&b| b).count()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.values[linear_index(self.shape, x, y, z)]
    }
}
