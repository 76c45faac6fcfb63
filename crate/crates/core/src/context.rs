use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::l2_norm;

/// Tolerance on `‖x‖₂ = 1` before a context is renormalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// A candidate arm within one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmContext {
    /// Identity of the arm in its source (item id, class index, ...).
    pub id: usize,
    pub features: Vec<f64>,
}

impl ArmContext {
    pub fn new(id: usize, features: Vec<f64>) -> Self {
        Self { id, features }
    }

    /// Builds a context scaled to unit length.
    pub fn unit(id: usize, features: Vec<f64>) -> Result<Self> {
        let mut arm = Self { id, features };
        arm.normalize()?;
        Ok(arm)
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.features)
    }

    /// Rescales to unit norm. Returns whether the vector was changed.
    pub fn normalize(&mut self) -> Result<bool> {
        let norm = self.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "arm {} has norm {norm} and cannot be normalized",
                self.id
            )));
        }
        if (norm - 1.0).abs() <= UNIT_NORM_TOLERANCE {
            return Ok(false);
        }
        for v in &mut self.features {
            *v /= norm;
        }
        Ok(true)
    }
}
