use serde::{Deserialize, Serialize};

use super::grid::Grid1D;
use crate::error::{invalid, Error, Result};

/// Real, static external potential `V(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    #[default]
    Zero,
    /// `V = stiffness (x - center)^2 / 2`.
    Harmonic { stiffness: f64, center: f64 },
    /// `V = height` on `[left, right]`, zero elsewhere.
    Barrier { height: f64, left: f64, right: f64 },
    /// One value per grid point.
    Tabulated { values: Vec<f64> },
}

impl Potential {
    pub fn validate(&self, grid: &Grid1D) -> Result<()> {
        match self {
            Potential::Zero => Ok(()),
            Potential::Harmonic { stiffness, center } => {
                if !stiffness.is_finite() || !center.is_finite() {
                    return Err(invalid("potential", "harmonic parameters must be finite"));
                }
                Ok(())
            }
            Potential::Barrier {
                height,
                left,
                right,
            } => {
                if !height.is_finite() || !(left <= right) {
                    return Err(invalid("potential", "barrier needs finite height and left <= right"));
                }
                Ok(())
            }
            Potential::Tabulated { values } => {
                if values.len() != grid.len() {
                    return Err(Error::GridMismatch);
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("potential", "tabulated values must be finite"));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Harmonic { stiffness, center } => 0.5 * stiffness * (x - center).powi(2),
            Potential::Barrier {
                height,
                left,
                right,
            } => {
                if x >= *left && x <= *right {
                    *height
                } else {
                    0.0
                }
            }
            // Tabulated potentials are only meaningful on their grid; see `values`.
            Potential::Tabulated { .. } => f64::NAN,
        }
    }

    /// `V` at every grid point.
    pub fn values(&self, grid: &Grid1D) -> Result<Vec<f64>> {
        self.validate(grid)?;
        Ok(match self {
            Potential::Tabulated { values } => values.clone(),
            _ => grid.points().map(|x| self.eval(x)).collect(),
        })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Potential::Zero)
    }
}
