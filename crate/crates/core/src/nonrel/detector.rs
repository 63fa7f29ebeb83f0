use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::Grid1D;

/// Spatial sensitivity `g(x) >= 0` of a position detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Profile {
    /// `strength * exp(-(x - center)^2 / (2 width^2))`.
    Gaussian {
        center: f64,
        width: f64,
        strength: f64,
    },
    /// `strength` on `[a, b]`, zero elsewhere.
    Indicator { a: f64, b: f64, strength: f64 },
    /// `strength` everywhere.
    Constant { strength: f64 },
    /// One value per grid point.
    Tabulated { values: Vec<f64> },
}

impl Profile {
    pub fn gaussian(center: f64, width: f64, strength: f64) -> Self {
        Profile::Gaussian {
            center,
            width,
            strength,
        }
    }

    pub fn constant(strength: f64) -> Self {
        Profile::Constant { strength }
    }

    pub fn validate(&self, grid: &Grid1D) -> Result<()> {
        let strength = match self {
            Profile::Gaussian {
                width, strength, ..
            } => {
                if !(*width > 0.0) || !width.is_finite() {
                    return Err(invalid("width", format!("must be positive, got {width}")));
                }
                *strength
            }
            Profile::Indicator { a, b, strength } => {
                if !(a <= b) {
                    return Err(invalid("a", "indicator needs a <= b"));
                }
                *strength
            }
            Profile::Constant { strength } => *strength,
            Profile::Tabulated { values } => {
                if values.len() != grid.len() {
                    return Err(Error::GridMismatch);
                }
                if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                    return Err(invalid("values", format!("coupling must be finite and >= 0, got {v}")));
                }
                0.0
            }
        };
        if !(strength >= 0.0) || !strength.is_finite() {
            return Err(invalid("strength", format!("must be finite and >= 0, got {strength}")));
        }
        Ok(())
    }

    pub fn values(&self, grid: &Grid1D) -> Result<Vec<f64>> {
        self.validate(grid)?;
        Ok(match self {
            Profile::Gaussian {
                center,
                width,
                strength,
            } => grid
                .points()
                .map(|x| strength * (-(x - center).powi(2) / (2.0 * width * width)).exp())
                .collect(),
            Profile::Indicator { a, b, strength } => grid
                .points()
                .map(|x| if x >= *a && x <= *b { *strength } else { 0.0 })
                .collect(),
            Profile::Constant { strength } => vec![*strength; grid.len()],
            Profile::Tabulated { values } => values.clone(),
        })
    }
}

/// What a detector does after it clicks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorMode {
    /// Decouples permanently after the first click.
    #[default]
    SingleShot,
    /// Starts monitoring again `dead_time` after each click.
    Reusable { dead_time: f64 },
}

/// A yes/no position counter: coupling profile, classical state `alpha`
/// (0 before its click, 1 after) and whether it currently monitors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub profile: Profile,
    #[serde(default)]
    pub alpha: u8,
    #[serde(default = "default_active")]
    pub active: bool,
    #[serde(default)]
    pub mode: DetectorMode,
}

fn default_active() -> bool {
    true
}

impl DetectorSpec {
    pub fn new(profile: Profile) -> Self {
        Self {
            profile,
            alpha: 0,
            active: true,
            mode: DetectorMode::SingleShot,
        }
    }

    pub fn reusable(mut self, dead_time: f64) -> Self {
        self.mode = DetectorMode::Reusable { dead_time };
        self
    }

    pub fn inactive(mut self) -> Self {
        self.active = false;
        self
    }

    pub fn validate(&self, grid: &Grid1D) -> Result<()> {
        self.profile.validate(grid)?;
        if self.alpha > 1 {
            return Err(invalid("alpha", format!("must be 0 or 1, got {}", self.alpha)));
        }
        if let DetectorMode::Reusable { dead_time } = self.mode {
            if !(dead_time >= 0.0) || !dead_time.is_finite() {
                return Err(invalid("dead_time", "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    /// Whether the detector monitors at the start of a run.
    pub fn monitoring(&self) -> bool {
        match self.mode {
            DetectorMode::SingleShot => self.active && self.alpha == 0,
            DetectorMode::Reusable { .. } => self.active,
        }
    }
}
