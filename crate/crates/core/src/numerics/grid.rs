use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid on `[x_min, x_max)`; `x_max` is identified with `x_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid1D", into = "RawGrid1D")]
pub struct Grid1D {
    n_points: usize,
    x_min: f64,
    x_max: f64,
}

#[derive(Serialize, Deserialize)]
struct RawGrid1D {
    n_points: usize,
    x_min: f64,
    x_max: f64,
}

impl TryFrom<RawGrid1D> for Grid1D {
    type Error = Error;

    fn try_from(raw: RawGrid1D) -> Result<Self> {
        Grid1D::new(raw.n_points, raw.x_min, raw.x_max)
    }
}

impl From<Grid1D> for RawGrid1D {
    fn from(g: Grid1D) -> Self {
        RawGrid1D {
            n_points: g.n_points,
            x_min: g.x_min,
            x_max: g.x_max,
        }
    }
}

impl Grid1D {
    pub fn new(n_points: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {n_points}"
            )));
        }
        if !x_min.is_finite() || !x_max.is_finite() || x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "bounds must be finite with x_max > x_min, got [{x_min}, {x_max})"
            )));
        }
        Ok(Self {
            n_points,
            x_min,
            x_max,
        })
    }

    /// Grid centred on zero with the given half-width.
    pub fn centered(n_points: usize, half_width: f64) -> Result<Self> {
        Self::new(n_points, -half_width, half_width)
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn spacing(&self) -> f64 {
        self.length() / self.n_points as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.spacing()
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.point(i))
    }

    /// Angular wavenumbers in FFT order. The Nyquist mode carries `-pi/dx`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points;
        let dk = 2.0 * PI / self.length();
        (0..n)
            .map(|j| {
                if j < n / 2 {
                    j as f64 * dk
                } else {
                    (j as f64 - n as f64) * dk
                }
            })
            .collect()
    }

    pub fn nyquist(&self) -> f64 {
        PI / self.spacing()
    }

    pub fn is_power_of_two(&self) -> bool {
        self.n_points.is_power_of_two()
    }

    pub fn require_spectral(&self) -> Result<()> {
        if self.is_power_of_two() {
            Ok(())
        } else {
            Err(Error::BackendMismatch(self.n_points))
        }
    }
}

/// Two-axis grid over `(x, t)`; coordinate time is just a second periodic axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub x: Grid1D,
    pub t: Grid1D,
}

impl Grid2D {
    pub fn new(x: Grid1D, t: Grid1D) -> Self {
        Self { x, t }
    }

    pub fn n_x(&self) -> usize {
        self.x.len()
    }

    pub fn n_t(&self) -> usize {
        self.t.len()
    }

    pub fn n_cells(&self) -> usize {
        self.n_x() * self.n_t()
    }

    pub fn cell_area(&self) -> f64 {
        self.x.spacing() * self.t.spacing()
    }

    /// Total measure of the box.
    pub fn volume(&self) -> f64 {
        self.x.length() * self.t.length()
    }

    pub fn require_spectral(&self) -> Result<()> {
        self.x.require_spectral()?;
        self.t.require_spectral()
    }
}
