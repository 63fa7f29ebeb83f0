use serde::{Deserialize, Serialize};

use super::grid::{Grid1D, Grid2D};
use super::C64;
use crate::error::{invalid, Error, Result};

fn check_finite(amps: &[C64]) -> Result<()> {
    if amps.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(invalid("amplitudes", "non-finite entry"))
    }
}

/// Complex amplitudes of a particle on a periodic line.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction1D {
    grid: Grid1D,
    amps: Vec<C64>,
}

impl WaveFunction1D {
    pub fn new(grid: Grid1D, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        check_finite(&amps)?;
        Ok(Self { grid, amps })
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self {
            grid,
            amps: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> C64) -> Self {
        let amps = grid.points().map(f).collect();
        Self { grid, amps }
    }

    /// Normalized Gaussian packet `exp(-(x-c)^2 / 4w^2 + i k x)`.
    pub fn gaussian(grid: Grid1D, center: f64, width: f64, momentum: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(invalid("width", "must be positive"));
        }
        let psi = Self::from_fn(grid, |x| {
            let d = x - center;
            C64::from_polar((-d * d / (4.0 * width * width)).exp(), momentum * x)
        });
        psi.normalized()
    }

    /// Normalized plane wave for the FFT-ordered mode `j`.
    pub fn plane_wave(grid: Grid1D, mode: usize) -> Result<Self> {
        let k = grid.wavenumbers()[mode % grid.len()];
        Self::from_fn(grid, |x| C64::from_polar(1.0, k * x)).normalized()
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    /// `sum |psi_i|^2 dx`.
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.spacing()
    }

    pub fn scale(&mut self, s: f64) {
        self.amps.iter_mut().for_each(|z| *z *= s);
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm_sqr();
        if !(n > 0.0) || !n.is_finite() {
            return Err(invalid("state", format!("cannot normalize, squared norm {n}")));
        }
        self.scale(1.0 / n.sqrt());
        Ok(self)
    }

    pub fn density(&self) -> Vec<f64> {
        self.amps.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Mean and standard deviation of the position density.
    pub fn position_moments(&self) -> (f64, f64) {
        moments(self.grid.points().zip(self.amps.iter().map(|z| z.norm_sqr())))
    }
}

pub(crate) fn moments(samples: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let (mut w, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (x, p) in samples {
        w += p;
        m1 += p * x;
        m2 += p * x * x;
    }
    if w <= 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = m1 / w;
    (mean, (m2 / w - mean * mean).max(0.0).sqrt())
}

/// `sum conj(phi_i) psi_i dx`, conjugate-linear in the first argument.
pub fn l2_inner(phi: &WaveFunction1D, psi: &WaveFunction1D) -> Result<C64> {
    if phi.grid != psi.grid {
        return Err(Error::GridMismatch);
    }
    let s: C64 = phi
        .amps
        .iter()
        .zip(&psi.amps)
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(s * phi.grid.spacing())
}

/// Spinless field on the `(x, t)` grid, row-major `[n_x, n_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    grid: Grid2D,
    amps: Vec<C64>,
}

impl ScalarField2D {
    pub fn new(grid: Grid2D, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != grid.n_cells() {
            return Err(Error::GridMismatch);
        }
        check_finite(&amps)?;
        Ok(Self { grid, amps })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            amps: vec![C64::new(0.0, 0.0); grid.n_cells()],
        }
    }

    /// `Psi(x, t) = phi(t) psi(x)`.
    pub fn product(time_profile: &[C64], psi: &WaveFunction1D, t_grid: Grid1D) -> Result<Self> {
        if time_profile.len() != t_grid.len() {
            return Err(Error::GridMismatch);
        }
        let grid = Grid2D::new(*psi.grid(), t_grid);
        let mut amps = Vec::with_capacity(grid.n_cells());
        for a in psi.amplitudes() {
            amps.extend(time_profile.iter().map(|p| a * p));
        }
        Ok(Self { grid, amps })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.grid.n_x(), self.grid.n_t(), 1]
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn at(&self, ix: usize, it: usize) -> C64 {
        self.amps[ix * self.grid.n_t() + it]
    }

    /// `sum |Psi|^2 dx dt`.
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_area()
    }

    pub fn scale(&mut self, s: f64) {
        self.amps.iter_mut().for_each(|z| *z *= s);
    }

    /// Marginal density over x, `int |Psi(x, t)|^2 dt`.
    pub fn x_marginal(&self) -> Vec<f64> {
        let dt = self.grid.t.spacing();
        self.amps
            .chunks(self.grid.n_t())
            .map(|row| row.iter().map(|z| z.norm_sqr()).sum::<f64>() * dt)
            .collect()
    }

    /// Marginal density over t.
    pub fn t_marginal(&self) -> Vec<f64> {
        let dx = self.grid.x.spacing();
        let mut out = vec![0.0; self.grid.n_t()];
        for row in self.amps.chunks(self.grid.n_t()) {
            for (o, z) in out.iter_mut().zip(row) {
                *o += z.norm_sqr() * dx;
            }
        }
        out
    }
}

/// Four-component field on the `(x, t)` grid, row-major `[n_x, n_t, 4]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField2D {
    grid: Grid2D,
    amps: Vec<C64>,
}

pub type Spinor = [C64; 4];

impl SpinorField2D {
    pub fn new(grid: Grid2D, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != grid.n_cells() * 4 {
            return Err(Error::GridMismatch);
        }
        check_finite(&amps)?;
        Ok(Self { grid, amps })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            amps: vec![C64::new(0.0, 0.0); grid.n_cells() * 4],
        }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> Spinor) -> Self {
        let mut amps = Vec::with_capacity(grid.n_cells() * 4);
        for x in grid.x.points() {
            for t in grid.t.points() {
                amps.extend_from_slice(&f(x, t));
            }
        }
        Self { grid, amps }
    }

    pub fn constant(grid: Grid2D, spinor: Spinor) -> Self {
        Self::from_fn(grid, |_, _| spinor)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.grid.n_x(), self.grid.n_t(), 4]
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn at(&self, ix: usize, it: usize) -> Spinor {
        let o = (ix * self.grid.n_t() + it) * 4;
        [self.amps[o], self.amps[o + 1], self.amps[o + 2], self.amps[o + 3]]
    }

    pub fn spinors(&self) -> impl Iterator<Item = &[C64]> {
        self.amps.chunks_exact(4)
    }

    pub fn scale(&mut self, s: f64) {
        self.amps.iter_mut().for_each(|z| *z *= s);
    }

    /// Positive-definite `sum Psi^dagger Psi dx dt`.
    pub fn euclid_norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_area()
    }

    /// Euclidean weights of the upper (`P+`) and lower (`P-`) components.
    pub fn block_weights(&self) -> (f64, f64) {
        let (mut up, mut lo) = (0.0, 0.0);
        for s in self.spinors() {
            up += s[0].norm_sqr() + s[1].norm_sqr();
            lo += s[2].norm_sqr() + s[3].norm_sqr();
        }
        let da = self.grid.cell_area();
        (up * da, lo * da)
    }

    pub fn is_finite(&self) -> bool {
        self.amps.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Position/time moments of a density, used in event summaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub mean_x: f64,
    pub std_x: f64,
}

impl DensitySummary {
    pub fn of(psi: &WaveFunction1D) -> Self {
        let (mean_x, std_x) = psi.position_moments();
        Self { mean_x, std_x }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid1D {
        Grid1D::new(64, -10.0, 10.0).unwrap()
    }

    #[test]
    fn gaussian_is_normalized() {
        let psi = WaveFunction1D::gaussian(grid(), 1.0, 1.5, 0.7).unwrap();
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
        assert!((l2_inner(&psi, &psi).unwrap() - 1.0).norm() < 1e-12);
        let (mean, _) = psi.position_moments();
        assert!((mean - 1.0).abs() < 1e-6);
    }

    #[test]
    fn plane_waves_are_orthogonal() {
        let a = WaveFunction1D::plane_wave(grid(), 3).unwrap();
        let b = WaveFunction1D::plane_wave(grid(), 5).unwrap();
        assert!(l2_inner(&a, &b).unwrap().norm() < 1e-12);
    }

    #[test]
    fn inner_product_matches_direct_sum() {
        let g = Grid1D::new(16, 0.0, 4.0).unwrap();
        let phi = WaveFunction1D::from_fn(g, |x| C64::new(x.sin(), 0.5 * x));
        let psi = WaveFunction1D::from_fn(g, |x| C64::new(1.0 / (1.0 + x), x.cos()));
        let mut direct = C64::new(0.0, 0.0);
        for i in 0..16 {
            direct += phi.amplitudes()[i].conj() * psi.amplitudes()[i] * 0.25;
        }
        assert_eq!(l2_inner(&phi, &psi).unwrap(), direct);
    }

    #[test]
    fn inner_product_rejects_grid_mismatch() {
        let a = WaveFunction1D::zeros(grid());
        let b = WaveFunction1D::zeros(Grid1D::new(32, -10.0, 10.0).unwrap());
        assert!(matches!(l2_inner(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn zero_state_cannot_be_normalized() {
        assert!(WaveFunction1D::zeros(grid()).normalized().is_err());
    }

    #[test]
    fn product_field_has_product_norm() {
        let t = Grid1D::new(16, -4.0, 4.0).unwrap();
        let phi: Vec<C64> = t.points().map(|s| C64::new((-s * s).exp(), 0.0)).collect();
        let phi_norm: f64 = phi.iter().map(|z| z.norm_sqr()).sum::<f64>() * t.spacing();
        let psi = WaveFunction1D::gaussian(grid(), 0.0, 1.0, 0.0).unwrap();
        let f = ScalarField2D::product(&phi, &psi, t).unwrap();
        assert!((f.norm_sqr() - phi_norm).abs() < 1e-12);
        let marg: f64 = f.x_marginal().iter().sum::<f64>() * grid().spacing();
        assert!((marg - phi_norm).abs() < 1e-12);
    }
}
