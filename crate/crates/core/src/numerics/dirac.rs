//! Dirac operator and the indefinite `gamma^0` pairing on `(x, t)` spinor fields.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use super::field::SpinorField2D;
use super::gamma::{GammaSet, Mat4};
use super::grid::Grid2D;
use super::spectral::AxisFft;
use super::C64;
use crate::error::{invalid, Error, Result};

/// Static covariant four-potential `A_mu(x, t)`, one row-major `[n_x, n_t]`
/// table per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeField {
    pub components: [Vec<f64>; 4],
}

impl GaugeField {
    pub fn validate(&self, grid: &Grid2D) -> Result<()> {
        for c in &self.components {
            if c.len() != grid.n_cells() {
                return Err(Error::GridMismatch);
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(invalid("gauge", "non-finite potential value"));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.iter().all(|v| *v == 0.0))
    }
}

/// `D = i gamma^mu (d_mu + i e A_mu) - m` with `d_0 = d/dt`, `d_1 = d/dx`;
/// the fields do not depend on the two remaining spatial coordinates.
#[derive(Debug, Clone)]
pub struct DiracOperator {
    grid: Grid2D,
    mass: f64,
    charge: f64,
    gauge: Option<GaugeField>,
    gammas: GammaSet,
    fft_x: AxisFft,
    fft_t: AxisFft,
    kx: Vec<f64>,
    wt: Vec<f64>,
}

impl DiracOperator {
    pub fn new(grid: Grid2D, mass: f64, charge: f64, gauge: Option<GaugeField>) -> Result<Self> {
        grid.require_spectral()?;
        if !mass.is_finite() {
            return Err(invalid("dirac_mass", "must be finite"));
        }
        if !charge.is_finite() {
            return Err(invalid("charge", "must be finite"));
        }
        if let Some(a) = &gauge {
            a.validate(&grid)?;
        }
        let gauge = gauge.filter(|a| !(charge == 0.0 || a.is_zero()));
        Ok(Self {
            grid,
            mass,
            charge,
            gauge,
            gammas: GammaSet::standard(),
            fft_x: AxisFft::new(grid.n_x()),
            fft_t: AxisFft::new(grid.n_t()),
            kx: grid.x.wavenumbers(),
            wt: grid.t.wavenumbers(),
        })
    }

    pub fn free(grid: Grid2D, mass: f64) -> Result<Self> {
        Self::new(grid, mass, 0.0, None)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// True when no electromagnetic coupling is present, so the operator is
    /// diagonal in Fourier space.
    pub fn is_free(&self) -> bool {
        self.gauge.is_none()
    }

    pub fn gammas(&self) -> &GammaSet {
        &self.gammas
    }

    pub fn x_wavenumbers(&self) -> &[f64] {
        &self.kx
    }

    pub fn t_frequencies(&self) -> &[f64] {
        &self.wt
    }

    pub(crate) fn fft_x(&self) -> &AxisFft {
        &self.fft_x
    }

    pub(crate) fn fft_t(&self) -> &AxisFft {
        &self.fft_t
    }

    /// Fourier symbol of the free operator for the mode `exp(i (k x + w t))`:
    /// `-(w gamma^0 + k gamma^1 + m)`.
    pub fn symbol(&self, k: f64, w: f64) -> Mat4 {
        let g = &self.gammas;
        -(g.get(0) * C64::new(w, 0.0)
            + g.get(1) * C64::new(k, 0.0)
            + Mat4::identity() * C64::new(self.mass, 0.0))
    }

    fn derivative(&self, psi: &SpinorField2D, axis: usize) -> Vec<C64> {
        let shape = psi.shape();
        let mut work = psi.amplitudes().to_vec();
        let (fft, freqs) = if axis == 0 {
            (&self.fft_x, &self.kx)
        } else {
            (&self.fft_t, &self.wt)
        };
        fft.forward(&mut work, shape, axis);
        let (nx, nt) = (shape[0], shape[1]);
        for ix in 0..nx {
            for it in 0..nt {
                let f = if axis == 0 { freqs[ix] } else { freqs[it] };
                let o = (ix * nt + it) * 4;
                for z in &mut work[o..o + 4] {
                    *z *= C64::new(0.0, f);
                }
            }
        }
        fft.inverse(&mut work, shape, axis);
        work
    }

    pub fn apply(&self, psi: &SpinorField2D) -> Result<SpinorField2D> {
        if psi.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let d_t = self.derivative(psi, 1);
        let d_x = self.derivative(psi, 0);
        let i = C64::new(0.0, 1.0);
        let ig0 = self.gammas.get(0) * i;
        let ig1 = self.gammas.get(1) * i;
        let amps = psi.amplitudes();
        let mut out = vec![C64::new(0.0, 0.0); amps.len()];
        for cell in 0..self.grid.n_cells() {
            let o = cell * 4;
            let v = Vector4::from_column_slice(&amps[o..o + 4]);
            let vt = Vector4::from_column_slice(&d_t[o..o + 4]);
            let vx = Vector4::from_column_slice(&d_x[o..o + 4]);
            let mut r = ig0 * vt + ig1 * vx - v * C64::new(self.mass, 0.0);
            if let Some(a) = &self.gauge {
                // i gamma^mu (i e A_mu) = -e A_mu gamma^mu
                for mu in 0..4 {
                    let am = a.components[mu][cell];
                    if am != 0.0 {
                        r -= self.gammas.get(mu) * v * C64::new(self.charge * am, 0.0);
                    }
                }
            }
            out[o..o + 4].copy_from_slice(r.as_slice());
        }
        SpinorField2D::new(self.grid, out)
    }
}

/// One-shot `D Psi`.
pub fn apply_dirac(
    psi: &SpinorField2D,
    mass: f64,
    charge: f64,
    gauge: Option<&GaugeField>,
) -> Result<SpinorField2D> {
    DiracOperator::new(*psi.grid(), mass, charge, gauge.cloned())?.apply(psi)
}

/// `<Phi, Psi> = sum Phi^dagger gamma^0 Psi dx dt`; conjugate-linear in `Phi`,
/// Hermitian, not positive definite.
pub fn indefinite_product(phi: &SpinorField2D, psi: &SpinorField2D) -> Result<C64> {
    if phi.grid() != psi.grid() {
        return Err(Error::GridMismatch);
    }
    let mut s = C64::new(0.0, 0.0);
    for (a, b) in phi.spinors().zip(psi.spinors()) {
        s += a[0].conj() * b[0] + a[1].conj() * b[1] - a[2].conj() * b[2] - a[3].conj() * b[3];
    }
    Ok(s * phi.grid().cell_area())
}
