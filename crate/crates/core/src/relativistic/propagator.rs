//! Damped proper-time flow `Psi' = (-i D^2 / 2M - Lambda / 2) Psi`.
//!
//! Without an external field `D` is diagonal in Fourier space. For the mode
//! `exp(i (k x + w t))`, with `N = w gamma^0 + k gamma^1` and
//! `N^2 = (w^2 - k^2) I`, the symbol of `D^2` is `a I + 2 m N` with
//! `a = w^2 - k^2 + m^2`, so
//!
//! ```text
//! exp(-i h D^2 / 2M) = exp(-i h a / 2M) (cosh(b r) I + sinh(b r) / r N),
//! b = -i h m / M,  r^2 = w^2 - k^2.
//! ```
//!
//! Spacelike modes (`k^2 > w^2`) with `m != 0` grow like `exp(h m r / M)`;
//! the indefinite norm is still conserved. With a field present the step
//! falls back to a fourth-order Taylor expansion of the full generator.

use crate::error::{invalid, Error, Result};
use crate::numerics::gamma::Mat4;
use crate::numerics::{DiracOperator, SpinorField2D, C64};

/// `exp(-i h D^2 / 2M)` restricted to one Fourier mode.
pub fn mode_propagator(k: f64, w: f64, mass: f64, evolution_mass: f64, h: f64) -> Mat4 {
    let gammas = crate::numerics::GammaSet::standard();
    let n = gammas.get(0) * C64::new(w, 0.0) + gammas.get(1) * C64::new(k, 0.0);
    let sigma = w * w - k * k;
    let a = sigma + mass * mass;
    let phase = C64::from_polar(1.0, -h * a / (2.0 * evolution_mass));
    let b = C64::new(0.0, -h * mass / evolution_mass);
    let r = C64::new(sigma, 0.0).sqrt();
    let z = b * r;
    let (c, s_over_r) = if z.norm() < 1e-3 {
        // sinh(z) / r = b (1 + z^2/6 + z^4/120 + ...), cosh(z) = 1 + z^2/2 + z^4/24
        let z2 = z * z;
        (
            C64::new(1.0, 0.0) + z2 * 0.5 + z2 * z2 / 24.0,
            b * (C64::new(1.0, 0.0) + z2 / 6.0 + z2 * z2 / 120.0),
        )
    } else {
        (z.cosh(), z.sinh() / r)
    };
    (Mat4::identity() * c + n * s_over_r) * phase
}

#[derive(Debug, Clone)]
enum Kinetic {
    /// Per-mode half-step matrices for the nominal step, `[n_x * n_t]`.
    Spectral(Vec<Mat4>),
    Taylor,
}

/// Strang splitting of the damped flow (spectral path) or a fourth-order
/// Taylor step of the full generator (when a field is present).
#[derive(Debug, Clone)]
pub struct RelPropagator {
    op: DiracOperator,
    evolution_mass: f64,
    /// `Lambda(x)`, acting on the upper components only.
    rates: Vec<f64>,
    dt: f64,
    kinetic: Kinetic,
}

impl RelPropagator {
    pub fn new(op: DiracOperator, evolution_mass: f64, rates: Vec<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        if !(evolution_mass > 0.0) || !evolution_mass.is_finite() {
            return Err(invalid("evolution_mass", "must be positive and finite"));
        }
        if rates.len() != op.grid().n_x() {
            return Err(Error::GridMismatch);
        }
        let mut p = Self {
            op,
            evolution_mass,
            rates,
            dt,
            kinetic: Kinetic::Taylor,
        };
        if p.op.is_free() {
            p.kinetic = Kinetic::Spectral(p.half_matrices(dt));
        }
        Ok(p)
    }

    pub fn operator(&self) -> &DiracOperator {
        &self.op
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self.kinetic, Kinetic::Spectral(_))
    }

    fn half_matrices(&self, h: f64) -> Vec<Mat4> {
        let (kx, wt) = (self.op.x_wavenumbers(), self.op.t_frequencies());
        let mut out = Vec::with_capacity(kx.len() * wt.len());
        for k in kx {
            for w in wt {
                out.push(mode_propagator(*k, *w, self.op.mass(), self.evolution_mass, 0.5 * h));
            }
        }
        out
    }

    pub fn step(&self, psi: &SpinorField2D) -> SpinorField2D {
        self.step_by(psi, self.dt)
    }

    pub fn step_by(&self, psi: &SpinorField2D, h: f64) -> SpinorField2D {
        match &self.kinetic {
            Kinetic::Spectral(nominal) => {
                let owned;
                let mats = if h == self.dt {
                    nominal
                } else {
                    owned = self.half_matrices(h);
                    &owned
                };
                let mut out = psi.clone();
                self.free_half_step(&mut out, mats);
                self.damp(&mut out, h);
                self.free_half_step(&mut out, mats);
                out
            }
            Kinetic::Taylor => self.taylor_step(psi, h),
        }
    }

    fn free_half_step(&self, psi: &mut SpinorField2D, mats: &[Mat4]) {
        let shape = psi.shape();
        let amps = psi.amplitudes_mut();
        self.op.fft_x().forward(amps, shape, 0);
        self.op.fft_t().forward(amps, shape, 1);
        for (cell, m) in amps.chunks_exact_mut(4).zip(mats) {
            let v = nalgebra::Vector4::from_column_slice(cell);
            cell.copy_from_slice((m * v).as_slice());
        }
        self.op.fft_t().inverse(amps, shape, 1);
        self.op.fft_x().inverse(amps, shape, 0);
    }

    /// `exp(-Lambda h / 2)` with `Lambda = P+ sum g_i^2`.
    fn damp(&self, psi: &mut SpinorField2D, h: f64) {
        let nt = psi.grid().n_t();
        for (row, r) in psi.amplitudes_mut().chunks_mut(nt * 4).zip(&self.rates) {
            let f = (-0.5 * r * h).exp();
            for cell in row.chunks_exact_mut(4) {
                cell[0] *= f;
                cell[1] *= f;
            }
        }
    }

    /// `L Psi = -i D^2 Psi / 2M - Lambda Psi / 2`.
    pub fn generator(&self, psi: &SpinorField2D) -> SpinorField2D {
        let d = self.op.apply(psi).expect("grid checked");
        let mut out = self.op.apply(&d).expect("grid checked");
        let c = C64::new(0.0, -1.0 / (2.0 * self.evolution_mass));
        out.amplitudes_mut().iter_mut().for_each(|z| *z *= c);
        let nt = psi.grid().n_t();
        for ((o_row, p_row), r) in out
            .amplitudes_mut()
            .chunks_mut(nt * 4)
            .zip(psi.amplitudes().chunks(nt * 4))
            .zip(&self.rates)
        {
            for (o, p) in o_row.chunks_exact_mut(4).zip(p_row.chunks_exact(4)) {
                o[0] -= p[0] * (0.5 * r);
                o[1] -= p[1] * (0.5 * r);
            }
        }
        out
    }

    fn taylor_step(&self, psi: &SpinorField2D, h: f64) -> SpinorField2D {
        let mut out = psi.clone();
        let mut term = psi.clone();
        for j in 1..=4 {
            term = self.generator(&term);
            term.scale(h / j as f64);
            out.amplitudes_mut()
                .iter_mut()
                .zip(term.amplitudes())
                .for_each(|(o, t)| *o += t);
        }
        out
    }

    /// Largest modulus of a per-mode eigenvalue of `D^2 / 2M`.
    pub fn max_mode_frequency(&self) -> f64 {
        let m = self.op.mass();
        let mut best: f64 = 0.0;
        for k in self.op.x_wavenumbers() {
            for w in self.op.t_frequencies() {
                let sigma = w * w - k * k;
                let a = sigma + m * m;
                best = best.max(a.abs() + 2.0 * m.abs() * sigma.abs().sqrt());
            }
        }
        best / (2.0 * self.evolution_mass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dense::expm;
    use crate::numerics::{Grid1D, Grid2D};

    fn dense_symbol_squared(k: f64, w: f64, m: f64) -> Mat4 {
        let op = DiracOperator::free(
            Grid2D::new(Grid1D::new(4, 0.0, 1.0).unwrap(), Grid1D::new(4, 0.0, 1.0).unwrap()),
            m,
        )
        .unwrap();
        let s = op.symbol(k, w);
        s * s
    }

    #[test]
    fn closed_form_matches_matrix_exponential() {
        let cases = [
            (0.0, 0.0, 1.0),
            (1.3, 0.4, 1.0),  // spacelike, growing
            (0.4, 1.3, 0.7),  // timelike, oscillating
            (1.0, 1.0, 0.5),  // light cone, series branch
            (2.0, -0.5, 0.0), // massless
            (1e-4, 2e-4, 1.0),
        ];
        for (k, w, m) in cases {
            let (big_m, h) = (1.3, 0.37);
            let sq = dense_symbol_squared(k, w, m);
            let nalg = {
                let a = nalgebra::DMatrix::from_fn(4, 4, |i, j| sq[(i, j)] * C64::new(0.0, -h / (2.0 * big_m)));
                expm(&a)
            };
            let ours = mode_propagator(k, w, m, big_m, h);
            let dev = (0..4)
                .flat_map(|i| (0..4).map(move |j| (i, j)))
                .map(|(i, j)| (ours[(i, j)] - nalg[(i, j)]).norm())
                .fold(0.0, f64::max);
            assert!(dev < 1e-12, "k={k} w={w} m={m}: {dev}");
        }
    }
}
