use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::field::WaveFunction1D;
use super::grid::Grid1D;
use super::potential::Potential;
use super::spectral::AxisFft;
use super::C64;
use crate::error::{invalid, Error, Result};

/// How `d^2/dx^2` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Multiply by `-k^2` in Fourier space.
    #[default]
    Spectral,
    /// Periodic three-point stencil.
    FiniteDifference,
}

/// `H = -(hbar^2 / 2m) d^2/dx^2 + V(x)` on a periodic grid.
///
/// An infinite mass switches the kinetic term off, which is how the
/// static (`H = V`) limit is expressed.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    grid: Grid1D,
    mass: f64,
    hbar: f64,
    potential: Vec<f64>,
    backend: Backend,
    fft: Option<AxisFft>,
    k2: Vec<f64>,
}

impl Hamiltonian {
    pub fn new(grid: Grid1D, mass: f64, potential: &Potential) -> Result<Self> {
        Self::with_options(grid, mass, 1.0, potential, Backend::Spectral)
    }

    pub fn with_options(
        grid: Grid1D,
        mass: f64,
        hbar: f64,
        potential: &Potential,
        backend: Backend,
    ) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(invalid("mass", format!("must be positive, got {mass}")));
        }
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(invalid("hbar", format!("must be positive, got {hbar}")));
        }
        let fft = match backend {
            Backend::Spectral => {
                grid.require_spectral()?;
                Some(AxisFft::new(grid.len()))
            }
            Backend::FiniteDifference => None,
        };
        let k2 = grid.wavenumbers().iter().map(|k| k * k).collect();
        Ok(Self {
            grid,
            mass,
            hbar,
            potential: potential.values(&grid)?,
            backend,
            fft,
            k2,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// `hbar^2 / 2m`, zero in the infinite-mass limit.
    pub fn kinetic_coefficient(&self) -> f64 {
        if self.mass.is_infinite() {
            0.0
        } else {
            self.hbar * self.hbar / (2.0 * self.mass)
        }
    }

    pub fn has_kinetic(&self) -> bool {
        self.kinetic_coefficient() != 0.0
    }

    /// Kinetic energy of each Fourier mode, FFT order.
    pub fn kinetic_energies(&self) -> Vec<f64> {
        let c = self.kinetic_coefficient();
        self.k2.iter().map(|k2| c * k2).collect()
    }

    pub(crate) fn fft(&self) -> Option<&AxisFft> {
        self.fft.as_ref()
    }

    pub fn apply(&self, psi: &WaveFunction1D) -> Result<WaveFunction1D> {
        if psi.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let c = self.kinetic_coefficient();
        let amps = psi.amplitudes();
        let mut out: Vec<C64> = match self.backend {
            _ if c == 0.0 => vec![C64::new(0.0, 0.0); amps.len()],
            Backend::Spectral => {
                let fft = self.fft.as_ref().expect("spectral backend owns a plan");
                let shape = [amps.len(), 1, 1];
                let mut work = amps.to_vec();
                fft.forward(&mut work, shape, 0);
                for (z, k2) in work.iter_mut().zip(&self.k2) {
                    *z *= c * k2;
                }
                fft.inverse(&mut work, shape, 0);
                work
            }
            Backend::FiniteDifference => {
                let n = amps.len();
                let h2 = self.grid.spacing().powi(2);
                (0..n)
                    .map(|i| {
                        let l = amps[(i + n - 1) % n];
                        let r = amps[(i + 1) % n];
                        -c * (l - 2.0 * amps[i] + r) / h2
                    })
                    .collect()
            }
        };
        for ((o, v), a) in out.iter_mut().zip(&self.potential).zip(amps) {
            *o += a * v;
        }
        WaveFunction1D::new(self.grid, out)
    }

    /// Dense matrix of the operator in the grid basis (columns are `H e_j`).
    pub fn dense(&self) -> DMatrix<C64> {
        let n = self.grid.len();
        let mut m = DMatrix::zeros(n, n);
        let mut unit = WaveFunction1D::zeros(self.grid);
        for j in 0..n {
            unit.amplitudes_mut()[j] = C64::new(1.0, 0.0);
            let col = self.apply(&unit).expect("grid matches by construction");
            for (i, z) in col.amplitudes().iter().enumerate() {
                m[(i, j)] = *z;
            }
            unit.amplitudes_mut()[j] = C64::new(0.0, 0.0);
        }
        // symmetrize away FFT roundoff
        (&m + m.adjoint()) * C64::new(0.5, 0.0)
    }
}

/// One-shot `H psi` with an explicit backend.
pub fn apply_hamiltonian(
    psi: &WaveFunction1D,
    potential: &Potential,
    mass: f64,
    hbar: f64,
    backend: Backend,
) -> Result<WaveFunction1D> {
    Hamiltonian::with_options(*psi.grid(), mass, hbar, potential, backend)?.apply(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::field::l2_inner;

    fn grid() -> Grid1D {
        Grid1D::new(64, -8.0, 8.0).unwrap()
    }

    #[test]
    fn plane_wave_is_kinetic_eigenfunction() {
        let g = grid();
        for mode in [1usize, 5, 17, 40] {
            let psi = WaveFunction1D::plane_wave(g, mode).unwrap();
            let k = g.wavenumbers()[mode];
            let hpsi = apply_hamiltonian(&psi, &Potential::Zero, 1.3, 1.0, Backend::Spectral).unwrap();
            let e = k * k / (2.0 * 1.3);
            let err: f64 = hpsi
                .amplitudes()
                .iter()
                .zip(psi.amplitudes())
                .map(|(a, b)| (a - b * e).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let scale = e * (psi.norm_sqr() / g.spacing()).sqrt();
            assert!(err < 1e-10 * scale, "mode {mode}: {err} vs {scale}");
        }
    }

    #[test]
    fn infinite_mass_removes_kinetic_term() {
        let psi = WaveFunction1D::gaussian(grid(), 0.5, 1.0, 2.0).unwrap();
        let hpsi =
            apply_hamiltonian(&psi, &Potential::Zero, f64::INFINITY, 1.0, Backend::Spectral).unwrap();
        assert!(hpsi.amplitudes().iter().all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn spectral_needs_power_of_two() {
        let g = Grid1D::new(48, -8.0, 8.0).unwrap();
        let psi = WaveFunction1D::gaussian(g, 0.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            apply_hamiltonian(&psi, &Potential::Zero, 1.0, 1.0, Backend::Spectral),
            Err(Error::BackendMismatch(48))
        ));
        assert!(apply_hamiltonian(&psi, &Potential::Zero, 1.0, 1.0, Backend::FiniteDifference).is_ok());
    }

    #[test]
    fn rejects_nonpositive_mass() {
        assert!(Hamiltonian::new(grid(), 0.0, &Potential::Zero).is_err());
        assert!(Hamiltonian::new(grid(), f64::NAN, &Potential::Zero).is_err());
    }

    /// Dense oracle assembled from the explicit Fourier sum, independent of the FFT path.
    #[test]
    fn harmonic_gaussian_matches_explicit_dense_matrix() {
        let g = Grid1D::new(32, -6.0, 6.0).unwrap();
        let n = g.len();
        let pot = Potential::Harmonic {
            stiffness: 0.8,
            center: 0.3,
        };
        let mass = 0.7;
        let ks = g.wavenumbers();
        let xs: Vec<f64> = g.points().collect();
        let mut dense = DMatrix::<C64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = C64::new(0.0, 0.0);
                for k in &ks {
                    s += C64::from_polar(k * k / (2.0 * mass), k * (xs[i] - xs[j])) / n as f64;
                }
                dense[(i, j)] = s;
            }
            dense[(i, i)] += C64::new(pot.eval(xs[i]), 0.0);
        }
        let psi = WaveFunction1D::gaussian(g, -0.5, 0.9, 1.1).unwrap();
        let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
        let want = &dense * v;
        let got = apply_hamiltonian(&psi, &pot, mass, 1.0, Backend::Spectral).unwrap();
        let dev = got
            .amplitudes()
            .iter()
            .zip(want.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-10, "max deviation {dev}");
    }

    #[test]
    fn hermitian_for_random_pairs() {
        let g = grid();
        let h = Hamiltonian::new(
            g,
            0.9,
            &Potential::Barrier {
                height: 2.0,
                left: -1.0,
                right: 1.5,
            },
        )
        .unwrap();
        for seed in 0..5u32 {
            let s = seed as f64;
            let phi = WaveFunction1D::from_fn(g, |x| C64::new((x * (1.0 + s)).sin(), (0.3 * x + s).cos()));
            let psi = WaveFunction1D::from_fn(g, |x| C64::new((x * x * 0.1 + s).cos(), x.sin() * s));
            let lhs = l2_inner(&h.apply(&phi).unwrap(), &psi).unwrap();
            let rhs = l2_inner(&phi, &h.apply(&psi).unwrap()).unwrap();
            let scale = (phi.norm_sqr() * psi.norm_sqr()).sqrt();
            assert!((lhs - rhs).norm() < 1e-10 * scale);
        }
    }

    #[test]
    fn dense_matrix_is_hermitian_and_consistent() {
        let g = Grid1D::new(16, -4.0, 4.0).unwrap();
        let h = Hamiltonian::new(g, 1.0, &Potential::Zero).unwrap();
        let m = h.dense();
        assert!((&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-14);
        let psi = WaveFunction1D::gaussian(g, 0.0, 1.0, 0.5).unwrap();
        let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
        let mv = &m * v;
        let hp = h.apply(&psi).unwrap();
        for (a, b) in mv.iter().zip(hp.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
