use super::detector::DetectorSpec;
use crate::error::{invalid, Error, Result};
use crate::numerics::{Hamiltonian, WaveFunction1D, C64};

/// Total rate profile `Lambda(x) = sum_i g_i(x)^2` of the given detectors.
pub fn rate_profile<'a>(
    grid: &crate::numerics::Grid1D,
    detectors: impl IntoIterator<Item = &'a DetectorSpec>,
) -> Result<Vec<f64>> {
    let mut rates = vec![0.0; grid.len()];
    for d in detectors {
        for (r, g) in rates.iter_mut().zip(d.profile.values(grid)?) {
            *r += g * g;
        }
    }
    Ok(rates)
}

/// Strang splitting of `psi' = (-i H / hbar - Lambda / 2) psi`:
/// half kinetic step in Fourier space, full pointwise `exp((-i V / hbar - Lambda / 2) h)`,
/// half kinetic step. Every factor has modulus at most one, so the squared
/// norm never increases.
#[derive(Debug, Clone)]
pub struct DampedPropagator {
    ham: Hamiltonian,
    rates: Vec<f64>,
    dt: f64,
    half_kinetic: Vec<C64>,
    pointwise: Vec<C64>,
}

impl DampedPropagator {
    pub fn new(ham: Hamiltonian, rates: Vec<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        if rates.len() != ham.grid().len() {
            return Err(Error::GridMismatch);
        }
        if ham.has_kinetic() && ham.fft().is_none() {
            return Err(invalid("backend", "damped propagation needs the spectral backend"));
        }
        let half_kinetic = kinetic_phases(&ham, 0.5 * dt);
        let pointwise = pointwise_factors(&ham, &rates, dt);
        Ok(Self {
            ham,
            rates,
            dt,
            half_kinetic,
            pointwise,
        })
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.ham
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One step of the nominal length.
    pub fn step(&self, psi: &WaveFunction1D) -> WaveFunction1D {
        let mut out = psi.clone();
        self.apply(out.amplitudes_mut(), &self.half_kinetic, &self.pointwise);
        out
    }

    /// One step of arbitrary length `h >= 0`.
    pub fn step_by(&self, psi: &WaveFunction1D, h: f64) -> WaveFunction1D {
        if h == self.dt {
            return self.step(psi);
        }
        let hk = kinetic_phases(&self.ham, 0.5 * h);
        let pw = pointwise_factors(&self.ham, &self.rates, h);
        let mut out = psi.clone();
        self.apply(out.amplitudes_mut(), &hk, &pw);
        out
    }

    fn apply(&self, amps: &mut [C64], half_kinetic: &[C64], pointwise: &[C64]) {
        let kinetic = self.ham.has_kinetic();
        if kinetic {
            self.kinetic(amps, half_kinetic);
        }
        for (z, f) in amps.iter_mut().zip(pointwise) {
            *z *= f;
        }
        if kinetic {
            self.kinetic(amps, half_kinetic);
        }
    }

    fn kinetic(&self, amps: &mut [C64], phases: &[C64]) {
        let fft = self.ham.fft().expect("checked in constructor");
        let shape = [amps.len(), 1, 1];
        fft.forward(amps, shape, 0);
        for (z, f) in amps.iter_mut().zip(phases) {
            *z *= f;
        }
        fft.inverse(amps, shape, 0);
    }

    /// Mean of `Lambda` in `psi`, `(psi, Lambda psi)`.
    pub fn rate_expectation(&self, psi: &WaveFunction1D) -> f64 {
        let dx = psi.grid().spacing();
        psi.amplitudes()
            .iter()
            .zip(&self.rates)
            .map(|(z, r)| r * z.norm_sqr())
            .sum::<f64>()
            * dx
    }
}

fn kinetic_phases(ham: &Hamiltonian, h: f64) -> Vec<C64> {
    let hbar = ham.hbar();
    ham.kinetic_energies()
        .iter()
        .map(|e| C64::from_polar(1.0, -e * h / hbar))
        .collect()
}

fn pointwise_factors(ham: &Hamiltonian, rates: &[f64], h: f64) -> Vec<C64> {
    let hbar = ham.hbar();
    ham.potential()
        .iter()
        .zip(rates)
        .map(|(v, r)| C64::from_polar((-0.5 * r * h).exp(), -v * h / hbar))
        .collect()
}

/// Default step: `max(Lambda) dt <= 0.01` and kinetic phase at the Nyquist
/// mode at most `pi / 4`.
pub fn default_dt(ham: &Hamiltonian, rates: &[f64]) -> f64 {
    let max_rate = rates.iter().copied().fold(0.0, f64::max);
    let mut dt = f64::INFINITY;
    if max_rate > 0.0 {
        dt = dt.min(0.01 / max_rate);
    }
    let e_nyq = ham.kinetic_coefficient() * ham.grid().nyquist().powi(2) / ham.hbar();
    if e_nyq > 0.0 {
        dt = dt.min(std::f64::consts::FRAC_PI_4 / e_nyq);
    }
    if dt.is_finite() {
        dt
    } else {
        0.01
    }
}

/// One damped step of length `dt` with `Lambda` built from the active detectors.
pub fn evolve_damped(
    psi: &WaveFunction1D,
    detectors: &[DetectorSpec],
    ham: &Hamiltonian,
    dt: f64,
) -> Result<WaveFunction1D> {
    if psi.grid() != ham.grid() {
        return Err(Error::GridMismatch);
    }
    let rates = rate_profile(ham.grid(), detectors.iter().filter(|d| d.active))?;
    let out = DampedPropagator::new(ham.clone(), rates, dt)?.step(psi);
    let n = out.norm_sqr();
    if !n.is_finite() {
        return Err(Error::Blowup {
            time: dt,
            detail: format!("squared norm {n} after one step"),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonrel::detector::Profile;
    use crate::numerics::dense::expm;
    use crate::numerics::{Grid1D, Potential};
    use nalgebra::DVector;

    fn grid(n: usize) -> Grid1D {
        Grid1D::new(n, -8.0, 8.0).unwrap()
    }

    #[test]
    fn undamped_step_is_unitary() {
        let g = grid(128);
        let ham = Hamiltonian::new(
            g,
            1.0,
            &Potential::Harmonic {
                stiffness: 0.5,
                center: 0.0,
            },
        )
        .unwrap();
        let mut psi = WaveFunction1D::gaussian(g, -1.0, 0.8, 1.5).unwrap();
        let prop = DampedPropagator::new(ham, vec![0.0; 128], 0.01).unwrap();
        for _ in 0..100 {
            psi = prop.step(&psi);
        }
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn static_constant_rate_decays_exponentially() {
        let g = grid(64);
        let kappa: f64 = 0.7;
        let ham = Hamiltonian::new(g, f64::INFINITY, &Potential::Zero).unwrap();
        let det = DetectorSpec::new(Profile::constant(kappa.sqrt()));
        let mut psi = WaveFunction1D::gaussian(g, 0.0, 1.0, 0.0).unwrap();
        let dt = 0.05;
        for k in 1..=40 {
            psi = evolve_damped(&psi, std::slice::from_ref(&det), &ham, dt).unwrap();
            let want = (-kappa * dt * k as f64).exp();
            assert!((psi.norm_sqr() - want).abs() / want < 1e-10);
        }
    }

    #[test]
    fn inactive_detectors_do_not_damp() {
        let g = grid(64);
        let ham = Hamiltonian::new(g, 1.0, &Potential::Zero).unwrap();
        let det = DetectorSpec::new(Profile::constant(1.0)).inactive();
        let psi = WaveFunction1D::gaussian(g, 0.0, 1.0, 0.0).unwrap();
        let out = evolve_damped(&psi, &[det], &ham, 0.1).unwrap();
        assert!((out.norm_sqr() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_nonpositive_dt() {
        let g = grid(16);
        let ham = Hamiltonian::new(g, 1.0, &Potential::Zero).unwrap();
        let psi = WaveFunction1D::gaussian(g, 0.0, 1.0, 0.0).unwrap();
        assert!(evolve_damped(&psi, &[], &ham, 0.0).is_err());
        assert!(evolve_damped(&psi, &[], &ham, -1.0).is_err());
    }

    /// Strang error per step is O(dt^3): halving dt cuts the one-step
    /// deviation from the dense exponential by about eight.
    #[test]
    fn matches_dense_exponential_at_third_order() {
        let g = Grid1D::new(32, -6.0, 6.0).unwrap();
        let ham = Hamiltonian::new(
            g,
            1.0,
            &Potential::Harmonic {
                stiffness: 0.3,
                center: 0.5,
            },
        )
        .unwrap();
        let rates = rate_profile(&g, [&DetectorSpec::new(Profile::gaussian(1.0, 1.0, 1.2))]).unwrap();
        let psi = WaveFunction1D::gaussian(g, -0.5, 1.0, 0.8).unwrap();
        let mut gen = ham.dense() * C64::new(0.0, -1.0);
        for (i, r) in rates.iter().enumerate() {
            gen[(i, i)] -= C64::new(0.5 * r, 0.0);
        }
        let deviation = |dt: f64| {
            let exact = expm(&(gen.clone() * C64::new(dt, 0.0))) * DVector::from_column_slice(psi.amplitudes());
            let prop = DampedPropagator::new(ham.clone(), rates.clone(), dt).unwrap();
            let got = prop.step(&psi);
            got.amplitudes()
                .iter()
                .zip(exact.iter())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        };
        let e1 = deviation(0.02);
        let e2 = deviation(0.01);
        let ratio = e1 / e2;
        assert!(e1 < 1e-4, "deviation {e1}");
        assert!((6.0..10.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn norm_is_monotone_under_damping() {
        let g = grid(64);
        let ham = Hamiltonian::new(g, 1.0, &Potential::Zero).unwrap();
        let rates = rate_profile(&g, [&DetectorSpec::new(Profile::gaussian(2.0, 1.0, 1.0))]).unwrap();
        let prop = DampedPropagator::new(ham, rates, 0.01).unwrap();
        let mut psi = WaveFunction1D::gaussian(g, 0.0, 1.0, 1.0).unwrap();
        let mut last = psi.norm_sqr();
        for _ in 0..300 {
            psi = prop.step(&psi);
            let n = psi.norm_sqr();
            assert!(n <= last + 1e-15);
            last = n;
        }
        assert!(last < 0.999);
    }
}
