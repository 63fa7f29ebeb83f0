//! Proper-time formulation on an `(x, t)` grid.
//!
//! The field `Psi(x, t)` flows in an external parameter `tau` with
//!
//! ```text
//! dPsi/dtau = (-i H - Lambda / 2) Psi - dPsi/dt
//! ```
//!
//! For couplings that depend on `x` only, the x-sector damped flow and the
//! translation generated by `-d/dt` commute, so a product `phi(t) psi0(x)`
//! evolves into `phi(t - tau) exp((-i H - Lambda / 2) tau) psi0(x)`.
//! The click process on this space (with `tau` in place of `t`) has the
//! same click-time law as the one-dimensional engine.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::liouville::DENSE_CAP;
use crate::nonrel::{DetectorSpec, NonrelConfig, NonrelDynamics, NonrelEngine, Packet};
use crate::numerics::dense::expm;
use crate::numerics::spectral::AxisFft;
use crate::numerics::{Grid1D, Grid2D, Hamiltonian, Potential, RngStream, ScalarField2D, WaveFunction1D, C64};
use crate::pdp::{self, ClickDynamics, DriverSettings, TrajectoryRecord};
use crate::stats::{ks_critical_two_sample, ks_two_sample, SampleStats};

/// Normalized Gaussian time profile `phi(t)`, `int |phi|^2 dt = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeProfile {
    pub center: f64,
    pub width: f64,
}

impl TimeProfile {
    /// Profile values are negligible (below `1e-16` relative) beyond this many widths.
    pub const SUPPORT_WIDTHS: f64 = 12.0;

    pub fn new(center: f64, width: f64) -> Result<Self> {
        let p = Self { center, width };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) || !self.width.is_finite() || !self.center.is_finite() {
            return Err(invalid("time_profile", "width must be positive and finite"));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> C64 {
        let d = t - self.center;
        let norm = (2.0 * std::f64::consts::PI * self.width * self.width).powf(-0.25);
        C64::new(norm * (-d * d / (4.0 * self.width * self.width)).exp(), 0.0)
    }

    pub fn values(&self, grid: &Grid1D) -> Vec<C64> {
        grid.points().map(|t| self.eval(t)).collect()
    }

    /// Fails if the profile shifted by any `tau` in `[0, max_shift]` would
    /// reach the edge of the periodic time box.
    pub fn check_box(&self, grid: &Grid1D, max_shift: f64) -> Result<()> {
        let reach = Self::SUPPORT_WIDTHS * self.width;
        let lo = self.center - reach;
        let hi = self.center + max_shift + reach;
        if lo < grid.x_min() || hi > grid.x_max() {
            return Err(Error::TimeBoxWrap(format!(
                "profile support [{lo:.3}, {hi:.3}] leaves the time box [{:.3}, {:.3}]",
                grid.x_min(),
                grid.x_max()
            )));
        }
        Ok(())
    }
}

/// Coupling on the `(x, t)` grid. Only x-dependent couplings can be evolved.
#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    Static(Vec<f64>),
    /// Row-major `[n_x, n_t]` table.
    SpaceTime(Vec<f64>),
}

impl Coupling {
    /// `g(x)`, or an error if the table varies along `t`.
    pub fn x_profile(&self, grid: &Grid2D) -> Result<Vec<f64>> {
        match self {
            Coupling::Static(g) if g.len() == grid.n_x() => Ok(g.clone()),
            Coupling::SpaceTime(table) if table.len() == grid.n_cells() => {
                let rows: Vec<&[f64]> = table.chunks(grid.n_t()).collect();
                if rows.iter().any(|r| r.iter().any(|v| *v != r[0])) {
                    return Err(Error::TimeDependentCoupling);
                }
                Ok(rows.iter().map(|r| r[0]).collect())
            }
            _ => Err(Error::GridMismatch),
        }
    }
}

/// Split step of the proper-time flow: x-sector Strang step on every
/// `t`-slice, then an exact spectral shift `t -> t - h`.
#[derive(Debug, Clone)]
pub struct ProperTimePropagator {
    grid: Grid2D,
    ham: Hamiltonian,
    rates: Vec<f64>,
    dt: f64,
    fft_t: AxisFft,
    frequencies: Vec<f64>,
    nominal: StepFactors,
}

#[derive(Debug, Clone)]
struct StepFactors {
    half_kinetic: Vec<C64>,
    pointwise: Vec<C64>,
    shift: Vec<C64>,
}

impl ProperTimePropagator {
    pub fn new(grid: Grid2D, ham: Hamiltonian, rates: Vec<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        if *ham.grid() != grid.x || rates.len() != grid.n_x() {
            return Err(Error::GridMismatch);
        }
        grid.t.require_spectral()?;
        if ham.has_kinetic() && ham.fft().is_none() {
            return Err(invalid("backend", "damped propagation needs the spectral backend"));
        }
        let frequencies = grid.t.wavenumbers();
        let mut p = Self {
            grid,
            fft_t: AxisFft::new(grid.n_t()),
            ham,
            rates,
            dt,
            frequencies,
            nominal: StepFactors {
                half_kinetic: Vec::new(),
                pointwise: Vec::new(),
                shift: Vec::new(),
            },
        };
        p.nominal = p.factors(dt);
        Ok(p)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn factors(&self, h: f64) -> StepFactors {
        StepFactors {
            half_kinetic: self
                .ham
                .kinetic_energies()
                .iter()
                .map(|e| C64::from_polar(1.0, -0.5 * e * h))
                .collect(),
            pointwise: self
                .ham
                .potential()
                .iter()
                .zip(&self.rates)
                .map(|(v, r)| C64::from_polar((-0.5 * r * h).exp(), -v * h))
                .collect(),
            shift: self.frequencies.iter().map(|w| C64::from_polar(1.0, -w * h)).collect(),
        }
    }

    pub fn step(&self, psi: &ScalarField2D) -> ScalarField2D {
        let mut out = psi.clone();
        self.x_sector(out.amplitudes_mut(), &self.nominal);
        self.t_shift(out.amplitudes_mut(), &self.nominal);
        out
    }

    pub fn step_by(&self, psi: &ScalarField2D, h: f64) -> ScalarField2D {
        if h == self.dt {
            return self.step(psi);
        }
        let f = self.factors(h);
        let mut out = psi.clone();
        self.x_sector(out.amplitudes_mut(), &f);
        self.t_shift(out.amplitudes_mut(), &f);
        out
    }

    /// Only the damped x-sector part of a step of length `h`.
    pub fn x_step(&self, psi: &ScalarField2D, h: f64) -> ScalarField2D {
        let mut out = psi.clone();
        self.x_sector(out.amplitudes_mut(), &self.factors(h));
        out
    }

    /// Only the translation `t -> t - h`.
    pub fn t_step(&self, psi: &ScalarField2D, h: f64) -> ScalarField2D {
        let mut out = psi.clone();
        self.t_shift(out.amplitudes_mut(), &self.factors(h));
        out
    }

    fn x_sector(&self, amps: &mut [C64], f: &StepFactors) {
        let nt = self.grid.n_t();
        let shape = [self.grid.n_x(), nt, 1];
        let kinetic = |amps: &mut [C64]| {
            let fft = self.ham.fft().expect("checked in constructor");
            fft.forward(amps, shape, 0);
            for (row, ph) in amps.chunks_mut(nt).zip(&f.half_kinetic) {
                row.iter_mut().for_each(|z| *z *= ph);
            }
            fft.inverse(amps, shape, 0);
        };
        if self.ham.has_kinetic() {
            kinetic(amps);
        }
        for (row, pw) in amps.chunks_mut(nt).zip(&f.pointwise) {
            row.iter_mut().for_each(|z| *z *= pw);
        }
        if self.ham.has_kinetic() {
            kinetic(amps);
        }
    }

    fn t_shift(&self, amps: &mut [C64], f: &StepFactors) {
        let shape = [self.grid.n_x(), self.grid.n_t(), 1];
        self.fft_t.forward(amps, shape, 1);
        for row in amps.chunks_mut(self.grid.n_t()) {
            row.iter_mut().zip(&f.shift).for_each(|(z, s)| *z *= s);
        }
        self.fft_t.inverse(amps, shape, 1);
    }

    /// `(Psi, Lambda Psi)` over `dx dt`.
    pub fn rate_expectation(&self, psi: &ScalarField2D) -> f64 {
        weighted_norm(psi, &self.rates)
    }
}

fn weighted_norm(psi: &ScalarField2D, weights_x: &[f64]) -> f64 {
    let nt = psi.grid().n_t();
    psi.amplitudes()
        .chunks(nt)
        .zip(weights_x)
        .map(|(row, w)| w * row.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum::<f64>()
        * psi.grid().cell_area()
}

/// One step of the proper-time flow with coupling `g`.
pub fn evolve_proper_time(
    psi: &ScalarField2D,
    ham: &Hamiltonian,
    coupling: &Coupling,
    dtau: f64,
) -> Result<ScalarField2D> {
    let g = coupling.x_profile(psi.grid())?;
    let rates = g.iter().map(|v| v * v).collect();
    let out = ProperTimePropagator::new(*psi.grid(), ham.clone(), rates, dtau)?.step(psi);
    let n = out.norm_sqr();
    if !n.is_finite() {
        return Err(Error::Blowup {
            time: dtau,
            detail: format!("squared norm {n} after one step"),
        });
    }
    Ok(out)
}

/// Closed-form `phi(t - tau) exp((-i H - Lambda / 2) tau) psi0(x)` on the
/// grid of `t_grid` and `psi0`, with a dense exponential for the x-sector.
pub fn factorized_solution(
    phi: &TimeProfile,
    psi0: &WaveFunction1D,
    ham: &Hamiltonian,
    g: &[f64],
    t_grid: Grid1D,
    tau: f64,
) -> Result<ScalarField2D> {
    if !(tau >= 0.0) {
        return Err(invalid("tau", "must be >= 0"));
    }
    if psi0.grid() != ham.grid() || g.len() != psi0.grid().len() {
        return Err(Error::GridMismatch);
    }
    phi.check_box(&t_grid, tau)?;
    let shifted: Vec<C64> = t_grid.points().map(|t| phi.eval(t - tau)).collect();
    if tau == 0.0 {
        return ScalarField2D::product(&shifted, psi0, t_grid);
    }
    let n = psi0.grid().len();
    if n > DENSE_CAP {
        return Err(Error::DimensionCap { n, cap: DENSE_CAP });
    }
    let mut gen = ham.dense() * C64::new(0.0, -tau);
    for (i, gi) in g.iter().enumerate() {
        gen[(i, i)] -= C64::new(0.5 * gi * gi * tau, 0.0);
    }
    let x_part = expm(&gen) * DVector::from_column_slice(psi0.amplitudes());
    let psi_tau = WaveFunction1D::new(*psi0.grid(), x_part.iter().copied().collect())?;
    ScalarField2D::product(&shifted, &psi_tau, t_grid)
}

/// Position and coordinate-time moments of a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSummary {
    pub mean_x: f64,
    pub std_x: f64,
    pub mean_t: f64,
    pub std_t: f64,
}

impl FieldSummary {
    pub fn of(psi: &ScalarField2D) -> Self {
        let g = psi.grid();
        let (mean_x, std_x) =
            crate::numerics::field::moments(g.x.points().zip(psi.x_marginal()));
        let (mean_t, std_t) =
            crate::numerics::field::moments(g.t.points().zip(psi.t_marginal()));
        Self {
            mean_x,
            std_x,
            mean_t,
            std_t,
        }
    }
}

/// Click dynamics on `L^2(dx dt)`: the nonrelativistic couplings act on `x`
/// while the field drifts along `t`.
#[derive(Debug, Clone)]
pub struct ProperTimeDynamics {
    grid: Grid2D,
    x: NonrelDynamics,
    profiles: Vec<Vec<f64>>,
}

impl ProperTimeDynamics {
    pub fn new(grid: Grid2D, ham: Hamiltonian, detectors: &[DetectorSpec]) -> Result<Self> {
        let profiles = detectors
            .iter()
            .map(|d| {
                d.validate(&grid.x)?;
                d.profile.values(&grid.x)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            x: NonrelDynamics::new(ham, detectors)?,
            profiles,
        })
    }

    pub fn rate_expectation(&self, psi: &ScalarField2D, detector: usize) -> f64 {
        let r: Vec<f64> = self.profiles[detector].iter().map(|g| g * g).collect();
        weighted_norm(psi, &r)
    }
}

impl ClickDynamics for ProperTimeDynamics {
    type State = ScalarField2D;
    type Stepper = ProperTimePropagator;

    fn stepper(&self, monitoring: &[bool], dt: f64) -> Result<ProperTimePropagator> {
        ProperTimePropagator::new(
            self.grid,
            self.x.hamiltonian().clone(),
            self.x.total_rates(monitoring),
            dt,
        )
    }

    fn advance(&self, stepper: &ProperTimePropagator, state: &ScalarField2D, h: f64) -> ScalarField2D {
        stepper.step_by(state, h)
    }

    fn budget(&self, state: &ScalarField2D) -> f64 {
        state.norm_sqr()
    }

    fn detector_weight(&self, state: &ScalarField2D, detector: usize) -> f64 {
        self.rate_expectation(state, detector)
    }

    fn jump(&self, state: &ScalarField2D, detector: usize) -> Result<ScalarField2D> {
        let mut out = state.clone();
        let nt = self.grid.n_t();
        for (row, g) in out.amplitudes_mut().chunks_mut(nt).zip(&self.profiles[detector]) {
            row.iter_mut().for_each(|z| *z *= *g);
        }
        normalize(out).map_err(|_| Error::DarkState)
    }

    fn normalized(&self, state: &ScalarField2D) -> Result<ScalarField2D> {
        normalize(state.clone())
    }
}

fn normalize(mut f: ScalarField2D) -> Result<ScalarField2D> {
    let n = f.norm_sqr();
    if !(n > 0.0) || !n.is_finite() {
        return Err(invalid("field", format!("cannot normalize squared norm {n}")));
    }
    f.scale(1.0 / n.sqrt());
    Ok(f)
}

/// One-dimensional setup lifted to `(x, t)` with a time profile.
#[derive(Debug, Clone)]
pub struct ProperTimeConfig {
    pub x: NonrelConfig,
    pub t_grid: Grid1D,
    pub time_profile: TimeProfile,
}

#[derive(Debug, Clone)]
pub struct ProperTimeEngine {
    config: ProperTimeConfig,
    grid: Grid2D,
    dynamics: ProperTimeDynamics,
    initial: ScalarField2D,
    dt: f64,
}

impl ProperTimeEngine {
    pub fn new(config: ProperTimeConfig) -> Result<Self> {
        // validates the x-sector exactly as the one-dimensional engine does
        let x_engine = NonrelEngine::new(config.x.clone())?;
        config.time_profile.validate()?;
        config.time_profile.check_box(&config.t_grid, config.x.horizon)?;
        let grid = Grid2D::new(config.x.grid, config.t_grid);
        grid.t.require_spectral()?;
        let dynamics = ProperTimeDynamics::new(
            grid,
            x_engine.dynamics().hamiltonian().clone(),
            &config.x.detectors,
        )?;
        let initial = ScalarField2D::product(
            &config.time_profile.values(&config.t_grid),
            x_engine.initial_state(),
            config.t_grid,
        )?;
        let initial = normalize(initial)?;
        Ok(Self {
            dt: x_engine.dt(),
            config,
            grid,
            dynamics,
            initial,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn initial_state(&self) -> &ScalarField2D {
        &self.initial
    }

    pub fn dynamics(&self) -> &ProperTimeDynamics {
        &self.dynamics
    }

    pub fn run(&self, stream: RngStream) -> Result<TrajectoryRecord<FieldSummary>> {
        let mut rng = stream.generator();
        let settings = DriverSettings {
            horizon: self.config.x.horizon,
            dt: self.dt,
            sample_times: &[],
        };
        let out = pdp::drive(
            &self.dynamics,
            self.initial.clone(),
            &self.config.x.detectors,
            &settings,
            &mut rng,
            FieldSummary::of,
        )?;
        Ok(TrajectoryRecord::new(stream, self.config.x.horizon, out.events))
    }
}

/// Proper-time engine against the one-dimensional engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub schema_version: u32,
    pub n_samples: usize,
    /// Step times at which both intensities were evaluated.
    pub intensity_times: Vec<f64>,
    /// `(psi_tau, Lambda psi_tau)` of the one-dimensional flow.
    pub intensity_nonrel: Vec<f64>,
    /// `(Psi_tau, Lambda Psi_tau)` over `dx dt`.
    pub intensity_proper_time: Vec<f64>,
    pub max_intensity_deviation: f64,
    /// First-click times; censored runs enter the KS test as `+inf`.
    pub click_stats_nonrel: SampleStats,
    pub click_stats_proper_time: SampleStats,
    pub no_click_fraction_nonrel: f64,
    pub no_click_fraction_proper_time: f64,
    pub ks_statistic: f64,
    pub ks_critical_5pct: f64,
    pub aborted: usize,
}

/// Compare deterministic intensities along the click-free flow, then draw
/// `n` first-click times from each engine (streams `0..n` for the
/// one-dimensional engine, `n..2n` for the proper-time engine).
pub fn click_statistics_equivalence(
    config: &ProperTimeConfig,
    seed: u64,
    n: usize,
) -> Result<EquivalenceReport> {
    let pt = ProperTimeEngine::new(config.clone())?;
    let nr = NonrelEngine::new(config.x.clone())?;
    let horizon = config.x.horizon;
    let dt = pt.dt();

    let monitoring: Vec<bool> = config.x.detectors.iter().map(|d| d.monitoring()).collect();
    let x_step = nr.dynamics().stepper(&monitoring, dt)?;
    let pt_step = pt.dynamics().stepper(&monitoring, dt)?;
    let steps = (horizon / dt).ceil() as usize;
    let (mut psi, mut field) = (nr.initial_state().clone(), pt.initial_state().clone());
    let mut times = Vec::with_capacity(steps + 1);
    let (mut i1, mut i2) = (Vec::new(), Vec::new());
    for k in 0..=steps {
        times.push(k as f64 * dt);
        i1.push(x_step.rate_expectation(&psi));
        i2.push(pt_step.rate_expectation(&field));
        if k < steps {
            psi = x_step.step(&psi);
            field = pt_step.step(&field);
        }
    }
    let max_dev = i1
        .iter()
        .zip(&i2)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let first = |t: Option<f64>| t.unwrap_or(f64::INFINITY);
    let a: Vec<Result<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|i| Ok(first(nr.run(RngStream::new(seed, i))?.first_click().map(|e| e.time))))
        .collect();
    let b: Vec<Result<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|i| Ok(first(pt.run(RngStream::new(seed, n as u64 + i))?.first_click().map(|e| e.time))))
        .collect();
    let aborted = a.iter().chain(&b).filter(|r| r.is_err()).count();
    let a: Vec<f64> = a.into_iter().filter_map(|r| r.ok()).collect();
    let b: Vec<f64> = b.into_iter().filter_map(|r| r.ok()).collect();
    let clicked = |v: &[f64]| v.iter().copied().filter(|t| t.is_finite()).collect::<Vec<_>>();
    let no_click = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().filter(|t| t.is_infinite()).count() as f64 / v.len() as f64
        }
    };
    Ok(EquivalenceReport {
        schema_version: crate::SCHEMA_VERSION,
        n_samples: n,
        intensity_times: times,
        intensity_nonrel: i1,
        intensity_proper_time: i2,
        max_intensity_deviation: max_dev,
        click_stats_nonrel: SampleStats::of(&clicked(&a)),
        click_stats_proper_time: SampleStats::of(&clicked(&b)),
        no_click_fraction_nonrel: no_click(&a),
        no_click_fraction_proper_time: no_click(&b),
        ks_statistic: if a.is_empty() || b.is_empty() { 0.0 } else { ks_two_sample(&a, &b) },
        ks_critical_5pct: ks_critical_two_sample(a.len().max(1), b.len().max(1), 0.05),
        aborted,
    })
}

/// A config whose kinetic term is off and whose single detector has the
/// constant rate `kappa`; both engines then click at `Exp(kappa)` times.
pub fn constant_rate_config(kappa: f64, n_x: usize, n_t: usize, horizon: f64) -> Result<ProperTimeConfig> {
    let width = 0.25;
    let t_min = -TimeProfile::SUPPORT_WIDTHS * width - 0.5;
    let t_grid = Grid1D::new(n_t, t_min, horizon + TimeProfile::SUPPORT_WIDTHS * width + 0.5)?;
    Ok(ProperTimeConfig {
        x: NonrelConfig {
            grid: Grid1D::centered(n_x, 8.0)?,
            mass: f64::INFINITY,
            potential: Potential::Zero,
            packet: Packet {
                center: 0.0,
                width: 1.0,
                momentum: 0.0,
            },
            detectors: vec![DetectorSpec::new(crate::nonrel::Profile::constant(kappa.sqrt()))],
            horizon,
            dt: None,
        },
        t_grid,
        time_profile: TimeProfile::new(0.0, width)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonrel::Profile;
    use nalgebra::DMatrix;

    fn grid2(nx: usize, nt: usize, t_len: f64) -> Grid2D {
        Grid2D::new(Grid1D::centered(nx, 8.0).unwrap(), Grid1D::new(nt, -7.0, t_len - 7.0).unwrap())
    }

    fn max_dev(a: &ScalarField2D, b: &ScalarField2D) -> f64 {
        a.amplitudes()
            .iter()
            .zip(b.amplitudes())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    fn product(grid: Grid2D, phi: &TimeProfile, psi: &WaveFunction1D) -> ScalarField2D {
        ScalarField2D::product(&phi.values(&grid.t), psi, grid.t).unwrap()
    }

    #[test]
    fn free_flow_is_translation_in_t() {
        let grid = grid2(16, 64, 16.0);
        let ham = Hamiltonian::new(grid.x, f64::INFINITY, &Potential::Zero).unwrap();
        let phi = TimeProfile::new(0.0, 0.5).unwrap();
        let psi = WaveFunction1D::gaussian(grid.x, 0.0, 1.0, 0.0).unwrap();
        let f = product(grid, &phi, &psi);
        let h = 0.37;
        let out = evolve_proper_time(&f, &ham, &Coupling::Static(vec![0.0; 16]), h).unwrap();
        let shifted = ScalarField2D::product(
            &grid.t.points().map(|t| phi.eval(t - h)).collect::<Vec<_>>(),
            &psi,
            grid.t,
        )
        .unwrap();
        assert!(max_dev(&out, &shifted) < 1e-10);
    }

    #[test]
    fn constant_rate_norm_decays_exponentially() {
        let grid = grid2(16, 64, 16.0);
        let ham = Hamiltonian::new(grid.x, 1.0, &Potential::Zero).unwrap();
        let kappa: f64 = 0.9;
        let phi = TimeProfile::new(0.0, 0.5).unwrap();
        let mut f = product(grid, &phi, &WaveFunction1D::gaussian(grid.x, 0.0, 1.0, 0.3).unwrap());
        let n0 = f.norm_sqr();
        let prop = ProperTimePropagator::new(grid, ham, vec![kappa; 16], 0.05).unwrap();
        for k in 1..=20 {
            f = prop.step(&f);
            let want = n0 * (-kappa * 0.05 * k as f64).exp();
            assert!((f.norm_sqr() - want).abs() < 1e-8);
        }
    }

    #[test]
    fn time_dependent_coupling_is_rejected() {
        let grid = grid2(8, 8, 8.0);
        let ham = Hamiltonian::new(grid.x, 1.0, &Potential::Zero).unwrap();
        let f = ScalarField2D::zeros(grid);
        let table: Vec<f64> = (0..64).map(|i| (i % 8) as f64).collect();
        assert!(matches!(
            evolve_proper_time(&f, &ham, &Coupling::SpaceTime(table), 0.1),
            Err(Error::TimeDependentCoupling)
        ));
        let table: Vec<f64> = (0..64).map(|i| (i / 8) as f64).collect();
        assert!(evolve_proper_time(&f, &ham, &Coupling::SpaceTime(table), 0.1).is_ok());
    }

    #[test]
    fn factorized_solution_identity_and_static_limit() {
        let grid = grid2(32, 64, 16.0);
        let phi = TimeProfile::new(0.0, 0.5).unwrap();
        let psi = WaveFunction1D::gaussian(grid.x, 0.5, 1.0, 0.2).unwrap();
        let ham = Hamiltonian::new(grid.x, 1.0, &Potential::Zero).unwrap();
        let f0 = factorized_solution(&phi, &psi, &ham, &[0.3; 32], grid.t, 0.0).unwrap();
        assert_eq!(f0, product(grid, &phi, &psi));

        let kappa: f64 = 0.6;
        let tau = 1.3;
        let static_ham = Hamiltonian::new(grid.x, f64::INFINITY, &Potential::Zero).unwrap();
        let f = factorized_solution(&phi, &psi, &static_ham, &[kappa.sqrt(); 32], grid.t, tau).unwrap();
        let mut want = ScalarField2D::product(
            &grid.t.points().map(|t| phi.eval(t - tau)).collect::<Vec<_>>(),
            &psi,
            grid.t,
        )
        .unwrap();
        want.scale((-0.5 * kappa * tau).exp());
        assert!(max_dev(&f, &want) < 1e-12);
    }

    #[test]
    fn wrap_is_reported() {
        let t = Grid1D::new(32, -2.0, 2.0).unwrap();
        let phi = TimeProfile::new(0.0, 0.1).unwrap();
        assert!(phi.check_box(&t, 0.5).is_ok());
        assert!(matches!(phi.check_box(&t, 1.5), Err(Error::TimeBoxWrap(_))));
    }

    #[test]
    fn uncoupled_marginal_matches_schroedinger_evolution() {
        let grid = grid2(64, 64, 16.0);
        let ham = Hamiltonian::new(
            grid.x,
            1.0,
            &Potential::Harmonic {
                stiffness: 0.4,
                center: 0.0,
            },
        )
        .unwrap();
        let phi = TimeProfile::new(0.0, 0.5).unwrap();
        let psi0 = WaveFunction1D::gaussian(grid.x, -1.0, 1.0, 0.5).unwrap();
        let tau = 1.0;
        let f = factorized_solution(&phi, &psi0, &ham, &[0.0; 64], grid.t, tau).unwrap();
        let prop = crate::nonrel::DampedPropagator::new(ham, vec![0.0; 64], 1e-3).unwrap();
        let mut psi = psi0;
        for _ in 0..1000 {
            psi = prop.step(&psi);
        }
        for (a, b) in f.x_marginal().iter().zip(psi.density()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    fn full_dynamics() -> (Grid2D, Hamiltonian, Vec<f64>, TimeProfile, WaveFunction1D) {
        let grid = grid2(32, 64, 16.0);
        let ham = Hamiltonian::new(
            grid.x,
            1.0,
            &Potential::Harmonic {
                stiffness: 0.3,
                center: 0.0,
            },
        )
        .unwrap();
        let g = Profile::gaussian(1.0, 1.0, 1.0).values(&grid.x).unwrap();
        let phi = TimeProfile::new(0.0, 0.4).unwrap();
        let psi = WaveFunction1D::gaussian(grid.x, -1.0, 1.0, 0.5).unwrap();
        (grid, ham, g, phi, psi)
    }

    #[test]
    fn product_states_stay_rank_one() {
        let (grid, ham, g, phi, psi) = full_dynamics();
        let rates = g.iter().map(|v| v * v).collect();
        let prop = ProperTimePropagator::new(grid, ham, rates, 0.01).unwrap();
        let mut f = product(grid, &phi, &psi);
        for _ in 0..100 {
            f = prop.step(&f);
        }
        let m = DMatrix::from_row_slice(grid.n_x(), grid.n_t(), f.amplitudes());
        let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        assert!(sv[1] < 1e-8 * sv[0].max(1.0), "{sv:?}");
    }

    #[test]
    fn norm_matches_x_sector_norm() {
        let (grid, ham, g, phi, psi) = full_dynamics();
        let rates: Vec<f64> = g.iter().map(|v| v * v).collect();
        let prop = ProperTimePropagator::new(grid, ham.clone(), rates.clone(), 0.01).unwrap();
        let x_prop = crate::nonrel::DampedPropagator::new(ham, rates, 0.01).unwrap();
        let mut f = product(grid, &phi, &psi);
        let phi_norm: f64 =
            phi.values(&grid.t).iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.t.spacing();
        let mut x = psi;
        for _ in 0..100 {
            f = prop.step(&f);
            x = x_prop.step(&x);
            assert!((f.norm_sqr() - phi_norm * x.norm_sqr()).abs() < 1e-10);
        }
    }

    #[test]
    fn x_step_and_t_shift_commute() {
        let (grid, ham, g, phi, psi) = full_dynamics();
        let rates = g.iter().map(|v| v * v).collect();
        let prop = ProperTimePropagator::new(grid, ham, rates, 0.05).unwrap();
        let mut rng = RngStream::new(5, 0).generator();
        let mut f = product(grid, &phi, &psi);
        for z in f.amplitudes_mut() {
            *z += C64::new(rng.uniform() - 0.5, rng.uniform() - 0.5) * 0.1;
        }
        let a = prop.t_step(&prop.x_step(&f, 0.05), 0.05);
        let b = prop.x_step(&prop.t_step(&f, 0.05), 0.05);
        assert!(max_dev(&a, &b) < 1e-12);
    }

    #[test]
    fn numerical_flow_matches_factorized_solution() {
        let (grid, ham, g, phi, psi) = full_dynamics();
        let rates = g.iter().map(|v| v * v).collect();
        let prop = ProperTimePropagator::new(grid, ham.clone(), rates, 1e-3).unwrap();
        let mut f = product(grid, &phi, &psi);
        for _ in 0..1000 {
            f = prop.step(&f);
        }
        let exact = factorized_solution(&phi, &psi, &ham, &g, grid.t, 1.0).unwrap();
        assert!(max_dev(&f, &exact) < 1e-6, "{}", max_dev(&f, &exact));
    }

    #[test]
    fn engines_share_intensities_and_zero_coupling_never_clicks() {
        let mut cfg = constant_rate_config(1.0, 16, 32, 2.0).unwrap();
        cfg.x.mass = 1.0;
        cfg.x.detectors = vec![DetectorSpec::new(Profile::gaussian(0.5, 1.0, 1.0))];
        let r = click_statistics_equivalence(&cfg, 1, 50).unwrap();
        assert!(r.max_intensity_deviation < 1e-8);

        cfg.x.detectors = vec![DetectorSpec::new(Profile::constant(0.0))];
        let r = click_statistics_equivalence(&cfg, 1, 50).unwrap();
        assert_eq!(r.no_click_fraction_nonrel, 1.0);
        assert_eq!(r.no_click_fraction_proper_time, 1.0);
    }
}
