//! Nonrelativistic click process for position detectors on a line.
//!
//! Between clicks the wave function follows `psi' = (-i H - Lambda / 2) psi`
//! with `Lambda = sum_i g_i^2` over monitoring detectors. The click time is
//! the first `t` where the lost norm reaches a uniform threshold; the
//! clicking detector is drawn with probability `(psi, g_i^2 psi) / (psi, Lambda psi)`
//! and the state collapses to `g_i psi / ||g_i psi||`.

pub mod detector;
pub mod propagator;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{DensitySummary, Grid1D, Hamiltonian, Potential, RngStream, WaveFunction1D};
use crate::pdp::{self, ClickDynamics, DriverSettings, JumpSearch, Snapshot};

pub use crate::pdp::{ClickEvent, TrajectoryRecord};
pub use detector::{DetectorMode, DetectorSpec, Profile};
pub use propagator::{default_dt, evolve_damped, rate_profile, DampedPropagator};

/// Collapse `psi -> g psi / ||g psi||`; the detector's `alpha` flips to 1.
pub fn jump(psi: &WaveFunction1D, detector: &mut DetectorSpec) -> Result<WaveFunction1D> {
    let g = detector.profile.values(psi.grid())?;
    let out = apply_profile(psi, &g)?;
    detector.alpha = 1;
    Ok(out)
}

fn apply_profile(psi: &WaveFunction1D, g: &[f64]) -> Result<WaveFunction1D> {
    let mut out = psi.clone();
    for (z, gi) in out.amplitudes_mut().iter_mut().zip(g) {
        *z *= *gi;
    }
    let n = out.norm_sqr();
    if !(n > 0.0) {
        return Err(Error::DarkState);
    }
    out.scale(1.0 / n.sqrt());
    Ok(out)
}

/// Particle state together with its detectors and clock.
#[derive(Debug, Clone)]
pub struct HybridState1D {
    pub psi: WaveFunction1D,
    pub detectors: Vec<DetectorSpec>,
    pub time: f64,
}

impl HybridState1D {
    pub fn new(psi: WaveFunction1D, detectors: Vec<DetectorSpec>) -> Result<Self> {
        if detectors.is_empty() {
            return Err(invalid("detectors", "at least one detector is required"));
        }
        for d in &detectors {
            d.validate(psi.grid())?;
        }
        Ok(Self {
            psi,
            detectors,
            time: 0.0,
        })
    }
}

/// Damped flow of [`HybridState1D`] as seen by the shared driver.
#[derive(Debug, Clone)]
pub struct NonrelDynamics {
    ham: Hamiltonian,
    profiles: Vec<Vec<f64>>,
    rates: Vec<Vec<f64>>,
}

impl NonrelDynamics {
    pub fn new(ham: Hamiltonian, detectors: &[DetectorSpec]) -> Result<Self> {
        let grid = *ham.grid();
        let profiles = detectors
            .iter()
            .map(|d| {
                d.validate(&grid)?;
                d.profile.values(&grid)
            })
            .collect::<Result<Vec<_>>>()?;
        let rates = profiles
            .iter()
            .map(|g| g.iter().map(|v| v * v).collect())
            .collect();
        Ok(Self {
            ham,
            profiles,
            rates,
        })
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.ham
    }

    /// `Lambda(x)` for the given monitoring pattern.
    pub fn total_rates(&self, monitoring: &[bool]) -> Vec<f64> {
        let mut total = vec![0.0; self.ham.grid().len()];
        for (r, m) in self.rates.iter().zip(monitoring) {
            if *m {
                total.iter_mut().zip(r).for_each(|(t, v)| *t += v);
            }
        }
        total
    }

    /// `(psi, g_i^2 psi)`.
    pub fn rate_expectation(&self, psi: &WaveFunction1D, detector: usize) -> f64 {
        psi.amplitudes()
            .iter()
            .zip(&self.rates[detector])
            .map(|(z, r)| r * z.norm_sqr())
            .sum::<f64>()
            * psi.grid().spacing()
    }
}

impl ClickDynamics for NonrelDynamics {
    type State = WaveFunction1D;
    type Stepper = DampedPropagator;

    fn stepper(&self, monitoring: &[bool], dt: f64) -> Result<DampedPropagator> {
        DampedPropagator::new(self.ham.clone(), self.total_rates(monitoring), dt)
    }

    fn advance(&self, stepper: &DampedPropagator, state: &WaveFunction1D, h: f64) -> WaveFunction1D {
        stepper.step_by(state, h)
    }

    fn budget(&self, state: &WaveFunction1D) -> f64 {
        state.norm_sqr()
    }

    fn detector_weight(&self, state: &WaveFunction1D, detector: usize) -> f64 {
        self.rate_expectation(state, detector)
    }

    fn jump(&self, state: &WaveFunction1D, detector: usize) -> Result<WaveFunction1D> {
        apply_profile(state, &self.profiles[detector])
    }

    fn normalized(&self, state: &WaveFunction1D) -> Result<WaveFunction1D> {
        state.clone().normalized()
    }
}

/// Integrate the damped flow of `state` until the lost norm reaches `p`
/// or `horizon` passes. `p = 0` clicks immediately.
pub fn find_jump_time(
    state: &HybridState1D,
    ham: &Hamiltonian,
    p: f64,
    horizon: f64,
    dt: f64,
) -> Result<JumpSearch<WaveFunction1D>> {
    if state.psi.grid() != ham.grid() {
        return Err(Error::GridMismatch);
    }
    let dynamics = NonrelDynamics::new(ham.clone(), &state.detectors)?;
    let monitoring: Vec<bool> = state.detectors.iter().map(|d| d.monitoring()).collect();
    let stepper = dynamics.stepper(&monitoring, dt)?;
    pdp::search_jump(&dynamics, &stepper, state.psi.clone(), state.time, horizon, dt, p)
}

/// Gaussian wave packet parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub center: f64,
    pub width: f64,
    #[serde(default)]
    pub momentum: f64,
}

impl Packet {
    pub fn state(&self, grid: Grid1D) -> Result<WaveFunction1D> {
        WaveFunction1D::gaussian(grid, self.center, self.width, self.momentum)
    }
}

/// Everything needed to run one nonrelativistic trajectory. An infinite
/// `mass` switches the kinetic term off.
#[derive(Debug, Clone)]
pub struct NonrelConfig {
    pub grid: Grid1D,
    pub mass: f64,
    pub potential: Potential,
    pub packet: Packet,
    pub detectors: Vec<DetectorSpec>,
    pub horizon: f64,
    pub dt: Option<f64>,
}

/// A validated configuration with its operators built once.
#[derive(Debug, Clone)]
pub struct NonrelEngine {
    config: NonrelConfig,
    dynamics: NonrelDynamics,
    initial: WaveFunction1D,
    dt: f64,
}

impl NonrelEngine {
    pub fn new(config: NonrelConfig) -> Result<Self> {
        if config.detectors.is_empty() {
            return Err(invalid("detectors", "at least one detector is required"));
        }
        if !(config.horizon >= 0.0) || !config.horizon.is_finite() {
            return Err(invalid("horizon", "must be finite and >= 0"));
        }
        let ham = Hamiltonian::new(config.grid, config.mass, &config.potential)?;
        let dynamics = NonrelDynamics::new(ham, &config.detectors)?;
        let all: Vec<bool> = config.detectors.iter().map(|d| d.active).collect();
        let dt = match config.dt {
            Some(dt) if dt > 0.0 && dt.is_finite() => dt,
            Some(dt) => return Err(invalid("dt", format!("must be positive, got {dt}"))),
            None => default_dt(dynamics.hamiltonian(), &dynamics.total_rates(&all)),
        };
        let initial = config.packet.state(config.grid)?;
        Ok(Self {
            config,
            dynamics,
            initial,
            dt,
        })
    }

    pub fn config(&self) -> &NonrelConfig {
        &self.config
    }

    pub fn dynamics(&self) -> &NonrelDynamics {
        &self.dynamics
    }

    pub fn initial_state(&self) -> &WaveFunction1D {
        &self.initial
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn run(&self, stream: RngStream) -> Result<TrajectoryRecord> {
        Ok(self.run_sampled(stream, &[])?.0)
    }

    /// Run one trajectory keeping normalized states at `sample_times`.
    pub fn run_sampled(
        &self,
        stream: RngStream,
        sample_times: &[f64],
    ) -> Result<(TrajectoryRecord, Vec<Snapshot<WaveFunction1D>>)> {
        check_samples(sample_times, self.config.horizon)?;
        let mut rng = stream.generator();
        let settings = DriverSettings {
            horizon: self.config.horizon,
            dt: self.dt,
            sample_times,
        };
        let out = pdp::drive(
            &self.dynamics,
            self.initial.clone(),
            &self.config.detectors,
            &settings,
            &mut rng,
            DensitySummary::of,
        )?;
        Ok((
            TrajectoryRecord::new(stream, self.config.horizon, out.events),
            out.snapshots,
        ))
    }

    /// `n` trajectories on streams `0..n` of `seed`, in index order.
    pub fn run_ensemble(&self, seed: u64, n: usize) -> Vec<Result<TrajectoryRecord>> {
        (0..n as u64)
            .into_par_iter()
            .map(|i| self.run(RngStream::new(seed, i)))
            .collect()
    }
}

pub(crate) fn check_samples(sample_times: &[f64], horizon: f64) -> Result<()> {
    if sample_times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("sample_times", "must be strictly increasing"));
    }
    if sample_times.iter().any(|t| !(*t >= 0.0 && *t <= horizon)) {
        return Err(invalid("sample_times", "must lie in [0, horizon]"));
    }
    Ok(())
}

/// Convenience wrapper building the engine for a single run.
pub fn run_trajectory(config: &NonrelConfig, stream: RngStream) -> Result<TrajectoryRecord> {
    NonrelEngine::new(config.clone())?.run(stream)
}
