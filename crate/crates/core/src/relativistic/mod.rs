//! Click process for a spin-1/2 particle in proper time.
//!
//! The spinor field `Psi(x, t)` evolves under `(-i D^2 / 2M - Lambda / 2)`
//! where each detector couples through `G = P+ g(x)` with
//! `P+ = (I + gamma^0) / 2` and `Lambda = sum_i G_i^2`. The bookkeeping
//! budget is the indefinite norm `<Psi, Psi>`: it starts at one, and its loss
//! `1 - <Psi_tau, Psi_tau>` is the accumulated click probability. Because
//! `gamma^0 P+ = P+`, every detector expectation `<Psi, G^2 Psi>` equals the
//! Euclidean `sum g^2 |P+ Psi|^2 dx dt` and is never negative.

pub mod propagator;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nonrel::{DetectorSpec, Packet};
use crate::numerics::{
    indefinite_product, DiracOperator, GaugeField, Grid1D, Grid2D, RngStream, SpinorField2D, C64,
};
use crate::pdp::{self, ClickDynamics, DriverSettings, JumpSearch, TrajectoryRecord};

pub use propagator::{mode_propagator, RelPropagator};

/// Relativistic detectors use the same profiles and modes as the
/// nonrelativistic ones; only the induced operator `G = P+ g` differs.
pub type RelDetectorSpec = DetectorSpec;

/// How detector selection weights are computed at a click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// `<Psi, G_i^2 Psi>`, the rates of the individual detectors.
    #[default]
    Lambda,
    /// `<Psi, G_i Psi>`, first power of the coupling.
    Literal,
}

/// `G Psi = P+ g(x) Psi`: keeps the upper components scaled by `g`.
pub fn apply_coupling(psi: &SpinorField2D, det: &RelDetectorSpec) -> Result<SpinorField2D> {
    let g = det.profile.values(&psi.grid().x)?;
    Ok(apply_profile(psi, &g))
}

fn apply_profile(psi: &SpinorField2D, g: &[f64]) -> SpinorField2D {
    let mut out = psi.clone();
    let nt = psi.grid().n_t();
    for (row, gi) in out.amplitudes_mut().chunks_mut(nt * 4).zip(g) {
        for cell in row.chunks_exact_mut(4) {
            cell[0] *= *gi;
            cell[1] *= *gi;
            cell[2] = C64::new(0.0, 0.0);
            cell[3] = C64::new(0.0, 0.0);
        }
    }
    out
}

/// `sum w(x) |P+ Psi|^2 dx dt`, which equals `<Psi, P+ w Psi>`.
pub fn upper_weighted_norm(psi: &SpinorField2D, w: &[f64]) -> f64 {
    let nt = psi.grid().n_t();
    psi.amplitudes()
        .chunks(nt * 4)
        .zip(w)
        .map(|(row, wi)| {
            wi * row
                .chunks_exact(4)
                .map(|c| c[0].norm_sqr() + c[1].norm_sqr())
                .sum::<f64>()
        })
        .sum::<f64>()
        * psi.grid().cell_area()
}

/// Spinor wave packet `phi(t) psi(x) u` with a constant four-spinor `u`
/// given as `(re, im)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinorPacket {
    pub x: Packet,
    pub t_center: f64,
    pub t_width: f64,
    #[serde(default = "SpinorPacket::spin_up")]
    pub spinor: [[f64; 2]; 4],
}

impl SpinorPacket {
    pub fn spin_up() -> [[f64; 2]; 4] {
        [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]
    }

    /// Unnormalized field.
    pub fn field(&self, grid: Grid2D) -> Result<SpinorField2D> {
        if !(self.t_width > 0.0) || !(self.x.width > 0.0) {
            return Err(invalid("packet", "widths must be positive"));
        }
        let u: Vec<C64> = self.spinor.iter().map(|[re, im]| C64::new(*re, *im)).collect();
        let p = self.x;
        Ok(SpinorField2D::from_fn(grid, |x, t| {
            let dx = x - p.center;
            let dt = t - self.t_center;
            let env = C64::from_polar(
                (-dx * dx / (4.0 * p.width * p.width) - dt * dt / (4.0 * self.t_width * self.t_width)).exp(),
                p.momentum * x,
            );
            [u[0] * env, u[1] * env, u[2] * env, u[3] * env]
        }))
    }
}

/// Rescale to `<Psi, Psi> = 1`; states without positive indefinite norm
/// are rejected.
pub fn normalize_indefinite(mut psi: SpinorField2D) -> Result<SpinorField2D> {
    let n = indefinite_product(&psi, &psi)?.re;
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::NonPositiveNorm(n));
    }
    psi.scale(1.0 / n.sqrt());
    Ok(psi)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelConfig {
    pub grid: Grid2D,
    pub dirac_mass: f64,
    /// Mass in the generator `D^2 / 2M`; defaults to `dirac_mass`.
    #[serde(default)]
    pub evolution_mass: Option<f64>,
    #[serde(default)]
    pub charge: f64,
    #[serde(default)]
    pub gauge: Option<GaugeField>,
    pub packet: SpinorPacket,
    pub detectors: Vec<RelDetectorSpec>,
    pub horizon: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub selection: SelectionRule,
}

impl RelConfig {
    pub fn evolution_mass(&self) -> f64 {
        self.evolution_mass.unwrap_or(self.dirac_mass)
    }

    pub fn operator(&self) -> Result<DiracOperator> {
        DiracOperator::new(self.grid, self.dirac_mass, self.charge, self.gauge.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.evolution_mass();
        if !(m > 0.0) || !m.is_finite() {
            return Err(invalid(
                "evolution_mass",
                format!("must be positive and finite, got {m} (it defaults to dirac_mass)"),
            ));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(invalid("horizon", "must be finite and >= 0"));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(invalid("dt", format!("must be positive, got {dt}")));
            }
        }
        for d in &self.detectors {
            d.validate(&self.grid.x)?;
        }
        self.operator()?;
        Ok(())
    }
}

/// `D(D Psi) / 2M`.
pub fn apply_dirac_squared(psi: &SpinorField2D, cfg: &RelConfig) -> Result<SpinorField2D> {
    let op = cfg.operator()?;
    let mut out = op.apply(&op.apply(psi)?)?;
    out.scale(1.0 / (2.0 * cfg.evolution_mass()));
    Ok(out)
}

/// Damped flow of the spinor field as seen by the shared driver.
#[derive(Debug, Clone)]
pub struct RelDynamics {
    op: DiracOperator,
    evolution_mass: f64,
    profiles: Vec<Vec<f64>>,
    rule: SelectionRule,
}

impl RelDynamics {
    pub fn new(cfg: &RelConfig) -> Result<Self> {
        cfg.validate()?;
        let profiles = cfg
            .detectors
            .iter()
            .map(|d| d.profile.values(&cfg.grid.x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            op: cfg.operator()?,
            evolution_mass: cfg.evolution_mass(),
            profiles,
            rule: cfg.selection,
        })
    }

    pub fn total_rates(&self, monitoring: &[bool]) -> Vec<f64> {
        let mut total = vec![0.0; self.op.grid().n_x()];
        for (g, m) in self.profiles.iter().zip(monitoring) {
            if *m {
                total.iter_mut().zip(g).for_each(|(t, v)| *t += v * v);
            }
        }
        total
    }

    /// `<Psi, G_i^2 Psi>`.
    pub fn rate_expectation(&self, psi: &SpinorField2D, detector: usize) -> f64 {
        let r: Vec<f64> = self.profiles[detector].iter().map(|g| g * g).collect();
        upper_weighted_norm(psi, &r)
    }

    /// Selection weight under the configured rule.
    pub fn weight(&self, psi: &SpinorField2D, detector: usize) -> f64 {
        match self.rule {
            SelectionRule::Lambda => self.rate_expectation(psi, detector),
            SelectionRule::Literal => upper_weighted_norm(psi, &self.profiles[detector]),
        }
    }

    pub fn default_dt(&self, monitoring: &[bool]) -> Result<f64> {
        let rates = self.total_rates(monitoring);
        let probe = RelPropagator::new(self.op.clone(), self.evolution_mass, rates.clone(), 1.0)?;
        let max_rate = rates.iter().copied().fold(0.0, f64::max);
        let mut dt = f64::INFINITY;
        if max_rate > 0.0 {
            dt = dt.min(0.01 / max_rate);
        }
        let f = probe.max_mode_frequency();
        if f > 0.0 {
            // phase bound for the split path, stability of the Taylor path
            let bound = if probe.is_spectral() {
                std::f64::consts::FRAC_PI_4
            } else {
                0.5
            };
            dt = dt.min(bound / f);
        }
        Ok(if dt.is_finite() { dt } else { 0.01 })
    }
}

impl ClickDynamics for RelDynamics {
    type State = SpinorField2D;
    type Stepper = RelPropagator;

    fn stepper(&self, monitoring: &[bool], dt: f64) -> Result<RelPropagator> {
        RelPropagator::new(self.op.clone(), self.evolution_mass, self.total_rates(monitoring), dt)
    }

    fn advance(&self, stepper: &RelPropagator, state: &SpinorField2D, h: f64) -> SpinorField2D {
        stepper.step_by(state, h)
    }

    fn budget(&self, state: &SpinorField2D) -> f64 {
        indefinite_product(state, state).map(|z| z.re).unwrap_or(f64::NAN)
    }

    /// The free flow conserves the indefinite norm only up to roundoff on
    /// the (possibly much larger) Euclidean norm; the Taylor path also
    /// carries its truncation error.
    fn budget_tolerance(&self, state: &SpinorField2D) -> f64 {
        let scale = state.euclid_norm_sqr().max(1.0);
        if self.op.is_free() {
            1e-12 * scale
        } else {
            1e-8 * scale
        }
    }

    fn detector_weight(&self, state: &SpinorField2D, detector: usize) -> f64 {
        self.weight(state, detector)
    }

    fn jump(&self, state: &SpinorField2D, detector: usize) -> Result<SpinorField2D> {
        jump_with(state, &self.profiles[detector])
    }

    fn normalized(&self, state: &SpinorField2D) -> Result<SpinorField2D> {
        normalize_indefinite(state.clone())
    }
}

fn jump_with(psi: &SpinorField2D, g: &[f64]) -> Result<SpinorField2D> {
    let r: Vec<f64> = g.iter().map(|v| v * v).collect();
    let w = upper_weighted_norm(psi, &r);
    if !(w > 0.0) {
        return Err(Error::DarkState);
    }
    let mut out = apply_profile(psi, g);
    out.scale(1.0 / w.sqrt());
    Ok(out)
}

/// `Psi -> G Psi / sqrt(<Psi, G^2 Psi>)`; the detector's `alpha` flips to 1.
pub fn rel_jump(psi: &SpinorField2D, det: &mut RelDetectorSpec) -> Result<SpinorField2D> {
    let g = det.profile.values(&psi.grid().x)?;
    let out = jump_with(psi, &g)?;
    det.alpha = 1;
    Ok(out)
}

/// Selection weights of all detectors (zero for those not monitoring).
pub fn rel_selection_weights(
    psi: &SpinorField2D,
    detectors: &[RelDetectorSpec],
    rule: SelectionRule,
) -> Result<Vec<f64>> {
    detectors
        .iter()
        .map(|d| {
            if !d.monitoring() {
                return Ok(0.0);
            }
            let g = d.profile.values(&psi.grid().x)?;
            Ok(match rule {
                SelectionRule::Lambda => {
                    upper_weighted_norm(psi, &g.iter().map(|v| v * v).collect::<Vec<_>>())
                }
                SelectionRule::Literal => upper_weighted_norm(psi, &g),
            })
        })
        .collect()
}

/// Draw the clicking detector with `p_i = w_i / sum_j w_j` using the
/// uniform `u`; returns the index and the probabilities.
pub fn rel_select_detector(
    psi: &SpinorField2D,
    detectors: &[RelDetectorSpec],
    rule: SelectionRule,
    u: f64,
) -> Result<(usize, Vec<f64>)> {
    let w = rel_selection_weights(psi, detectors, rule)?;
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NoActiveDetector);
    }
    let p: Vec<f64> = w.iter().map(|v| v / total).collect();
    let mut acc = 0.0;
    let mut chosen = None;
    for (i, pi) in p.iter().enumerate() {
        if *pi > 0.0 {
            acc += pi;
            chosen = Some(i);
            if u < acc {
                break;
            }
        }
    }
    Ok((chosen.expect("positive total"), p))
}

/// Integrate from `psi0` (with `<psi0, psi0> = 1`) until the indefinite
/// norm loss reaches `p` or the horizon passes.
pub fn rel_find_jump_time(psi0: &SpinorField2D, cfg: &RelConfig, p: f64) -> Result<JumpSearch<SpinorField2D>> {
    let dynamics = RelDynamics::new(cfg)?;
    let n = dynamics.budget(psi0);
    if (n - 1.0).abs() > 1e-10 {
        return Err(invalid("psi0", format!("indefinite norm must be 1, got {n}")));
    }
    let monitoring: Vec<bool> = cfg.detectors.iter().map(|d| d.monitoring()).collect();
    let dt = match cfg.dt {
        Some(dt) => dt,
        None => dynamics.default_dt(&monitoring)?,
    };
    let stepper = dynamics.stepper(&monitoring, dt)?;
    pdp::search_jump(&dynamics, &stepper, psi0.clone(), 0.0, cfg.horizon, dt, p)
}

/// One damped step with `Lambda` from the active detectors.
pub fn evolve_rel_damped(psi: &SpinorField2D, cfg: &RelConfig, dtau: f64) -> Result<SpinorField2D> {
    if psi.grid() != &cfg.grid {
        return Err(Error::GridMismatch);
    }
    let dynamics = RelDynamics::new(cfg)?;
    let active: Vec<bool> = cfg.detectors.iter().map(|d| d.active).collect();
    let out = dynamics.stepper(&active, dtau)?.step(psi);
    if !out.is_finite() {
        return Err(Error::Blowup {
            time: dtau,
            detail: "non-finite amplitude after one step".into(),
        });
    }
    Ok(out)
}

/// Diagnostics of a spinor field: moments of the upper-component density
/// and the Euclidean weights of both blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinorSummary {
    pub mean_x: f64,
    pub std_x: f64,
    pub mean_t: f64,
    pub std_t: f64,
    pub upper_weight: f64,
    pub lower_weight: f64,
}

impl SpinorSummary {
    pub fn of(psi: &SpinorField2D) -> Self {
        let g = psi.grid();
        let nt = g.n_t();
        let mut dens_x = vec![0.0; g.n_x()];
        let mut dens_t = vec![0.0; nt];
        for (cell, s) in psi.spinors().enumerate() {
            let d = s[0].norm_sqr() + s[1].norm_sqr();
            dens_x[cell / nt] += d;
            dens_t[cell % nt] += d;
        }
        let moments = |grid: &Grid1D, d: Vec<f64>| crate::numerics::field::moments(grid.points().zip(d));
        let (mean_x, std_x) = moments(&g.x, dens_x);
        let (mean_t, std_t) = moments(&g.t, dens_t);
        let (upper_weight, lower_weight) = psi.block_weights();
        Self {
            mean_x,
            std_x,
            mean_t,
            std_t,
            upper_weight,
            lower_weight,
        }
    }
}

pub type RelTrajectoryRecord = TrajectoryRecord<SpinorSummary>;

/// A validated configuration with operators built once.
#[derive(Debug, Clone)]
pub struct RelEngine {
    config: RelConfig,
    dynamics: RelDynamics,
    initial: SpinorField2D,
    dt: f64,
}

impl RelEngine {
    pub fn new(config: RelConfig) -> Result<Self> {
        let dynamics = RelDynamics::new(&config)?;
        let initial = normalize_indefinite(config.packet.field(config.grid)?)?;
        let active: Vec<bool> = config.detectors.iter().map(|d| d.active).collect();
        let dt = match config.dt {
            Some(dt) => dt,
            None => dynamics.default_dt(&active)?,
        };
        Ok(Self {
            config,
            dynamics,
            initial,
            dt,
        })
    }

    pub fn config(&self) -> &RelConfig {
        &self.config
    }

    pub fn dynamics(&self) -> &RelDynamics {
        &self.dynamics
    }

    pub fn initial_state(&self) -> &SpinorField2D {
        &self.initial
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn run(&self, stream: RngStream) -> Result<RelTrajectoryRecord> {
        let mut rng = stream.generator();
        let settings = DriverSettings {
            horizon: self.config.horizon,
            dt: self.dt,
            sample_times: &[],
        };
        let out = pdp::drive(
            &self.dynamics,
            self.initial.clone(),
            &self.config.detectors,
            &settings,
            &mut rng,
            SpinorSummary::of,
        )?;
        Ok(TrajectoryRecord::new(stream, self.config.horizon, out.events))
    }

    pub fn run_ensemble(&self, seed: u64, n: usize) -> Vec<Result<RelTrajectoryRecord>> {
        (0..n as u64)
            .into_par_iter()
            .map(|i| self.run(RngStream::new(seed, i)))
            .collect()
    }
}

pub fn run_rel_trajectory(cfg: &RelConfig, stream: RngStream) -> Result<RelTrajectoryRecord> {
    RelEngine::new(cfg.clone())?.run(stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonrel::Profile;
    use crate::numerics::dense::expm;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    fn grid(nx: usize, nt: usize) -> Grid2D {
        Grid2D::new(Grid1D::centered(nx, 6.0).unwrap(), Grid1D::centered(nt, 6.0).unwrap())
    }

    fn random_field(grid: Grid2D, seed: u64) -> SpinorField2D {
        let mut src = RngStream::new(seed, 3).generator();
        let rng = src.rng_mut();
        let amps = (0..grid.n_cells() * 4)
            .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        SpinorField2D::new(grid, amps).unwrap()
    }

    fn config(grid: Grid2D, m: f64, detectors: Vec<RelDetectorSpec>) -> RelConfig {
        RelConfig {
            grid,
            dirac_mass: m,
            evolution_mass: Some(1.0),
            charge: 0.0,
            gauge: None,
            packet: SpinorPacket {
                x: Packet {
                    center: 0.0,
                    width: 1.0,
                    momentum: 0.0,
                },
                t_center: 0.0,
                t_width: 1.0,
                spinor: SpinorPacket::spin_up(),
            },
            detectors,
            horizon: 5.0,
            dt: None,
            selection: SelectionRule::Lambda,
        }
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn rel_dev(a: &SpinorField2D, b: &SpinorField2D) -> f64 {
        let num: f64 = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.amplitudes().iter().map(|y| y.norm_sqr()).sum();
        (num / den.max(1e-300)).sqrt()
    }

    #[test]
    fn coupling_projects_onto_upper_components() {
        let g = grid(8, 8);
        let det = DetectorSpec::new(Profile::constant(1.0));
        let lower = SpinorField2D::constant(g, [c(0.0), c(0.0), c(1.0), C64::new(0.0, 2.0)]);
        assert_eq!(apply_coupling(&lower, &det).unwrap().euclid_norm_sqr(), 0.0);
        let upper = SpinorField2D::constant(g, [c(1.0), C64::new(0.5, 0.5), c(0.0), c(0.0)]);
        assert_eq!(apply_coupling(&upper, &det).unwrap(), upper);
    }

    #[test]
    fn coupling_is_idempotent_for_unit_profile() {
        let psi = random_field(grid(8, 8), 1);
        let det = DetectorSpec::new(Profile::constant(1.0));
        let g1 = apply_coupling(&psi, &det).unwrap();
        assert_eq!(apply_coupling(&g1, &det).unwrap(), g1);
    }

    #[test]
    fn coupling_is_hermitian_for_indefinite_product() {
        let g = grid(8, 8);
        let (phi, psi) = (random_field(g, 2), random_field(g, 3));
        let det = DetectorSpec::new(Profile::gaussian(0.5, 1.0, 1.3));
        let a = indefinite_product(&apply_coupling(&phi, &det).unwrap(), &psi).unwrap();
        let b = indefinite_product(&phi, &apply_coupling(&psi, &det).unwrap()).unwrap();
        assert!((a - b).norm() < 1e-10 * a.norm().max(1.0));
    }

    #[test]
    fn detector_expectation_is_euclidean() {
        let g = grid(8, 8);
        let det = DetectorSpec::new(Profile::gaussian(-1.0, 1.5, 0.8));
        let gx = det.profile.values(&g.x).unwrap();
        for seed in 0..20 {
            let psi = random_field(g, seed);
            let g2psi = apply_coupling(&apply_coupling(&psi, &det).unwrap(), &det).unwrap();
            let lhs = indefinite_product(&psi, &g2psi).unwrap();
            // brute force: sum over cells of g^2 (|psi_0|^2 + |psi_1|^2)
            let mut rhs = 0.0;
            for ix in 0..8 {
                for it in 0..8 {
                    let s = psi.at(ix, it);
                    rhs += gx[ix] * gx[ix] * (s[0].norm_sqr() + s[1].norm_sqr());
                }
            }
            rhs *= g.cell_area();
            assert!(lhs.re >= 0.0);
            assert!(lhs.im.abs() < 1e-12 * rhs);
            assert!((lhs.re - rhs).abs() < 1e-12 * rhs);
        }
    }

    #[test]
    fn dirac_squared_on_constant_spinor_is_mass_squared() {
        let g = grid(8, 8);
        let m = 0.7;
        let mut cfg = config(g, m, vec![]);
        cfg.evolution_mass = Some(1.3);
        let u = [c(1.0), C64::new(0.0, 0.5), c(-0.3), c(0.2)];
        let psi = SpinorField2D::constant(g, u);
        let out = apply_dirac_squared(&psi, &cfg).unwrap();
        let mut want = psi.clone();
        want.scale(m * m / (2.0 * 1.3));
        assert!(rel_dev(&out, &want) < 1e-12);
    }

    #[test]
    fn dirac_squared_is_hermitian() {
        let g = grid(16, 16);
        let cfg = config(g, 0.8, vec![]);
        let (phi, psi) = (random_field(g, 4), random_field(g, 5));
        let a = indefinite_product(&apply_dirac_squared(&phi, &cfg).unwrap(), &psi).unwrap();
        let b = indefinite_product(&phi, &apply_dirac_squared(&psi, &cfg).unwrap()).unwrap();
        assert!((a - b).norm() < 1e-10 * a.norm().max(1.0));
    }

    /// Half a spectral step twice must equal `exp(-i h D^2 / 2M)` obtained
    /// from the double application of `D`, checked via a short Taylor sum.
    #[test]
    fn spectral_path_matches_double_application() {
        let g = grid(16, 16);
        let cfg = config(g, 0.9, vec![]);
        let psi = normalize_indefinite(cfg.packet.field(g).unwrap()).unwrap();
        let h = 1e-3;
        let spectral = RelPropagator::new(cfg.operator().unwrap(), 1.0, vec![0.0; 16], h)
            .unwrap()
            .step(&psi);
        let mut gauge_cfg = cfg.clone();
        // a zero-valued field still forces the double-application path
        gauge_cfg.charge = 1.0;
        let op = gauge_cfg.operator().unwrap();
        assert!(op.is_free());
        let mut sum = psi.clone();
        let mut term = psi.clone();
        for j in 1..=12 {
            let mut next = apply_dirac_squared(&term, &cfg).unwrap();
            next.scale(h / j as f64);
            next.amplitudes_mut().iter_mut().for_each(|z| *z *= C64::new(0.0, -1.0));
            sum.amplitudes_mut().iter_mut().zip(next.amplitudes()).for_each(|(s, t)| *s += t);
            term = next;
        }
        assert!(rel_dev(&spectral, &sum) < 1e-10, "{}", rel_dev(&spectral, &sum));
    }

    #[test]
    fn undamped_flow_conserves_indefinite_norm() {
        let g = grid(16, 16);
        let cfg = config(g, 0.5, vec![]);
        let psi0 = random_field(g, 9);
        let n0 = indefinite_product(&psi0, &psi0).unwrap().re;
        let prop = RelPropagator::new(cfg.operator().unwrap(), 1.0, vec![0.0; 16], 0.01).unwrap();
        let mut psi = psi0;
        for _ in 0..100 {
            psi = prop.step(&psi);
        }
        let scale = psi.euclid_norm_sqr();
        assert!((indefinite_product(&psi, &psi).unwrap().re - n0).abs() < 1e-12 * scale);
    }

    #[test]
    fn constant_rate_on_upper_state_decays_exponentially() {
        let g = grid(16, 16);
        let kappa: f64 = 0.9;
        let cfg = config(g, 0.0, vec![DetectorSpec::new(Profile::constant(kappa.sqrt()))]);
        let mut psi = RelEngine::new(cfg.clone()).unwrap().initial_state().clone();
        for k in 1..=50 {
            psi = evolve_rel_damped(&psi, &cfg, 0.02).unwrap();
            let want = (-kappa * 0.02 * k as f64).exp();
            assert!((indefinite_product(&psi, &psi).unwrap().re - want).abs() < 1e-8);
        }
    }

    /// With `m > 0` the law stays exact for a uniform upper spinor, which
    /// `D^2` only rotates by a phase.
    #[test]
    fn massive_uniform_state_decays_exponentially() {
        let g = grid(8, 8);
        let kappa: f64 = 0.7;
        let cfg = config(g, 1.0, vec![DetectorSpec::new(Profile::constant(kappa.sqrt()))]);
        let up = [c(1.0), c(0.0), c(0.0), c(0.0)];
        let mut psi = normalize_indefinite(SpinorField2D::constant(g, up)).unwrap();
        for k in 1..=50 {
            psi = evolve_rel_damped(&psi, &cfg, 0.02).unwrap();
            let want = (-kappa * 0.02 * k as f64).exp();
            assert!((indefinite_product(&psi, &psi).unwrap().re - want).abs() < 1e-8);
        }
    }

    /// Strang splitting against the dense exponential of the full generator
    /// built column by column from `D`: one-step deviation drops about
    /// eightfold when the step is halved.
    #[test]
    fn split_step_matches_dense_generator() {
        let g = Grid2D::new(Grid1D::centered(8, 4.0).unwrap(), Grid1D::centered(8, 4.0).unwrap());
        let det = DetectorSpec::new(Profile::gaussian(0.5, 1.0, 1.2));
        let cfg = config(g, 0.6, vec![det.clone()]);
        let op = cfg.operator().unwrap();
        let dim = g.n_cells() * 4;
        let rates: Vec<f64> = det.profile.values(&g.x).unwrap().iter().map(|v| v * v).collect();
        let mut d = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let mut e = vec![C64::new(0.0, 0.0); dim];
            e[j] = c(1.0);
            let col = op.apply(&SpinorField2D::new(g, e).unwrap()).unwrap();
            d.set_column(j, &DVector::from_column_slice(col.amplitudes()));
        }
        let mut gen = (&d * &d) * C64::new(0.0, -0.5);
        for j in 0..dim {
            let ix = j / (g.n_t() * 4);
            if j % 4 < 2 {
                gen[(j, j)] -= c(0.5 * rates[ix]);
            }
        }
        let psi = normalize_indefinite(cfg.packet.field(g).unwrap()).unwrap();
        let v = DVector::from_column_slice(psi.amplitudes());
        let deviation = |h: f64| {
            let exact = expm(&(&gen * c(h))) * &v;
            let got = RelPropagator::new(op.clone(), 1.0, rates.clone(), h).unwrap().step(&psi);
            got.amplitudes()
                .iter()
                .zip(exact.iter())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (deviation(0.02), deviation(0.01));
        assert!(e1 < 1e-4, "{e1}");
        assert!((6.0..10.0).contains(&(e1 / e2)), "ratio {}", e1 / e2);
    }

    #[test]
    fn jump_time_is_ln2_for_unit_rate() {
        let g = grid(8, 8);
        let cfg = config(g, 0.0, vec![DetectorSpec::new(Profile::constant(1.0))]);
        let psi0 = RelEngine::new(cfg.clone()).unwrap().initial_state().clone();
        let r = rel_find_jump_time(&psi0, &cfg, 0.5).unwrap();
        assert!(r.is_click());
        assert!((r.time() - std::f64::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn inactive_detectors_never_click() {
        let g = grid(8, 8);
        let cfg = config(g, 0.0, vec![DetectorSpec::new(Profile::constant(1.0)).inactive()]);
        let psi0 = RelEngine::new(cfg.clone()).unwrap().initial_state().clone();
        assert!(!rel_find_jump_time(&psi0, &cfg, 0.3).unwrap().is_click());
        let rec = run_rel_trajectory(&cfg, RngStream::new(1, 0)).unwrap();
        assert!(rec.no_click && rec.events.is_empty());
    }

    #[test]
    fn jump_lands_in_upper_subspace_with_unit_norm() {
        let g = grid(8, 8);
        let mut det = DetectorSpec::new(Profile::gaussian(0.0, 2.0, 1.1));
        for seed in 0..10 {
            let psi = random_field(g, 100 + seed);
            let out = rel_jump(&psi, &mut det).unwrap();
            assert_eq!(det.alpha, 1);
            assert!(out.spinors().all(|s| s[2] == c(0.0) && s[3] == c(0.0)));
            assert!((indefinite_product(&out, &out).unwrap().re - 1.0).abs() < 1e-12);
        }
        let mut unit = DetectorSpec::new(Profile::constant(1.0));
        let upper = normalize_indefinite(SpinorField2D::from_fn(g, |x, t| {
            [C64::new((-x * x - t * t).exp(), 0.1), c(0.2), c(0.0), c(0.0)]
        }))
        .unwrap();
        assert!(rel_dev(&rel_jump(&upper, &mut unit).unwrap(), &upper) < 1e-14);
    }

    #[test]
    fn selection_weights_match_brute_force() {
        let g = grid(8, 8);
        let dets = vec![
            DetectorSpec::new(Profile::gaussian(-2.0, 1.0, 1.0)),
            DetectorSpec::new(Profile::gaussian(2.0, 1.5, 0.7)),
        ];
        let psi = random_field(g, 42);
        for rule in [SelectionRule::Lambda, SelectionRule::Literal] {
            let w = rel_selection_weights(&psi, &dets, rule).unwrap();
            for (i, d) in dets.iter().enumerate() {
                let gx = d.profile.values(&g.x).unwrap();
                let mut want = C64::new(0.0, 0.0);
                let op = match rule {
                    SelectionRule::Lambda => apply_coupling(&apply_coupling(&psi, d).unwrap(), d).unwrap(),
                    SelectionRule::Literal => apply_coupling(&psi, d).unwrap(),
                };
                for (a, b) in psi.spinors().zip(op.spinors()) {
                    want += a[0].conj() * b[0] + a[1].conj() * b[1] - a[2].conj() * b[2] - a[3].conj() * b[3];
                }
                want *= g.cell_area();
                assert!((w[i] - want.re).abs() < 1e-12 * want.re, "{rule:?} {i}");
                assert!(gx.iter().all(|v| *v >= 0.0));
            }
            let (_, p) = rel_select_detector(&psi, &dets, rule, 0.3).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let single = [DetectorSpec::new(Profile::constant(1.0))];
        assert_eq!(rel_select_detector(&psi, &single, SelectionRule::Lambda, 0.99).unwrap().0, 0);
    }

    #[test]
    fn nonpositive_initial_norm_is_rejected() {
        let g = grid(8, 8);
        let mut cfg = config(g, 0.0, vec![DetectorSpec::new(Profile::constant(1.0))]);
        cfg.packet.spinor = [[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 0.0]];
        assert!(matches!(RelEngine::new(cfg), Err(Error::NonPositiveNorm(_))));
    }

    #[test]
    fn zero_evolution_mass_is_rejected() {
        let mut cfg = config(grid(8, 8), 0.0, vec![]);
        cfg.evolution_mass = None;
        assert!(RelEngine::new(cfg).is_err());
    }

    /// `1 - <Psi, Psi>` against Simpson quadrature of `<Psi, Lambda Psi>`
    /// along the click-free flow.
    #[test]
    fn norm_loss_equals_integrated_intensity() {
        let g = grid(16, 16);
        let det = DetectorSpec::new(Profile::gaussian(0.5, 1.0, 1.0));
        let cfg = config(g, 0.0, vec![det]);
        let dynamics = RelDynamics::new(&cfg).unwrap();
        let h = 1e-3;
        let prop = dynamics.stepper(&[true], h).unwrap();
        let mut psi = RelEngine::new(cfg.clone()).unwrap().initial_state().clone();
        let mut intensity = vec![dynamics.rate_expectation(&psi, 0)];
        for k in 1..=1000 {
            psi = prop.step(&psi);
            intensity.push(dynamics.rate_expectation(&psi, 0));
            if k % 100 == 0 {
                let simpson: f64 = (0..k / 2)
                    .map(|j| intensity[2 * j] + 4.0 * intensity[2 * j + 1] + intensity[2 * j + 2])
                    .sum::<f64>()
                    * h
                    / 3.0;
                let q = 1.0 - dynamics.budget(&psi);
                assert!((q - simpson).abs() < 1e-8, "k={k}: {q} vs {simpson}");
            }
        }
    }

    #[test]
    fn taylor_path_runs_with_field() {
        let g = grid(8, 8);
        let mut cfg = config(g, 0.5, vec![DetectorSpec::new(Profile::constant(0.5))]);
        cfg.charge = 1.0;
        let mut a0 = vec![0.0; g.n_cells()];
        for (i, v) in a0.iter_mut().enumerate() {
            *v = 0.1 * ((i / g.n_t()) as f64 * 0.3).sin();
        }
        cfg.gauge = Some(GaugeField {
            components: [a0, vec![0.0; 64], vec![0.0; 64], vec![0.0; 64]],
        });
        cfg.horizon = 0.5;
        let e = RelEngine::new(cfg).unwrap();
        assert!(!e.dynamics().op.is_free());
        e.run(RngStream::new(3, 0)).unwrap();
    }
}
