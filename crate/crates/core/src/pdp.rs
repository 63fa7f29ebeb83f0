//! Jump-time search and trajectory loop shared by all three click engines.
//!
//! An engine supplies a damped flow whose monitored squared norm ("budget")
//! starts at one after every click. The click probability accumulated since
//! the last threshold draw is `Q = 1 - budget`, which is non-decreasing along
//! the flow; a click happens when `Q` reaches the uniform threshold `p`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonrel::detector::{DetectorMode, DetectorSpec};
use crate::numerics::{DensitySummary, RngStream, UniformSource};

/// Bisection stops once `|Q - p|` falls below this.
pub const THRESHOLD_TOLERANCE: f64 = 1e-9;

/// A damped flow with piecewise-constant detector couplings.
pub trait ClickDynamics {
    type State: Clone;
    /// Propagator for one fixed set of monitoring detectors.
    type Stepper;

    fn stepper(&self, monitoring: &[bool], dt: f64) -> Result<Self::Stepper>;

    /// Advance `state` by `h`; `h` may differ from the stepper's nominal step.
    fn advance(&self, stepper: &Self::Stepper, state: &Self::State, h: f64) -> Self::State;

    /// Monitored squared norm.
    fn budget(&self, state: &Self::State) -> f64;

    /// Roundoff allowance for a decrease of `Q` between two steps.
    fn budget_tolerance(&self, _state: &Self::State) -> f64 {
        1e-12
    }

    /// Non-negative selection weight of detector `i` at a click.
    fn detector_weight(&self, state: &Self::State, detector: usize) -> f64;

    /// Post-click state with unit budget.
    fn jump(&self, state: &Self::State, detector: usize) -> Result<Self::State>;

    /// Rescale to unit budget.
    fn normalized(&self, state: &Self::State) -> Result<Self::State>;
}

/// Outcome of integrating the damped flow towards a threshold.
#[derive(Debug, Clone)]
pub enum JumpSearch<S> {
    Click { time: f64, state: S },
    NoClick { time: f64, state: S },
}

impl<S> JumpSearch<S> {
    pub fn time(&self) -> f64 {
        match self {
            JumpSearch::Click { time, .. } | JumpSearch::NoClick { time, .. } => *time,
        }
    }

    pub fn state(&self) -> &S {
        match self {
            JumpSearch::Click { state, .. } | JumpSearch::NoClick { state, .. } => state,
        }
    }

    pub fn is_click(&self) -> bool {
        matches!(self, JumpSearch::Click { .. })
    }
}

/// Integrate from `t0` until `Q = 1 - budget` reaches `p` or `t_end` is hit.
///
/// The step grid is `t0 + k dt`; the bracketing step is refined by bisection
/// on the sub-step length until `|Q - p| < THRESHOLD_TOLERANCE`.
pub fn search_jump<D: ClickDynamics>(
    dynamics: &D,
    stepper: &D::Stepper,
    state: D::State,
    t0: f64,
    t_end: f64,
    dt: f64,
    p: f64,
) -> Result<JumpSearch<D::State>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ThresholdOutOfRange(p));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(crate::error::invalid("dt", format!("must be positive, got {dt}")));
    }
    let mut q = 1.0 - dynamics.budget(&state);
    if !q.is_finite() {
        return Err(Error::Blowup {
            time: t0,
            detail: "non-finite norm at segment start".into(),
        });
    }
    if q >= p {
        return Ok(JumpSearch::Click { time: t0, state });
    }
    let mut s = state;
    let mut t = t0;
    let mut k = 0u64;
    while t < t_end {
        k += 1;
        let t_next = (t0 + k as f64 * dt).min(t_end);
        let h = t_next - t;
        let s_next = dynamics.advance(stepper, &s, h);
        let q_next = checked_monitor(dynamics, &s, &s_next, q, t_next)?;
        if q_next >= p {
            let (h_click, s_click) = bisect(dynamics, stepper, &s, q, h, s_next, q_next, p, t)?;
            return Ok(JumpSearch::Click {
                time: t + h_click,
                state: s_click,
            });
        }
        s = s_next;
        q = q_next;
        t = t_next;
    }
    Ok(JumpSearch::NoClick { time: t_end, state: s })
}

fn checked_monitor<D: ClickDynamics>(
    dynamics: &D,
    before: &D::State,
    after: &D::State,
    q_before: f64,
    time: f64,
) -> Result<f64> {
    let q = 1.0 - dynamics.budget(after);
    if !q.is_finite() {
        return Err(Error::Blowup {
            time,
            detail: "monitored norm is not finite".into(),
        });
    }
    let drop = q_before - q;
    if drop > dynamics.budget_tolerance(before) {
        return Err(Error::MonitorDecreased { time, drop });
    }
    Ok(q)
}

#[allow(clippy::too_many_arguments)]
fn bisect<D: ClickDynamics>(
    dynamics: &D,
    stepper: &D::Stepper,
    start: &D::State,
    q_start: f64,
    h: f64,
    s_hi: D::State,
    q_hi: f64,
    p: f64,
    t: f64,
) -> Result<(f64, D::State)> {
    let (mut lo, mut hi) = (0.0, h);
    let (mut s_hi, mut q_hi) = (s_hi, q_hi);
    for _ in 0..200 {
        if q_hi - p < THRESHOLD_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let s_mid = dynamics.advance(stepper, start, mid);
        let q_mid = checked_monitor(dynamics, start, &s_mid, q_start, t + mid)?;
        if q_mid >= p {
            hi = mid;
            s_hi = s_mid;
            q_hi = q_mid;
        } else if p - q_mid < THRESHOLD_TOLERANCE {
            return Ok((mid, s_mid));
        } else {
            lo = mid;
        }
    }
    Ok((hi, s_hi))
}

/// One click as seen by the driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickEvent<S> {
    pub time: f64,
    pub detector: usize,
    /// Monitored squared norm just before the jump, `1 - p`.
    pub pre_click_norm_sqr: f64,
    /// Selection probabilities of all detectors at this click (zero for
    /// detectors that were not monitoring).
    pub probabilities: Vec<f64>,
    /// Diagnostics of the post-jump state.
    pub post: S,
}

/// Event history of one trajectory; serializes to one JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord<S = DensitySummary> {
    pub schema_version: u32,
    pub seed: u64,
    pub stream_index: u64,
    pub horizon: f64,
    /// True when the horizon passed without any click.
    pub no_click: bool,
    pub events: Vec<ClickEvent<S>>,
}

impl<S> TrajectoryRecord<S> {
    pub fn new(stream: RngStream, horizon: f64, events: Vec<ClickEvent<S>>) -> Self {
        Self {
            schema_version: crate::SCHEMA_VERSION,
            seed: stream.seed,
            stream_index: stream.stream_index,
            horizon,
            no_click: events.is_empty(),
            events,
        }
    }

    pub fn first_click(&self) -> Option<&ClickEvent<S>> {
        self.events.first()
    }
}

/// Normalized state recorded at a requested sample time.
#[derive(Debug, Clone)]
pub struct Snapshot<S> {
    pub time: f64,
    /// Classical detector states at this time.
    pub alphas: Vec<u8>,
    pub state: S,
}

impl<S> Snapshot<S> {
    pub fn any_clicked(&self) -> bool {
        self.alphas.iter().any(|a| *a == 1)
    }
}

#[derive(Debug, Clone)]
pub struct DriverSettings<'a> {
    pub horizon: f64,
    pub dt: f64,
    /// Ascending times in `[0, horizon]` at which normalized states are kept.
    pub sample_times: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct DriverOutcome<S, Summary> {
    pub events: Vec<ClickEvent<Summary>>,
    pub snapshots: Vec<Snapshot<S>>,
}

struct Counter {
    mode: DetectorMode,
    alpha: u8,
    monitoring: bool,
    rearm_at: Option<f64>,
}

/// Run one trajectory: draw threshold, integrate to the click, select the
/// detector, jump, update detector states, repeat until the horizon.
pub fn drive<D, Summary>(
    dynamics: &D,
    initial: D::State,
    detectors: &[DetectorSpec],
    settings: &DriverSettings<'_>,
    rng: &mut UniformSource,
    mut summarize: impl FnMut(&D::State) -> Summary,
) -> Result<DriverOutcome<D::State, Summary>>
where
    D: ClickDynamics,
{
    let DriverSettings {
        horizon,
        dt,
        sample_times,
    } = *settings;
    let mut counters: Vec<Counter> = detectors
        .iter()
        .map(|d| Counter {
            mode: d.mode,
            alpha: d.alpha,
            monitoring: d.monitoring(),
            rearm_at: None,
        })
        .collect();
    let mut events = Vec::new();
    let mut snapshots = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0usize;
    let mut t = 0.0;
    let mut state = initial;
    let mut p = rng.threshold();

    loop {
        while next_sample < sample_times.len() && sample_times[next_sample] <= t {
            snapshots.push(Snapshot {
                time: sample_times[next_sample],
                alphas: counters.iter().map(|c| c.alpha).collect(),
                state: dynamics.normalized(&state)?,
            });
            next_sample += 1;
        }
        for c in counters.iter_mut() {
            if c.rearm_at.is_some_and(|r| r <= t) {
                c.rearm_at = None;
                c.monitoring = true;
            }
        }
        if t >= horizon {
            break;
        }
        let monitoring: Vec<bool> = counters.iter().map(|c| c.monitoring).collect();
        let rearm = counters
            .iter()
            .filter_map(|c| c.rearm_at)
            .fold(f64::INFINITY, f64::min);
        let sample = sample_times.get(next_sample).copied().unwrap_or(f64::INFINITY);
        if !monitoring.iter().any(|m| *m) && rearm >= horizon && sample > horizon {
            break;
        }
        let seg_end = horizon.min(rearm).min(sample);
        let stepper = dynamics.stepper(&monitoring, dt)?;
        match search_jump(dynamics, &stepper, state, t, seg_end, dt, p)? {
            JumpSearch::NoClick { time, state: s } => {
                t = time;
                state = s;
            }
            JumpSearch::Click { time, state: s } => {
                let weights: Vec<f64> = (0..counters.len())
                    .map(|i| {
                        if monitoring[i] {
                            dynamics.detector_weight(&s, i)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let total: f64 = weights.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::NoActiveDetector);
                }
                let probabilities: Vec<f64> = weights.iter().map(|w| w / total).collect();
                let chosen = select(&probabilities, &monitoring, rng.uniform());
                let pre_click_norm_sqr = dynamics.budget(&s);
                let jumped = dynamics.jump(&s, chosen)?;
                events.push(ClickEvent {
                    time,
                    detector: chosen,
                    pre_click_norm_sqr,
                    probabilities,
                    post: summarize(&jumped),
                });
                let c = &mut counters[chosen];
                c.alpha = 1;
                c.monitoring = false;
                if let DetectorMode::Reusable { dead_time } = c.mode {
                    c.rearm_at = Some(time + dead_time);
                }
                state = jumped;
                t = time;
                p = rng.threshold();
            }
        }
    }
    Ok(DriverOutcome { events, snapshots })
}

/// Inverse-CDF selection restricted to monitoring detectors.
fn select(probabilities: &[f64], monitoring: &[bool], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probabilities.iter().enumerate() {
        if !monitoring[i] || *p <= 0.0 {
            continue;
        }
        last = i;
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_respects_cumulative_weights() {
        let p = [0.2, 0.0, 0.8];
        let m = [true, true, true];
        assert_eq!(select(&p, &m, 0.0), 0);
        assert_eq!(select(&p, &m, 0.19), 0);
        assert_eq!(select(&p, &m, 0.2), 2);
        assert_eq!(select(&p, &m, 0.999_999_999_999), 2);
    }

    #[test]
    fn selection_skips_idle_detectors() {
        let p = [0.5, 0.5];
        assert_eq!(select(&p, &[false, true], 0.1), 1);
    }
}
