//! Ensemble dynamics of a particle watched by one single-shot detector.
//!
//! The statistical state is a pair `(rho0, rho1)` of positive operators for
//! "not yet clicked" and "clicked", evolving as
//!
//! ```text
//! rho0' = -i[H, rho0] - {Lambda, rho0} / 2
//! rho1' = -i[H, rho1] + g rho0 g
//! ```
//!
//! with `Lambda = g^2`. Averaging trajectories of the click process must
//! reproduce this flow, which makes it the oracle for the trajectory engine.
//!
//! Matrices act on grid vectors `v_i = psi(x_i) sqrt(dx)`, so traces are
//! probabilities.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nonrel::NonrelEngine;
use crate::numerics::dense::{expm, hermitian_eigenvalues, hermiticity_defect, trace, trace_norm};
use crate::numerics::{Hamiltonian, RngStream, WaveFunction1D, C64};
use crate::pdp::{Snapshot, TrajectoryRecord};

/// Largest grid the dense master equation accepts by default.
pub const DENSE_CAP: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityPair {
    pub rho0: DMatrix<C64>,
    pub rho1: DMatrix<C64>,
}

impl DensityPair {
    /// `(|psi><psi|, 0)`.
    pub fn pure(psi: &WaveFunction1D) -> Self {
        let v = grid_vector(psi);
        let n = v.len();
        Self {
            rho0: &v * v.adjoint(),
            rho1: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.rho0.nrows()
    }

    pub fn traces(&self) -> (f64, f64) {
        (trace(&self.rho0).re, trace(&self.rho1).re)
    }

    pub fn total_trace(&self) -> f64 {
        let (a, b) = self.traces();
        a + b
    }

    /// Smallest eigenvalue over both blocks.
    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.rho0)
            .into_iter()
            .chain(hermitian_eigenvalues(&self.rho1))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.rho0).max(hermiticity_defect(&self.rho1))
    }

    fn axpy(&self, a: f64, other: &DensityPair) -> DensityPair {
        let a = C64::new(a, 0.0);
        DensityPair {
            rho0: &self.rho0 + &other.rho0 * a,
            rho1: &self.rho1 + &other.rho1 * a,
        }
    }
}

fn grid_vector(psi: &WaveFunction1D) -> DVector<C64> {
    let s = psi.grid().spacing().sqrt();
    DVector::from_iterator(psi.grid().len(), psi.amplitudes().iter().map(|z| z * s))
}

/// Generator of the pair flow for a dense `H` and a diagonal coupling `g`.
#[derive(Debug, Clone)]
pub struct MasterEquation {
    h: DMatrix<C64>,
    g: Vec<f64>,
    rates: Vec<f64>,
}

impl MasterEquation {
    pub fn new(h: DMatrix<C64>, g: Vec<f64>) -> Result<Self> {
        Self::with_cap(h, g, DENSE_CAP)
    }

    pub fn with_cap(h: DMatrix<C64>, g: Vec<f64>, cap: usize) -> Result<Self> {
        let n = h.nrows();
        if n > cap {
            return Err(Error::DimensionCap { n, cap });
        }
        if h.ncols() != n || g.len() != n {
            return Err(Error::GridMismatch);
        }
        if g.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("g", "coupling must be finite and non-negative"));
        }
        let rates = g.iter().map(|v| v * v).collect();
        Ok(Self { h, g, rates })
    }

    /// Checks the dimension before building the dense Hamiltonian.
    pub fn from_hamiltonian(ham: &Hamiltonian, g: Vec<f64>) -> Result<Self> {
        let n = ham.grid().len();
        if n > DENSE_CAP {
            return Err(Error::DimensionCap { n, cap: DENSE_CAP });
        }
        Self::new(ham.dense(), g)
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// Right-hand side for arbitrary (not necessarily Hermitian) blocks.
    pub fn rhs(&self, dp: &DensityPair) -> DensityPair {
        let mi = C64::new(0.0, -1.0);
        let comm = |r: &DMatrix<C64>| (&self.h * r - r * &self.h) * mi;
        self.add_dissipator(dp, comm(&dp.rho0), comm(&dp.rho1))
    }

    /// Same as [`rhs`](Self::rhs) for Hermitian blocks, using
    /// `[H, rho] = H rho - (H rho)^dagger` to halve the matrix products.
    fn rhs_hermitian(&self, dp: &DensityPair) -> DensityPair {
        let mi = C64::new(0.0, -1.0);
        let comm = |r: &DMatrix<C64>| {
            let hr = &self.h * r;
            (&hr - hr.adjoint()) * mi
        };
        self.add_dissipator(dp, comm(&dp.rho0), comm(&dp.rho1))
    }

    fn add_dissipator(&self, dp: &DensityPair, mut d0: DMatrix<C64>, mut d1: DMatrix<C64>) -> DensityPair {
        let n = self.dim();
        for j in 0..n {
            for i in 0..n {
                let r = dp.rho0[(i, j)];
                d0[(i, j)] -= r * (0.5 * (self.rates[i] + self.rates[j]));
                d1[(i, j)] += r * (self.g[i] * self.g[j]);
            }
        }
        DensityPair { rho0: d0, rho1: d1 }
    }

    /// Classical fourth-order Runge–Kutta step; `dp` must be Hermitian.
    pub fn step(&self, dp: &DensityPair, dt: f64) -> DensityPair {
        let k1 = self.rhs_hermitian(dp);
        let k2 = self.rhs_hermitian(&dp.axpy(0.5 * dt, &k1));
        let k3 = self.rhs_hermitian(&dp.axpy(0.5 * dt, &k2));
        let k4 = self.rhs_hermitian(&dp.axpy(dt, &k3));
        dp.axpy(dt / 6.0, &k1)
            .axpy(dt / 3.0, &k2)
            .axpy(dt / 3.0, &k3)
            .axpy(dt / 6.0, &k4)
    }

    /// Positivity-preserving propagator over a fixed step `h`.
    pub fn kraus_step(&self, h: f64) -> KrausStep {
        KrausStep::new(self, h)
    }

    /// Default step, `dt * bound = 0.2` where `bound` (spectral spread of
    /// `H` plus the largest rate) bounds the generator. Well inside the RK4
    /// stability region; for [`KrausStep`] it keeps the gain quadrature
    /// error per step near `1e-12`.
    pub fn default_dt(&self) -> f64 {
        let ev = hermitian_eigenvalues(&self.h);
        let spread = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - ev.iter().copied().fold(f64::INFINITY, f64::min);
        let max_rate = self.rates.iter().copied().fold(0.0, f64::max);
        let bound = spread + max_rate;
        if bound > 0.0 {
            0.2 / bound
        } else {
            f64::INFINITY
        }
    }

    /// Integrate from `dp` at time 0 with [`KrausStep`], returning the pair
    /// at each of the ascending `times`. Steps never exceed `dt_max`.
    pub fn integrate(&self, dp: &DensityPair, times: &[f64], dt_max: f64) -> Result<Vec<DensityPair>> {
        if !(dt_max > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {dt_max}")));
        }
        if dp.dim() != self.dim() {
            return Err(Error::GridMismatch);
        }
        let mut out = Vec::with_capacity(times.len());
        let mut state = dp.clone();
        let mut t = 0.0;
        for &target in times {
            if target < t {
                return Err(invalid("sample_times", "must be ascending and >= 0"));
            }
            let span = target - t;
            let steps = (span / dt_max).ceil() as usize;
            if steps > 0 {
                let prop = self.kraus_step(span / steps as f64);
                for _ in 0..steps {
                    state = prop.step(&state);
                }
            }
            t = target;
            out.push(state.clone());
        }
        Ok(out)
    }

    /// The generator as a `2 n^2` matrix on `(vec rho0, vec rho1)`, column-major.
    pub fn superoperator(&self) -> DMatrix<C64> {
        let n = self.dim();
        let m = n * n;
        let mut l = DMatrix::zeros(2 * m, 2 * m);
        for col in 0..2 * m {
            let mut basis = DensityPair {
                rho0: DMatrix::zeros(n, n),
                rho1: DMatrix::zeros(n, n),
            };
            let (block, k) = (col / m, col % m);
            let target = if block == 0 { &mut basis.rho0 } else { &mut basis.rho1 };
            target[(k % n, k / n)] = C64::new(1.0, 0.0);
            let d = self.rhs(&basis);
            for (r, z) in d.rho0.iter().chain(d.rho1.iter()).enumerate() {
                l[(r, col)] = *z;
            }
        }
        l
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// One step of length `h` in Kraus form:
///
/// ```text
/// rho0 -> K rho0 K^dagger,                      K = exp((-iH - Lambda/2) h)
/// rho1 -> U rho1 U^dagger + sum_i w_i A_i rho0 A_i^dagger,   U = exp(-iH h)
/// ```
///
/// with `A_i = U(h - s_i) g K(s_i)` at three Gauss–Legendre nodes `s_i`:
/// the exact flow, except that the gain integral is done by quadrature.
/// Every term is a congruence with a positive weight, so both blocks stay
/// positive semidefinite to roundoff for any `h`; the trace error per step is
/// the quadrature error, `O(h^7)`.
#[derive(Debug, Clone)]
pub struct KrausStep {
    h: f64,
    k: DMatrix<C64>,
    u: DMatrix<C64>,
    gains: Vec<(f64, DMatrix<C64>)>,
}

impl KrausStep {
    fn new(eq: &MasterEquation, h: f64) -> Self {
        let n = eq.dim();
        let mi = C64::new(0.0, -1.0);
        let damped = &eq.h * mi - DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            eq.rates.iter().map(|r| C64::new(0.5 * r, 0.0)),
        ));
        let unitary = &eq.h * mi;
        let exp_at = |gen: &DMatrix<C64>, s: f64| expm(&(gen * C64::new(s, 0.0)));
        let g = DMatrix::from_diagonal(&DVector::from_iterator(n, eq.g.iter().map(|v| C64::new(*v, 0.0))));
        let gains = GAUSS3
            .iter()
            .map(|(x, w)| {
                let s = 0.5 * h * (1.0 + x);
                (0.5 * h * w, exp_at(&unitary, h - s) * &g * exp_at(&damped, s))
            })
            .collect();
        Self {
            h,
            k: exp_at(&damped, h),
            u: exp_at(&unitary, h),
            gains,
        }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn step(&self, dp: &DensityPair) -> DensityPair {
        let congruence = |a: &DMatrix<C64>, r: &DMatrix<C64>| a * r * a.adjoint();
        let mut rho1 = congruence(&self.u, &dp.rho1);
        for (w, a) in &self.gains {
            rho1 += congruence(a, &dp.rho0) * C64::new(*w, 0.0);
        }
        let hermitian = |r: DMatrix<C64>| (&r + r.adjoint()) * C64::new(0.5, 0.0);
        DensityPair {
            rho0: hermitian(congruence(&self.k, &dp.rho0)),
            rho1: hermitian(rho1),
        }
    }
}

/// One RK4 step of the pair flow with `H` from `ham` and coupling `g`.
pub fn step_master(dp: &DensityPair, ham: &Hamiltonian, g: &[f64], dt: f64) -> Result<DensityPair> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    let eq = MasterEquation::from_hamiltonian(ham, g.to_vec())?;
    if dp.dim() != eq.dim() {
        return Err(Error::GridMismatch);
    }
    Ok(eq.step(dp, dt))
}

/// Monte-Carlo estimate of the pair at one time.
#[derive(Debug, Clone)]
pub struct EnsembleEstimate {
    pub time: f64,
    pub pair: DensityPair,
    /// Per-entry standard errors of `rho0` and `rho1`.
    pub stderr0: DMatrix<f64>,
    pub stderr1: DMatrix<f64>,
}

/// Frequency-weighted estimate from normalized trajectory snapshots:
/// `rho0 = (1/N) sum_{alpha = 0} |psi><psi|`, likewise `rho1`.
/// `snapshots[k]` holds trajectory `k`'s states at `sample_times`.
pub fn ensemble_estimate(
    snapshots: &[Vec<Snapshot<WaveFunction1D>>],
    sample_times: &[f64],
) -> Result<Vec<EnsembleEstimate>> {
    let n_traj = snapshots.len();
    if n_traj == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if snapshots.iter().any(|s| s.len() != sample_times.len()) {
        return Err(invalid("snapshots", "every trajectory needs one state per sample time"));
    }
    let n = snapshots[0]
        .first()
        .map(|s| s.state.grid().len())
        .unwrap_or(0);
    let zero = || (DMatrix::<C64>::zeros(n, n), DMatrix::<f64>::zeros(n, n));
    sample_times
        .iter()
        .enumerate()
        .map(|(k, &time)| {
            // sums of X and |X|^2 per entry, for each block
            let ((s0, q0), (s1, q1)) = snapshots
                .par_iter()
                .map(|traj| {
                    let snap = &traj[k];
                    let v = grid_vector(&snap.state);
                    let outer = &v * v.adjoint();
                    let sq = outer.map(|z| z.norm_sqr());
                    if snap.any_clicked() {
                        (zero(), (outer, sq))
                    } else {
                        ((outer, sq), zero())
                    }
                })
                .reduce(
                    || (zero(), zero()),
                    |(a0, a1), (b0, b1)| ((a0.0 + b0.0, a0.1 + b0.1), (a1.0 + b1.0, a1.1 + b1.1)),
                );
            let nf = n_traj as f64;
            let stderr = |s: &DMatrix<C64>, q: &DMatrix<f64>| {
                DMatrix::from_fn(n, n, |i, j| {
                    let mean = s[(i, j)] / nf;
                    let var = (q[(i, j)] / nf - mean.norm_sqr()).max(0.0);
                    if n_traj > 1 {
                        (var * nf / (nf - 1.0) / nf).sqrt()
                    } else {
                        0.0
                    }
                })
            };
            let scale = C64::new(1.0 / nf, 0.0);
            Ok(EnsembleEstimate {
                time,
                stderr0: stderr(&s0, &q0),
                stderr1: stderr(&s1, &q1),
                pair: DensityPair {
                    rho0: s0 * scale,
                    rho1: s1 * scale,
                },
            })
        })
        .collect()
}

/// Trajectory ensemble against the master equation at a few times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleComparison {
    pub schema_version: u32,
    pub n_trajectories: usize,
    pub sample_times: Vec<f64>,
    /// `||rho0_hat - rho0||_1` at each sample time.
    pub trace_distance_rho0: Vec<f64>,
    pub trace_distance_rho1: Vec<f64>,
    /// Root-sum-square of the per-entry standard errors.
    pub stderr_rho0: Vec<f64>,
    pub stderr_rho1: Vec<f64>,
    /// `|Tr rho0 + Tr rho1 - 1|` maximized over the sample times.
    pub max_trace_defect: f64,
    pub aborted: usize,
}

impl EnsembleComparison {
    pub fn max_trace_distance(&self) -> f64 {
        self.trace_distance_rho0
            .iter()
            .chain(&self.trace_distance_rho1)
            .copied()
            .fold(0.0, f64::max)
    }
}

/// Run `n` trajectories of `engine` and compare their ensemble against the
/// master equation. The engine must have exactly one single-shot detector.
pub fn compare_ensemble(
    engine: &NonrelEngine,
    seed: u64,
    n: usize,
    sample_times: &[f64],
) -> Result<EnsembleComparison> {
    Ok(compare_ensemble_with_records(engine, seed, n, sample_times)?.0)
}

/// As [`compare_ensemble`], also returning the trajectory records in
/// stream order.
pub fn compare_ensemble_with_records(
    engine: &NonrelEngine,
    seed: u64,
    n: usize,
    sample_times: &[f64],
) -> Result<(EnsembleComparison, Vec<Result<TrajectoryRecord>>)> {
    let cfg = engine.config();
    if cfg.detectors.len() != 1 || cfg.detectors[0].mode != Default::default() {
        return Err(invalid(
            "detectors",
            "the ensemble comparison needs exactly one single-shot detector",
        ));
    }
    let g = if cfg.detectors[0].active {
        cfg.detectors[0].profile.values(&cfg.grid)?
    } else {
        vec![0.0; cfg.grid.len()]
    };
    let eq = MasterEquation::from_hamiltonian(engine.dynamics().hamiltonian(), g)?;
    let dt = eq.default_dt().min(engine.dt());
    let exact = eq.integrate(&DensityPair::pure(engine.initial_state()), sample_times, dt)?;

    let runs: Vec<_> = (0..n as u64)
        .into_par_iter()
        .map(|i| engine.run_sampled(RngStream::new(seed, i), sample_times))
        .collect();
    let aborted = runs.iter().filter(|r| r.is_err()).count();
    let mut records = Vec::with_capacity(n);
    let mut snapshots = Vec::with_capacity(n);
    for run in runs {
        match run {
            Ok((rec, snaps)) => {
                records.push(Ok(rec));
                snapshots.push(snaps);
            }
            Err(e) => records.push(Err(e)),
        }
    }
    let estimates = ensemble_estimate(&snapshots, sample_times)?;

    let rss = |m: &DMatrix<f64>| m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let report = EnsembleComparison {
        schema_version: crate::SCHEMA_VERSION,
        n_trajectories: n,
        sample_times: sample_times.to_vec(),
        trace_distance_rho0: estimates
            .iter()
            .zip(&exact)
            .map(|(e, x)| trace_norm(&(&e.pair.rho0 - &x.rho0)))
            .collect(),
        trace_distance_rho1: estimates
            .iter()
            .zip(&exact)
            .map(|(e, x)| trace_norm(&(&e.pair.rho1 - &x.rho1)))
            .collect(),
        stderr_rho0: estimates.iter().map(|e| rss(&e.stderr0)).collect(),
        stderr_rho1: estimates.iter().map(|e| rss(&e.stderr1)).collect(),
        max_trace_defect: exact
            .iter()
            .map(|x| (x.total_trace() - 1.0).abs())
            .fold(0.0, f64::max),
        aborted,
    };
    Ok((report, records))
}
