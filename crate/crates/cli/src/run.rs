//! Experiment orchestration: run the selected engine, write artifacts and
//! condense everything into a [`RunSummary`].

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use qclick::array_io::ArrayFile;
use qclick::liouville::{compare_ensemble_with_records, DensityPair, EnsembleComparison, MasterEquation};
use qclick::nonrel::NonrelEngine;
use qclick::pdp::TrajectoryRecord;
use qclick::proper_time::{click_statistics_equivalence, EquivalenceReport, ProperTimeEngine};
use qclick::relativistic::RelEngine;
use qclick::stats::{Histogram, SampleStats};
use qclick::{Error as CoreError, RngStream, SCHEMA_VERSION};

use crate::config::{ConfigError, Engine, ExperimentConfig};

/// A run fails when more than this fraction of its trajectories abort.
pub const MAX_ABORT_FRACTION: f64 = 0.01;

pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
    /// Overrides `output_dir` of the config. Without either, nothing is written.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] CoreError),
    #[error("{aborted} of {n} trajectories aborted (limit {:.0}%); first error: {first}", MAX_ABORT_FRACTION * 100.0)]
    TooManyAborts { aborted: usize, n: usize, first: String },
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorCounts {
    pub index: usize,
    /// Trajectories whose first click came from this detector.
    pub first_clicks: u64,
    /// All clicks, counting repeats of reusable detectors.
    pub total_clicks: u64,
    /// `first_clicks / completed`.
    pub first_click_fraction: f64,
    /// `total_clicks / (completed * horizon)`.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickSummary {
    pub detectors: Vec<DetectorCounts>,
    pub no_click: u64,
    pub no_click_fraction: f64,
    pub first_click: SampleStats,
    /// First-click times over `[0, horizon]`.
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleReport {
    pub sample_times: Vec<f64>,
    pub trace_rho0: Vec<f64>,
    pub trace_rho1: Vec<f64>,
    pub min_eigenvalue: Vec<f64>,
    /// `|Tr rho0 + Tr rho1 - 1|` over every integration step.
    pub max_trace_defect: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Comparison {
    Ensemble(EnsembleComparison),
    ProperTime(EquivalenceReport),
    Liouville(LiouvilleReport),
}

impl Comparison {
    /// Headline metrics as `(name, value)`.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        match self {
            Comparison::Ensemble(c) => {
                let mut m = vec![("max_trace_distance".to_string(), c.max_trace_distance())];
                for (i, t) in c.sample_times.iter().enumerate() {
                    m.push((format!("trace_distance_rho0@{t}"), c.trace_distance_rho0[i]));
                    m.push((format!("trace_distance_rho1@{t}"), c.trace_distance_rho1[i]));
                }
                m.push(("max_trace_defect".into(), c.max_trace_defect));
                m
            }
            Comparison::ProperTime(r) => vec![
                ("max_intensity_deviation".into(), r.max_intensity_deviation),
                ("ks_statistic".into(), r.ks_statistic),
                ("ks_critical_5pct".into(), r.ks_critical_5pct),
                ("mean_click_nonrel".into(), r.click_stats_nonrel.mean),
                ("mean_click_proper_time".into(), r.click_stats_proper_time.mean),
            ],
            Comparison::Liouville(r) => {
                let mut m = vec![("max_trace_defect".to_string(), r.max_trace_defect)];
                for (i, t) in r.sample_times.iter().enumerate() {
                    m.push((format!("trace_rho0@{t}"), r.trace_rho0[i]));
                    m.push((format!("trace_rho1@{t}"), r.trace_rho1[i]));
                }
                m
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub engine: Engine,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub seed: u64,
    pub n_trajectories: usize,
    pub completed: usize,
    pub aborted: usize,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clicks: Option<ClickSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
    pub wall_clock_s: f64,
    /// Completed trajectories per second.
    pub throughput: f64,
}

/// Result of one run: the summary plus the trajectory JSON-lines, kept in
/// memory so callers can compare runs without touching the disk.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub trajectories_jsonl: Vec<u8>,
    pub out_dir: Option<PathBuf>,
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    if cfg.n_trajectories == 0 && !matches!(cfg.engine, Engine::Liouville) {
        log::warn!("n_trajectories = 0: writing an empty summary");
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = opts.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build()?;
    let start = Instant::now();
    let (records, comparison, density) = pool.install(|| execute(cfg))?;
    let elapsed = start.elapsed().as_secs_f64();

    // the cross-engine comparison draws n samples from each engine
    let (n, aborted) = match (&records, &comparison) {
        (Some(r), _) => (r.len(), r.aborted),
        (None, Some(Comparison::ProperTime(r))) => (2 * r.n_samples, r.aborted),
        _ => (0, 0),
    };
    if aborted as f64 > MAX_ABORT_FRACTION * n as f64 {
        return Err(RunError::TooManyAborts {
            aborted,
            n,
            first: records.and_then(|r| r.first_error).unwrap_or_default(),
        });
    }
    let completed = n - aborted;
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        engine: cfg.engine,
        name: cfg.name.clone(),
        seed: cfg.seed,
        n_trajectories: n,
        completed,
        aborted,
        horizon: cfg.horizon,
        clicks: records.as_ref().map(|r| r.clicks.clone()),
        comparison,
        wall_clock_s: elapsed,
        throughput: if elapsed > 0.0 { completed as f64 / elapsed } else { 0.0 },
    };
    let jsonl = records.map(|r| r.jsonl).unwrap_or_default();
    let out_dir = opts.out_dir.clone().or_else(|| cfg.output_dir.clone());
    if let Some(dir) = &out_dir {
        write_artifacts(dir, &summary, &jsonl)?;
        if let Some(dp) = &density {
            write_density_pair(dir, dp)?;
        }
    }
    Ok(RunOutput {
        summary,
        trajectories_jsonl: jsonl,
        out_dir,
    })
}

/// Trajectory-level results in index order.
struct Collected {
    jsonl: Vec<u8>,
    clicks: ClickSummary,
    aborted: usize,
    first_error: Option<String>,
    n: usize,
}

impl Collected {
    fn len(&self) -> usize {
        self.n
    }
}

type Executed = (Option<Collected>, Option<Comparison>, Option<DensityPair>);

fn execute(cfg: &ExperimentConfig) -> Result<Executed, RunError> {
    let n = cfg.n_trajectories;
    if cfg.engine == Engine::Liouville {
        let (report, dp) = integrate_liouville(cfg)?;
        return Ok((None, Some(Comparison::Liouville(report)), Some(dp)));
    }
    Ok(match cfg.engine {
        Engine::Nonrel => {
            let e = NonrelEngine::new(cfg.nonrel()?)?;
            (Some(collect(cfg, e.run_ensemble(cfg.seed, n))?), None, None)
        }
        Engine::Propertime => {
            let e = ProperTimeEngine::new(cfg.proper_time()?)?;
            use rayon::prelude::*;
            let recs = (0..n as u64)
                .into_par_iter()
                .map(|i| e.run(RngStream::new(cfg.seed, i)))
                .collect();
            (Some(collect(cfg, recs)?), None, None)
        }
        Engine::Relativistic => {
            let e = RelEngine::new(cfg.relativistic()?)?;
            (Some(collect(cfg, e.run_ensemble(cfg.seed, n))?), None, None)
        }
        Engine::CompareEnsemble => {
            let e = NonrelEngine::new(cfg.nonrel()?)?;
            let (cmp, recs) = compare_ensemble_with_records(&e, cfg.seed, n, &cfg.sample_times())?;
            (Some(collect(cfg, recs)?), Some(Comparison::Ensemble(cmp)), None)
        }
        Engine::ComparePropertime => {
            let r = click_statistics_equivalence(&cfg.proper_time()?, cfg.seed, n)?;
            (None, Some(Comparison::ProperTime(r)), None)
        }
        Engine::Liouville => unreachable!("handled above"),
    })
}

fn collect<S: Serialize>(
    cfg: &ExperimentConfig,
    records: Vec<Result<TrajectoryRecord<S>, CoreError>>,
) -> Result<Collected, RunError> {
    let nd = cfg.detectors.len();
    let mut first = vec![0u64; nd];
    let mut total = vec![0u64; nd];
    let mut times = Vec::new();
    let mut no_click = 0u64;
    let mut aborted = 0;
    let mut first_error = None;
    let mut histogram = Histogram::new(0.0, cfg.horizon, cfg.histogram_bins);
    let mut jsonl = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        match rec {
            Ok(r) => {
                serde_json::to_writer(&mut jsonl, r)?;
                match r.first_click() {
                    Some(e) => {
                        first[e.detector] += 1;
                        times.push(e.time);
                        histogram.add(e.time);
                    }
                    None => no_click += 1,
                }
                for e in &r.events {
                    total[e.detector] += 1;
                }
            }
            Err(e) => {
                aborted += 1;
                first_error.get_or_insert_with(|| e.to_string());
                serde_json::to_writer(
                    &mut jsonl,
                    &serde_json::json!({
                        "schema_version": SCHEMA_VERSION,
                        "seed": cfg.seed,
                        "stream_index": i,
                        "error": e.to_string(),
                    }),
                )?;
            }
        }
        jsonl.push(b'\n');
    }
    let completed = (records.len() - aborted) as f64;
    let frac = |c: u64| if completed > 0.0 { c as f64 / completed } else { 0.0 };
    let exposure = completed * cfg.horizon;
    Ok(Collected {
        jsonl,
        clicks: ClickSummary {
            detectors: (0..nd)
                .map(|i| DetectorCounts {
                    index: i,
                    first_clicks: first[i],
                    total_clicks: total[i],
                    first_click_fraction: frac(first[i]),
                    rate: if exposure > 0.0 { total[i] as f64 / exposure } else { 0.0 },
                })
                .collect(),
            no_click,
            no_click_fraction: frac(no_click),
            first_click: SampleStats::of(&times),
            histogram,
        },
        aborted,
        first_error,
        n: records.len(),
    })
}

/// Master-equation run from the pure initial packet; the trace defect is
/// checked after every step, the spectrum at the sample times.
pub fn integrate_liouville(cfg: &ExperimentConfig) -> Result<(LiouvilleReport, DensityPair), RunError> {
    let engine = NonrelEngine::new(cfg.nonrel()?)?;
    let det = &cfg.detectors[0];
    let grid = cfg.x_grid()?;
    let g = if det.active {
        det.profile.values(&grid)?
    } else {
        vec![0.0; grid.len()]
    };
    let eq = MasterEquation::from_hamiltonian(engine.dynamics().hamiltonian(), g)?;
    let dt = match cfg.dt {
        Some(dt) => dt.min(eq.default_dt()),
        None => eq.default_dt(),
    };
    let mut dp = DensityPair::pure(engine.initial_state());
    let mut t = 0.0;
    let mut steps = 0;
    let mut max_defect = (dp.total_trace() - 1.0).abs();
    let mut report = LiouvilleReport {
        sample_times: cfg.sample_times(),
        trace_rho0: Vec::new(),
        trace_rho1: Vec::new(),
        min_eigenvalue: Vec::new(),
        max_trace_defect: 0.0,
        steps: 0,
    };
    for &target in &report.sample_times.clone() {
        let n = ((target - t) / dt).ceil() as usize;
        if n > 0 {
            let prop = eq.kraus_step((target - t) / n as f64);
            for _ in 0..n {
                dp = prop.step(&dp);
                max_defect = max_defect.max((dp.total_trace() - 1.0).abs());
            }
            steps += n;
        }
        t = target;
        let (a, b) = dp.traces();
        report.trace_rho0.push(a);
        report.trace_rho1.push(b);
        report.min_eigenvalue.push(dp.min_eigenvalue());
    }
    report.max_trace_defect = max_defect;
    report.steps = steps;
    Ok((report, dp))
}

fn write_artifacts(dir: &Path, summary: &RunSummary, jsonl: &[u8]) -> Result<(), RunError> {
    fs::create_dir_all(dir)?;
    if let Some(clicks) = &summary.clicks {
        // single writer, trajectories in index order
        let mut w = BufWriter::new(File::create(dir.join(TRAJECTORIES_FILE))?);
        w.write_all(jsonl)?;
        w.flush()?;
        let mut csv = csv::Writer::from_path(dir.join(HISTOGRAM_FILE))?;
        csv.write_record(["schema_version", "bin_lo", "bin_hi", "count"])?;
        let h = &clicks.histogram;
        for (i, c) in h.counts.iter().enumerate() {
            csv.write_record([
                SCHEMA_VERSION.to_string(),
                h.edges[i].to_string(),
                h.edges[i + 1].to_string(),
                c.to_string(),
            ])?;
        }
        csv.flush()?;
    }
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_vec_pretty(summary)?)?;
    Ok(())
}

/// Dump both blocks of a density pair in the shared array format.
pub fn write_density_pair(dir: &Path, dp: &DensityPair) -> Result<(), RunError> {
    fs::create_dir_all(dir)?;
    let n = dp.dim();
    for (name, m) in [("rho0.qarr", &dp.rho0), ("rho1.qarr", &dp.rho1)] {
        let data = (0..n).flat_map(|i| (0..n).map(move |j| m[(i, j)])).collect();
        ArrayFile::complex(vec![n as u64, n as u64], data).write_to(BufWriter::new(File::create(dir.join(name))?))?;
    }
    Ok(())
}
