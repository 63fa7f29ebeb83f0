//! Merge run summaries into plain-text and CSV tables.
//!
//! Summaries are grouped by engine, then by run name; each group pools its
//! first-click statistics across seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use qclick::stats::SampleStats;
use qclick::SCHEMA_VERSION;

use crate::config::Engine;
use crate::run::RunSummary;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: schema version {found:?} is not supported (expected {SCHEMA_VERSION})")]
    SchemaVersion { path: PathBuf, found: Option<u64> },
    #[error("no summaries given")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub engine: Engine,
    pub name: String,
    pub seeds: Vec<u64>,
    pub n_trajectories: usize,
    pub completed: usize,
    pub aborted: usize,
    /// Pooled over all summaries of the group.
    pub first_click: Option<SampleStats>,
    pub no_click: u64,
    /// Per detector: pooled first clicks and all clicks.
    pub detector_clicks: Vec<(u64, u64)>,
    /// `(seed, metric, value)` for every comparison metric.
    pub metrics: Vec<(u64, String, f64)>,
}

impl Group {
    pub fn no_click_fraction(&self) -> f64 {
        if self.completed == 0 {
            0.0
        } else {
            self.no_click as f64 / self.completed as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub groups: Vec<Group>,
}

pub fn read_summary(path: &Path) -> Result<RunSummary, ReportError> {
    let bytes = std::fs::read(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse = |source| ReportError::Parse {
        path: path.to_path_buf(),
        source,
    };
    let value: serde_json::Value = serde_json::from_slice(&bytes).map_err(parse)?;
    let found = value.get("schema_version").and_then(|v| v.as_u64());
    if found != Some(SCHEMA_VERSION as u64) {
        return Err(ReportError::SchemaVersion {
            path: path.to_path_buf(),
            found,
        });
    }
    serde_json::from_value(value).map_err(parse)
}

pub fn report(paths: &[PathBuf]) -> Result<Report, ReportError> {
    if paths.is_empty() {
        return Err(ReportError::Empty);
    }
    let summaries = paths.iter().map(|p| read_summary(p)).collect::<Result<Vec<_>, _>>()?;
    Ok(merge(&summaries))
}

pub fn merge(summaries: &[RunSummary]) -> Report {
    let mut buckets: BTreeMap<(Engine, String), Vec<&RunSummary>> = BTreeMap::new();
    for s in summaries {
        let name = s.name.clone().unwrap_or_else(|| "(unnamed)".into());
        buckets.entry((s.engine, name)).or_default().push(s);
    }
    let groups = buckets
        .into_iter()
        .map(|((engine, name), runs)| {
            let clicks: Vec<_> = runs.iter().filter_map(|r| r.clicks.as_ref()).collect();
            let nd = clicks.iter().map(|c| c.detectors.len()).max().unwrap_or(0);
            let mut detector_clicks = vec![(0, 0); nd];
            for c in &clicks {
                for d in &c.detectors {
                    detector_clicks[d.index].0 += d.first_clicks;
                    detector_clicks[d.index].1 += d.total_clicks;
                }
            }
            let stats: Vec<SampleStats> = clicks.iter().map(|c| c.first_click).collect();
            Group {
                engine,
                name,
                seeds: runs.iter().map(|r| r.seed).collect(),
                n_trajectories: runs.iter().map(|r| r.n_trajectories).sum(),
                completed: runs.iter().map(|r| r.completed).sum(),
                aborted: runs.iter().map(|r| r.aborted).sum(),
                first_click: (!stats.is_empty()).then(|| SampleStats::pool(&stats)),
                no_click: clicks.iter().map(|c| c.no_click).sum(),
                detector_clicks,
                metrics: runs
                    .iter()
                    .flat_map(|r| {
                        r.comparison
                            .iter()
                            .flat_map(|c| c.metrics())
                            .map(|(k, v)| (r.seed, k, v))
                            .collect::<Vec<_>>()
                    })
                    .collect(),
            }
        })
        .collect();
    Report { groups }
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut engine = None;
        for g in &self.groups {
            if engine != Some(g.engine) {
                engine = Some(g.engine);
                let _ = writeln!(out, "== {} ==", g.engine);
            }
            let seeds: Vec<String> = g.seeds.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "[{}] seeds {}", g.name, seeds.join(", "));
            let _ = writeln!(
                out,
                "  trajectories {:>8}  completed {:>8}  aborted {:>4}",
                g.n_trajectories, g.completed, g.aborted
            );
            if let Some(s) = g.first_click {
                let _ = writeln!(
                    out,
                    "  first click  n {:>8}  mean {:.6}  std {:.6}  stderr {:.6}",
                    s.n,
                    s.mean,
                    s.std,
                    s.stderr()
                );
                let _ = writeln!(out, "  no click     {:>8}  fraction {:.6}", g.no_click, g.no_click_fraction());
                for (i, (first, total)) in g.detector_clicks.iter().enumerate() {
                    let frac = if g.completed > 0 { *first as f64 / g.completed as f64 } else { 0.0 };
                    let _ = writeln!(out, "  detector {i}   first {first:>8}  ({frac:.6})  all {total:>8}");
                }
            }
            for (seed, k, v) in &g.metrics {
                let _ = writeln!(out, "  seed {seed:<6} {k:<32} {v:.6e}");
            }
        }
        out
    }

    /// One row per group and statistic.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["schema_version", "engine", "name", "seeds", "statistic", "value"])?;
        for g in &self.groups {
            let seeds: Vec<String> = g.seeds.iter().map(|s| s.to_string()).collect();
            let seeds = seeds.join(";");
            let mut row = |stat: &str, v: String| {
                w.write_record([
                    SCHEMA_VERSION.to_string(),
                    g.engine.to_string(),
                    g.name.clone(),
                    seeds.clone(),
                    stat.to_string(),
                    v,
                ])
            };
            row("n_trajectories", g.n_trajectories.to_string())?;
            row("completed", g.completed.to_string())?;
            row("aborted", g.aborted.to_string())?;
            if let Some(s) = g.first_click {
                row("first_click_n", s.n.to_string())?;
                row("first_click_mean", s.mean.to_string())?;
                row("first_click_std", s.std.to_string())?;
                row("first_click_stderr", s.stderr().to_string())?;
                row("no_click_fraction", g.no_click_fraction().to_string())?;
                for (i, (first, total)) in g.detector_clicks.iter().enumerate() {
                    row(&format!("detector{i}_first_clicks"), first.to_string())?;
                    row(&format!("detector{i}_total_clicks"), total.to_string())?;
                }
            }
            for (seed, k, v) in &g.metrics {
                row(&format!("seed{seed}:{k}"), v.to_string())?;
            }
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}
