//! Experiment configuration: JSON schema, defaults and validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qclick::liouville::DENSE_CAP;
use qclick::nonrel::{DetectorMode, DetectorSpec, NonrelConfig, NonrelEngine, Packet};
use qclick::proper_time::{ProperTimeConfig, ProperTimeEngine, TimeProfile};
use qclick::relativistic::{RelConfig, RelEngine, SelectionRule, SpinorPacket};
use qclick::{Error as CoreError, GaugeField, Grid1D, Grid2D, Potential, SCHEMA_VERSION};

use crate::locate::LineIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Nonrel,
    Propertime,
    Relativistic,
    Liouville,
    CompareEnsemble,
    ComparePropertime,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Nonrel => "nonrel",
            Engine::Propertime => "propertime",
            Engine::Relativistic => "relativistic",
            Engine::Liouville => "liouville",
            Engine::CompareEnsemble => "compare-ensemble",
            Engine::ComparePropertime => "compare-propertime",
        }
    }

    fn needs_time_axis(self) -> bool {
        matches!(self, Engine::Propertime | Engine::Relativistic | Engine::ComparePropertime)
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Spatial grid, plus the coordinate-time axis for the two-dimensional engines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_x: usize,
    pub x_min: f64,
    pub x_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    #[serde(default)]
    pub center: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default)]
    pub momentum: f64,
}

impl Default for PacketConfig {
    fn default() -> Self {
        Self {
            center: 0.0,
            width: 1.0,
            momentum: 0.0,
        }
    }
}

/// Settings only the relativistic engine reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiracConfig {
    #[serde(default = "one")]
    pub mass: f64,
    /// Mass in the proper-time generator; defaults to `mass`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolution_mass: Option<f64>,
    #[serde(default)]
    pub charge: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge: Option<GaugeField>,
    #[serde(default = "SpinorPacket::spin_up")]
    pub spinor: [[f64; 2]; 4],
    #[serde(default)]
    pub selection: SelectionRule,
}

impl Default for DiracConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            evolution_mass: None,
            charge: 0.0,
            gauge: None,
            spinor: SpinorPacket::spin_up(),
            selection: SelectionRule::Lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    /// Free-form label; summaries with the same name are pooled by `report`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub engine: Engine,
    pub grid: GridConfig,
    #[serde(default = "one")]
    pub mass: f64,
    /// `false` drops the kinetic term (`H = V`).
    #[serde(default = "yes")]
    pub kinetic: bool,
    #[serde(default)]
    pub potential: Potential,
    #[serde(default)]
    pub packet: PacketConfig,
    /// Coordinate-time envelope of the two-dimensional initial states.
    #[serde(default = "default_time_profile")]
    pub time_profile: TimeProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirac: Option<DiracConfig>,
    pub detectors: Vec<DetectorSpec>,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_n")]
    pub n_trajectories: usize,
    #[serde(default)]
    pub seed: u64,
    /// Liouville sampling times; defaults to thirds of the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_times: Option<Vec<f64>>,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_n() -> usize {
    1000
}

fn default_bins() -> usize {
    50
}

fn default_time_profile() -> TimeProfile {
    TimeProfile {
        center: 0.0,
        width: 1.0,
    }
}

/// One failed precondition, located in the source file when known.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.path, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{} violation(s):\n{}", .0.len(), list(.0))]
    Invalid(Vec<Violation>),
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  {x}")).collect::<Vec<_>>().join("\n")
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&src)
}

/// Parse and validate; violations carry the line of the offending key.
pub fn parse_config(src: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = serde_json::from_str(src).map_err(|e| {
        let suffix = format!(" at line {} column {}", e.line(), e.column());
        let message = e.to_string();
        ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: message.strip_suffix(&suffix).unwrap_or(&message).to_string(),
        }
    })?;
    let mut violations = cfg.violations();
    if violations.is_empty() {
        return Ok(cfg);
    }
    let index = LineIndex::new(src);
    for v in &mut violations {
        v.line = Some(index.line_of(&v.path));
    }
    Err(ConfigError::Invalid(violations))
}

impl ExperimentConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    pub fn x_grid(&self) -> Result<Grid1D, CoreError> {
        Grid1D::new(self.grid.n_x, self.grid.x_min, self.grid.x_max)
    }

    pub fn t_grid(&self) -> Result<Grid1D, CoreError> {
        let g = &self.grid;
        match (g.n_t, g.t_min, g.t_max) {
            (Some(n), Some(a), Some(b)) => Grid1D::new(n, a, b),
            _ => Err(CoreError::InvalidGrid("n_t, t_min and t_max are required".into())),
        }
    }

    pub fn sample_times(&self) -> Vec<f64> {
        self.sample_times
            .clone()
            .unwrap_or_else(|| (1..=3).map(|k| self.horizon * k as f64 / 3.0).collect())
    }

    pub fn nonrel(&self) -> Result<NonrelConfig, CoreError> {
        Ok(NonrelConfig {
            grid: self.x_grid()?,
            mass: if self.kinetic { self.mass } else { f64::INFINITY },
            potential: self.potential.clone(),
            packet: Packet {
                center: self.packet.center,
                width: self.packet.width,
                momentum: self.packet.momentum,
            },
            detectors: self.detectors.clone(),
            horizon: self.horizon,
            dt: self.dt,
        })
    }

    pub fn proper_time(&self) -> Result<ProperTimeConfig, CoreError> {
        Ok(ProperTimeConfig {
            x: self.nonrel()?,
            t_grid: self.t_grid()?,
            time_profile: self.time_profile,
        })
    }

    pub fn relativistic(&self) -> Result<RelConfig, CoreError> {
        let d = self.dirac.clone().unwrap_or_default();
        Ok(RelConfig {
            grid: Grid2D::new(self.x_grid()?, self.t_grid()?),
            dirac_mass: d.mass,
            evolution_mass: d.evolution_mass,
            charge: d.charge,
            gauge: d.gauge,
            packet: SpinorPacket {
                x: Packet {
                    center: self.packet.center,
                    width: self.packet.width,
                    momentum: self.packet.momentum,
                },
                t_center: self.time_profile.center,
                t_width: self.time_profile.width,
                spinor: d.spinor,
            },
            detectors: self.detectors.clone(),
            horizon: self.horizon,
            dt: self.dt,
            selection: d.selection,
        })
    }

    /// Every violated precondition. Field-level checks run first; the
    /// engine is only built (catching cross-field conditions) when they pass.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |path: &str, message: String| {
            out.push(Violation {
                path: path.to_string(),
                line: None,
                message,
            })
        };
        if self.schema_version != SCHEMA_VERSION {
            bad(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            );
        }
        let g = &self.grid;
        if !(g.x_max > g.x_min) || !g.x_min.is_finite() || !g.x_max.is_finite() {
            bad("grid.x_max", format!("need finite bounds with x_max > x_min, got [{}, {})", g.x_min, g.x_max));
        }
        if !g.n_x.is_power_of_two() || g.n_x < 2 {
            bad("grid.n_x", format!("spectral derivatives need a power of two >= 2, got {}", g.n_x));
        }
        if self.engine.needs_time_axis() {
            match g.n_t {
                None => bad("grid.n_t", format!("required by the {} engine", self.engine)),
                Some(n) if !n.is_power_of_two() || n < 2 => {
                    bad("grid.n_t", format!("spectral derivatives need a power of two >= 2, got {n}"))
                }
                _ => {}
            }
            match (g.t_min, g.t_max) {
                (Some(a), Some(b)) if b > a && a.is_finite() && b.is_finite() => {}
                (Some(a), Some(b)) => bad("grid.t_max", format!("need finite bounds with t_max > t_min, got [{a}, {b})")),
                _ => bad("grid.t_min", format!("t_min and t_max are required by the {} engine", self.engine)),
            }
            if !(self.time_profile.width > 0.0) || !self.time_profile.width.is_finite() {
                bad("time_profile.width", format!("must be positive, got {}", self.time_profile.width));
            }
        }
        if matches!(self.engine, Engine::Liouville | Engine::CompareEnsemble) && g.n_x > DENSE_CAP {
            bad("grid.n_x", format!("dense density matrices are capped at {DENSE_CAP} points, got {}", g.n_x));
        }
        if self.kinetic && (!(self.mass > 0.0) || !self.mass.is_finite()) {
            bad("mass", format!("must be positive and finite, got {}", self.mass));
        }
        if !(self.packet.width > 0.0) || !self.packet.width.is_finite() {
            bad("packet.width", format!("must be positive, got {}", self.packet.width));
        }
        if !self.packet.center.is_finite() || !self.packet.momentum.is_finite() {
            bad("packet", "center and momentum must be finite".into());
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            bad("horizon", format!("must be finite and >= 0, got {}", self.horizon));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                bad("dt", format!("must be positive, got {dt}"));
            }
        }
        if self.histogram_bins == 0 {
            bad("histogram_bins", "must be at least 1".into());
        }
        if let Some(ts) = &self.sample_times {
            if ts.is_empty() {
                bad("sample_times", "must not be empty".into());
            }
            if ts.windows(2).any(|w| !(w[0] < w[1])) {
                bad("sample_times", "must be strictly increasing".into());
            }
            for (i, t) in ts.iter().enumerate() {
                if !(*t >= 0.0 && *t <= self.horizon) {
                    bad(&format!("sample_times[{i}]"), format!("must lie in [0, horizon], got {t}"));
                }
            }
        }
        if self.detectors.is_empty() && self.engine != Engine::Relativistic {
            bad("detectors", "at least one detector is required".into());
        }
        if matches!(self.engine, Engine::CompareEnsemble | Engine::Liouville)
            && (self.detectors.len() != 1 || self.detectors[0].mode != DetectorMode::SingleShot)
        {
            bad("detectors", "the master equation needs exactly one single-shot detector".into());
        }
        if let Ok(grid) = self.x_grid() {
            for (i, d) in self.detectors.iter().enumerate() {
                if let Err(e) = d.validate(&grid) {
                    let (field, msg) = split_error(&e);
                    let path = match field.as_str() {
                        "alpha" => format!("detectors[{i}].alpha"),
                        "dead_time" => format!("detectors[{i}].mode.dead_time"),
                        "" => format!("detectors[{i}].profile"),
                        f => format!("detectors[{i}].profile.{f}"),
                    };
                    bad(&path, msg);
                }
            }
            if let Err(e) = self.potential.validate(&grid) {
                bad("potential", split_error(&e).1);
            }
        }
        if self.engine == Engine::Relativistic {
            let d = self.dirac.clone().unwrap_or_default();
            let m = d.evolution_mass.unwrap_or(d.mass);
            if !(m > 0.0) || !m.is_finite() {
                bad(
                    "dirac.evolution_mass",
                    format!("must be positive (it defaults to dirac.mass), got {m}"),
                );
            }
        }
        if !out.is_empty() {
            return out;
        }
        if let Err(e) = self.build_check() {
            let (field, msg) = split_error(&e);
            let path = match (&e, field.as_str()) {
                (CoreError::NonPositiveNorm(_), _) => "dirac.spinor".to_string(),
                (CoreError::TimeBoxWrap(_), _) => "grid.t_min".to_string(),
                (_, "") => "engine".to_string(),
                (_, f) => f.to_string(),
            };
            out.push(Violation {
                path,
                line: None,
                message: msg,
            });
        }
        out
    }

    /// Build the engine once to surface preconditions that span fields.
    fn build_check(&self) -> Result<(), CoreError> {
        match self.engine {
            Engine::Nonrel | Engine::Liouville | Engine::CompareEnsemble => {
                NonrelEngine::new(self.nonrel()?).map(drop)
            }
            Engine::Propertime | Engine::ComparePropertime => {
                ProperTimeEngine::new(self.proper_time()?).map(drop)
            }
            Engine::Relativistic => RelEngine::new(self.relativistic()?).map(drop),
        }
    }
}

/// Field name and message of a core error.
fn split_error(e: &CoreError) -> (String, String) {
    match e {
        CoreError::InvalidParameter { name, reason } => (name.to_string(), reason.to_string()),
        other => (String::new(), other.to_string()),
    }
}
