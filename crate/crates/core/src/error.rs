use thiserror::Error;

/// Errors raised by grids, operators and the click engines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("spectral backend needs a power-of-two axis, got {0} points")]
    BackendMismatch(usize),

    #[error("operands live on different grids")]
    GridMismatch,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("propagation blew up at t = {time}: {detail}")]
    Blowup { time: f64, detail: String },

    #[error("coupling annihilates the state, a click is impossible")]
    DarkState,

    #[error("threshold {0} lies outside [0, 1]")]
    ThresholdOutOfRange(f64),

    #[error("monitored click probability decreased by {drop:e} at t = {time}")]
    MonitorDecreased { time: f64, drop: f64 },

    #[error("no active detector can be selected")]
    NoActiveDetector,

    #[error("dense dimension {n} exceeds the cap of {cap}")]
    DimensionCap { n: usize, cap: usize },

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("coupling depends on coordinate time, only g(x) couplings are supported")]
    TimeDependentCoupling,

    #[error("time profile leaves the periodic t-box: {0}")]
    TimeBoxWrap(String),

    #[error("initial state has non-positive indefinite norm {0}")]
    NonPositiveNorm(f64),

    #[error("array file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
