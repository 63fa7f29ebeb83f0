//! Piecewise-deterministic simulation of detector clicks for a quantum
//! particle on a line.
//!
//! Three engines share one jump-time driver:
//!
//! * [`nonrel`]: damped Schrödinger flow, random click thresholds, collapse
//!   `psi -> g psi / ||g psi||`, unitary evolution after the click.
//! * [`proper_time`]: the same process on an `(x, t)` grid flowing in proper
//!   time, with the closed-form product solution as a check.
//! * [`relativistic`]: Dirac spin-1/2 fields evolving under `D^2 / 2M` with
//!   `P+`-projected couplings in the indefinite `gamma^0` metric.
//!
//! [`liouville`] integrates the ensemble master equation for `(rho0, rho1)` and
//! compares it with trajectory averages.

pub mod array_io;
pub mod error;
pub mod liouville;
pub mod nonrel;
pub mod numerics;
pub mod pdp;
pub mod proper_time;
pub mod relativistic;
pub mod stats;

pub use error::{Error, Result};
pub use numerics::*;

/// Version tag written into every serialized record and report.
pub const SCHEMA_VERSION: u32 = 1;
