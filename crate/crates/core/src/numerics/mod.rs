//! Grids, field containers, operators and random streams shared by every engine.

pub mod dense;
pub mod dirac;
pub mod field;
pub mod gamma;
pub mod grid;
pub mod hamiltonian;
pub mod potential;
pub mod rng;
pub mod spectral;

pub type C64 = num_complex::Complex64;

pub use dirac::{apply_dirac, indefinite_product, DiracOperator, GaugeField};
pub use field::{l2_inner, DensitySummary, ScalarField2D, Spinor, SpinorField2D, WaveFunction1D};
pub use gamma::GammaSet;
pub use grid::{Grid1D, Grid2D};
pub use hamiltonian::{apply_hamiltonian, Backend, Hamiltonian};
pub use potential::Potential;
pub use rng::{RngStream, UniformSource};
