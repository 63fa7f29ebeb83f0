//! Small dense helpers used by the master equation and the oracles.

use nalgebra::{DMatrix, SymmetricEigen};

use super::C64;

/// `exp(A)` by scaling and squaring with a Padé approximant.
pub fn expm(a: &DMatrix<C64>) -> DMatrix<C64> {
    a.clone().exp()
}

/// Eigenvalues of a Hermitian matrix (the anti-Hermitian part is ignored).
pub fn hermitian_eigenvalues(a: &DMatrix<C64>) -> Vec<f64> {
    let h = (a + a.adjoint()) * C64::new(0.5, 0.0);
    SymmetricEigen::new(h).eigenvalues.iter().copied().collect()
}

/// Trace norm `||A||_1` of a Hermitian matrix.
pub fn trace_norm(a: &DMatrix<C64>) -> f64 {
    hermitian_eigenvalues(a).iter().map(|l| l.abs()).sum()
}

pub fn trace(a: &DMatrix<C64>) -> C64 {
    a.diagonal().iter().sum()
}

/// Largest entry of `A - A^dagger`.
pub fn hermiticity_defect(a: &DMatrix<C64>) -> f64 {
    (a - a.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_norm_of_diagonal() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(0.5, 0.0),
            C64::new(-0.25, 0.0),
            C64::new(0.0, 0.0),
        ]));
        assert!((trace_norm(&a) - 0.75).abs() < 1e-14);
    }

    #[test]
    fn expm_of_diagonal() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(0.0, 1.0),
            C64::new(-1.0, 0.0),
        ]));
        let e = expm(&a);
        assert!((e[(0, 0)] - C64::from_polar(1.0, 1.0)).norm() < 1e-14);
        assert!((e[(1, 1)] - C64::new((-1.0f64).exp(), 0.0)).norm() < 1e-14);
    }
}
