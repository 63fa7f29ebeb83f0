//! Dirac matrices in the standard (Dirac) representation.

use nalgebra::Matrix4;

use super::C64;

pub type Mat4 = Matrix4<C64>;

/// Minkowski metric signature `(+, -, -, -)`.
pub const METRIC: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `gamma^0 .. gamma^3`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSet {
    mats: [Mat4; 4],
}

impl Default for GammaSet {
    fn default() -> Self {
        Self::standard()
    }
}

impl GammaSet {
    /// `gamma^0 = diag(I, -I)`, `gamma^i = [[0, sigma_i], [-sigma_i, 0]]`.
    pub fn standard() -> Self {
        let o = c(0.0, 0.0);
        let one = c(1.0, 0.0);
        let i = c(0.0, 1.0);
        let paulis = [
            [[o, one], [one, o]],
            [[o, -i], [i, o]],
            [[one, o], [o, -one]],
        ];
        let g0 = Mat4::from_diagonal(&nalgebra::Vector4::new(one, one, -one, -one));
        let mut mats = [g0, Mat4::zeros(), Mat4::zeros(), Mat4::zeros()];
        for (mu, s) in paulis.iter().enumerate() {
            let g = &mut mats[mu + 1];
            for r in 0..2 {
                for col in 0..2 {
                    g[(r, col + 2)] = s[r][col];
                    g[(r + 2, col)] = -s[r][col];
                }
            }
        }
        Self { mats }
    }

    pub fn get(&self, mu: usize) -> &Mat4 {
        &self.mats[mu]
    }

    pub fn all(&self) -> &[Mat4; 4] {
        &self.mats
    }

    pub fn anticommutator(&self, mu: usize, nu: usize) -> Mat4 {
        self.mats[mu] * self.mats[nu] + self.mats[nu] * self.mats[mu]
    }

    /// `P+ = (I + gamma^0) / 2`.
    pub fn p_plus(&self) -> Mat4 {
        (Mat4::identity() + self.mats[0]) * c(0.5, 0.0)
    }

    pub fn p_minus(&self) -> Mat4 {
        (Mat4::identity() - self.mats[0]) * c(0.5, 0.0)
    }
}
