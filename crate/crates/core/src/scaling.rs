//! Diagonal anisotropic scalings `T_r` and `T_{j,r}`.

use alloc::vec::Vec;
use num_traits::Float;

use crate::profile::AnisotropyProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingKind {
    /// `T_r e_i = r^{1/(n+σ_i)} e_i`
    T,
    /// `T_{j,r} e_j = r e_j`, `T_{j,r} e_i = r^{(n+σ_j)/(n+σ_i)} e_i`
    Tj(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingMap {
    pub kind: ScalingKind,
    pub r: f64,
    diag: Vec<f64>,
}

impl ScalingMap {
    pub fn t(profile: &AnisotropyProfile, r: f64) -> Self {
        assert!(r > 0.0, "scaling parameter must be positive");
        let diag = profile.orders().iter().map(|p| r.powf(1.0 / p)).collect();
        Self { kind: ScalingKind::T, r, diag }
    }

    pub fn tj(profile: &AnisotropyProfile, j: usize, r: f64) -> Self {
        assert!(r > 0.0, "scaling parameter must be positive");
        assert!(j < profile.n(), "axis index out of range");
        let pj = profile.orders()[j];
        let diag = profile
            .orders()
            .iter()
            .enumerate()
            .map(|(i, p)| if i == j { r } else { r.powf(pj / p) })
            .collect();
        Self { kind: ScalingKind::Tj(j), r, diag }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn det(&self) -> f64 {
        self.diag.iter().product()
    }

    pub fn apply(&self, y: &[f64], inverse: bool) -> Vec<f64> {
        if inverse {
            y.iter().zip(&self.diag).map(|(a, d)| a / d).collect()
        } else {
            y.iter().zip(&self.diag).map(|(a, d)| a * d).collect()
        }
    }

    pub fn apply_into(&self, y: &[f64], inverse: bool, out: &mut [f64]) {
        for i in 0..y.len() {
            out[i] = if inverse { y[i] / self.diag[i] } else { y[i] * self.diag[i] };
        }
    }
}
