//! Dyadic subcubes of `Q₁ = (−1/2, 1/2)ⁿ` with exact integer navigation.

use alloc::vec::Vec;
use num_traits::Float;
use thiserror::Error;

use crate::covering::AxisBox;
use crate::profile::AnisotropyProfile;

/// Cube of generation `g` and index `k ∈ [0, 2^g)ⁿ`: `Π [−1/2 + k_i 2^{−g}, −1/2 + (k_i+1) 2^{−g}]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    pub generation: u32,
    pub index: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DyadicError {
    #[error("the root cube has no predecessor")]
    Root,
    #[error("index out of range for generation {0}")]
    OutOfRange(u32),
}

impl DyadicCube {
    pub fn root(n: usize) -> Self {
        Self { generation: 0, index: alloc::vec![0; n] }
    }

    pub fn new(generation: u32, index: Vec<u64>) -> Result<Self, DyadicError> {
        if generation >= 63 || index.iter().any(|k| *k >> generation != 0) {
            return Err(DyadicError::OutOfRange(generation));
        }
        Ok(Self { generation, index })
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn edge(&self) -> f64 {
        (-(self.generation as f64)).exp2()
    }

    pub fn children(&self) -> Vec<DyadicCube> {
        let n = self.dim();
        (0..1u64 << n)
            .map(|mask| DyadicCube {
                generation: self.generation + 1,
                index: (0..n).map(|i| 2 * self.index[i] + (mask >> (n - 1 - i) & 1)).collect(),
            })
            .collect()
    }

    pub fn predecessor(&self) -> Result<DyadicCube, DyadicError> {
        if self.generation == 0 {
            return Err(DyadicError::Root);
        }
        Ok(DyadicCube { generation: self.generation - 1, index: self.index.iter().map(|k| k / 2).collect() })
    }

    pub fn as_box(&self) -> AxisBox {
        let e = self.edge();
        AxisBox {
            lo: self.index.iter().map(|k| -0.5 + *k as f64 * e).collect(),
            hi: self.index.iter().map(|k| -0.5 + (*k + 1) as f64 * e).collect(),
        }
    }

    pub fn center(&self) -> Vec<f64> {
        let e = self.edge();
        self.index.iter().map(|k| -0.5 + (*k as f64 + 0.5) * e).collect()
    }

    /// Half-edges of the corresponding box `R̃`. The cube is `R_{1,s}` with
    /// `s^{1/(n+σ_min)} = e` (half-edge `e`), so `R̃` has half-edges `e^{(n+σ_min)/(n+σ_i)}`.
    pub fn tilde_half_edges(&self, profile: &AnisotropyProfile) -> Vec<f64> {
        let half = 0.5 * self.edge();
        let p = profile.orders();
        let pmin = profile.n() as f64 + profile.sigma_min();
        p.iter().map(|pi| half.powf(pmin / pi)).collect()
    }

    pub fn tilde(&self, profile: &AnisotropyProfile) -> AxisBox {
        AxisBox::centered(&self.center(), &self.tilde_half_edges(profile))
    }
}
