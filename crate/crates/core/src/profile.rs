//! Anisotropy profile: orders `σ_i`, ellipticity `λ ≤ Λ` and every derived constant.

use alloc::vec::Vec;
use num_traits::Float;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("dimension must be at least 1")]
    EmptyDimension,
    #[error("dimension {n} does not match {len} supplied exponents")]
    DimensionMismatch { n: usize, len: usize },
    #[error("sigma[{index}] = {value} is outside (0, 2)")]
    SigmaOutOfRange { index: usize, value: f64 },
    #[error("ellipticity bounds must be positive, got lambda = {lo}, Lambda = {hi}")]
    NonPositiveEllipticity { lo: f64, hi: f64 },
    #[error("lambda = {lo} exceeds Lambda = {hi}")]
    EllipticityOrder { lo: f64, hi: f64 },
    #[error("rho0 must be positive and finite, got {0}")]
    InvalidRho0(f64),
    #[error("frak_c must be a positive integer")]
    ZeroFrakC,
    #[error("radius index must be nonnegative, got {0}")]
    NegativeIndex(i64),
}

/// Diagonal matrix `A` used for the quadratic detachment threshold `⟨Az, z⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixA {
    pub diag: Vec<f64>,
}

impl MatrixA {
    pub fn quadratic_form(&self, z: &[f64]) -> f64 {
        self.diag.iter().zip(z).map(|(a, zi)| a * zi * zi).sum()
    }

    pub fn operator_norm(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, &a| m.max(a.abs()))
    }

    pub fn is_identity(&self) -> bool {
        self.diag.iter().all(|&a| a == 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnisotropyProfile {
    sigma: Vec<f64>,
    orders: Vec<f64>,
    lambda_lo: f64,
    lambda_hi: f64,
    sigma_min: f64,
    sigma_max: f64,
    i_min: usize,
    c_sigma: f64,
    q: Vec<f64>,
    q_max: f64,
    frak_c: u32,
    rho0: f64,
}

/// Builds a profile with the default `ρ₀` and `𝔠` for dimension `n`.
pub fn derive_constants(
    n: usize,
    sigma: &[f64],
    lambda_lo: f64,
    lambda_hi: f64,
) -> Result<AnisotropyProfile, ProfileError> {
    if n == 0 {
        return Err(ProfileError::EmptyDimension);
    }
    if sigma.len() != n {
        return Err(ProfileError::DimensionMismatch { n, len: sigma.len() });
    }
    AnisotropyProfile::new(sigma, lambda_lo, lambda_hi)
}

/// Smallest integer `𝔠 ≥ (n+2)·log₂(8√n)`.
pub fn default_frak_c(n: usize) -> u32 {
    let log = 3.0 + 0.5 * (n as f64).log2();
    let raw = (n as f64 + 2.0) * log;
    (raw - 1e-9).ceil().max(1.0) as u32
}

/// `ρ₀ = (8√n)^{-(n+2)}`.
pub fn default_rho0(n: usize) -> f64 {
    let nf = n as f64;
    (8.0 * nf.sqrt()).powf(-(nf + 2.0))
}

impl AnisotropyProfile {
    pub fn new(sigma: &[f64], lambda_lo: f64, lambda_hi: f64) -> Result<Self, ProfileError> {
        let n = sigma.len();
        if n == 0 {
            return Err(ProfileError::EmptyDimension);
        }
        for (index, &value) in sigma.iter().enumerate() {
            if !(value > 0.0 && value < 2.0) {
                return Err(ProfileError::SigmaOutOfRange { index, value });
            }
        }
        if !(lambda_lo > 0.0 && lambda_hi > 0.0) || !lambda_lo.is_finite() || !lambda_hi.is_finite() {
            return Err(ProfileError::NonPositiveEllipticity { lo: lambda_lo, hi: lambda_hi });
        }
        if lambda_lo > lambda_hi {
            return Err(ProfileError::EllipticityOrder { lo: lambda_lo, hi: lambda_hi });
        }
        let nf = n as f64;
        let orders: Vec<f64> = sigma.iter().map(|s| nf + s).collect();
        let inv_sum: f64 = orders.iter().map(|p| 1.0 / p).sum();
        // q_i = -1 + 3/p_i + Σ_{j≠i} 1/p_j = -1 + 2/p_i + Σ_j 1/p_j
        let q: Vec<f64> = orders.iter().map(|p| -1.0 + 2.0 / p + inv_sum).collect();
        let mut i_min = 0;
        let mut i_max = 0;
        for i in 1..n {
            if sigma[i] < sigma[i_min] {
                i_min = i;
            }
            if sigma[i] > sigma[i_max] {
                i_max = i;
            }
        }
        let q_max = q.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        Ok(Self {
            sigma: sigma.to_vec(),
            orders,
            lambda_lo,
            lambda_hi,
            sigma_min: sigma[i_min],
            sigma_max: sigma[i_max],
            i_min,
            c_sigma: q[i_max],
            q,
            q_max,
            frak_c: default_frak_c(n),
            rho0: default_rho0(n),
        })
    }

    pub fn isotropic(n: usize, sigma: f64, lambda_lo: f64, lambda_hi: f64) -> Result<Self, ProfileError> {
        if n == 0 {
            return Err(ProfileError::EmptyDimension);
        }
        Self::new(&alloc::vec![sigma; n], lambda_lo, lambda_hi)
    }

    pub fn with_rho0(mut self, rho0: f64) -> Result<Self, ProfileError> {
        if !(rho0 > 0.0 && rho0.is_finite()) {
            return Err(ProfileError::InvalidRho0(rho0));
        }
        self.rho0 = rho0;
        Ok(self)
    }

    pub fn with_frak_c(mut self, frak_c: u32) -> Result<Self, ProfileError> {
        if frak_c == 0 {
            return Err(ProfileError::ZeroFrakC);
        }
        self.frak_c = frak_c;
        Ok(self)
    }

    /// Same σ and ρ₀/𝔠 overrides, different ellipticity.
    pub fn with_ellipticity(&self, lambda_lo: f64, lambda_hi: f64) -> Result<Self, ProfileError> {
        let fresh = Self::new(&self.sigma, lambda_lo, lambda_hi)?;
        Ok(Self { rho0: self.rho0, frak_c: self.frak_c, ..fresh })
    }

    pub fn n(&self) -> usize {
        self.sigma.len()
    }
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }
    /// `n + σ_i` for every axis.
    pub fn orders(&self) -> &[f64] {
        &self.orders
    }
    pub fn lambda_lo(&self) -> f64 {
        self.lambda_lo
    }
    pub fn lambda_hi(&self) -> f64 {
        self.lambda_hi
    }
    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }
    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }
    pub fn i_min(&self) -> usize {
        self.i_min
    }
    pub fn c_sigma(&self) -> f64 {
        self.c_sigma
    }
    pub fn q(&self) -> &[f64] {
        &self.q
    }
    pub fn q_max(&self) -> f64 {
        self.q_max
    }
    pub fn frak_c(&self) -> u32 {
        self.frak_c
    }
    pub fn rho0(&self) -> f64 {
        self.rho0
    }
    pub fn is_isotropic(&self) -> bool {
        self.sigma.iter().all(|&s| s == self.sigma[0])
    }

    /// `Σ_i |y_i|^{n+σ_i}`, the gauge whose sublevel sets are the Θ_r.
    pub fn gauge(&self, y: &[f64]) -> f64 {
        y.iter().zip(&self.orders).map(|(yi, p)| yi.abs().powf(*p)).sum()
    }

    /// Normalised reference kernel `c_σ / Σ|y_i|^{n+σ_i}`.
    pub fn reference_kernel(&self, y: &[f64]) -> f64 {
        self.c_sigma / self.gauge(y)
    }

    /// `Σ_i 1/(n+σ_i)`: |Θ_r| = r^a |Θ_1|.
    pub fn theta_exponent(&self) -> f64 {
        self.orders.iter().map(|p| 1.0 / p).sum()
    }

    /// Closed-form volume of Θ_1 (Dirichlet integral),
    /// `2ⁿ Π Γ(1 + 1/p_i) / Γ(1 + Σ 1/p_i)`.
    pub fn theta_unit_volume(&self) -> f64 {
        let mut num = 1.0;
        for p in &self.orders {
            num *= 2.0 * libm::tgamma(1.0 + 1.0 / p);
        }
        num / libm::tgamma(1.0 + self.theta_exponent())
    }

    /// `∫_{Θ_1} y_i² dy`, again a Dirichlet integral.
    pub fn theta_second_moment(&self, i: usize) -> f64 {
        let a = self.theta_exponent();
        let mut num = 1.0;
        for (j, p) in self.orders.iter().enumerate() {
            let alpha = if j == i { 3.0 } else { 1.0 };
            num *= 2.0 * libm::tgamma(alpha / p) / p;
        }
        num / libm::tgamma(1.0 + a + 2.0 / self.orders[i])
    }

    pub fn matrix_a(&self) -> MatrixA {
        let pmin = self.orders[self.i_min];
        let diag = self
            .orders
            .iter()
            .enumerate()
            .map(|(j, p)| {
                if j == self.i_min {
                    1.0
                } else {
                    2.0_f64.powf((-1.0 / pmin + 1.0 / p) * 2.0 / self.q_max)
                }
            })
            .collect();
        MatrixA { diag }
    }

    /// `r_0 = ρ₀ 2^{-1/q_max}`.
    pub fn base_radius(&self) -> f64 {
        self.rho0 * 2.0_f64.powf(-1.0 / self.q_max)
    }

    /// `log₂` of the ratio `r_{k+1}/r_k = 2^{-𝔠(n+σ_min)}`.
    pub fn radius_log2_step(&self) -> f64 {
        -(self.frak_c as f64) * (self.n() as f64 + self.sigma_min)
    }

    pub fn radii_sequence(&self, k: i64) -> Result<f64, ProfileError> {
        if k < 0 {
            return Err(ProfileError::NegativeIndex(k));
        }
        Ok(self.rho0 * 2.0_f64.powf(-1.0 / self.q_max + self.radius_log2_step() * k as f64))
    }

    /// `c_σ / (1 - 2^{-𝔠(n+σ_min)c_σ})`, which must stay bounded as σ_min → 2.
    pub fn normalisation_ratio(&self) -> f64 {
        let e = self.radius_log2_step() * self.c_sigma;
        // 1 - 2^e computed without cancellation
        self.c_sigma / -libm::expm1(e * core::f64::consts::LN_2)
    }

    /// Edge lengths `(ρ₀ 2^{-1/q_max})^{1/(n+σ_i)}` of the initial ABP tiling.
    pub fn tile_edges(&self) -> Vec<f64> {
        let r0 = self.base_radius();
        self.orders.iter().map(|p| r0.powf(1.0 / p)).collect()
    }

    /// Diameter bound `sqrt(Σ (ρ₀2^{-1/q_max})^{2/(n+σ_i)})` for cover rectangles.
    pub fn cover_diameter_bound(&self) -> f64 {
        self.tile_edges().iter().map(|e| e * e).sum::<f64>().sqrt()
    }
}
