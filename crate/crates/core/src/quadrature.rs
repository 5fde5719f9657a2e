//! Stratified Monte Carlo nodes on the Θ-annuli between `r_inner` and the far cut.

use alloc::vec::Vec;
use num_traits::Float;
use rand::Rng as _;
use thiserror::Error;

use crate::profile::AnisotropyProfile;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSettings {
    pub shells: usize,
    pub nodes_per_shell: usize,
    /// Euclidean radius of the far cut; the integration region is the largest Θ inside it.
    pub far_radius: f64,
    /// Gauge level of the inner cut Θ_{r_inner}.
    pub r_inner: f64,
    pub seed: u64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self { shells: 40, nodes_per_shell: 128, far_radius: 16.0, r_inner: 1e-9, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("need at least one shell and one node per shell")]
    Empty,
    #[error("far radius {0} must be positive")]
    NonPositiveRadius(f64),
    #[error("inner level {r_inner} must be positive and below the far level {rho_far}")]
    InvertedCuts { r_inner: f64, rho_far: f64 },
}

#[derive(Debug, Clone)]
pub struct QuadratureScheme {
    pub settings: QuadratureSettings,
    n: usize,
    /// Gauge level of the far cut.
    pub rho_far: f64,
    /// Every `|y| ≥ r_tail` lies outside Θ_{rho_far}.
    pub r_tail: f64,
    /// Euclidean radius containing Θ_{r_inner}.
    pub near_radius: f64,
    /// `∫_{Θ_{r_inner}} |y|² / Σ|y_i|^{n+σ_i} dy`.
    pub near_integral: f64,
    /// `∫_{ℝⁿ \ Θ_{rho_far}} 1 / Σ|y_i|^{n+σ_i} dy`.
    pub tail_integral: f64,
    pub shell_levels: Vec<f64>,
    pub shell_volumes: Vec<f64>,
    coords: Vec<f64>,
    gauges: Vec<f64>,
    weights: Vec<f64>,
    nodes_per_shell: usize,
}

/// Largest gauge level ρ with Θ_ρ inside the Euclidean ball of radius `radius`.
pub fn theta_level_inside_ball(profile: &AnisotropyProfile, radius: f64) -> f64 {
    let p = profile.orders();
    let fits = |rho: f64| p.iter().map(|pi| rho.powf(2.0 / pi)).sum::<f64>() <= radius * radius;
    bisect_log(fits)
}

/// Largest Euclidean t such that `|y| ≤ t` forces `y ∈ Θ_ρ`.
pub fn ball_radius_inside_theta(profile: &AnisotropyProfile, rho: f64) -> f64 {
    let p = profile.orders();
    let fits = |t: f64| p.iter().map(|pi| t.powf(*pi)).sum::<f64>() < rho;
    bisect_log(fits)
}

fn bisect_log(fits: impl Fn(f64) -> bool) -> f64 {
    let (mut lo, mut hi) = (-700.0_f64, 700.0_f64);
    if !fits(lo.exp2()) {
        return 0.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fits(mid.exp2()) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo.exp2()
}

/// `∫_{ℝⁿ\Θ_ρ} dy / Σ|y_i|^{n+σ_i} = |Θ_1| a ρ^{a-1} / (1-a)`, `a = Σ 1/(n+σ_i)`.
pub fn theta_tail_integral(profile: &AnisotropyProfile, rho: f64) -> f64 {
    let a = profile.theta_exponent();
    profile.theta_unit_volume() * a * rho.powf(a - 1.0) / (1.0 - a)
}

/// `∫_{Θ_r} |y|² / Σ|y_i|^{n+σ_i} dy = Σ_i m_i (q_i + 1) r^{q_i} / q_i`, `m_i = ∫_{Θ_1} y_i²`.
pub fn theta_near_integral(profile: &AnisotropyProfile, r: f64) -> f64 {
    (0..profile.n())
        .map(|i| {
            let q = profile.q()[i];
            profile.theta_second_moment(i) * (q + 1.0) * r.powf(q) / q
        })
        .sum()
}

/// Point uniformly distributed on ∂Θ_1 with respect to the cone measure.
pub(crate) fn cone_direction(profile: &AnisotropyProfile, rng: &mut stats::Rng, out: &mut [f64]) {
    let p = profile.orders();
    loop {
        for v in out.iter_mut() {
            *v = 2.0 * rng.gen::<f64>() - 1.0;
        }
        let g = profile.gauge(out);
        if g < 1.0 && g > 1e-300 {
            for (v, pi) in out.iter_mut().zip(p) {
                *v *= g.powf(-1.0 / pi);
            }
            return;
        }
    }
}

impl QuadratureScheme {
    pub fn build(profile: &AnisotropyProfile, settings: QuadratureSettings) -> Result<Self, QuadratureError> {
        if settings.shells == 0 || settings.nodes_per_shell == 0 {
            return Err(QuadratureError::Empty);
        }
        if !(settings.far_radius > 0.0) {
            return Err(QuadratureError::NonPositiveRadius(settings.far_radius));
        }
        let rho_far = theta_level_inside_ball(profile, settings.far_radius);
        if !(settings.r_inner > 0.0 && settings.r_inner < rho_far) {
            return Err(QuadratureError::InvertedCuts { r_inner: settings.r_inner, rho_far });
        }
        let n = profile.n();
        let a = profile.theta_exponent();
        let vol1 = profile.theta_unit_volume();
        let log_step = (rho_far / settings.r_inner).log2() / settings.shells as f64;
        let shell_levels: Vec<f64> =
            (0..=settings.shells).map(|k| settings.r_inner * (log_step * k as f64).exp2()).collect();
        let m = settings.nodes_per_shell;
        let mut coords = Vec::with_capacity(settings.shells * m * n);
        let mut gauges = Vec::with_capacity(settings.shells * m);
        let mut weights = Vec::with_capacity(settings.shells * m);
        let mut shell_volumes = Vec::with_capacity(settings.shells);
        let mut omega = alloc::vec![0.0; n];
        for s in 0..settings.shells {
            let mut rng = stats::rng_stream(settings.seed, s as u64);
            let (lo, hi) = (shell_levels[s].powf(a), shell_levels[s + 1].powf(a));
            let vol = vol1 * (hi - lo);
            shell_volumes.push(vol);
            for j in 0..m {
                // stratify the volume coordinate t^a
                let u = (j as f64 + rng.gen::<f64>()) / m as f64;
                let t = (lo + u * (hi - lo)).powf(1.0 / a);
                cone_direction(profile, &mut rng, &mut omega);
                let start = coords.len();
                for (w, pi) in omega.iter().zip(profile.orders()) {
                    coords.push(w * t.powf(1.0 / pi));
                }
                gauges.push(profile.gauge(&coords[start..]));
                weights.push(vol / m as f64);
            }
        }
        let near_radius = profile.orders().iter().map(|p| settings.r_inner.powf(2.0 / p)).sum::<f64>().sqrt();
        Ok(Self {
            settings,
            n,
            rho_far,
            r_tail: ball_radius_inside_theta(profile, rho_far),
            near_radius,
            near_integral: theta_near_integral(profile, settings.r_inner),
            tail_integral: theta_tail_integral(profile, rho_far),
            shell_levels,
            shell_volumes,
            coords,
            gauges,
            weights,
            nodes_per_shell: m,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.gauges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gauges.is_empty()
    }

    pub fn shells(&self) -> usize {
        self.shell_volumes.len()
    }

    pub fn nodes_per_shell(&self) -> usize {
        self.nodes_per_shell
    }

    pub fn node(&self, j: usize) -> &[f64] {
        &self.coords[j * self.n..(j + 1) * self.n]
    }

    pub fn gauge(&self, j: usize) -> f64 {
        self.gauges[j]
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    /// Inner level scaled by `inner_factor` (shells extended at the same log step) and
    /// `node_factor` times as many nodes per shell, with a fresh seed.
    pub fn refined(
        profile: &AnisotropyProfile,
        settings: QuadratureSettings,
        inner_factor: f64,
        node_factor: usize,
    ) -> Result<Self, QuadratureError> {
        let r_inner = settings.r_inner * inner_factor;
        let extra = (settings.shells as f64 * (1.0 / inner_factor).log2()
            / (theta_level_inside_ball(profile, settings.far_radius) / settings.r_inner).log2())
        .ceil() as usize;
        Self::build(
            profile,
            QuadratureSettings {
                shells: settings.shells + extra,
                nodes_per_shell: settings.nodes_per_shell * node_factor,
                r_inner,
                seed: settings.seed.wrapping_add(0x9e37_79b9),
                ..settings
            },
        )
    }
}

/// Inner level for which the C^{1,1} remainder `2M Λ c_σ ∫_{Θ_r}|y|²/Σ|y_i|^{n+σ_i}` stays below `tol/2`.
pub fn r_inner_for_tolerance(profile: &AnisotropyProfile, c11: f64, tol: f64) -> f64 {
    let scale = 2.0 * c11 * profile.lambda_hi() * profile.c_sigma();
    if !(scale > 0.0) {
        return 1e-12;
    }
    let fits = |r: f64| scale * theta_near_integral(profile, r) <= 0.5 * tol;
    bisect_log(fits).max(1e-300)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton on the three-term recurrence).
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = alloc::vec![0.0; m];
    let mut w = alloc::vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut z = (core::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if m == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = mf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    (x, w)
}
