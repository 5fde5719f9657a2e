//! Second differences, linear operators `L = ∫ δ K`, the extremal operators `M^±`
//! and the inf-sup operator, all by shell quadrature with explicit error bounds.

use alloc::vec::Vec;
use num_traits::Float;
use thiserror::Error;

use crate::field::{second_difference_raw, BoundedField};
use crate::kernel::{Kernel, KernelFamily, Multiplier};
use crate::profile::AnisotropyProfile;
use crate::quadrature::{ball_radius_inside_theta, theta_level_inside_ball, theta_tail_integral, QuadratureScheme};
use crate::stats;

/// Quadrature value with the bound on `|true − value|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    /// Three standard errors of the shell Monte Carlo sums.
    pub stat: f64,
    /// Analytic C^{1,1} remainder on Θ_{r_inner}.
    pub near: f64,
    /// Analytic bound beyond the far cut.
    pub tail: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum OpsError {
    #[error("quadrature error {error} exceeds tolerance {tol}")]
    ToleranceExceeded { error: f64, tol: f64 },
    #[error("far radius {0} must be positive")]
    NonPositiveRadius(f64),
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0, stat: 0.0, near: 0.0, tail: 0.0 }
    }

    pub fn within(self, tol: f64) -> Result<Self, OpsError> {
        if self.error <= tol {
            Ok(self)
        } else {
            Err(OpsError::ToleranceExceeded { error: self.error, tol })
        }
    }

    pub fn lower(&self) -> f64 {
        self.value - self.error
    }

    pub fn upper(&self) -> f64 {
        self.value + self.error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremal {
    Plus,
    Minus,
}

/// `δ(u, x, y) = u(x+y) + u(x−y) − 2u(x)`.
pub fn second_difference(u: &BoundedField, x: &[f64], y: &[f64]) -> f64 {
    second_difference_raw(u, x, y)
}

/// Shell sums of `integrand(y, gauge, δ)` with a sample-variance error and a
/// roundoff allowance of `8ε·(|u(x+y)|+|u(x−y)|+2|u(x)|)·kmax(y)` per node.
fn shell_integrate(
    u: &BoundedField,
    x: &[f64],
    scheme: &QuadratureScheme,
    mut integrand: impl FnMut(&[f64], f64, f64) -> f64,
    kmax: f64,
) -> (f64, f64, f64) {
    let n = x.len();
    let m = scheme.nodes_per_shell();
    let ux = u.eval(x);
    let mut shell_sums = Vec::with_capacity(scheme.shells());
    let mut var_total = 0.0;
    let mut roundoff = 0.0;
    let mut vals = alloc::vec![0.0; m];
    let mut plus = [0.0_f64; 8];
    let mut minus = [0.0_f64; 8];
    for s in 0..scheme.shells() {
        let vol = scheme.shell_volumes[s];
        let mut r_acc = 0.0;
        for j in 0..m {
            let idx = s * m + j;
            let y = scheme.node(idx);
            for k in 0..n {
                plus[k] = x[k] + y[k];
                minus[k] = x[k] - y[k];
            }
            let a = u.eval(&plus[..n]);
            let b = u.eval(&minus[..n]);
            let d = (a + b) - 2.0 * ux;
            let g = scheme.gauge(idx);
            vals[j] = integrand(y, g, d);
            r_acc += (a.abs() + b.abs() + 2.0 * ux.abs()) / g;
        }
        let (mean, var) = stats::mean_var(&vals);
        shell_sums.push(vol * mean);
        var_total += vol * vol * var / m as f64;
        roundoff += 8.0 * f64::EPSILON * kmax * vol * r_acc / m as f64;
    }
    (stats::pairwise_sum(&shell_sums), 3.0 * var_total.sqrt(), roundoff)
}

/// How the integrand depends on `δ` beyond the far cut.
#[derive(Clone, Copy)]
enum TailRule {
    /// `k δ / gauge` with the constant `k = m c_σ`.
    Linear(f64),
    /// `c (pos δ⁺ − neg δ⁻) / gauge`.
    Extremal { pos: f64, neg: f64, c: f64 },
    /// Kernel only known to lie in `[0, kmax / gauge]`.
    Bounded,
}

fn assemble(
    value: f64,
    stat: f64,
    roundoff: f64,
    u: &BoundedField,
    x: &[f64],
    scheme: &QuadratureScheme,
    kmax: f64,
    rule: TailRule,
) -> Estimate {
    let near = 2.0 * u.c11_at(x, scheme.near_radius) * kmax * scheme.near_integral;
    let (lo, hi) = u.tail_delta_interval(x, scheme.r_tail);
    let ti = scheme.tail_integral;
    // the integrand is monotone in δ, so its tail integral lies between the endpoint values
    let (centre, tail) = match rule {
        TailRule::Linear(k) => (0.5 * (lo + hi) * k * ti, 0.5 * (hi - lo) * k * ti),
        TailRule::Extremal { pos, neg, c } => {
            let w = |d: f64| if d > 0.0 { pos * d } else if d < 0.0 { neg * d } else { 0.0 };
            let (a, b) = (w(lo), w(hi));
            (0.5 * (a + b) * c * ti, 0.5 * (b - a) * c * ti)
        }
        TailRule::Bounded => (0.0, kmax * lo.abs().max(hi.abs()) * ti),
    };
    Estimate { value: value + centre, error: stat + near + tail + roundoff, stat, near, tail }
}

/// `∫ δ(u, x, y) K(y) dy`.
pub fn eval_linear(
    u: &BoundedField,
    x: &[f64],
    kernel: &Kernel,
    scheme: &QuadratureScheme,
    profile: &AnisotropyProfile,
) -> Estimate {
    let kmax = kernel.upper_multiplier() * profile.c_sigma();
    let (v, stat, ro) = shell_integrate(u, x, scheme, |y, g, d| d * kernel.eval_with_gauge(profile, y, g), kmax);
    let rule = match kernel {
        Kernel::PowerLaw(Multiplier::Constant(m)) => TailRule::Linear(m * profile.c_sigma()),
        _ => TailRule::Bounded,
    };
    assemble(v, stat, ro, u, x, scheme, kmax, rule)
}

/// `M^+ u = c_σ ∫ (Λδ⁺ − λδ⁻) / Σ|y_i|^{n+σ_i}` and `M^-` with λ and Λ swapped.
pub fn eval_extremal(
    u: &BoundedField,
    x: &[f64],
    profile: &AnisotropyProfile,
    scheme: &QuadratureScheme,
    which: Extremal,
) -> Estimate {
    let (lo, hi) = (profile.lambda_lo(), profile.lambda_hi());
    let (pos, neg) = match which {
        Extremal::Plus => (hi, lo),
        Extremal::Minus => (lo, hi),
    };
    let c = profile.c_sigma();
    let kmax = hi * c;
    let (v, stat, ro) = shell_integrate(
        u,
        x,
        scheme,
        |_, g, d| {
            let w = if d > 0.0 { pos * d } else if d < 0.0 { neg * d } else { 0.0 };
            w * c / g
        },
        kmax,
    );
    assemble(v, stat, ro, u, x, scheme, kmax, TailRule::Extremal { pos, neg, c })
}

/// `inf_α sup_β L_{αβ} u(x)`; the error is the largest member error.
pub fn eval_inf_sup(
    u: &BoundedField,
    x: &[f64],
    family: &KernelFamily,
    scheme: &QuadratureScheme,
    profile: &AnisotropyProfile,
) -> Estimate {
    let mut err = 0.0_f64;
    let mut stat = 0.0_f64;
    let mut near = 0.0_f64;
    let mut tail = 0.0_f64;
    let best = family.inf_sup(
        |k| {
            let e = eval_linear(u, x, k, scheme, profile);
            err = err.max(e.error);
            stat = stat.max(e.stat);
            near = near.max(e.near);
            tail = tail.max(e.tail);
            e
        },
        |e| e.value,
    );
    Estimate { value: best.value, error: err, stat, near, tail }
}

/// `4 Λ c_σ sup|u| · ∫_{ℝⁿ\B_far} dy / Σ|y_i|^{n+σ_i}` (the integral bounded through
/// the largest Θ inside `B_far`).
pub fn tail_truncation_bound(sup_bound: f64, far_radius: f64, profile: &AnisotropyProfile) -> Result<f64, OpsError> {
    if !(far_radius > 0.0) {
        return Err(OpsError::NonPositiveRadius(far_radius));
    }
    if sup_bound == 0.0 {
        return Ok(0.0);
    }
    let rho = theta_level_inside_ball(profile, far_radius);
    Ok(4.0 * profile.lambda_hi() * profile.c_sigma() * sup_bound * theta_tail_integral(profile, rho))
}

/// Euclidean radius beyond which every `y` lies outside the Θ level inside `B_far`.
pub fn tail_radius(profile: &AnisotropyProfile, far_radius: f64) -> f64 {
    ball_radius_inside_theta(profile, theta_level_inside_ball(profile, far_radius))
}
