//! Measurements on solved lattice fields: point estimate, distribution decay,
//! Harnack quotient, Hölder exponent, σ sweeps, the kernel translation modulus
//! and truncated-kernel control.

use alloc::sync::Arc;
use alloc::vec::Vec;
use num_traits::Float;
use rand::Rng as _;
use thiserror::Error;

use crate::field::{BoundedField, Exterior, Grid, PointFn};
use crate::kernel::{Kernel, KernelFamily};
use crate::ops::{self, Extremal};
use crate::profile::AnisotropyProfile;
use crate::quadrature::{gauss_legendre, theta_level_inside_ball, theta_tail_integral, QuadratureScheme};
use crate::solver::{solve_dirichlet, DiscreteOperator, DiscreteProblem, SolveReport, SolverError};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("radii must be strictly decreasing and at least three, got {0}")]
    Radii(usize),
    #[error("the unit cube Q_1 is not covered by the grid")]
    CubeOutsideGrid,
    #[error("profiles in a sweep must share n, λ and Λ")]
    MixedProfiles,
    #[error("|h| = {h} is not below τ₀/2 = {limit}")]
    ShiftTooLarge { h: f64, limit: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
}

/// A precondition that failed, with the measured value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    Negative(f64),
    CentreAbove(f64),
    MinusAbove { value: f64, bound: f64 },
    PlusBelow { value: f64, bound: f64 },
}

/// Lattice values with their discrete extremal operators.
#[derive(Debug, Clone)]
pub struct Measured {
    pub field: BoundedField,
    /// `M⁻_h u` at every lattice point.
    pub minus: Vec<f64>,
    pub plus: Vec<f64>,
    /// Smallest exterior value the operator windows reach.
    pub exterior_min: f64,
}

impl Measured {
    pub fn new(op: &DiscreteOperator, field: BoundedField) -> Self {
        let values = field.values();
        let minus = op.extremal(values, Extremal::Minus);
        let plus = op.extremal(values, Extremal::Plus);
        Self { exterior_min: op.exterior_range().0, minus, plus, field }
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid().expect("measured fields live on a grid")
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    /// `c·u` for `c > 0`, with `M^±` scaled alongside.
    pub fn scaled(&self, c: f64) -> Self {
        let g = self.grid().clone();
        let ext = self.field.exterior().clone();
        let ext = Exterior::Rule { f: Arc::new(move |x: &[f64]| c * ext.eval(x)), bound: f64::INFINITY };
        let values = self.values().iter().map(|v| c * v).collect();
        Self {
            field: BoundedField::on_grid(g, values, ext),
            minus: self.minus.iter().map(|v| c * v).collect(),
            plus: self.plus.iter().map(|v| c * v).collect(),
            exterior_min: c * self.exterior_min,
        }
    }

    pub fn centre_value(&self) -> f64 {
        self.field.eval(&alloc::vec![0.0; self.grid().dim()])
    }

    fn in_ball(&self, radius: f64) -> impl Iterator<Item = usize> + '_ {
        let g = self.grid();
        (0..g.len()).filter(move |&k| g.point(k).iter().map(|c| c * c).sum::<f64>() <= radius * radius)
    }
}

/// `|{x : pred} ∩ [−half, half]ⁿ|` with each lattice point owning its cell clipped to the box.
pub fn cell_measure(grid: &Grid, half: f64, pred: impl Fn(usize) -> bool) -> Result<f64, ExperimentError> {
    let n = grid.dim();
    if (0..n).any(|a| grid.lo[a] > -half || grid.hi[a] < half) {
        return Err(ExperimentError::CubeOutsideGrid);
    }
    let overlap: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            let h = grid.spacing(a);
            (0..grid.counts[a])
                .map(|k| {
                    let x = grid.coord(a, k as i64);
                    let lo = (x - 0.5 * h).max(grid.lo[a]).max(-half);
                    let hi = (x + 0.5 * h).min(grid.hi[a]).min(half);
                    (hi - lo).max(0.0)
                })
                .collect()
        })
        .collect();
    let mut parts = Vec::new();
    for flat in 0..grid.len() {
        if !pred(flat) {
            continue;
        }
        let idx = grid.multi_index(flat);
        let v: f64 = (0..n).map(|a| overlap[a][idx[a]]).product();
        if v > 0.0 {
            parts.push(v);
        }
    }
    Ok(stats::pairwise_sum(&parts) + 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate {
    /// `|{u ≤ M} ∩ Q₁|`, the measured ς.
    pub measure: f64,
    pub threshold: f64,
    pub centre: f64,
    pub max_minus: f64,
    pub valid: bool,
    pub violations: Vec<Violation>,
}

/// Preconditions `u ≥ 0`, `u(0) ≤ 1`, `M⁻_h u ≤ ε₀` on the lattice, each with slack `tol`.
pub fn point_estimate(u: &Measured, m: f64, eps0: f64, tol: f64) -> Result<PointEstimate, ExperimentError> {
    let mut violations = Vec::new();
    let lowest = u.values().iter().copied().fold(u.exterior_min, f64::min);
    if lowest < -tol {
        violations.push(Violation::Negative(lowest));
    }
    let centre = u.centre_value();
    if centre > 1.0 + tol {
        violations.push(Violation::CentreAbove(centre));
    }
    let max_minus = u.minus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max_minus > eps0 + tol {
        violations.push(Violation::MinusAbove { value: max_minus, bound: eps0 });
    }
    let vals = u.values();
    let measure = cell_measure(u.grid(), 0.5, |k| vals[k] <= m)?;
    Ok(PointEstimate { measure, threshold: m, centre, max_minus, valid: violations.is_empty(), violations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decay {
    /// `|{u > M^k} ∩ Q₁|` for `k = 1..=k_max`.
    pub measures: Vec<f64>,
    pub fit: DecayFit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// `+∞` when fewer than two terms are positive.
    pub epsilon: f64,
    pub residual: f64,
    pub terms: usize,
}

/// Least squares of `ln measure_k` against `k ln M` over the positive terms (`k` from 1).
pub fn fit_decay(measures: &[f64], m: f64) -> DecayFit {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (k, &v) in measures.iter().enumerate() {
        if v > 0.0 {
            x.push((k + 1) as f64 * m.ln());
            y.push(v.ln());
        }
    }
    match stats::linear_fit(&x, &y) {
        Some(f) => DecayFit { epsilon: -f.slope, residual: f.rms_residual, terms: x.len() },
        None => DecayFit { epsilon: f64::INFINITY, residual: 0.0, terms: x.len() },
    }
}

pub fn distribution_decay(u: &Measured, m: f64, k_max: usize) -> Result<Decay, ExperimentError> {
    if k_max < 2 {
        return Err(ExperimentError::Parameter("k_max must be at least 2"));
    }
    if !(m > 1.0) {
        return Err(ExperimentError::Parameter("M must exceed 1"));
    }
    let vals = u.values();
    let measures = (1..=k_max)
        .map(|k| {
            let t = m.powi(k as i32);
            cell_measure(u.grid(), 0.5, |i| vals[i] > t)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fit = fit_decay(&measures, m);
    Ok(Decay { measures, fit })
}

/// `−ln(1−ς) / ln M`, the exponent that iterating the point estimate predicts.
pub fn predicted_epsilon(varsigma: f64, m: f64) -> f64 {
    -(1.0 - varsigma).ln() / m.ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnackQuotient {
    pub quotient: f64,
    pub sup_half: f64,
    pub centre: f64,
    pub c0: f64,
    pub valid: bool,
    pub violations: Vec<Violation>,
}

/// `max(0, sup M⁻_h u, sup −M⁺_h u)` over the lattice points of `B_radius`.
pub fn measured_c0(u: &Measured, radius: f64) -> f64 {
    u.in_ball(radius).fold(0.0_f64, |c, k| c.max(u.minus[k]).max(-u.plus[k]))
}

/// `sup_{B_{1/2}} u / (u(0) + C₀)` after checking `u ≥ 0`, `M⁻_h u ≤ C₀` and `M⁺_h u ≥ −C₀`
/// on the lattice points of `B₂`, each with slack `tol`.
pub fn harnack_quotient(u: &Measured, c0: f64, tol: f64) -> HarnackQuotient {
    let mut violations = Vec::new();
    let lowest = u.values().iter().copied().fold(u.exterior_min, f64::min);
    if lowest < -tol {
        violations.push(Violation::Negative(lowest));
    }
    let (mut worst_minus, mut worst_plus) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in u.in_ball(2.0) {
        worst_minus = worst_minus.max(u.minus[k]);
        worst_plus = worst_plus.min(u.plus[k]);
    }
    if worst_minus > c0 + tol {
        violations.push(Violation::MinusAbove { value: worst_minus, bound: c0 });
    }
    if worst_plus < -c0 - tol {
        violations.push(Violation::PlusBelow { value: worst_plus, bound: -c0 });
    }
    let vals = u.values();
    let sup_half = u.in_ball(0.5).map(|k| vals[k]).fold(f64::NEG_INFINITY, f64::max);
    let centre = u.centre_value();
    HarnackQuotient {
        quotient: sup_half / (centre + c0),
        sup_half,
        centre,
        c0,
        valid: violations.is_empty(),
        violations,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderFit {
    /// `None` when every oscillation vanishes.
    pub gamma: Option<f64>,
    pub residual: f64,
    /// `(r, osc(u, B_r(center)))`.
    pub oscillations: Vec<(f64, f64)>,
}

/// Oscillation over the lattice points of each `B_r(center)` and the slope of `ln osc` on `ln r`.
pub fn holder_estimate(
    u: &BoundedField,
    grid: &Grid,
    center: &[f64],
    radii: &[f64],
) -> Result<HolderFit, ExperimentError> {
    if radii.len() < 3 || radii.windows(2).any(|w| !(w[1] < w[0])) || radii.iter().any(|&r| !(r > 0.0)) {
        return Err(ExperimentError::Radii(radii.len()));
    }
    let pts = grid.points();
    let vals: Vec<f64> = pts.iter().map(|x| u.eval(x)).collect();
    let oscillations: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for (x, v) in pts.iter().zip(&vals) {
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 <= r * r * (1.0 + 1e-12) {
                    lo = lo.min(*v);
                    hi = hi.max(*v);
                }
            }
            (r, if hi >= lo { hi - lo } else { 0.0 })
        })
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) =
        oscillations.iter().filter(|(_, o)| *o > 0.0).map(|(r, o)| (r.ln(), o.ln())).unzip();
    Ok(match stats::linear_fit(&x, &y) {
        Some(f) => HolderFit { gamma: Some(f.slope), residual: f.rms_residual, oscillations },
        None => HolderFit { gamma: None, residual: 0.0, oscillations },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sigma_min: f64,
    /// `None` for a flagged (invalid) sub-experiment.
    pub quantity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Slope of the quantity against `1/(2−σ_min)`, with its standard error.
    pub slope: Option<f64>,
    pub slope_se: f64,
    /// Slope at most two standard errors above zero.
    pub stable: bool,
    /// Strictly increasing in σ_min and not stable.
    pub diverging: bool,
    pub flagged: usize,
}

/// Runs `experiment` per profile. Rows keep the profile order.
pub fn sigma_sweep(
    profiles: &[AnisotropyProfile],
    mut experiment: impl FnMut(&AnisotropyProfile) -> Option<f64>,
) -> Result<SweepTable, ExperimentError> {
    if profiles.is_empty() {
        return Err(ExperimentError::Parameter("empty sweep"));
    }
    let p0 = &profiles[0];
    if profiles
        .iter()
        .any(|p| p.n() != p0.n() || p.lambda_lo() != p0.lambda_lo() || p.lambda_hi() != p0.lambda_hi())
    {
        return Err(ExperimentError::MixedProfiles);
    }
    let rows: Vec<SweepRow> =
        profiles.iter().map(|p| SweepRow { sigma_min: p.sigma_min(), quantity: experiment(p) }).collect();
    let (x, y): (Vec<f64>, Vec<f64>) =
        rows.iter().filter_map(|r| r.quantity.map(|q| (1.0 / (2.0 - r.sigma_min), q))).unzip();
    let fit = stats::linear_fit(&x, &y);
    let (slope, slope_se) = fit.map_or((None, 0.0), |f| (Some(f.slope), f.slope_se));
    let stable = slope.is_none_or(|s| s <= 2.0 * slope_se);
    let mut order: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.quantity.map(|q| (r.sigma_min, q))).collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let increasing = order.len() >= 2 && order.windows(2).all(|w| w[1].1 > w[0].1);
    Ok(SweepTable {
        flagged: rows.iter().filter(|r| r.quantity.is_none()).count(),
        rows,
        slope,
        slope_se,
        stable,
        diverging: increasing && !stable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulusSettings {
    /// The radial range is `[τ₀, τ₀ 2^octaves]`, widened until the tail bound drops below
    /// `tail_rel` times the integral.
    pub octaves: u32,
    pub tail_rel: f64,
    pub panels_per_octave: usize,
    /// Angular nodes in two dimensions, random directions beyond.
    pub directions: usize,
    pub seed: u64,
}

impl Default for ModulusSettings {
    fn default() -> Self {
        Self { octaves: 24, tail_rel: 1e-9, panels_per_octave: 4, directions: 64, seed: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulusRow {
    pub h: Vec<f64>,
    pub integral: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulusCheck {
    pub rows: Vec<ModulusRow>,
    pub worst: f64,
    pub pass: bool,
}

fn unit_sphere_area(n: usize) -> f64 {
    2.0 * core::f64::consts::PI.powf(0.5 * n as f64) / libm::tgamma(0.5 * n as f64)
}

/// Directions and weights on `S^{n−1}`; `level` doubles the count.
fn directions(n: usize, base: usize, level: u32, seed: u64) -> Vec<(Vec<f64>, f64)> {
    match n {
        1 => alloc::vec![(alloc::vec![1.0], 1.0), (alloc::vec![-1.0], 1.0)],
        2 => {
            let m = base << level;
            let w = 2.0 * core::f64::consts::PI / m as f64;
            (0..m)
                .map(|j| {
                    let t = 2.0 * core::f64::consts::PI * (j as f64 + 0.5) / m as f64;
                    (alloc::vec![t.cos(), t.sin()], w)
                })
                .collect()
        }
        _ => {
            let m = (base * 16) << level;
            let mut rng = stats::rng_stream(seed, level as u64);
            let w = unit_sphere_area(n) / m as f64;
            (0..m)
                .map(|_| {
                    let mut v: Vec<f64> = (0..n)
                        .map(|_| {
                            let (a, b): (f64, f64) = (rng.gen::<f64>().max(1e-300), rng.gen());
                            (-2.0 * a.ln()).sqrt() * (2.0 * core::f64::consts::PI * b).cos()
                        })
                        .collect();
                    let l = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                    v.iter_mut().for_each(|c| *c /= l);
                    (v, w)
                })
                .collect()
        }
    }
}

/// `∫_{τ₀<|y|<R} |K(y) − K(y−h)| / |h|` on composite Gauss–Legendre in `ln r` times a
/// direction rule; returns the value and, for random directions, three standard errors.
fn modulus_integral(
    kernel: &Kernel,
    profile: &AnisotropyProfile,
    tau0: f64,
    h: &[f64],
    s: &ModulusSettings,
    level: u32,
) -> (f64, f64) {
    let n = h.len();
    let hn = h.iter().map(|c| c * c).sum::<f64>().sqrt();
    let (gx, gw) = gauss_legendre(8);
    let panels = (s.octaves as usize * s.panels_per_octave) << level;
    let (t0, t1) = (tau0.ln(), tau0.ln() + s.octaves as f64 * core::f64::consts::LN_2);
    let dt = (t1 - t0) / panels as f64;
    let dirs = directions(n, s.directions, level, s.seed);
    let mut y = alloc::vec![0.0; n];
    let mut ys = alloc::vec![0.0; n];
    let per_dir: Vec<f64> = dirs
        .iter()
        .map(|(theta, _)| {
            let mut acc = Vec::with_capacity(panels);
            for pnl in 0..panels {
                let c = t0 + (pnl as f64 + 0.5) * dt;
                let mut v = 0.0;
                for (xi, wi) in gx.iter().zip(&gw) {
                    let r = (c + 0.5 * dt * xi).exp();
                    for a in 0..n {
                        y[a] = r * theta[a];
                        ys[a] = y[a] - h[a];
                    }
                    let d = (kernel.eval(profile, &y) - kernel.eval(profile, &ys)).abs() / hn;
                    v += wi * d * r.powi(n as i32);
                }
                acc.push(0.5 * dt * v);
            }
            stats::pairwise_sum(&acc)
        })
        .collect();
    let total: f64 = dirs.iter().zip(&per_dir).map(|((_, w), v)| w * v).sum();
    let se = if n >= 3 {
        let (_, var) = stats::mean_var(&per_dir);
        3.0 * unit_sphere_area(n) * (var / per_dir.len() as f64).sqrt()
    } else {
        0.0
    };
    (total, se)
}

/// Checks `∫_{ℝⁿ\B_{τ₀}} |K(y) − K(y−h)| / |h| dy ≤ C₀` for every sample `h`, `|h| < τ₀/2`.
pub fn kernel_modulus_check(
    kernel: &Kernel,
    profile: &AnisotropyProfile,
    tau0: f64,
    h_samples: &[Vec<f64>],
    c0: f64,
    settings: &ModulusSettings,
) -> Result<ModulusCheck, ExperimentError> {
    if !(tau0 > 0.0) {
        return Err(ExperimentError::Parameter("τ₀ must be positive"));
    }
    let mut rows = Vec::with_capacity(h_samples.len());
    for h in h_samples {
        if h.len() != profile.n() {
            return Err(ExperimentError::Parameter("shift dimension differs from the profile"));
        }
        let hn = h.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(hn < 0.5 * tau0) {
            return Err(ExperimentError::ShiftTooLarge { h: hn, limit: 0.5 * tau0 });
        }
        if hn == 0.0 {
            rows.push(ModulusRow { h: h.clone(), integral: 0.0, error: 0.0 });
            continue;
        }
        let kmax = kernel.upper_multiplier() * profile.c_sigma();
        let tail_at = |octaves: u32| {
            let big_r = tau0 * 2.0_f64.powi(octaves as i32);
            kmax / hn
                * (theta_tail_integral(profile, theta_level_inside_ball(profile, big_r))
                    + theta_tail_integral(profile, theta_level_inside_ball(profile, big_r - hn)))
        };
        let (scale, _) = modulus_integral(kernel, profile, tau0, h, settings, 0);
        let mut s = *settings;
        while tail_at(s.octaves) > settings.tail_rel * scale && s.octaves < 1024 {
            s.octaves = (2 * s.octaves).max(1);
        }
        let tail = tail_at(s.octaves);
        let (coarse, _) = modulus_integral(kernel, profile, tau0, h, &s, 0);
        let (fine, se) = modulus_integral(kernel, profile, tau0, h, &s, 1);
        rows.push(ModulusRow { h: h.clone(), integral: fine, error: (fine - coarse).abs() + se + tail });
    }
    let worst = rows.iter().map(|r| r.integral).fold(0.0, f64::max);
    let pass = rows.iter().all(|r| r.integral <= c0 + r.error);
    Ok(ModulusCheck { rows, worst, pass })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationRow {
    pub point: Vec<f64>,
    /// `|I_K u − I_{K₁} u|` from the two quadratures.
    pub difference: f64,
    /// `4 c₀ sup|u|` plus both quadrature errors.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationControl {
    pub rows: Vec<TruncationRow>,
    pub c0: f64,
    pub pass: bool,
}

/// `|∫δ K₂| ≤ 4 sup|u| ∫|K₂|` at every point, for `K = K₁ + K₂`.
pub fn truncated_kernel_control(
    u: &BoundedField,
    points: &[Vec<f64>],
    kernel: &Kernel,
    profile: &AnisotropyProfile,
    scheme: &QuadratureScheme,
) -> TruncationControl {
    let c0 = kernel.l1_budget();
    let k1 = kernel.singular_part();
    let sup = u.sup_bound();
    let rows: Vec<TruncationRow> = points
        .iter()
        .map(|x| {
            let a = ops::eval_linear(u, x, kernel, scheme, profile);
            let b = ops::eval_linear(u, x, &k1, scheme, profile);
            TruncationRow {
                point: x.clone(),
                difference: (a.value - b.value).abs(),
                bound: 4.0 * c0 * sup + a.error + b.error,
            }
        })
        .collect();
    let pass = rows.iter().all(|r| r.difference <= r.bound);
    TruncationControl { rows, c0, pass }
}

/// `height·(1 − |x−c|²/w²)²₊`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    pub centre: Vec<f64>,
    pub height: f64,
    pub width: f64,
}

pub fn bump_sum(bumps: Vec<Bump>) -> PointFn {
    Arc::new(move |x: &[f64]| {
        let mut s = 0.0;
        for b in &bumps {
            let d2: f64 = x.iter().zip(&b.centre).map(|(u, v)| (u - v) * (u - v)).sum();
            let t = 1.0 - d2 / (b.width * b.width);
            if t > 0.0 {
                s += b.height * t * t;
            }
        }
        s
    })
}

/// Nonnegative bumps centred near the boundary of the cube `[−2, 2]ⁿ`. Exterior data is
/// only read outside the cube, so the data a solve sees is supported in `|x| ≥ 2`.
pub fn random_exterior_bumps(n: usize, count: usize, seed: u64) -> Vec<Bump> {
    let mut rng = stats::rng(seed);
    (0..count)
        .map(|_| {
            let width = rng.gen_range(0.3..0.8);
            let mut dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let l = dir.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-9);
            dir.iter_mut().for_each(|c| *c /= l);
            let exit = 2.0 / dir.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
            let radius = exit + width * rng.gen_range(-0.5..0.5);
            Bump { centre: dir.iter().map(|c| c * radius).collect(), height: rng.gen_range(0.5..2.0), width }
        })
        .collect()
}

/// Box `Ω = [−2, 2]ⁿ` with `points` per axis, far radius 8.
pub fn box_problem(
    profile: &AnisotropyProfile,
    points: usize,
    family: KernelFamily,
    exterior: Exterior,
    rhs: BoundedField,
    tolerance: f64,
) -> DiscreteProblem {
    DiscreteProblem {
        grid: Grid::cube(profile.n(), 2.0, points),
        exterior,
        family,
        rhs,
        profile: profile.clone(),
        tolerance,
        max_iters: 5_000_000,
        far_radius: 8.0,
    }
}

/// `I u = 0` in `Ω` with the bumps as exterior data.
pub fn harnack_problem(
    profile: &AnisotropyProfile,
    points: usize,
    kernel: Kernel,
    bumps: Vec<Bump>,
    tolerance: f64,
) -> DiscreteProblem {
    let bound = bumps.iter().map(|b| b.height).sum();
    box_problem(
        profile,
        points,
        KernelFamily::single(kernel),
        Exterior::Rule { f: bump_sum(bumps), bound },
        BoundedField::constant(profile.n(), 0.0),
        tolerance,
    )
}

/// `I u = −F` in `Ω`, zero exterior, `F` a bump: a nonnegative supersolution.
pub fn source_problem(
    profile: &AnisotropyProfile,
    points: usize,
    kernel: Kernel,
    source: Bump,
    tolerance: f64,
) -> DiscreteProblem {
    let n = profile.n();
    let h = source.height;
    let f = bump_sum(alloc::vec![source]);
    let rhs = BoundedField::analytic(n, Arc::new(move |x: &[f64]| -f(x)), h);
    box_problem(profile, points, KernelFamily::single(kernel), Exterior::Constant(0.0), rhs, tolerance)
}

/// Solves and attaches the discrete extremal operators.
pub fn solve_measured(problem: &DiscreteProblem) -> Result<(Measured, SolveReport), ExperimentError> {
    let op = DiscreteOperator::new(
        &problem.grid,
        &problem.exterior,
        &problem.family,
        &problem.profile,
        problem.far_radius,
    )?;
    let sol = solve_dirichlet(problem)?;
    Ok((Measured::new(&op, sol.field), sol.report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn synthetic_geometric_decay_is_recovered() {
        let (m, s) = (1.5_f64, 0.3_f64);
        let seq: Vec<f64> = (1..=8).map(|k| 0.7 * (1.0 - s).powi(k)).collect();
        let fit = fit_decay(&seq, m);
        let want = predicted_epsilon(s, m);
        assert!((fit.epsilon - want).abs() < 0.01 * want);
        assert_eq!(fit.terms, 8);
        assert_eq!(fit_decay(&[0.0, 0.0, 0.0], m).epsilon, f64::INFINITY);
    }

    #[test]
    fn cell_measure_of_everything_is_one() {
        for (n, pts) in [(1, 33), (2, 17)] {
            let g = Grid::cube(n, 2.0, pts);
            let v = cell_measure(&g, 0.5, |_| true).unwrap();
            assert!((v - 1.0).abs() < 1e-12);
        }
        let g = Grid::cube(1, 0.25, 9);
        assert_eq!(cell_measure(&g, 0.5, |_| true), Err(ExperimentError::CubeOutsideGrid));
    }
}
