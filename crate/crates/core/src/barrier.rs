//! Radial barriers `min(cap, |x|^{-p})`, their anisotropic rescalings, the compactly
//! supported barrier Ψ, and sampled certification of `M⁻ ≥ −φ`.

use alloc::sync::Arc;
use alloc::vec::Vec;
use num_traits::Float;
use rand::Rng as _;
use thiserror::Error;

use crate::field::BoundedField;
use crate::ops::{eval_extremal, Extremal};
use crate::profile::AnisotropyProfile;
use crate::quadrature::{QuadratureScheme, QuadratureSettings};
use crate::scaling::ScalingMap;
use crate::stats;

/// Profiles with `σ_min ≤ σ₀` are refused for certification.
pub const DEFAULT_SIGMA_FLOOR: f64 = 0.5;
pub const P_MAX: u32 = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BarrierError {
    #[error("σ_min = {sigma_min} is not above the floor σ₀ = {floor}")]
    BelowSigmaFloor { sigma_min: f64, floor: f64 },
    #[error("outer radius {0} must exceed 1")]
    Radius(f64),
    #[error("invalid barrier parameter: {0}")]
    Parameter(&'static str),
    #[error("no integer p in [1, {p_max}] certified; best minimum slack {best_slack} at p = {best_p}")]
    NoAdmissibleP { p_max: u32, best_p: u32, best_slack: f64 },
    #[error("value/gradient matching on axis {0} is singular or inconsistent")]
    Matching(usize),
    #[error(transparent)]
    Quadrature(#[from] crate::quadrature::QuadratureError),
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `f(x) = min(cap, |x|^{-p})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialBarrier {
    pub p: f64,
    pub cap: f64,
}

impl RadialBarrier {
    /// Cap `2^p`, active on `B_{1/2}`.
    pub fn cap2p(p: f64) -> Self {
        Self { p, cap: p.exp2() }
    }

    /// Cap `s^{-p}`, active on `B_s`.
    pub fn caps(p: f64, s: f64) -> Self {
        Self { p, cap: s.powf(-p) }
    }

    /// Radius inside which the cap is active.
    pub fn cap_radius(&self) -> f64 {
        self.cap.powf(-1.0 / self.p)
    }

    pub fn eval_radius(&self, t: f64) -> f64 {
        if t <= self.cap_radius() {
            self.cap
        } else {
            t.powf(-self.p).min(self.cap)
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_radius(norm(x))
    }

    /// Half the largest Hessian norm of `|x|^{-p}` over `B(x, radius)`; infinite if the
    /// ball reaches the concave kink `|x| = cap_radius`.
    pub fn c11_at(&self, x: &[f64], radius: f64) -> f64 {
        let t = norm(x);
        let rc = self.cap_radius();
        if t + radius < rc {
            return 0.0;
        }
        let lo = t - radius;
        if lo <= rc {
            return f64::INFINITY;
        }
        0.5 * self.p * (self.p + 1.0) * lo.powf(-self.p - 2.0)
    }

    pub fn field(&self, n: usize) -> BoundedField {
        let b = *self;
        BoundedField::analytic(n, Arc::new(move |x: &[f64]| b.eval(x)), self.cap)
            .with_local_c11(Arc::new(move |x: &[f64], r: f64| b.c11_at(x, r)))
            .with_radial_envelope(Arc::new(move |t: f64| b.eval_radius(t)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BarrierVariant {
    /// `min(2^p, |x|^{-p})`
    FCap2p,
    /// `min(s^{-p}, |x|^{-p})`
    FCapS { s: f64 },
    /// `g(x) = min(s^{-p}, |T_r^{-1}x|^{-p}) = f(T_r^{-1}x)`
    GScaled { r: f64, s: f64 },
}

/// The barrier as an evaluable field.
pub fn build_barrier(profile: &AnisotropyProfile, p: f64, variant: BarrierVariant) -> Result<BoundedField, BarrierError> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(BarrierError::Parameter("p must be positive"));
    }
    let n = profile.n();
    match variant {
        BarrierVariant::FCap2p => Ok(RadialBarrier::cap2p(p).field(n)),
        BarrierVariant::FCapS { s } => {
            if !(s > 0.0) {
                return Err(BarrierError::Parameter("s must be positive"));
            }
            Ok(RadialBarrier::caps(p, s).field(n))
        }
        BarrierVariant::GScaled { r, s } => {
            if !(s > 0.0 && r > 0.0) {
                return Err(BarrierError::Parameter("r and s must be positive"));
            }
            let f = RadialBarrier::caps(p, s);
            if r == 1.0 {
                return Ok(f.field(n));
            }
            let t = ScalingMap::t(profile, r);
            let inv: Vec<f64> = t.diag().iter().map(|d| 1.0 / d).collect();
            let stretch = inv.iter().fold(0.0_f64, |m, v| m.max(*v));
            let shrink = t.diag().iter().fold(0.0_f64, |m, v| m.max(*v));
            let (inv1, inv2) = (inv.clone(), inv.clone());
            let eval = move |x: &[f64]| {
                let z: f64 = x.iter().zip(&inv1).map(|(a, d)| (a * d) * (a * d)).sum::<f64>().sqrt();
                f.eval_radius(z)
            };
            let c11 = move |x: &[f64], rad: f64| {
                let z: Vec<f64> = x.iter().zip(&inv2).map(|(a, d)| a * d).collect();
                f.c11_at(&z, rad * stretch) * stretch * stretch
            };
            // |x| ≥ t forces |T_r^{-1}x| ≥ t / max diag
            let env = move |t: f64| f.eval_radius(t / shrink);
            Ok(BoundedField::analytic(n, Arc::new(eval), f.cap)
                .with_local_c11(Arc::new(c11))
                .with_radial_envelope(Arc::new(env)))
        }
    }
}

fn check_floor(profile: &AnisotropyProfile, floor: f64) -> Result<(), BarrierError> {
    if profile.sigma_min() > floor {
        Ok(())
    } else {
        Err(BarrierError::BelowSigmaFloor { sigma_min: profile.sigma_min(), floor })
    }
}

/// `Σ_{k≥1} c_k` for positive terms computed by `next(k, previous)` until negligible.
fn positive_series(first: f64, mut ratio: impl FnMut(usize) -> f64) -> f64 {
    let mut term = first;
    let mut sum = 0.0;
    let mut k = 0;
    while term > 1e-18 * sum && k < 100_000 {
        sum += term;
        term *= ratio(k);
        k += 1;
    }
    sum
}

/// `e^a − 1 − a ≥ 0`.
fn exp_excess(a: f64) -> f64 {
    if a.abs() < 0.5 {
        // a²/2 + a³/6 + …, each term smaller than the previous by |a|/(k+1)
        let mut term = 0.5 * a * a;
        let mut sum = 0.0;
        let mut k = 2.0;
        while term.abs() > 1e-18 * sum.abs() && k < 60.0 {
            sum += term;
            k += 1.0;
            term *= a / k;
        }
        sum
    } else {
        a.exp() - 1.0 - a
    }
}

/// `t − log(1+t) ≥ 0` for `t > −1`.
fn log_excess(t: f64) -> f64 {
    if t.abs() < 0.1 {
        // t²/2 − t³/3 + t⁴/4 − …
        let mut sum = 0.0;
        let mut pow = t * t;
        let mut k = 2.0;
        while pow.abs() / k > 1e-18 * sum.abs() && k < 80.0 {
            sum += if (k as i64) % 2 == 0 { pow / k } else { -pow / k };
            pow *= t;
            k += 1.0;
        }
        sum
    } else {
        t - t.ln_1p()
    }
}

/// `(a₂+a₁)^{-s} + (a₂−a₁)^{-s} − 2a₂^{-s} − s(s+1)a₁²a₂^{-s-2}` for `0 < a₁ < a₂`, `s > 0`.
/// For `a₁/a₂ < 1/100` the gap is summed from its binomial series, whose terms are all
/// positive, so no cancellation occurs.
pub fn elementary_gap_1(a1: f64, a2: f64, s: f64) -> f64 {
    let t = a1 / a2;
    let scale = a2.powf(-s);
    if t < 0.01 {
        // Σ_{k≥2} 2 (s)_{2k}/(2k)! t^{2k}
        let first = 2.0 * s * (s + 1.0) * (s + 2.0) * (s + 3.0) / 24.0 * t.powi(4);
        let g = positive_series(first, |k| {
            let j = 2.0 * (k as f64 + 2.0);
            (s + j) * (s + j + 1.0) / ((j + 1.0) * (j + 2.0)) * t * t
        });
        scale * g
    } else {
        let lhs = (1.0 + t).powf(-s) + (1.0 - t).powf(-s);
        scale * (lhs - 2.0 - s * (s + 1.0) * t * t)
    }
}

/// `(a₂+a₁)^{-s} − a₂^{-s}(1 − s a₁/a₂)`, evaluated as `a₂^{-s}[E(a) + sΔ]` with
/// `E(a) = e^a − 1 − a`, `Δ = t − log(1+t)` and `a = −s log(1+t)`: both parts are
/// nonnegative and computed without cancellation.
pub fn elementary_gap_2(a1: f64, a2: f64, s: f64) -> f64 {
    let t = a1 / a2;
    let a = -s * t.ln_1p();
    a2.powf(-s) * (exp_excess(a) + s * log_excess(t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementaryCheck {
    pub trials: usize,
    pub violations_1: usize,
    pub violations_2: usize,
    pub min_gap_1: f64,
    pub min_gap_2: f64,
}

/// Random trials `a₁ < a₂`, `s ∈ (0, s_max]`.
pub fn check_elementary_inequalities(trials: usize, s_max: f64, seed: u64) -> ElementaryCheck {
    let mut rng = stats::rng(seed);
    let mut out =
        ElementaryCheck { trials, violations_1: 0, violations_2: 0, min_gap_1: f64::INFINITY, min_gap_2: f64::INFINITY };
    for _ in 0..trials {
        let a2 = (8.0 * rng.gen::<f64>() - 4.0).exp2();
        let a1 = a2 * rng.gen::<f64>().max(f64::MIN_POSITIVE);
        let s = s_max * rng.gen::<f64>().max(1e-12);
        let g1 = elementary_gap_1(a1, a2, s);
        let g2 = elementary_gap_2(a1, a2, s);
        out.violations_1 += usize::from(!(g1 >= 0.0));
        out.violations_2 += usize::from(!(g2 >= 0.0));
        out.min_gap_1 = out.min_gap_1.min(g1 / a2.powf(-s));
        out.min_gap_2 = out.min_gap_2.min(g2 / a2.powf(-s));
    }
    out
}

/// Lower bound `p[−|y|² + (p+2)y₁² − (p+4)(p+2)y₁²|y|²/2]` for `δ(f, e₁, y)`, `|y| < 1/2`.
pub fn delta_lower_bound(p: f64, y: &[f64]) -> f64 {
    let r2: f64 = y.iter().map(|v| v * v).sum();
    let y1 = y[0] * y[0];
    p * (-r2 + (p + 2.0) * y1 - 0.5 * (p + 4.0) * (p + 2.0) * y1 * r2)
}

/// Points with `inner ≤ |T_r^{-1}x| ≤ outer`, uniform in the radius and the direction.
pub fn sample_ellipse_annulus(
    profile: &AnisotropyProfile,
    r: f64,
    inner: f64,
    outer: f64,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let n = profile.n();
    let t = ScalingMap::t(profile, r);
    let mut rng = stats::rng(seed);
    let mut out = Vec::with_capacity(count);
    // stratified radii so both ends of the annulus are represented
    for k in 0..count {
        let rad = inner + (outer - inner) * (k as f64 + rng.gen::<f64>()) / count as f64;
        let mut z: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
        let l = norm(&z);
        for v in z.iter_mut() {
            *v *= rad / l;
        }
        out.push(t.apply(&z, false));
    }
    out
}

fn gaussian(rng: &mut stats::Rng) -> f64 {
    let u1 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (core::f64::consts::TAU * u2).cos()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupersolutionReport {
    /// `min (M⁻b + φ)` over the sample.
    pub min_margin: f64,
    pub worst_point: Vec<f64>,
    /// Quadrature error at the worst point.
    pub error_at_worst: f64,
    pub max_error: f64,
    /// Smallest `M⁻b + φ + error`.
    pub min_slack: f64,
    pub pass: bool,
}

/// `M⁻b(x) + φ(x) ≥ −error` at every point.
pub fn verify_supersolution(
    barrier: &BoundedField,
    points: &[Vec<f64>],
    profile: &AnisotropyProfile,
    scheme: &QuadratureScheme,
    phi: Option<&dyn Fn(&[f64]) -> f64>,
) -> SupersolutionReport {
    let mut rep = SupersolutionReport {
        min_margin: f64::INFINITY,
        worst_point: Vec::new(),
        error_at_worst: 0.0,
        max_error: 0.0,
        min_slack: f64::INFINITY,
        pass: true,
    };
    for x in points {
        let e = eval_extremal(barrier, x, profile, scheme, Extremal::Minus);
        let m = e.value + phi.map_or(0.0, |f| f(x));
        rep.max_error = rep.max_error.max(e.error);
        rep.min_slack = rep.min_slack.min(m + e.error);
        if m < rep.min_margin {
            rep.min_margin = m;
            rep.worst_point = x.clone();
            rep.error_at_worst = e.error;
        }
        // an infinite error certifies nothing
        if !(e.error.is_finite() && m >= -e.error) {
            rep.pass = false;
        }
    }
    if points.is_empty() {
        rep.min_margin = 0.0;
        rep.min_slack = 0.0;
    }
    rep
}

#[derive(Debug, Clone)]
pub struct FindPSettings {
    pub quadrature: QuadratureSettings,
    pub points: usize,
    pub seed: u64,
    pub p_max: u32,
    pub sigma_floor: f64,
}

impl Default for FindPSettings {
    fn default() -> Self {
        Self {
            quadrature: QuadratureSettings { shells: 64, nodes_per_shell: 256, far_radius: 64.0, r_inner: 1e-20, seed: 7 },
            points: 200,
            seed: 11,
            p_max: P_MAX,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PSearch {
    pub p: u32,
    /// `(p, min M⁻f, min slack)` for every p tried.
    pub margins: Vec<(u32, f64, f64)>,
    pub report: SupersolutionReport,
    /// Samples of `|y| < 1/2` where `δ(f, e₁, y)` fell below [`delta_lower_bound`].
    pub delta_bound_violations: usize,
    pub elementary: ElementaryCheck,
}

/// Smallest integer `p` for which `M⁻ min(2^p, |x|^{-p}) ≥ −error` at the sampled points of `1 ≤ |x| ≤ R`.
pub fn find_p(profile: &AnisotropyProfile, outer: f64, settings: &FindPSettings) -> Result<PSearch, BarrierError> {
    check_floor(profile, settings.sigma_floor)?;
    if !(outer > 1.0) {
        return Err(BarrierError::Radius(outer));
    }
    let scheme = QuadratureScheme::build(profile, settings.quadrature)?;
    let points = sample_ellipse_annulus(profile, 1.0, 1.0, outer, settings.points, settings.seed);
    let mut margins = Vec::new();
    let (mut best_p, mut best_slack) = (1, f64::NEG_INFINITY);
    for p in 1..=settings.p_max {
        let f = RadialBarrier::cap2p(p as f64).field(profile.n());
        let rep = verify_supersolution(&f, &points, profile, &scheme, None);
        margins.push((p, rep.min_margin, rep.min_slack));
        if rep.min_slack > best_slack {
            best_slack = rep.min_slack;
            best_p = p;
        }
        if rep.pass {
            let delta_bound_violations = delta_bound_spot_check(profile.n(), p as f64, 2000, settings.seed);
            let elementary = check_elementary_inequalities(1000, (p as f64).max(1.0) + 4.0, settings.seed);
            return Ok(PSearch { p, margins, report: rep, delta_bound_violations, elementary });
        }
    }
    Err(BarrierError::NoAdmissibleP { p_max: settings.p_max, best_p, best_slack })
}

/// Counts samples `|y| < 1/2` with `δ(f, e₁, y) < delta_lower_bound(p, y)` beyond rounding.
pub fn delta_bound_spot_check(n: usize, p: f64, samples: usize, seed: u64) -> usize {
    let f = RadialBarrier::cap2p(p);
    let mut rng = stats::rng_stream(seed, 0xde17a);
    let mut bad = 0;
    let mut e1 = alloc::vec![0.0; n];
    e1[0] = 1.0;
    for _ in 0..samples {
        let mut y: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
        let l = norm(&y);
        let rad = 0.5 * rng.gen::<f64>();
        for v in y.iter_mut() {
            *v *= rad / l;
        }
        let a: Vec<f64> = e1.iter().zip(&y).map(|(e, v)| e + v).collect();
        let b: Vec<f64> = e1.iter().zip(&y).map(|(e, v)| e - v).collect();
        let d = f.eval(&a) + f.eval(&b) - 2.0;
        let lb = delta_lower_bound(p, &y);
        if d < lb - 1e-12 * (1.0 + lb.abs()) {
            bad += 1;
        }
    }
    bad
}

/// `Ψ(x) = c̃·F(|T_{1/4}^{-1}x|)` with `F(ρ) = ρ^{-p} − (3√n)^{-p}` on `1 ≤ ρ < 3√n`, zero
/// beyond, and the quadratic `c + Σ a_i x_i²` on `E_{1/4,1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiBarrier {
    pub n: usize,
    pub p: f64,
    pub tilde_c: f64,
    /// `a_i` of the quadratic branch (before the factor `c̃`).
    pub quad_coeffs: Vec<f64>,
    pub quad_const: f64,
    /// Semi-axes `(1/4)^{1/(n+σ_i)}` of `E_{1/4,1}`.
    pub semi_axes: Vec<f64>,
    /// `3√n`.
    pub support: f64,
    /// Largest value/gradient mismatch on the sampled boundary `∂E_{1/4,1}`.
    pub gluing_error: f64,
}

impl PsiBarrier {
    pub fn z_norm(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.semi_axes).map(|(a, l)| (a / l) * (a / l)).sum::<f64>().sqrt()
    }

    fn shift(&self) -> f64 {
        self.support.powf(-self.p)
    }

    fn quadratic(&self, x: &[f64]) -> f64 {
        self.quad_const + x.iter().zip(&self.quad_coeffs).map(|(v, a)| a * v * v).sum::<f64>()
    }

    fn power(&self, rho: f64) -> f64 {
        rho.powf(-self.p) - self.shift()
    }

    /// `Ψ / c̃`.
    pub fn profile_value(&self, x: &[f64]) -> f64 {
        let rho = self.z_norm(x);
        if rho >= self.support {
            0.0
        } else if rho >= 1.0 {
            self.power(rho)
        } else {
            self.quadratic(x)
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.tilde_c * self.profile_value(x)
    }

    pub fn max_value(&self) -> f64 {
        self.tilde_c * self.quad_const
    }

    /// Half the largest Hessian norm over `B(x, radius)`; infinite if the ball reaches
    /// the kink at `∂E_{1/4,3√n}`.
    pub fn c11_at(&self, x: &[f64], radius: f64) -> f64 {
        let stretch = self.semi_axes.iter().fold(0.0_f64, |m, l| m.max(1.0 / l));
        let rho = self.z_norm(x);
        let (lo, hi) = ((rho - radius * stretch).max(0.0), rho + radius * stretch);
        if lo >= self.support {
            return 0.0;
        }
        if hi >= self.support {
            return f64::INFINITY;
        }
        let mut h: f64 = 0.0;
        if lo < 1.0 {
            h = h.max(self.p);
        }
        if hi >= 1.0 {
            h = h.max(self.p * (self.p + 1.0) * lo.max(1.0).powf(-self.p - 2.0));
        }
        0.5 * self.tilde_c * h * stretch * stretch
    }

    /// Euclidean radius of a ball containing the support.
    pub fn support_radius(&self) -> f64 {
        self.support * self.semi_axes.iter().fold(0.0_f64, |m, l| m.max(*l))
    }

    pub fn field(&self) -> BoundedField {
        let (a, b, c) = (self.clone(), self.clone(), self.clone());
        let reach = self.support_radius();
        let top = self.max_value();
        BoundedField::analytic(self.n, Arc::new(move |x: &[f64]| a.eval(x)), top)
            .with_local_c11(Arc::new(move |x: &[f64], r: f64| b.c11_at(x, r)))
            .with_radial_envelope(Arc::new(move |t: f64| if t >= reach { 0.0 } else { c.max_value() }))
    }

    /// `φ(x) = deficit · max(0, 1 − |T_{1/4}^{-1}x|²)²`.
    pub fn bump(&self, x: &[f64]) -> f64 {
        let rho = self.z_norm(x);
        let b = (1.0 - rho * rho).max(0.0);
        b * b
    }
}

/// Solves the per-axis value and slope matching at `x = ℓ_i e_i`, scales `c̃` so that
/// `Ψ > 3` on `R_{1/4,3}`, and measures the gluing on a boundary sample.
pub fn build_psi(profile: &AnisotropyProfile, p: f64, sigma_floor: f64) -> Result<PsiBarrier, BarrierError> {
    check_floor(profile, sigma_floor)?;
    if !(p > 0.0 && p.is_finite()) {
        return Err(BarrierError::Parameter("p must be positive"));
    }
    let n = profile.n();
    let semi_axes: Vec<f64> = profile.orders().iter().map(|pi| 0.25_f64.powf(1.0 / pi)).collect();
    let support = 3.0 * (n as f64).sqrt();
    let shift = support.powf(-p);
    // along axis i: c + a ℓ² = 1 − shift and 2aℓ = −p/ℓ
    let mut coeffs = Vec::with_capacity(n);
    let mut consts = Vec::with_capacity(n);
    for (i, l) in semi_axes.iter().enumerate() {
        let m = [[1.0, l * l], [0.0, 2.0 * l]];
        let rhs = [1.0 - shift, -p / l];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if !(det.abs() > 0.0) {
            return Err(BarrierError::Matching(i));
        }
        let a = (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det;
        let c = (rhs[0] * m[1][1] - rhs[1] * m[0][1]) / det;
        coeffs.push(a);
        consts.push(c);
    }
    let c0 = consts[0];
    if let Some(i) = consts.iter().position(|c| (c - c0).abs() > 1e-12 * c0.abs().max(1.0)) {
        return Err(BarrierError::Matching(i));
    }
    let mut psi =
        PsiBarrier { n, p, tilde_c: 1.0, quad_coeffs: coeffs, quad_const: c0, semi_axes, support, gluing_error: 0.0 };
    // Ψ/c̃ is radially decreasing in z; its infimum over R_{1/4,3} is at the corners
    let pmin = n as f64 + profile.sigma_min();
    let corner: Vec<f64> = profile.orders().iter().map(|pi| 3.0_f64.powf(1.0 / pmin) * 0.25_f64.powf(1.0 / pi)).collect();
    let floor = psi.profile_value(&corner);
    if !(floor > 0.0) {
        return Err(BarrierError::Parameter("R_{1/4,3} reaches the edge of the support"));
    }
    psi.tilde_c = 3.0 / floor * (1.0 + 1e-9);
    psi.gluing_error = gluing_error(&psi, 256);
    Ok(psi)
}

/// Largest relative mismatch of value and radial slope between the two branches on
/// `∂E_{1/4,1}`, sampled at `samples` directions.
fn gluing_error(psi: &PsiBarrier, samples: usize) -> f64 {
    let n = psi.n;
    let mut rng = stats::rng(0x91e);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let mut z: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
        let l = norm(&z);
        z.iter_mut().for_each(|v| *v /= l);
        let x: Vec<f64> = z.iter().zip(&psi.semi_axes).map(|(v, a)| v * a).collect();
        let vq = psi.quadratic(&x);
        let vp = psi.power(1.0);
        // d/dρ along the ray x(ρ) = ρ·x
        let dq = 2.0 * x.iter().zip(&psi.quad_coeffs).map(|(v, a)| a * v * v).sum::<f64>();
        let dp = -psi.p;
        worst = worst.max((vq - vp).abs() / vp.abs().max(1.0)).max((dq - dp).abs() / psi.p);
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiCertificate {
    pub psi: PsiBarrier,
    /// Supersolution check on `E_{1/4,4√n} \ E_{1/4,1}` (φ ≡ 0 there).
    pub outside: SupersolutionReport,
    /// `φ = deficit·bump` makes `M⁻Ψ + φ ≥ 0` at the sampled points of `E_{1/4,1}`.
    pub deficit: f64,
    pub inside: SupersolutionReport,
    /// Smallest sampled value of Ψ on `R_{1/4,3}` and largest sampled `|Ψ|` outside `E_{1/4,3√n}`.
    pub floor_sample: f64,
    pub outside_support_max: f64,
}

/// Builds Ψ with the smallest integer `p ≥ p_start` (at most `p_max`) whose sampled
/// `M⁻Ψ` outside `E_{1/4,1}` is nonnegative and certified, then fits φ from the inside sample.
pub fn certify_psi(
    profile: &AnisotropyProfile,
    p_start: u32,
    settings: &FindPSettings,
) -> Result<PsiCertificate, BarrierError> {
    check_floor(profile, settings.sigma_floor)?;
    let n = profile.n();
    let scheme = QuadratureScheme::build(profile, settings.quadrature)?;
    let sqrt_n = (n as f64).sqrt();
    let outside_pts = sample_ellipse_annulus(profile, 0.25, 1.0, 4.0 * sqrt_n, settings.points, settings.seed ^ 0x5a);
    let (mut best_p, mut best_slack) = (p_start, f64::NEG_INFINITY);
    for p in p_start.max(1)..=settings.p_max {
        let psi = build_psi(profile, p as f64, settings.sigma_floor)?;
        let field = psi.field();
        let outside = verify_supersolution(&field, &outside_pts, profile, &scheme, None);
        if outside.min_slack > best_slack {
            best_slack = outside.min_slack;
            best_p = p;
        }
        // the sampled values themselves must be nonnegative, not merely within error of it
        if !(outside.pass && outside.min_margin >= 0.0) {
            continue;
        }
        let inside_pts = sample_ellipse_annulus(profile, 0.25, 0.0, 1.0, settings.points, settings.seed ^ 0xa5);
        let mut deficit: f64 = 0.0;
        let mut values = Vec::with_capacity(inside_pts.len());
        for x in &inside_pts {
            let e = eval_extremal(&field, x, profile, &scheme, Extremal::Minus);
            let b = psi.bump(x);
            if b > 0.0 {
                deficit = deficit.max((-e.value).max(0.0) / b);
            }
            values.push(e);
        }
        let psi_c = psi.clone();
        let phi = move |x: &[f64]| deficit * psi_c.bump(x);
        let inside = verify_supersolution(&field, &inside_pts, profile, &scheme, Some(&phi));
        let mut rng = stats::rng(settings.seed ^ 0x77);
        let pmin = n as f64 + profile.sigma_min();
        let half: Vec<f64> = profile.orders().iter().map(|pi| 3.0_f64.powf(1.0 / pmin) * 0.25_f64.powf(1.0 / pi)).collect();
        let mut floor_sample = f64::INFINITY;
        for _ in 0..4096 {
            let x: Vec<f64> = half.iter().map(|h| h * (2.0 * rng.gen::<f64>() - 1.0)).collect();
            floor_sample = floor_sample.min(psi.eval(&x));
        }
        let far = sample_ellipse_annulus(profile, 0.25, 3.0 * sqrt_n, 6.0 * sqrt_n, 1024, settings.seed ^ 0x33);
        let outside_support_max = far.iter().map(|x| psi.eval(x).abs()).fold(0.0, f64::max);
        return Ok(PsiCertificate { psi, outside, deficit, inside, floor_sample, outside_support_max });
    }
    Err(BarrierError::NoAdmissibleP { p_max: settings.p_max, best_p, best_slack })
}

#[cfg(test)]
mod tests {
    use super::*;
    #[test]
    fn radial_barrier_values() {
        let f = RadialBarrier::cap2p(3.0);
        assert_eq!(f.eval(&[1.0, 0.0]), 1.0);
        assert_eq!(f.eval(&[0.1, 0.0]), 8.0);
        assert!((f.cap_radius() - 0.5).abs() < 1e-15);
        assert_eq!(f.eval(&[0.6, 0.8]), f.eval(&[0.8, -0.6]));
    }

    #[test]
    fn unit_scaling_is_identity() {
        let p = AnisotropyProfile::new(&[1.0, 1.5], 1.0, 2.0).unwrap();
        let g = build_barrier(&p, 4.0, BarrierVariant::GScaled { r: 1.0, s: 0.5 }).unwrap();
        let f = build_barrier(&p, 4.0, BarrierVariant::FCap2p).unwrap();
        for x in [[0.3, 1.2], [2.0, -0.1], [0.0, 0.0]] {
            assert_eq!(g.eval(&x), f.eval(&x));
        }
    }

    #[test]
    fn elementary_small_ratio() {
        assert!(elementary_gap_1(1e-9, 1.0, 3.0) > 0.0);
        assert!(elementary_gap_2(1e-9, 1.0, 3.0) > 0.0);
        assert!(elementary_gap_2(0.5, 1.0, 0.01) > 0.0);
        let c = check_elementary_inequalities(2000, 40.0, 3);
        assert_eq!((c.violations_1, c.violations_2), (0, 0));
    }

    #[test]
    fn psi_matching_and_support() {
        let p = AnisotropyProfile::new(&[1.0, 1.5], 1.0, 1.0).unwrap();
        let psi = build_psi(&p, 6.0, DEFAULT_SIGMA_FLOOR).unwrap();
        assert!(psi.gluing_error < 1e-12);
        assert!(psi.eval(&[0.0, 0.0]) > 3.0);
        assert_eq!(psi.eval(&[10.0, 0.0]), 0.0);
        for (a, l) in psi.quad_coeffs.iter().zip(&psi.semi_axes) {
            assert!((a + 3.0 / (l * l)).abs() < 1e-12);
        }
    }

    #[test]
    fn floor_is_enforced() {
        let p = AnisotropyProfile::isotropic(1, 0.4, 1.0, 1.0).unwrap();
        assert!(matches!(build_psi(&p, 4.0, 0.5), Err(BarrierError::BelowSigmaFloor { .. })));
        assert!(matches!(find_p(&p, 2.0, &FindPSettings::default()), Err(BarrierError::BelowSigmaFloor { .. })));
        let q = AnisotropyProfile::isotropic(1, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(find_p(&q, 1.0, &FindPSettings::default()), Err(BarrierError::Radius(1.0)));
    }
}
