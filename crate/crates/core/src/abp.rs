//! Detachment sets `W_k`, the concave-portion check and the rectangle cover of
//! the contact set with its six properties measured per rectangle.

use alloc::vec::Vec;
use num_traits::Float;
use rand::Rng as _;
use thiserror::Error;

use crate::covering::AxisBox;
use crate::envelope::{self, concave_envelope, contact_set, ConcaveEnvelope, EnvelopeError};
use crate::field::{BoundedField, Grid};
use crate::ops::{eval_extremal, Extremal};
use crate::profile::AnisotropyProfile;
use crate::quadrature::{QuadratureError, QuadratureScheme, QuadratureSettings};
use crate::stats;

pub const DEFAULT_DEPTH_CAP: u32 = 40;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AbpError {
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("{point:?} is not a contact point (Γ − u = {gap})")]
    NotContact { point: Vec<f64>, gap: f64 },
    #[error("shell index {k} outside 0..={max}")]
    ShellIndex { k: i64, max: i64 },
    #[error("M⁺u ≥ −f fails at {point:?}: M⁺u ≤ {upper}, f = {f}")]
    Precondition { point: Vec<f64>, upper: f64, f: f64 },
    #[error("no contact point in the closed unit ball")]
    NoContact,
    #[error("depth cap {cap} reached; offending chain {chain:?}")]
    DepthCap { cap: u32, chain: Vec<(u32, Vec<i128>)> },
    #[error("lattice index overflow at depth {0}")]
    IndexOverflow(u32),
    #[error("{0} must be positive")]
    Parameter(&'static str),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central difference of `u` at `x`.
pub fn central_gradient(u: &BoundedField, x: &[f64], h: f64) -> Vec<f64> {
    let mut e = x.to_vec();
    (0..x.len())
        .map(|i| {
            e[i] = x[i] + h;
            let a = u.eval(&e);
            e[i] = x[i] - h;
            let b = u.eval(&e);
            e[i] = x[i];
            (a - b) / (2.0 * h)
        })
        .collect()
}

/// `inf_{z ∈ Θ_{r_k} \ Θ_{r_{k+1}}} ⟨Az, z⟩`. On `Σ|z_i|^{p_i} = ρ` the form is a sum of
/// `a_i t_i^{2/p_i}` over the simplex `Σ t_i = ρ`, concave when every `p_i ≥ 2`, so the
/// infimum sits at a vertex. In one dimension there is a single vertex.
pub fn shell_quadratic_inf(profile: &AnisotropyProfile, r_inner: f64) -> f64 {
    let a = profile.matrix_a();
    profile
        .orders()
        .iter()
        .zip(&a.diag)
        .map(|(p, ai)| ai * r_inner.powf(2.0 / p))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetachmentSettings {
    pub samples: usize,
    pub seed: u64,
    pub k_max: i64,
    /// Largest allowed `Γ(x) − u(x)` at the base point.
    pub contact_tol: f64,
}

impl Default for DetachmentSettings {
    fn default() -> Self {
        Self { samples: 20_000, seed: 3, k_max: 64, contact_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detachment {
    pub k: i64,
    /// Monte Carlo `|W_k(x)|` and its standard error.
    pub measure: f64,
    pub std_error: f64,
    /// `|Θ_{r_k} \ Θ_{r_{k+1}}|`, closed form.
    pub shell_measure: f64,
    pub ratio: f64,
    pub threshold: f64,
    /// Fraction of samples `y` whose membership differs from that of `−y`.
    pub asymmetry: f64,
}

fn shell_radii(profile: &AnisotropyProfile, k: i64, k_max: i64) -> Result<(f64, f64), AbpError> {
    if k < 0 || k > k_max {
        return Err(AbpError::ShellIndex { k, max: k_max });
    }
    let outer = profile.radii_sequence(k).map_err(|_| AbpError::ShellIndex { k, max: k_max })?;
    let inner = profile.radii_sequence(k + 1).map_err(|_| AbpError::ShellIndex { k, max: k_max })?;
    if !(inner > 0.0) {
        return Err(AbpError::ShellIndex { k, max: k_max });
    }
    Ok((outer, inner))
}

/// `|Θ_{r_k} \ Θ_{r_{k+1}}|`.
pub fn shell_measure(profile: &AnisotropyProfile, outer: f64, inner: f64) -> f64 {
    let a = profile.theta_exponent();
    profile.theta_unit_volume() * outer.powf(a) * -libm::expm1(a * (inner / outer).ln())
}

fn sample_shell(profile: &AnisotropyProfile, outer: f64, inner: f64, rng: &mut stats::Rng, y: &mut [f64]) {
    let h: Vec<f64> = profile.orders().iter().map(|p| outer.powf(1.0 / p)).collect();
    loop {
        for i in 0..y.len() {
            y[i] = h[i] * (2.0 * rng.gen::<f64>() - 1.0);
        }
        let g = profile.gauge(y);
        if g < outer && g >= inner {
            return;
        }
    }
}

/// Monte Carlo measure of
/// `W_k(x) = (Θ_{r_k} \ Θ_{r_{k+1}}) ∩ {y : u(x+y) < u(x) + ⟨y, grad⟩ − M inf ⟨Az, z⟩}`
/// with `grad` a supergradient of Γ at the contact point `x`.
pub fn detachment_measure(
    u: &BoundedField,
    env: &ConcaveEnvelope,
    x: &[f64],
    grad: &[f64],
    k: i64,
    m: f64,
    profile: &AnisotropyProfile,
    settings: &DetachmentSettings,
) -> Result<Detachment, AbpError> {
    let gap = env.eval(x) - u.eval(x);
    if gap > settings.contact_tol {
        return Err(AbpError::NotContact { point: x.to_vec(), gap });
    }
    if settings.samples == 0 {
        return Err(AbpError::Parameter("samples"));
    }
    let (outer, inner) = shell_radii(profile, k, settings.k_max)?;
    let threshold = m * shell_quadratic_inf(profile, inner);
    let ux = u.eval(x);
    let n = x.len();
    let mut rng = stats::rng_stream(settings.seed, k as u64);
    let mut y = alloc::vec![0.0; n];
    let mut p = alloc::vec![0.0; n];
    let inside = |y: &[f64], p: &mut [f64], sign: f64| {
        for i in 0..n {
            p[i] = x[i] + sign * y[i];
        }
        u.eval(p) < ux + sign * dot(y, grad) - threshold
    };
    let (mut hits, mut asym) = (0usize, 0usize);
    for _ in 0..settings.samples {
        sample_shell(profile, outer, inner, &mut rng, &mut y);
        let a = inside(&y, &mut p, 1.0);
        let b = inside(&y, &mut p, -1.0);
        hits += a as usize;
        asym += (a != b) as usize;
    }
    let frac = hits as f64 / settings.samples as f64;
    let shell = shell_measure(profile, outer, inner);
    Ok(Detachment {
        k,
        measure: frac * shell,
        std_error: shell * (frac * (1.0 - frac) / settings.samples as f64).sqrt(),
        shell_measure: shell,
        ratio: frac,
        threshold,
        asymmetry: asym as f64 / settings.samples as f64,
    })
}

/// Smallest `C₀` on the ladder `1, 2, 4, …, 2^{steps−1}` for which some shell
/// `k ≤ k_max` has ratio at most `ε` when `M = C₀ f(x)/ε`.
pub fn detachment_constant(
    u: &BoundedField,
    env: &ConcaveEnvelope,
    x: &[f64],
    grad: &[f64],
    f_x: f64,
    eps: f64,
    steps: u32,
    profile: &AnisotropyProfile,
    settings: &DetachmentSettings,
) -> Result<Option<(f64, Detachment)>, AbpError> {
    if !(eps > 0.0 && f_x > 0.0) {
        return Err(AbpError::Parameter("eps and f(x)"));
    }
    for s in 0..steps {
        let c0 = (s as f64).exp2();
        let m = c0 * f_x / eps;
        for k in 0..=settings.k_max {
            let d = detachment_measure(u, env, x, grad, k, m, profile, settings)?;
            if d.ratio <= eps {
                return Ok(Some((c0, d)));
            }
        }
    }
    Ok(None)
}

/// Largest violated fraction for which the concave-portion lemma is proved:
/// a ball of radius 1/4 centred on `|z| = 3/4` fits in `B₁ \ B_{1/2}`, so if the
/// violation set is smaller than half of it the midpoint argument goes through.
pub fn concave_portion_epsilon0(n: usize) -> f64 {
    let t = (n as f64).exp2();
    1.0 / (2.0 * t * (t - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcavePortion {
    /// Fraction of `T(B₁ \ B_{1/2})` where `Γ(x+y) < Γ(x) + ⟨y, grad⟩ − h`.
    pub violation_fraction: f64,
    pub epsilon0: f64,
    pub hypothesis: bool,
    /// `min (Γ(x+y) − Γ(x) − ⟨y, grad⟩ + h)` over samples of `T(B_{1/2})`.
    pub inner_margin: f64,
    pub conclusion: bool,
}

fn uniform_in_unit_annulus(inner: f64, rng: &mut stats::Rng, z: &mut [f64]) {
    loop {
        for v in z.iter_mut() {
            *v = 2.0 * rng.gen::<f64>() - 1.0;
        }
        let r2: f64 = z.iter().map(|v| v * v).sum();
        if r2 < 1.0 && r2 >= inner * inner {
            return;
        }
    }
}

/// Monte Carlo check of the concave-portion statement for `gamma` around `x`,
/// on the image of `B₁ \ B_{1/2}` and `B_{1/2}` under `y = T z` with diagonal `T`.
/// `T = diag(r^{1/(n+σ_i)}/2)` gives the ellipsoid version on `E_{r,1/2} \ E_{r,1/4}`.
pub fn concave_portion_check(
    gamma: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    grad: &[f64],
    h: f64,
    t_diag: &[f64],
    samples: usize,
    seed: u64,
) -> ConcavePortion {
    let n = x.len();
    let g0 = gamma(x);
    let mut rng = stats::rng(seed);
    let mut z = alloc::vec![0.0; n];
    let mut p = alloc::vec![0.0; n];
    let margin = |z: &[f64], p: &mut [f64]| {
        let mut lin = 0.0;
        for i in 0..n {
            let y = t_diag[i] * z[i];
            p[i] = x[i] + y;
            lin += y * grad[i];
        }
        gamma(p) - g0 - lin + h
    };
    let mut bad = 0usize;
    for _ in 0..samples {
        uniform_in_unit_annulus(0.5, &mut rng, &mut z);
        if margin(&z, &mut p) < 0.0 {
            bad += 1;
        }
    }
    let mut inner = f64::INFINITY;
    for _ in 0..samples {
        uniform_in_unit_annulus(0.0, &mut rng, &mut z);
        z.iter_mut().for_each(|v| *v *= 0.5);
        inner = inner.min(margin(&z, &mut p));
    }
    let frac = bad as f64 / samples.max(1) as f64;
    let eps0 = concave_portion_epsilon0(n);
    ConcavePortion {
        violation_fraction: frac,
        epsilon0: eps0,
        hypothesis: frac <= eps0,
        inner_margin: inner,
        conclusion: inner >= 0.0,
    }
}

/// Result of testing `M⁺u ≥ −f` at sample points.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsolutionCheck {
    /// `min (M⁺u(x) + error + f(x))`.
    pub min_slack: f64,
    pub worst_point: Vec<f64>,
    /// Smallest constant `f` certified by the lower bounds, `max (−(M⁺u − error))⁺`.
    pub certified_rhs: f64,
    pub pass: bool,
}

pub fn check_subsolution(
    u: &BoundedField,
    f: &BoundedField,
    profile: &AnisotropyProfile,
    scheme: &QuadratureScheme,
    points: &[Vec<f64>],
) -> SubsolutionCheck {
    let mut out = SubsolutionCheck { min_slack: f64::INFINITY, worst_point: Vec::new(), certified_rhs: 0.0, pass: true };
    for x in points {
        let e = eval_extremal(u, x, profile, scheme, Extremal::Plus);
        let slack = e.upper() + f.eval(x);
        if slack < out.min_slack {
            out.min_slack = slack;
            out.worst_point = x.clone();
        }
        out.certified_rhs = out.certified_rhs.max(-e.lower());
        if !(slack >= 0.0) {
            out.pass = false;
        }
    }
    out
}

/// At most `count` points spread evenly through `points`.
pub fn spread(points: &[Vec<f64>], count: usize) -> Vec<Vec<f64>> {
    if points.len() <= count {
        return points.to_vec();
    }
    (0..count).map(|k| points[k * points.len() / count].clone()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverSettings {
    /// Contact tolerance; `None` uses `2 h L`.
    pub contact_tol: Option<f64>,
    /// Split when `|∇Γ(R̄)| / ((max f⁺)ⁿ |R̄|)` exceeds this.
    pub c5: f64,
    /// Dilation and coefficient `C` in property (6).
    pub c6: f64,
    /// Split when `|A_j| / |R̃_j|` falls below this.
    pub varsigma: f64,
    pub depth_cap: u32,
    /// Rectangles are not split below this edge; `None` uses the grid spacing.
    pub min_edge: Option<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Lattice points per axis when maximising `f` over a closed rectangle.
    pub f_probe: usize,
    /// Checks `M⁺u ≥ −f` at up to this many contact points with the given quadrature.
    pub precondition: Option<(QuadratureSettings, usize)>,
}

impl Default for CoverSettings {
    fn default() -> Self {
        Self {
            contact_tol: None,
            c5: 1e3,
            c6: 2.0,
            varsigma: 0.05,
            depth_cap: DEFAULT_DEPTH_CAP,
            min_edge: None,
            samples: 2048,
            seed: 17,
            f_probe: 5,
            precondition: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverRect {
    pub depth: u32,
    /// Lattice index: the rectangle is `Π [k_i ℓ_i, (k_i+1) ℓ_i]` for the depth's edges `ℓ`.
    pub index: Vec<i128>,
    pub rect: AxisBox,
    pub tilde: AxisBox,
    pub diameter: f64,
    pub tilde_diameter: f64,
    /// Contact points inside the closure.
    pub contacts: usize,
    pub grad_image: f64,
    pub f_max: f64,
    /// `|∇Γ(R̄)| / ((max f⁺)ⁿ |R̄|)`.
    pub c5_ratio: f64,
    /// `|A_j| / |R̃_j|` with `A_j` measured in `C·R̃_j` for `C = c6`.
    pub detachment_ratio: f64,
    /// Would have been split but the children fall below the resolution floor.
    pub at_floor: bool,
}

#[derive(Debug, Clone)]
pub struct AbpCover {
    pub rects: Vec<CoverRect>,
    pub envelope: ConcaveEnvelope,
    /// Contact points in the closed unit ball.
    pub contact: Vec<Vec<f64>>,
    pub contact_tol: f64,
    pub degenerate: bool,
    pub settings: CoverSettings,
    pub splits: usize,
    pub max_depth: u32,
    pub subsolution: Option<SubsolutionCheck>,
}

struct Lattice {
    /// Depth-0 edges `(ρ₀ 2^{−1/q_max})^{1/(n+σ_i)}`.
    base: Vec<f64>,
    frak_c: u32,
    pmin: f64,
    orders: Vec<f64>,
}

impl Lattice {
    fn new(profile: &AnisotropyProfile) -> Self {
        Self {
            base: profile.tile_edges(),
            frak_c: profile.frak_c(),
            pmin: profile.n() as f64 + profile.sigma_min(),
            orders: profile.orders().to_vec(),
        }
    }

    fn edges(&self, depth: u32) -> Vec<f64> {
        let s = -((self.frak_c * depth) as f64);
        self.base.iter().map(|e| e * s.exp2()).collect()
    }

    fn rect(&self, depth: u32, index: &[i128]) -> AxisBox {
        let e = self.edges(depth);
        AxisBox {
            lo: index.iter().zip(&e).map(|(k, l)| *k as f64 * l).collect(),
            hi: index.iter().zip(&e).map(|(k, l)| (*k + 1) as f64 * l).collect(),
        }
    }

    /// Half-edges `(s a)^{1/(n+σ_i)}` of `R̃_{a,s}` for the rectangle viewed as `R_{a,s}`,
    /// `s^{1/(n+σ_min)} = 2^{−𝔠 depth − 1}`.
    fn tilde(&self, depth: u32, index: &[i128]) -> AxisBox {
        let c = self.rect(depth, index).center();
        let t = -((self.frak_c * depth) as f64 + 1.0) * self.pmin;
        let half: Vec<f64> = self.base.iter().zip(&self.orders).map(|(b, p)| (t / p).exp2() * b).collect();
        AxisBox::centered(&c, &half)
    }

    fn diameter(&self, depth: u32) -> f64 {
        self.edges(depth).iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    /// Lattice indices at `depth` whose closed rectangle contains `x`.
    fn indices_containing(&self, depth: u32, x: &[f64]) -> Result<Vec<Vec<i128>>, AbpError> {
        let e = self.edges(depth);
        let mut per_axis: Vec<Vec<i128>> = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let t = (x[i] / e[i]).floor();
            if !(t.abs() < 1e30) {
                return Err(AbpError::IndexOverflow(depth));
            }
            let k = t as i128;
            let cands: Vec<i128> = [k - 1, k, k + 1]
                .into_iter()
                .filter(|&j| j as f64 * e[i] <= x[i] && x[i] <= (j + 1) as f64 * e[i])
                .collect();
            per_axis.push(cands);
        }
        let mut out: Vec<Vec<i128>> = alloc::vec![Vec::new()];
        for c in per_axis {
            let mut next = Vec::with_capacity(out.len() * c.len());
            for o in &out {
                for &j in &c {
                    let mut v = o.clone();
                    v.push(j);
                    next.push(v);
                }
            }
            out = next;
        }
        Ok(out)
    }
}

/// Maximum of `f` over lattice points of the closed box and the given extra points.
fn field_max(f: &BoundedField, b: &AxisBox, per_axis: usize, extra: &[&Vec<f64>]) -> f64 {
    let n = b.dim();
    let m = per_axis.max(2);
    let mut best = f64::NEG_INFINITY;
    let total = m.pow(n as u32);
    let mut x = alloc::vec![0.0; n];
    for flat in 0..total {
        let mut r = flat;
        for i in 0..n {
            let k = r % m;
            r /= m;
            x[i] = b.lo[i] + (b.hi[i] - b.lo[i]) * k as f64 / (m - 1) as f64;
        }
        best = best.max(f.eval(&x));
    }
    for p in extra {
        best = best.max(f.eval(p));
    }
    best
}

/// `|{y ∈ C·R̃ : u(y) ≥ Γ(y) − C (max f) d̃²}| / |R̃|` by Monte Carlo.
fn detachment_ratio(
    u: &BoundedField,
    env: &ConcaveEnvelope,
    tilde: &AxisBox,
    f_max: f64,
    c: f64,
    samples: usize,
    rng: &mut stats::Rng,
) -> f64 {
    let big = tilde.scaled(c);
    let d = tilde.diameter();
    let cut = c * f_max * d * d;
    let n = tilde.dim();
    let mut y = alloc::vec![0.0; n];
    let mut hits = 0usize;
    for _ in 0..samples {
        for i in 0..n {
            y[i] = big.lo[i] + (big.hi[i] - big.lo[i]) * rng.gen::<f64>();
        }
        if u.eval(&y) >= env.eval(&y) - cut {
            hits += 1;
        }
    }
    hits as f64 / samples.max(1) as f64 * big.volume() / tilde.volume()
}

struct Measured {
    contacts: usize,
    grad_image: f64,
    f_max: f64,
    c5_ratio: f64,
    detachment_ratio: f64,
}

fn measure_rect(
    u: &BoundedField,
    f: &BoundedField,
    env: &ConcaveEnvelope,
    contact: &[Vec<f64>],
    rect: &AxisBox,
    tilde: &AxisBox,
    settings: &CoverSettings,
    stream: u64,
) -> Measured {
    let inside: Vec<&Vec<f64>> = contact.iter().filter(|p| rect.contains_closed(p)).collect();
    let n = rect.dim() as i32;
    let grad_image = env.grad_image_measure(rect);
    let f_max = field_max(f, rect, settings.f_probe, &inside);
    let denom = f_max.max(0.0).powi(n) * rect.volume();
    let c5_ratio = if grad_image == 0.0 { 0.0 } else { grad_image / denom };
    let mut rng = stats::rng_stream(settings.seed, stream);
    let detachment_ratio = detachment_ratio(u, env, tilde, f_max, settings.c6, settings.samples, &mut rng);
    Measured { contacts: inside.len(), grad_image, f_max, c5_ratio, detachment_ratio }
}

/// Covers the contact set in `B̄₁` by lattice rectangles: depth-0 tiles have edges
/// `(ρ₀ 2^{−1/q_max})^{1/(n+σ_i)}`, tiles missing the contact set are discarded and
/// rectangles failing (5) or (6) are split into `2^𝔠` pieces per axis.
pub fn abp_cover(
    u: &BoundedField,
    f: &BoundedField,
    profile: &AnisotropyProfile,
    grid: &Grid,
    settings: &CoverSettings,
) -> Result<AbpCover, AbpError> {
    if !(settings.c6 > 0.0) {
        return Err(AbpError::Parameter("c6"));
    }
    let env = concave_envelope(u, grid, 1e-12)?;
    let tol = settings.contact_tol.unwrap_or_else(|| envelope::default_contact_tolerance(&env));
    let cs = contact_set(u, &env, tol);
    let contact: Vec<Vec<f64>> =
        cs.points.into_iter().filter(|p| p.iter().map(|c| c * c).sum::<f64>() <= 1.0).collect();
    if contact.is_empty() {
        return Err(AbpError::NoContact);
    }
    let subsolution = match &settings.precondition {
        Some((qs, count)) => {
            let scheme = QuadratureScheme::build(profile, *qs)?;
            let check = check_subsolution(u, f, profile, &scheme, &spread(&contact, *count));
            if !check.pass {
                return Err(AbpError::Precondition {
                    point: check.worst_point.clone(),
                    upper: check.min_slack - f.eval(&check.worst_point),
                    f: f.eval(&check.worst_point),
                });
            }
            Some(check)
        }
        None => None,
    };
    let lattice = Lattice::new(profile);
    let min_edge = settings
        .min_edge
        .unwrap_or_else(|| (0..grid.dim()).map(|i| grid.spacing(i)).fold(0.0_f64, f64::max));
    let fan = 1i128 << lattice.frak_c.min(100);

    // depth-0 tiles meeting the contact set
    let mut pending: Vec<(u32, Vec<i128>, Vec<usize>)> = Vec::new();
    {
        let mut seen: alloc::collections::BTreeMap<Vec<i128>, Vec<usize>> = Default::default();
        for (ci, p) in contact.iter().enumerate() {
            for idx in lattice.indices_containing(0, p)? {
                seen.entry(idx).or_default().push(ci);
            }
        }
        pending.extend(seen.into_iter().map(|(k, v)| (0, k, v)));
    }
    let mut parents: alloc::collections::BTreeMap<(u32, Vec<i128>), (u32, Vec<i128>)> = Default::default();
    let mut rects = Vec::new();
    let mut splits = 0usize;
    let mut max_depth = 0u32;
    let mut stream = 0u64;
    while let Some((depth, index, members)) = pending.pop() {
        max_depth = max_depth.max(depth);
        let rect = lattice.rect(depth, &index);
        let tilde = lattice.tilde(depth, &index);
        let mine: Vec<Vec<f64>> = members.iter().map(|&c| contact[c].clone()).collect();
        let m = measure_rect(u, f, &env, &mine, &rect, &tilde, settings, stream);
        stream += 1;
        let violates = m.c5_ratio > settings.c5 || m.detachment_ratio < settings.varsigma;
        let child_edges = lattice.edges(depth + 1);
        let resolvable = lattice.frak_c < 100 && child_edges.iter().all(|e| *e >= min_edge);
        if violates && resolvable {
            if depth + 1 > settings.depth_cap {
                let mut chain = alloc::vec![(depth, index.clone())];
                let mut key = (depth, index.clone());
                while let Some(p) = parents.get(&key) {
                    chain.push(p.clone());
                    key = p.clone();
                }
                chain.reverse();
                return Err(AbpError::DepthCap { cap: settings.depth_cap, chain });
            }
            splits += 1;
            let mut kids: alloc::collections::BTreeMap<Vec<i128>, Vec<usize>> = Default::default();
            for &ci in &members {
                for idx in lattice.indices_containing(depth + 1, &contact[ci])? {
                    let within = idx.iter().zip(&index).all(|(k, pk)| {
                        k.checked_sub(pk.checked_mul(fan).unwrap_or(i128::MAX)).is_some_and(|o| (0..fan).contains(&o))
                    });
                    if within {
                        kids.entry(idx).or_default().push(ci);
                    }
                }
            }
            for (idx, v) in kids {
                parents.insert((depth + 1, idx.clone()), (depth, index.clone()));
                pending.push((depth + 1, idx, v));
            }
            continue;
        }
        rects.push(CoverRect {
            depth,
            index: index.clone(),
            diameter: lattice.diameter(depth),
            tilde_diameter: tilde.diameter(),
            rect,
            tilde,
            contacts: m.contacts,
            grad_image: m.grad_image,
            f_max: m.f_max,
            c5_ratio: m.c5_ratio,
            detachment_ratio: m.detachment_ratio,
            at_floor: violates,
        });
    }
    rects.sort_by(|a, b| a.depth.cmp(&b.depth).then_with(|| a.index.cmp(&b.index)));
    Ok(AbpCover {
        rects,
        envelope: env,
        contact,
        contact_tol: tol,
        degenerate: cs.degenerate,
        settings: settings.clone(),
        splits,
        max_depth,
        subsolution,
    })
}

/// Pass/fail of each property for one rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RectProperties {
    pub disjoint: bool,
    pub meets_contact: bool,
    pub diameter: bool,
    pub gradient_image: bool,
    pub detachment: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverReport {
    pub per_rect: Vec<RectProperties>,
    /// Properties (1)–(6) over the whole family.
    pub properties: [bool; 6],
    /// `max_j |∇Γ(R̄_j)| / ((max f⁺)ⁿ |R̄_j|)`.
    pub c5_measured: f64,
    /// `min_j |A_j| / |R̃_j|` at `C = c6`.
    pub varsigma_measured: f64,
    /// Smallest `C` on the ladder with `min_j |A_j|/|R̃_j| ≥ varsigma` (target from the settings).
    pub c6_smallest: Option<f64>,
    pub diameter_bound: f64,
    pub sup_u: f64,
    /// `sup u / (Σ_j (max f⁺)ⁿ |R_j|)^{1/n}`.
    pub sup_constant: f64,
    pub rects: usize,
    pub max_depth: u32,
    pub at_floor: usize,
}

pub const C6_LADDER: [f64; 8] = [1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0];

/// Lattice rectangles at depths `a ≤ b` are disjoint iff the deeper index does not
/// descend from the shallower one.
fn lattice_disjoint(a: &CoverRect, b: &CoverRect, frak_c: u32) -> bool {
    let (s, d) = if a.depth <= b.depth { (a, b) } else { (b, a) };
    let shift = frak_c * (d.depth - s.depth);
    if shift >= 127 {
        return !s.rect.intersects(&d.rect);
    }
    d.index.iter().zip(&s.index).any(|(kd, ks)| (kd >> shift) != *ks)
}

/// Re-measures every rectangle of `cover` with fresh Monte Carlo streams and checks
/// properties (1)–(6) against the thresholds the cover was built with.
pub fn verify_cover(cover: &AbpCover, u: &BoundedField, f: &BoundedField, profile: &AnisotropyProfile) -> CoverReport {
    let rects = &cover.rects;
    let s = &cover.settings;
    let env = &cover.envelope;
    let bound = profile.cover_diameter_bound();
    let frak_c = profile.frak_c();
    let n = profile.n() as i32;
    let mut f_max = Vec::with_capacity(rects.len());
    let mut c5 = 0.0_f64;
    let mut vs = f64::INFINITY;
    let mut per_rect: Vec<RectProperties> = Vec::with_capacity(rects.len());
    for (ri, r) in rects.iter().enumerate() {
        let inside: Vec<&Vec<f64>> = cover.contact.iter().filter(|p| r.rect.contains_closed(p)).collect();
        let fm = field_max(f, &r.rect, s.f_probe, &inside);
        let g = env.grad_image_measure(&r.rect);
        let ratio5 = if g == 0.0 { 0.0 } else { g / (fm.max(0.0).powi(n) * r.rect.volume()) };
        let mut rng = stats::rng_stream(s.seed ^ 0x0ddba11, ri as u64);
        let ratio6 = detachment_ratio(u, env, &r.tilde, fm, s.c6, s.samples, &mut rng);
        c5 = c5.max(ratio5);
        vs = vs.min(ratio6);
        f_max.push(fm);
        per_rect.push(RectProperties {
            disjoint: true,
            meets_contact: !inside.is_empty(),
            diameter: r.rect.diameter() <= bound * (1.0 + 1e-12) && r.diameter <= bound,
            gradient_image: ratio5 <= s.c5,
            detachment: ratio6 >= s.varsigma,
        });
    }
    for i in 0..rects.len() {
        for j in (i + 1)..rects.len() {
            let ok = lattice_disjoint(&rects[i], &rects[j], frak_c) && !rects[i].rect.intersects(&rects[j].rect);
            if !ok {
                per_rect[i].disjoint = false;
                per_rect[j].disjoint = false;
            }
        }
    }
    let covers = cover.contact.iter().all(|p| rects.iter().any(|r| r.rect.contains_closed(p)));

    let mut c6_smallest = None;
    'ladder: for (li, &c) in C6_LADDER.iter().enumerate() {
        for (ri, r) in rects.iter().enumerate() {
            let mut rng = stats::rng_stream(s.seed ^ 0x5eed, (li * rects.len() + ri) as u64);
            if detachment_ratio(u, env, &r.tilde, f_max[ri], c, s.samples, &mut rng) < s.varsigma {
                continue 'ladder;
            }
        }
        c6_smallest = Some(c);
        break;
    }

    let sup_u = env.heights.iter().fold(0.0_f64, |m, h| m.max(*h));
    let mass: f64 = rects.iter().zip(&f_max).map(|(r, fm)| fm.max(0.0).powi(n) * r.rect.volume()).sum();
    let sup_constant = if sup_u == 0.0 { 0.0 } else { sup_u / mass.powf(1.0 / n as f64) };

    let all = |g: fn(&RectProperties) -> bool| per_rect.iter().all(g);
    let properties = [
        all(|p| p.disjoint),
        covers,
        all(|p| p.meets_contact),
        all(|p| p.diameter),
        all(|p| p.gradient_image),
        all(|p| p.detachment),
    ];
    CoverReport {
        properties,
        c5_measured: c5,
        varsigma_measured: if rects.is_empty() { 0.0 } else { vs },
        c6_smallest,
        diameter_bound: bound,
        sup_u,
        sup_constant,
        rects: rects.len(),
        max_depth: rects.iter().map(|r| r.depth).max().unwrap_or(0),
        at_floor: rects.iter().filter(|r| r.at_floor).count(),
        per_rect,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::sync::Arc;
    use alloc::vec;

    fn flat_top(n: usize) -> BoundedField {
        BoundedField::analytic(
            n,
            Arc::new(|x: &[f64]| {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                (1.5 * (1.0 - r)).min(1.0)
            }),
            1.5 * 4.0,
        )
    }

    #[test]
    fn epsilon0_values() {
        assert_eq!(concave_portion_epsilon0(1), 0.25);
        assert_eq!(concave_portion_epsilon0(2), 1.0 / 24.0);
    }

    #[test]
    fn flat_top_has_no_detachment() {
        let p = AnisotropyProfile::isotropic(1, 1.0, 1.0, 2.0).unwrap().with_rho0(0.01).unwrap().with_frak_c(1).unwrap();
        let u = flat_top(1);
        let g = Grid::cube(1, 3.0, 601);
        let env = concave_envelope(&u, &g, 1e-12).unwrap();
        let s = DetachmentSettings { samples: 2000, ..Default::default() };
        for k in 0..4 {
            let d = detachment_measure(&u, &env, &[0.0], &[0.0], k, 1.0, &p, &s).unwrap();
            assert_eq!(d.measure, 0.0);
            assert_eq!(d.asymmetry, 0.0);
        }
        assert!(matches!(
            detachment_measure(&u, &env, &[0.0], &[0.0], 65, 1.0, &p, &s),
            Err(AbpError::ShellIndex { .. })
        ));
        assert!(matches!(
            detachment_measure(&u, &env, &[0.9], &[0.0], 0, 1.0, &p, &s),
            Err(AbpError::NotContact { .. })
        ));
    }

    #[test]
    fn lattice_tiles_nest() {
        let p = AnisotropyProfile::isotropic(2, 1.0, 1.0, 2.0).unwrap().with_rho0(8.0).unwrap().with_frak_c(1).unwrap();
        let l = Lattice::new(&p);
        assert!((l.base[0] - 1.0).abs() < 1e-12);
        let parent = l.rect(1, &[1, -1]);
        let child = l.rect(2, &[2, -1]);
        assert_eq!(child.lo[0], parent.lo[0]);
        assert_eq!(child.hi[1], parent.hi[1]);
        let x = [l.rect(1, &[1, 0]).lo[0], 0.25];
        let idx = l.indices_containing(1, &x).unwrap();
        assert_eq!(idx, vec![vec![0, 0], vec![1, 0]]);
    }
}
