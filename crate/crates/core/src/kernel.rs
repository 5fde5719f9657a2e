//! Symmetric kernels comparable to `c_σ / Σ|y_i|^{n+σ_i}` and finite inf-sup families.

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec::Vec;
use num_traits::Float;
use rand::Rng as _;
use thiserror::Error;

use crate::field::PointFn;
use crate::profile::AnisotropyProfile;
use crate::stats;

/// Multiplier `m(y)` in `K(y) = m(y) c_σ / Σ|y_i|^{n+σ_i}`.
#[derive(Clone)]
pub enum Multiplier {
    Constant(f64),
    /// Rule with declared range `[lo, hi]`.
    Rule { f: PointFn, lo: f64, hi: f64 },
}

impl Multiplier {
    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            Multiplier::Constant(m) => *m,
            Multiplier::Rule { f, .. } => f(y),
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            Multiplier::Constant(m) => *m,
            Multiplier::Rule { hi, .. } => *hi,
        }
    }
}

#[derive(Clone)]
pub enum Kernel {
    PowerLaw(Multiplier),
    /// `K = K₁ + K₂` with `K₂` integrable, `∫|K₂| ≤ l1_bound`, and supported inside the far cut
    /// of any quadrature it is evaluated with.
    Truncated { base: Box<Kernel>, part: PointFn, l1_bound: f64 },
}

impl core::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Kernel::PowerLaw(Multiplier::Constant(m)) => write!(f, "PowerLaw({m})"),
            Kernel::PowerLaw(Multiplier::Rule { lo, hi, .. }) => write!(f, "PowerLaw([{lo}, {hi}])"),
            Kernel::Truncated { base, l1_bound, .. } => write!(f, "Truncated({base:?} + K2, |K2|_1 <= {l1_bound})"),
        }
    }
}

impl Kernel {
    pub fn constant(m: f64) -> Self {
        Kernel::PowerLaw(Multiplier::Constant(m))
    }

    pub fn eval(&self, profile: &AnisotropyProfile, y: &[f64]) -> f64 {
        match self {
            Kernel::PowerLaw(m) => m.eval(y) * profile.reference_kernel(y),
            Kernel::Truncated { base, part, .. } => base.eval(profile, y) + part(y),
        }
    }

    /// Value given the precomputed gauge `Σ|y_i|^{n+σ_i}`.
    pub fn eval_with_gauge(&self, profile: &AnisotropyProfile, y: &[f64], gauge: f64) -> f64 {
        match self {
            Kernel::PowerLaw(m) => m.eval(y) * profile.c_sigma() / gauge,
            Kernel::Truncated { base, part, .. } => base.eval_with_gauge(profile, y, gauge) + part(y),
        }
    }

    /// Multiplier bound of the singular part, used for near-field and tail bounds.
    pub fn upper_multiplier(&self) -> f64 {
        match self {
            Kernel::PowerLaw(m) => m.upper(),
            Kernel::Truncated { base, .. } => base.upper_multiplier(),
        }
    }

    /// `∫|K₂|` budgets accumulated over nested truncations.
    pub fn l1_budget(&self) -> f64 {
        match self {
            Kernel::PowerLaw(_) => 0.0,
            Kernel::Truncated { base, l1_bound, .. } => base.l1_budget() + l1_bound,
        }
    }

    /// The kernel with every integrable part removed.
    pub fn singular_part(&self) -> Kernel {
        match self {
            Kernel::PowerLaw(_) => self.clone(),
            Kernel::Truncated { base, .. } => base.singular_part(),
        }
    }
}

/// `members[α][β]`: inf over α of sup over β.
#[derive(Clone, Debug)]
pub struct KernelFamily {
    pub members: Vec<Vec<Kernel>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FamilyError {
    #[error("kernel family is empty")]
    Empty,
}

impl KernelFamily {
    pub fn new(members: Vec<Vec<Kernel>>) -> Result<Self, FamilyError> {
        if members.is_empty() || members.iter().any(|row| row.is_empty()) {
            return Err(FamilyError::Empty);
        }
        Ok(Self { members })
    }

    pub fn single(k: Kernel) -> Self {
        Self { members: alloc::vec![alloc::vec![k]] }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Kernel> {
        self.members.iter().flatten()
    }

    pub fn singular_part(&self) -> Self {
        Self { members: self.members.iter().map(|r| r.iter().map(Kernel::singular_part).collect()).collect() }
    }

    pub fn l1_budget(&self) -> f64 {
        self.iter().fold(0.0, |m, k| m.max(k.l1_budget()))
    }

    /// Inf over rows of the sup over each row of `value(kernel)`.
    pub fn inf_sup<T>(&self, mut value: impl FnMut(&Kernel) -> T, key: impl Fn(&T) -> f64) -> T {
        let mut best: Option<T> = None;
        for row in &self.members {
            let mut row_best: Option<T> = None;
            for k in row {
                let v = value(k);
                if row_best.as_ref().is_none_or(|b| key(&v) > key(b)) {
                    row_best = Some(v);
                }
            }
            let rb = row_best.expect("nonempty row");
            if best.as_ref().is_none_or(|b| key(&rb) < key(b)) {
                best = Some(rb);
            }
        }
        best.expect("nonempty family")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundsMode {
    /// Check the two-sided bound at every sampled radius.
    Full,
    /// Only check samples with `|y| < radius`.
    NearOrigin { radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelCheck {
    pub passed: bool,
    /// `max(λ / m̂_min, m̂_max / Λ)` with `m̂ = K·Σ|y_i|^{n+σ_i}/c_σ`; at most 1 on success.
    pub worst_ratio: f64,
    pub worst_point: Vec<f64>,
    pub symmetric: bool,
    pub checked: usize,
}

/// Samples `y` log-uniformly in `|y| ∈ [10⁻³, 10³]` with uniform directions and checks
/// `λ ≤ K(y)Σ|y_i|^{n+σ_i}/c_σ ≤ Λ` plus `K(y) = K(-y)`.
pub fn kernel_bounds_verify(
    kernel: &Kernel,
    profile: &AnisotropyProfile,
    samples: usize,
    seed: u64,
    mode: BoundsMode,
) -> KernelCheck {
    let n = profile.n();
    let mut rng = stats::rng(seed);
    let (lo, hi) = (profile.lambda_lo(), profile.lambda_hi());
    let mut worst = 0.0_f64;
    let mut worst_point = alloc::vec![0.0; n];
    let mut symmetric = true;
    let mut checked = 0;
    let mut y = alloc::vec![0.0; n];
    let mut neg = alloc::vec![0.0; n];
    for _ in 0..samples {
        let radius = 10.0_f64.powf(-3.0 + 6.0 * rng.gen::<f64>());
        gaussian_direction(&mut rng, &mut y);
        for k in 0..n {
            y[k] *= radius;
            neg[k] = -y[k];
        }
        if let BoundsMode::NearOrigin { radius: r } = mode {
            if radius >= r {
                continue;
            }
        }
        checked += 1;
        let kv = kernel.eval(profile, &y);
        let kn = kernel.eval(profile, &neg);
        if kv != kn {
            symmetric = false;
        }
        let m_hat = kv * profile.gauge(&y) / profile.c_sigma();
        let ratio = (lo / m_hat).max(m_hat / hi);
        let ratio = if m_hat > 0.0 { ratio } else { f64::INFINITY };
        if ratio > worst {
            worst = ratio;
            worst_point.copy_from_slice(&y);
        }
    }
    KernelCheck { passed: symmetric && worst <= 1.0 + 1e-12, worst_ratio: worst, worst_point, symmetric, checked }
}

/// Uniform direction on the unit sphere (Box–Muller normals, normalised).
pub(crate) fn gaussian_direction(rng: &mut stats::Rng, out: &mut [f64]) {
    loop {
        let mut norm = 0.0;
        for v in out.iter_mut() {
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen::<f64>();
            *v = (-2.0 * u1.ln()).sqrt() * (2.0 * core::f64::consts::PI * u2).cos();
            norm += *v * *v;
        }
        if norm > 1e-20 {
            let s = 1.0 / norm.sqrt();
            out.iter_mut().for_each(|v| *v *= s);
            return;
        }
    }
}

/// Smooth symmetric multiplier oscillating in `[lo, hi]`.
pub fn smooth_multiplier(lo: f64, hi: f64, frequency: f64) -> Multiplier {
    let f: PointFn = Arc::new(move |y: &[f64]| {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        lo + (hi - lo) * 0.5 * (1.0 + (frequency * r2).cos())
    });
    Multiplier::Rule { f, lo, hi }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn lower_bound_kernel_hits_ratio_one() {
        let p = AnisotropyProfile::new(&[1.0, 1.4], 0.5, 2.0).unwrap();
        let c = kernel_bounds_verify(&Kernel::constant(0.5), &p, 500, 3, BoundsMode::Full);
        assert!(c.passed);
        assert!((c.worst_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn above_upper_bound_fails() {
        let p = AnisotropyProfile::new(&[1.0, 1.4], 0.5, 2.0).unwrap();
        let c = kernel_bounds_verify(&Kernel::constant(2.0 + 1e-6), &p, 200, 3, BoundsMode::Full);
        assert!(!c.passed);
        assert!(c.worst_ratio > 1.0);
        assert_eq!(c.worst_point.len(), 2);
    }

    #[test]
    fn truncated_kernel_passes_only_near_origin() {
        let p = AnisotropyProfile::new(&[1.0], 1.0, 1.0).unwrap();
        let part: PointFn = Arc::new(|y: &[f64]| if y[0].abs() > 1.0 && y[0].abs() < 2.0 { 5.0 } else { 0.0 });
        let k = Kernel::Truncated { base: Box::new(Kernel::constant(1.0)), part, l1_bound: 10.0 };
        assert!(!kernel_bounds_verify(&k, &p, 4000, 9, BoundsMode::Full).passed);
        assert!(kernel_bounds_verify(&k, &p, 4000, 9, BoundsMode::NearOrigin { radius: 0.5 }).passed);
    }

    #[test]
    fn inf_sup_enumerates() {
        let fam = KernelFamily::new(vec![
            vec![Kernel::constant(1.0), Kernel::constant(3.0)],
            vec![Kernel::constant(2.0), Kernel::constant(2.5)],
        ])
        .unwrap();
        let v = fam.inf_sup(|k| k.upper_multiplier(), |v| *v);
        assert_eq!(v, 2.5);
        assert!(KernelFamily::new(vec![]).is_err());
    }
}
