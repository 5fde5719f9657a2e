//! Discrete Dirichlet problems `inf_α sup_β L_{αβ} u = f` on a lattice box.
//!
//! Each kernel becomes a table of offset weights `w(y) ≈ ∫_{cell(y)} K`. The
//! centre cell enters through its second moments, folded into the `±h e_i`
//! offsets. The discrete operator is
//! `L_h u(x) = Σ_{y≠0} w(y) (U(x+y) + U(x−y) − 2u(x))` with `U = u` on the
//! lattice of `Ω` and `U = g` elsewhere. Offsets beyond a window are dropped and
//! the dropped mass is bounded analytically.

use alloc::vec::Vec;
use num_traits::Float;
use thiserror::Error;

use crate::field::{BoundedField, Exterior, Grid};
use crate::kernel::{FamilyError, Kernel, KernelFamily};
use crate::ops::{self, Extremal};
use crate::profile::AnisotropyProfile;
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("lattice spacing along axis {0} is zero or not finite")]
    ZeroSpacing(usize),
    #[error("grid has dimension {grid}, profile has {profile}")]
    DimensionMismatch { grid: usize, profile: usize },
    #[error("negative weight {value} at offset {offset:?}")]
    NegativeWeight { offset: Vec<i64>, value: f64 },
    #[error("far radius {0} must be positive and finite")]
    FarRadius(f64),
    #[error("window of {0} offsets is too large")]
    WindowTooLarge(usize),
    #[error(transparent)]
    Family(#[from] FamilyError),
}

const WINDOW_LIMIT: usize = 1 << 24;
const RINGS: usize = 40;

/// Offset weights of one kernel on a lattice with spacing `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    half: Vec<usize>,
    spacing: Vec<f64>,
    weights: Vec<f64>,
    moments: Vec<f64>,
    total: f64,
}

impl WeightTable {
    pub fn dim(&self) -> usize {
        self.half.len()
    }

    /// Window half-widths in lattice units.
    pub fn half_widths(&self) -> &[usize] {
        &self.half
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// `∫_{cell(0)} z_i² K(z) dz`.
    pub fn centre_moments(&self) -> &[f64] {
        &self.moments
    }

    /// `Σ_{y≠0} w(y)`.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Radius of the largest ball inside the union of window cells.
    pub fn cut_radius(&self) -> f64 {
        self.half
            .iter()
            .zip(&self.spacing)
            .map(|(&k, h)| (k as f64 + 0.5) * h)
            .fold(f64::INFINITY, f64::min)
    }

    fn flat(&self, k: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for (a, &ki) in k.iter().enumerate() {
            let w = self.half[a] as i64;
            if ki < -w || ki > w {
                return None;
            }
            idx = idx * (2 * self.half[a] + 1) + (ki + w) as usize;
        }
        Some(idx)
    }

    /// Weight of the lattice offset `k ⊙ h`; zero outside the window and at 0.
    pub fn weight(&self, k: &[i64]) -> f64 {
        self.flat(k).map_or(0.0, |i| self.weights[i])
    }

    fn offsets(&self) -> OffsetIter<'_> {
        OffsetIter { half: &self.half, cur: self.half.iter().map(|&w| -(w as i64)).collect(), done: false }
    }
}

struct OffsetIter<'a> {
    half: &'a [usize],
    cur: Vec<i64>,
    done: bool,
}

impl Iterator for OffsetIter<'_> {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        if self.done {
            return None;
        }
        let out = self.cur.clone();
        let mut a = self.half.len();
        loop {
            if a == 0 {
                self.done = true;
                break;
            }
            a -= 1;
            if self.cur[a] < self.half[a] as i64 {
                self.cur[a] += 1;
                break;
            }
            self.cur[a] = -(self.half[a] as i64);
        }
        Some(out)
    }
}

struct Rule {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl Rule {
    fn new(m: usize) -> Self {
        let (x, w) = gauss_legendre(m);
        Self { x, w }
    }
}

/// Tensor Gauss–Legendre over the box `[lo, hi]`.
fn box_integral(f: &impl Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], rule: &Rule) -> f64 {
    let n = lo.len();
    let m = rule.x.len();
    let mut idx = alloc::vec![0usize; n];
    let mut z = alloc::vec![0.0; n];
    let mut sum = 0.0;
    let jac: f64 = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).product();
    loop {
        let mut w = 1.0;
        for a in 0..n {
            let (c, r) = (0.5 * (lo[a] + hi[a]), 0.5 * (hi[a] - lo[a]));
            z[a] = c + r * rule.x[idx[a]];
            w *= rule.w[idx[a]];
        }
        sum += w * f(&z);
        let mut a = n;
        loop {
            if a == 0 {
                return sum * jac;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < m {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// Integral over the centred box with half-edges `outer` minus the one with `inner`.
fn box_shell_integral(f: &impl Fn(&[f64]) -> f64, inner: &[f64], outer: &[f64], rule: &Rule) -> f64 {
    let n = inner.len();
    let mut sum = 0.0;
    let (mut lo, mut hi) = (alloc::vec![0.0; n], alloc::vec![0.0; n]);
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        let mut all_middle = true;
        for a in 0..n {
            match c % 3 {
                0 => {
                    lo[a] = -outer[a];
                    hi[a] = -inner[a];
                    all_middle = false;
                }
                1 => {
                    lo[a] = -inner[a];
                    hi[a] = inner[a];
                }
                _ => {
                    lo[a] = inner[a];
                    hi[a] = outer[a];
                    all_middle = false;
                }
            }
            c /= 3;
        }
        if !all_middle {
            sum += box_integral(f, &lo, &hi, rule);
        }
    }
    sum
}

/// `∫_{cell(0)} z_i² K` through anisotropic dyadic rings `B(2^{-m}) \ B(2^{-m-1})`, where
/// `B(s)` has half-edges `(h_j/2) s^{1/p_j}`. On ring `m` the reference kernel moment is
/// exactly `2^{-m q_i}` times its ring-0 value; rings past `RINGS` are summed with that ratio.
fn centre_moments(kernel: &Kernel, profile: &AnisotropyProfile, h: &[f64], rule: &Rule) -> Vec<f64> {
    let n = h.len();
    let p = profile.orders();
    let half_edges = |s: f64| -> Vec<f64> { (0..n).map(|j| 0.5 * h[j] * s.powf(1.0 / p[j])).collect() };
    (0..n)
        .map(|i| {
            let fk = |z: &[f64]| z[i] * z[i] * kernel.eval(profile, z);
            let mut sum = 0.0;
            let mut last = 0.0;
            for m in 0..=RINGS {
                let s = 0.5_f64.powi(m as i32);
                last = box_shell_integral(&fk, &half_edges(0.5 * s), &half_edges(s), rule);
                sum += last;
            }
            let r = 2.0_f64.powf(-profile.q()[i]);
            sum + last * r / (1.0 - r)
        })
        .collect()
}

/// Offset weights `w(k⊙h) = ∫_{k⊙h + [−h/2, h/2]ⁿ} K`, with `M_i / (2h_i²)` added at `±h e_i`,
/// for every `|k_i| ≤ ⌈far_radius / h_i⌉`.
pub fn assemble_weights(
    kernel: &Kernel,
    grid: &Grid,
    profile: &AnisotropyProfile,
    far_radius: f64,
) -> Result<WeightTable, SolverError> {
    let n = grid.dim();
    if profile.n() != n {
        return Err(SolverError::DimensionMismatch { grid: n, profile: profile.n() });
    }
    let h: Vec<f64> = (0..n).map(|a| grid.spacing(a)).collect();
    if let Some(a) = h.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(SolverError::ZeroSpacing(a));
    }
    if !(far_radius > 0.0 && far_radius.is_finite()) {
        return Err(SolverError::FarRadius(far_radius));
    }
    let half: Vec<usize> = h.iter().map(|s| (far_radius / s).ceil().max(1.0) as usize).collect();
    let size = half.iter().try_fold(1usize, |acc, &k| acc.checked_mul(2 * k + 1)).unwrap_or(usize::MAX);
    if size > WINDOW_LIMIT {
        return Err(SolverError::WindowTooLarge(size));
    }
    let (fine, mid, coarse) = (Rule::new(16), Rule::new(8), Rule::new(4));
    let moments = centre_moments(kernel, profile, &h, &fine);
    let mut table =
        WeightTable { half, spacing: h.clone(), weights: alloc::vec![0.0; size], moments, total: 0.0 };
    let f = |z: &[f64]| kernel.eval(profile, z);
    let (mut lo, mut hi) = (alloc::vec![0.0; n], alloc::vec![0.0; n]);
    let all: Vec<Vec<i64>> = table.offsets().collect();
    for k in all {
        // first nonzero coordinate positive: compute once, mirror to −k
        match k.iter().find(|&&c| c != 0) {
            Some(&c) if c > 0 => {}
            _ => continue,
        }
        let linf = k.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0);
        let rule = if linf <= 2 {
            &fine
        } else if linf <= 8 {
            &mid
        } else {
            &coarse
        };
        for a in 0..n {
            lo[a] = (k[a] as f64 - 0.5) * h[a];
            hi[a] = (k[a] as f64 + 0.5) * h[a];
        }
        let mut w = box_integral(&f, &lo, &hi, rule);
        if linf == 1 && k.iter().filter(|&&c| c != 0).count() == 1 {
            let axis = k.iter().position(|&c| c != 0).unwrap();
            w += table.moments[axis] / (2.0 * h[axis] * h[axis]);
        }
        if !(w >= 0.0) {
            return Err(SolverError::NegativeWeight { offset: k, value: w });
        }
        let neg: Vec<i64> = k.iter().map(|c| -c).collect();
        let (ip, im) = (table.flat(&k).unwrap(), table.flat(&neg).unwrap());
        table.weights[ip] = w;
        table.weights[im] = w;
    }
    table.total = table.weights.iter().sum();
    Ok(table)
}

#[derive(Clone, Debug)]
pub struct DiscreteProblem {
    /// Lattice of the closed box `Ω`; every lattice point is an unknown.
    pub grid: Grid,
    pub exterior: Exterior,
    pub family: KernelFamily,
    pub rhs: BoundedField,
    pub profile: AnisotropyProfile,
    /// Stop once `sup |I_h u − f| ≤ tolerance`.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Offsets with `|y_i| > far_radius + h_i` are dropped.
    pub far_radius: f64,
}

impl DiscreteProblem {
    /// Single kernel, default far radius twice the box diameter.
    pub fn linear(
        grid: Grid,
        exterior: Exterior,
        kernel: Kernel,
        rhs: BoundedField,
        profile: AnisotropyProfile,
        tolerance: f64,
        max_iters: usize,
    ) -> Self {
        let diam = grid.lo.iter().zip(&grid.hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        Self {
            grid,
            exterior,
            family: KernelFamily::single(kernel),
            rhs,
            profile,
            tolerance,
            max_iters,
            far_radius: 2.0 * diam,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `sup_x |I_h u(x) − f(x)|` at the returned iterate.
    pub residual: f64,
    pub converged: bool,
    pub tau: f64,
    pub max_weight_sum: f64,
    /// Bound on what the dropped offsets contribute to `|I u − I_h u|`.
    pub truncation_bound: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub field: BoundedField,
    pub report: SolveReport,
}

/// Weight tables and exterior sums for every member of a family on one lattice.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: Grid,
    exterior: Exterior,
    rows: Vec<usize>,
    tables: Vec<WeightTable>,
    /// `E_m(x) = Σ_{x+y ∉ Ω} w_m(y) g(x+y)`.
    ext: Vec<Vec<f64>>,
    reference: WeightTable,
    lambda: (f64, f64),
    max_upper: f64,
}

fn check_grid(grid: &Grid) -> Result<(), SolverError> {
    for a in 0..grid.dim() {
        let h = grid.spacing(a);
        if !(h > 0.0 && h.is_finite()) {
            return Err(SolverError::ZeroSpacing(a));
        }
    }
    Ok(())
}

impl DiscreteOperator {
    pub fn new(
        grid: &Grid,
        exterior: &Exterior,
        family: &KernelFamily,
        profile: &AnisotropyProfile,
        far_radius: f64,
    ) -> Result<Self, SolverError> {
        if family.members.is_empty() || family.members.iter().any(|r| r.is_empty()) {
            return Err(FamilyError::Empty.into());
        }
        check_grid(grid)?;
        let tables = family
            .iter()
            .map(|k| assemble_weights(k, grid, profile, far_radius))
            .collect::<Result<Vec<_>, _>>()?;
        let reference = assemble_weights(&Kernel::constant(1.0), grid, profile, far_radius)?;
        let mut op = Self {
            grid: grid.clone(),
            exterior: exterior.clone(),
            rows: family.members.iter().map(|r| r.len()).collect(),
            tables,
            ext: Vec::new(),
            reference,
            lambda: (profile.lambda_lo(), profile.lambda_hi()),
            max_upper: family.iter().map(|k| k.upper_multiplier()).fold(0.0, f64::max),
        };
        op.ext = (0..op.tables.len()).map(|m| op.exterior_sums(&op.tables[m])).collect();
        Ok(op)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn tables(&self) -> &[WeightTable] {
        &self.tables
    }

    pub fn reference_table(&self) -> &WeightTable {
        &self.reference
    }

    pub fn exterior_terms(&self, member: usize) -> &[f64] {
        &self.ext[member]
    }

    fn exterior_sums(&self, t: &WeightTable) -> Vec<f64> {
        let n = self.grid.dim();
        let mut out = alloc::vec![0.0; self.grid.len()];
        let mut z = alloc::vec![0.0; n];
        for (x, e) in out.iter_mut().enumerate() {
            let i = self.grid.multi_index(x);
            let mut s = 0.0;
            for (k, &w) in t.offsets().zip(&t.weights) {
                if w == 0.0 || self.inside(&i, &k) {
                    continue;
                }
                for a in 0..n {
                    z[a] = self.grid.coord(a, i[a] as i64 + k[a]);
                }
                s += w * self.exterior.eval(&z);
            }
            *e = s;
        }
        out
    }

    fn inside(&self, i: &[usize], k: &[i64]) -> bool {
        i.iter().zip(k).zip(&self.grid.counts).all(|((&ia, &ka), &c)| {
            let j = ia as i64 + ka;
            j >= 0 && j < c as i64
        })
    }

    /// `Σ_{z ∈ Ω lattice, z≠x} w(z−x) u(z)` in a fixed order.
    fn interior_sum(&self, t: &WeightTable, i: &[usize], u: &[f64]) -> f64 {
        let n = self.grid.dim();
        let counts = &self.grid.counts;
        let lo: Vec<usize> = (0..n).map(|a| i[a].saturating_sub(t.half[a])).collect();
        let hi: Vec<usize> = (0..n).map(|a| (i[a] + t.half[a]).min(counts[a] - 1)).collect();
        let mut j = lo.clone();
        let last = n - 1;
        let mut s = 0.0;
        loop {
            // flat indices of the row start in u and in the table
            let mut ju = 0usize;
            let mut jt = 0usize;
            for a in 0..last {
                ju = ju * counts[a] + j[a];
                jt = jt * (2 * t.half[a] + 1) + (j[a] + t.half[a] - i[a]);
            }
            ju = ju * counts[last] + lo[last];
            jt = jt * (2 * t.half[last] + 1) + (lo[last] + t.half[last] - i[last]);
            let len = hi[last] - lo[last] + 1;
            for (wv, uv) in t.weights[jt..jt + len].iter().zip(&u[ju..ju + len]) {
                s += wv * uv;
            }
            if last == 0 {
                return s;
            }
            let mut a = last;
            loop {
                if a == 0 {
                    return s;
                }
                a -= 1;
                if j[a] < hi[a] {
                    j[a] += 1;
                    break;
                }
                j[a] = lo[a];
            }
        }
    }

    /// `L_m u` at every lattice point, `u` given by its lattice values.
    pub fn apply_member(&self, member: usize, u: &[f64]) -> Vec<f64> {
        let t = &self.tables[member];
        (0..self.grid.len())
            .map(|x| {
                let i = self.grid.multi_index(x);
                2.0 * (self.interior_sum(t, &i, u) + self.ext[member][x] - t.total * u[x])
            })
            .collect()
    }

    /// `inf_α sup_β L_{αβ} u` at every lattice point.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let all: Vec<Vec<f64>> = (0..self.tables.len()).map(|m| self.apply_member(m, u)).collect();
        (0..self.grid.len()).map(|x| self.inf_sup(|m| all[m][x])).collect()
    }

    fn inf_sup(&self, mut value: impl FnMut(usize) -> f64) -> f64 {
        let mut m = 0;
        let mut best = f64::INFINITY;
        for &len in &self.rows {
            let mut row = f64::NEG_INFINITY;
            for _ in 0..len {
                row = row.max(value(m));
                m += 1;
            }
            best = best.min(row);
        }
        best
    }

    fn value_at(&self, u: &[f64], i: &[usize], k: &[i64], z: &mut [f64]) -> f64 {
        let n = self.grid.dim();
        if self.inside(i, k) {
            let mut flat = 0usize;
            for a in 0..n {
                flat = flat * self.grid.counts[a] + (i[a] as i64 + k[a]) as usize;
            }
            u[flat]
        } else {
            for a in 0..n {
                z[a] = self.grid.coord(a, i[a] as i64 + k[a]);
            }
            self.exterior.eval(z)
        }
    }

    /// Discrete `M^±_h u = Σ_{y≠0} w_ref(y) (Λδ⁺ − λδ⁻)` (λ, Λ swapped for `M⁻`).
    pub fn extremal(&self, u: &[f64], which: Extremal) -> Vec<f64> {
        let (lo, hi) = self.lambda;
        let (pos, neg) = match which {
            Extremal::Plus => (hi, lo),
            Extremal::Minus => (lo, hi),
        };
        let t = &self.reference;
        let n = self.grid.dim();
        let mut z = alloc::vec![0.0; n];
        (0..self.grid.len())
            .map(|x| {
                let i = self.grid.multi_index(x);
                let mut s = 0.0;
                for (k, &w) in t.offsets().zip(&t.weights) {
                    if w == 0.0 {
                        continue;
                    }
                    let neg_k: Vec<i64> = k.iter().map(|c| -c).collect();
                    let d = self.value_at(u, &i, &k, &mut z) + self.value_at(u, &i, &neg_k, &mut z) - 2.0 * u[x];
                    s += w * if d > 0.0 { pos * d } else { neg * d };
                }
                s
            })
            .collect()
    }

    /// `(min, max)` of the exterior data over the lattice points outside `Ω` that any
    /// window reaches.
    pub fn exterior_range(&self) -> (f64, f64) {
        let n = self.grid.dim();
        let reach: Vec<usize> =
            (0..n).map(|a| self.tables.iter().map(|t| t.half[a]).max().unwrap_or(0)).collect();
        let ext = Grid::new(
            (0..n).map(|a| self.grid.coord(a, -(reach[a] as i64))).collect(),
            (0..n).map(|a| self.grid.coord(a, (self.grid.counts[a] - 1 + reach[a]) as i64)).collect(),
            (0..n).map(|a| self.grid.counts[a] + 2 * reach[a]).collect(),
        );
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for flat in 0..ext.len() {
            let j = ext.multi_index(flat);
            let inside = (0..n).all(|a| j[a] >= reach[a] && j[a] < reach[a] + self.grid.counts[a]);
            if inside {
                continue;
            }
            let z: Vec<f64> = (0..n).map(|a| self.grid.coord(a, j[a] as i64 - reach[a] as i64)).collect();
            let v = self.exterior.eval(&z);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Bound on the offsets beyond the window for data bounded by `sup`.
    pub fn truncation_bound(&self, sup: f64, profile: &AnisotropyProfile) -> f64 {
        let cut = self.tables.iter().map(|t| t.cut_radius()).fold(f64::INFINITY, f64::min);
        let scale = (self.max_upper / profile.lambda_hi()).max(1.0);
        ops::tail_truncation_bound(sup, cut, profile).map_or(f64::INFINITY, |b| b * scale)
    }
}

/// Monotone damped Jacobi: `u ← inf sup (a_m u + 2τ(Σ_in w_m u + E_m)) − τ f`,
/// `a_m = 1 − 2τ S_m ≥ 0`, which is `u + τ (I_h u − f)`. Every operation has
/// nonnegative coefficients, so the floating-point map is monotone in `u` and `g`.
pub fn solve_dirichlet(problem: &DiscreteProblem) -> Result<Solution, SolverError> {
    if problem.grid.dim() != problem.profile.n() {
        return Err(SolverError::DimensionMismatch { grid: problem.grid.dim(), profile: problem.profile.n() });
    }
    let op = DiscreteOperator::new(
        &problem.grid,
        &problem.exterior,
        &problem.family,
        &problem.profile,
        problem.far_radius,
    )?;
    let initial: Vec<f64> = problem.grid.points().iter().map(|x| problem.exterior.eval(x)).collect();
    Ok(solve_with(&op, problem, initial))
}

/// [`solve_dirichlet`] with a prebuilt operator and starting iterate.
pub fn solve_with(op: &DiscreteOperator, problem: &DiscreteProblem, initial: Vec<f64>) -> Solution {
    let grid = &problem.grid;
    let len = grid.len();
    let s_max = op.tables.iter().map(|t| t.total).fold(0.0, f64::max);
    let tau = if s_max > 0.0 { (1.0 - 1e-9) / (2.0 * s_max) } else { 1.0 };
    let two_tau = 2.0 * tau;
    let a: Vec<f64> = op.tables.iter().map(|t| 1.0 - two_tau * t.total).collect();
    let f: Vec<f64> = grid.points().iter().map(|x| problem.rhs.eval(x)).collect();
    let idx: Vec<Vec<usize>> = (0..len).map(|x| grid.multi_index(x)).collect();
    let mut u = initial;
    let mut next = alloc::vec![0.0; len];
    let mut iterations = 0;
    let (residual, converged) = loop {
        let mut res = 0.0_f64;
        for x in 0..len {
            let t = op.inf_sup(|m| a[m] * u[x] + two_tau * (op.interior_sum(&op.tables[m], &idx[x], &u) + op.ext[m][x]));
            next[x] = t - tau * f[x];
            res = res.max(((next[x] - u[x]) / tau).abs());
        }
        if res <= problem.tolerance {
            break (res, true);
        }
        if iterations == problem.max_iters {
            break (res, false);
        }
        core::mem::swap(&mut u, &mut next);
        iterations += 1;
    };
    let field = BoundedField::on_grid(grid.clone(), u, problem.exterior.clone());
    let sup = field.sup_bound();
    let report = SolveReport {
        iterations,
        residual,
        converged,
        tau,
        max_weight_sum: s_max,
        truncation_bound: op.truncation_bound(sup, &problem.profile),
    };
    Solution { field, report }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn p1() -> AnisotropyProfile {
        AnisotropyProfile::new(&[1.0], 1.0, 2.0).unwrap()
    }

    #[test]
    fn one_dimensional_cells_match_closed_form() {
        let p = p1();
        let g = Grid::cube(1, 1.0, 33);
        let h = g.spacing(0);
        let t = assemble_weights(&Kernel::constant(1.0), &g, &p, 2.0).unwrap();
        let c = p.c_sigma();
        assert!((t.centre_moments()[0] - c * h).abs() < 1e-12 * c * h);
        assert_eq!(t.half_widths(), &[32]);
        assert_eq!(t.weight(&[33]), 0.0);
        for k in 2..=32i64 {
            let y = k as f64 * h;
            let exact = c * h / (y * y - h * h / 4.0);
            assert!((t.weight(&[k]) - exact).abs() < 1e-9 * exact, "k={k}");
            assert_eq!(t.weight(&[k]), t.weight(&[-k]));
        }
        let w1 = c * h / (h * h * 0.75) + c / (2.0 * h);
        assert!((t.weight(&[1]) - w1).abs() < 1e-12 * w1);
        assert_eq!(t.weight(&[0]), 0.0);
    }

    #[test]
    fn zero_data_gives_zero() {
        let p = p1();
        let prob = DiscreteProblem::linear(
            Grid::cube(1, 1.0, 17),
            Exterior::Constant(0.0),
            Kernel::constant(1.0),
            BoundedField::constant(1, 0.0),
            p,
            1e-10,
            10,
        );
        let s = solve_dirichlet(&prob).unwrap();
        assert!(s.report.converged);
        assert!(s.field.values().iter().all(|&v| v == 0.0));
        let _ = vec![0];
    }

    #[test]
    fn negative_weights_are_rejected() {
        let p = p1();
        let k = Kernel::Truncated {
            base: alloc::boxed::Box::new(Kernel::constant(1.0)),
            part: alloc::sync::Arc::new(|y: &[f64]| if y[0].abs() > 0.5 && y[0].abs() < 0.75 { -50.0 } else { 0.0 }),
            l1_bound: 25.0,
        };
        let e = assemble_weights(&k, &Grid::cube(1, 1.0, 17), &p, 2.0);
        assert!(matches!(e, Err(SolverError::NegativeWeight { .. })));
    }
}
