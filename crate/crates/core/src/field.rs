//! Real functions on ℝⁿ given by lattice values on a box plus an exterior rule.
//!
//! Inside the box the field is the multilinear interpolant of the lattice
//! values; outside it is whatever the exterior rule says.

use alloc::sync::Arc;
use alloc::vec::Vec;
use num_traits::Float;

pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// `(x, radius) ↦ M` with `|δ(u, x, y)| ≤ 2M|y|²` for `|y| ≤ radius`.
pub type LocalC11 = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
/// Nonincreasing `t ↦ sup_{|z| ≥ t} |u(z)|`.
pub type RadialEnvelope = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Axis-aligned lattice `lo_i + k h_i`, `k = 0..counts_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, counts: Vec<usize>) -> Self {
        assert!(lo.len() == hi.len() && lo.len() == counts.len() && !lo.is_empty());
        assert!(counts.iter().all(|&c| c >= 2), "every axis needs at least two lattice points");
        assert!(lo.iter().zip(&hi).all(|(a, b)| a < b), "empty box");
        Self { lo, hi, counts }
    }

    /// Cube `[-half, half]ⁿ` with `points` lattice points per axis.
    pub fn cube(n: usize, half: f64, points: usize) -> Self {
        Self::new(alloc::vec![-half; n], alloc::vec![half; n], alloc::vec![points; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.counts[axis] - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major multi-index (last axis fastest).
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = alloc::vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.counts[a];
            flat /= self.counts[a];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for a in 0..self.dim() {
            f = f * self.counts[a] + idx[a];
        }
        f
    }

    pub fn coord(&self, axis: usize, k: i64) -> f64 {
        self.lo[axis] + k as f64 * self.spacing(axis)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let idx = self.multi_index(flat);
        (0..self.dim()).map(|a| self.coord(a, idx[a] as i64)).collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|f| self.point(f)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lo).zip(&self.hi).all(|((v, a), b)| *v >= *a && *v <= *b)
    }
}

#[derive(Clone)]
pub enum Exterior {
    Constant(f64),
    Affine { offset: f64, slope: Vec<f64> },
    /// Arbitrary rule with a declared bound on its absolute value.
    Rule { f: PointFn, bound: f64 },
}

impl core::fmt::Debug for Exterior {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Exterior::Constant(c) => write!(f, "Constant({c})"),
            Exterior::Affine { offset, slope } => write!(f, "Affine({offset}, {slope:?})"),
            Exterior::Rule { bound, .. } => write!(f, "Rule(|g| <= {bound})"),
        }
    }
}

impl Exterior {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Exterior::Constant(c) => *c,
            Exterior::Affine { offset, slope } => offset + slope.iter().zip(x).map(|(a, b)| a * b).sum::<f64>(),
            Exterior::Rule { f, .. } => f(x),
        }
    }

    fn bound(&self) -> f64 {
        match self {
            Exterior::Constant(c) => c.abs(),
            Exterior::Affine { slope, .. } => {
                if slope.iter().all(|&s| s == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Exterior::Rule { bound, .. } => *bound,
        }
    }

    fn negated(&self) -> Self {
        match self {
            Exterior::Constant(c) => Exterior::Constant(-c),
            Exterior::Affine { offset, slope } => {
                Exterior::Affine { offset: -offset, slope: slope.iter().map(|s| -s).collect() }
            }
            Exterior::Rule { f, bound } => {
                let f = f.clone();
                Exterior::Rule { f: Arc::new(move |x| -f(x)), bound: *bound }
            }
        }
    }
}

#[derive(Clone)]
enum C11 {
    Global(f64),
    Local(LocalC11),
    Estimate,
}

#[derive(Clone)]
pub struct BoundedField {
    n: usize,
    grid: Option<Grid>,
    values: Vec<f64>,
    exterior: Exterior,
    sup_bound: f64,
    c11: C11,
    radial: Option<RadialEnvelope>,
}

impl core::fmt::Debug for BoundedField {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("BoundedField")
            .field("n", &self.n)
            .field("grid", &self.grid)
            .field("exterior", &self.exterior)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

impl BoundedField {
    /// Lattice values (row-major, see [`Grid::multi_index`]) plus an exterior rule.
    pub fn on_grid(grid: Grid, values: Vec<f64>, exterior: Exterior) -> Self {
        assert_eq!(values.len(), grid.len(), "one value per lattice point");
        let n = grid.dim();
        let vmax = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let sup_bound = vmax.max(exterior.bound());
        let m = estimate_grid_c11(&grid, &values);
        Self { n, grid: Some(grid), values, exterior, sup_bound, c11: C11::Global(m), radial: None }
    }

    /// Samples `f` on the grid; the exterior is kept as given.
    pub fn sample(grid: Grid, f: impl Fn(&[f64]) -> f64, exterior: Exterior) -> Self {
        let values = (0..grid.len()).map(|k| f(&grid.point(k))).collect();
        Self::on_grid(grid, values, exterior)
    }

    /// A field given everywhere by a rule; `bound` must dominate `|f|`.
    pub fn analytic(n: usize, f: PointFn, bound: f64) -> Self {
        Self {
            n,
            grid: None,
            values: Vec::new(),
            exterior: Exterior::Rule { f, bound },
            sup_bound: bound,
            c11: C11::Estimate,
            radial: None,
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self {
            n,
            grid: None,
            values: Vec::new(),
            exterior: Exterior::Constant(c),
            sup_bound: c.abs(),
            c11: C11::Global(0.0),
            radial: None,
        }
    }

    pub fn affine(offset: f64, slope: Vec<f64>) -> Self {
        let n = slope.len();
        let ext = Exterior::Affine { offset, slope };
        let sup_bound = ext.bound().max(offset.abs());
        Self { n, grid: None, values: Vec::new(), exterior: ext, sup_bound, c11: C11::Global(0.0), radial: None }
    }

    pub fn with_c11_bound(mut self, m: f64) -> Self {
        self.c11 = C11::Global(m);
        self
    }

    pub fn with_local_c11(mut self, f: LocalC11) -> Self {
        self.c11 = C11::Local(f);
        self
    }

    pub fn with_radial_envelope(mut self, f: RadialEnvelope) -> Self {
        self.radial = Some(f);
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> Option<&Grid> {
        self.grid.as_ref()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn exterior(&self) -> &Exterior {
        &self.exterior
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if let Some(g) = &self.grid {
            if g.contains(x) {
                return multilinear(g, &self.values, x);
            }
        }
        self.exterior.eval(x)
    }

    /// `-u`, evaluated with exactly negated arithmetic.
    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        out.values = self.values.iter().map(|v| -v).collect();
        out.exterior = self.exterior.negated();
        out
    }

    /// C^{1,1} constant `M` near `x`, meaning `|δ(u,x,y)| ≤ 2M|y|²` for `|y| ≤ radius`.
    pub fn c11_at(&self, x: &[f64], radius: f64) -> f64 {
        match &self.c11 {
            C11::Global(m) => *m,
            C11::Local(f) => f(x, radius),
            C11::Estimate => self.local_c11_estimate(x, radius),
        }
    }

    fn local_c11_estimate(&self, x: &[f64], radius: f64) -> f64 {
        let n = self.n;
        let mut m = 0.0_f64;
        let mut y = alloc::vec![0.0; n];
        let mut probe = |dir: &[f64], h: f64, m: &mut f64| {
            for k in 0..n {
                y[k] = dir[k] * h;
            }
            let d = second_difference_raw(self, x, &y);
            *m = m.max(d.abs() / (2.0 * h * h));
        };
        let mut dir = alloc::vec![0.0; n];
        for h in [radius, 0.5 * radius] {
            if !(h > 0.0) {
                continue;
            }
            for i in 0..n {
                dir.iter_mut().for_each(|d| *d = 0.0);
                dir[i] = 1.0;
                probe(&dir, h, &mut m);
                for j in (i + 1)..n {
                    for sgn in [1.0, -1.0] {
                        dir.iter_mut().for_each(|d| *d = 0.0);
                        dir[i] = core::f64::consts::FRAC_1_SQRT_2;
                        dir[j] = sgn * core::f64::consts::FRAC_1_SQRT_2;
                        probe(&dir, h, &mut m);
                    }
                }
            }
        }
        // safety factor for the unprobed directions
        2.0 * m
    }

    /// Interval containing `δ(u, x, y)` for every `y` with `|y| ≥ r_tail`.
    pub fn tail_delta_interval(&self, x: &[f64], r_tail: f64) -> (f64, f64) {
        let ux = self.eval(x);
        if let Some(env) = &self.radial {
            let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let e = 2.0 * env((r_tail - xn).max(0.0));
            return (-e - 2.0 * ux, e - 2.0 * ux);
        }
        let outside = match &self.grid {
            None => true,
            Some(g) => {
                // every point at distance ≥ r_tail from x must leave the box
                let far: f64 = (0..self.n)
                    .map(|i| {
                        let d = (x[i] - g.lo[i]).abs().max((g.hi[i] - x[i]).abs());
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt();
                r_tail > far
            }
        };
        match &self.exterior {
            Exterior::Constant(c) if outside => {
                let d = 2.0 * c - 2.0 * ux;
                (d, d)
            }
            Exterior::Affine { .. } if outside => {
                let d = 2.0 * self.exterior.eval(x) - 2.0 * ux;
                (d, d)
            }
            _ => (-2.0 * self.sup_bound - 2.0 * ux, 2.0 * self.sup_bound - 2.0 * ux),
        }
    }
}

/// `u(x+y) + u(x-y) - 2u(x)`.
pub(crate) fn second_difference_raw(u: &BoundedField, x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut a = [0.0_f64; 8];
    let mut b = [0.0_f64; 8];
    if n <= 8 {
        for i in 0..n {
            a[i] = x[i] + y[i];
            b[i] = x[i] - y[i];
        }
        (u.eval(&a[..n]) + u.eval(&b[..n])) - 2.0 * u.eval(x)
    } else {
        let a: Vec<f64> = x.iter().zip(y).map(|(p, q)| p + q).collect();
        let b: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
        (u.eval(&a) + u.eval(&b)) - 2.0 * u.eval(x)
    }
}

fn multilinear(g: &Grid, values: &[f64], x: &[f64]) -> f64 {
    let n = g.dim();
    let mut base = [0usize; 8];
    let mut t = [0.0_f64; 8];
    assert!(n <= 8, "grid fields support at most 8 dimensions");
    for a in 0..n {
        let h = g.spacing(a);
        let s = (x[a] - g.lo[a]) / h;
        let mut k = s.floor() as i64;
        k = k.clamp(0, g.counts[a] as i64 - 2);
        base[a] = k as usize;
        t[a] = s - k as f64;
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << n) {
        let mut w = 1.0;
        let mut flat = 0usize;
        for a in 0..n {
            let bit = (corner >> a) & 1;
            w *= if bit == 1 { t[a] } else { 1.0 - t[a] };
            flat = flat * g.counts[a] + base[a] + bit;
        }
        if w != 0.0 {
            acc += w * values[flat];
        }
    }
    acc
}

/// `M = ½ max ‖D²u‖_F` from lattice second differences (including mixed ones).
fn estimate_grid_c11(g: &Grid, values: &[f64]) -> f64 {
    let n = g.dim();
    let mut m = 0.0_f64;
    let strides: Vec<usize> = (0..n).map(|a| g.counts[a + 1..].iter().product()).collect();
    for flat in 0..g.len() {
        let idx = g.multi_index(flat);
        if (0..n).any(|a| idx[a] == 0 || idx[a] + 1 == g.counts[a]) {
            continue;
        }
        let mut frob = 0.0;
        for i in 0..n {
            let hi = g.spacing(i);
            let d = (values[flat + strides[i]] + values[flat - strides[i]] - 2.0 * values[flat]) / (hi * hi);
            frob += d * d;
            for j in (i + 1)..n {
                let hj = g.spacing(j);
                let (si, sj) = (strides[i], strides[j]);
                let d = (values[flat + si + sj] - values[flat + si - sj] - values[flat - si + sj]
                    + values[flat - si - sj])
                    / (4.0 * hi * hj);
                frob += 2.0 * d * d;
            }
        }
        m = m.max(frob.sqrt());
    }
    0.5 * m
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn multilinear_reproduces_affine() {
        let g = Grid::cube(2, 1.0, 5);
        let f = BoundedField::sample(g, |x| 1.0 + 2.0 * x[0] - 3.0 * x[1], Exterior::Constant(0.0));
        let v = f.eval(&[0.3, -0.7]);
        assert!((v - (1.0 + 0.6 + 2.1)).abs() < 1e-14);
        assert_eq!(f.eval(&[1.5, 0.0]), 0.0);
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = Grid::new(vec![0.0, -1.0, 2.0], vec![1.0, 1.0, 3.0], vec![3, 4, 2]);
        for k in 0..g.len() {
            assert_eq!(g.flat_index(&g.multi_index(k)), k);
        }
    }

    #[test]
    fn grid_c11_of_quadratic() {
        let g = Grid::cube(2, 1.0, 9);
        let f = BoundedField::sample(g, |x| x[0] * x[0], Exterior::Constant(0.0));
        // D²u = diag(2, 0), so M = 1
        assert!((f.c11_at(&[0.0, 0.0], 0.1) - 1.0).abs() < 1e-12);
    }
}
