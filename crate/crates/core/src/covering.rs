//! Bounded-overlap selection from a parametrised family of centred rectangles,
//! and exact overlap counting for finite families of open boxes.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;
use thiserror::Error;

/// Open axis-parallel box `Π (lo_i, hi_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn centered(center: &[f64], half: &[f64]) -> Self {
        Self {
            lo: center.iter().zip(half).map(|(c, h)| c - h).collect(),
            hi: center.iter().zip(half).map(|(c, h)| c + h).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| a < v && v < b)
    }

    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| a <= v && v <= b)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a).max(0.0)).product()
    }

    pub fn intersection_volume(&self, other: &AxisBox) -> f64 {
        let mut v = 1.0;
        for i in 0..self.dim() {
            let w = self.hi[i].min(other.hi[i]) - self.lo[i].max(other.lo[i]);
            if w <= 0.0 {
                return 0.0;
            }
            v *= w;
        }
        v
    }

    pub fn intersects(&self, other: &AxisBox) -> bool {
        (0..self.dim()).all(|i| self.lo[i] < other.hi[i] && other.lo[i] < self.hi[i])
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn diameter(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
    }

    /// The box with the same centre and every edge multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let center = self.center();
        let half: Vec<f64> = self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * c * (b - a)).collect();
        Self::centered(&center, &half)
    }
}

/// Edge length `h_i(t)` along one axis.
pub type EdgeLaw = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct ParamRectangleFamily {
    pub points: Vec<Vec<f64>>,
    pub params: Vec<f64>,
    pub edge_laws: Vec<EdgeLaw>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoverError {
    #[error("edge law {axis} is not increasing with h(0) = 0 (at t = {t})")]
    NonMonotone { axis: usize, t: f64 },
    #[error("points, parameters and edge laws disagree in size or dimension")]
    Shape,
    #[error("parameter {0} must be nonnegative")]
    NegativeParameter(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcCover {
    /// Indices into the family's points, in selection order.
    pub selected: Vec<usize>,
    pub rectangles: Vec<AxisBox>,
    /// Largest number of selected rectangles containing a point of `S`.
    pub multiplicity_on_points: usize,
    /// Largest number of selected rectangles containing a common point of ℝⁿ.
    pub multiplicity: usize,
    /// `2ⁿ`: one rectangle per closed orthant around any point.
    pub bound: usize,
}

impl ParamRectangleFamily {
    pub fn dim(&self) -> usize {
        self.edge_laws.len()
    }

    pub fn rectangle(&self, j: usize) -> AxisBox {
        let t = self.params[j];
        let half: Vec<f64> = self.edge_laws.iter().map(|h| 0.5 * h(t)).collect();
        AxisBox::centered(&self.points[j], &half)
    }

    fn validate(&self) -> Result<(), CoverError> {
        let n = self.dim();
        if self.points.len() != self.params.len() || self.points.iter().any(|p| p.len() != n) {
            return Err(CoverError::Shape);
        }
        if let Some(t) = self.params.iter().find(|t| !(**t >= 0.0)) {
            return Err(CoverError::NegativeParameter(*t));
        }
        let mut ts: Vec<f64> = self.params.clone();
        ts.push(0.0);
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        ts.dedup();
        for (axis, h) in self.edge_laws.iter().enumerate() {
            if h(0.0) != 0.0 {
                return Err(CoverError::NonMonotone { axis, t: 0.0 });
            }
            for w in ts.windows(2) {
                if !(h(w[1]) > h(w[0])) {
                    return Err(CoverError::NonMonotone { axis, t: w[1] });
                }
            }
        }
        Ok(())
    }
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).unwrap_or(Ordering::Equal) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Greedy selection: largest parameter first (ties by lexicographic centre),
/// discarding every point already inside a selected rectangle.
pub fn cc_cover(family: &ParamRectangleFamily) -> Result<CcCover, CoverError> {
    family.validate()?;
    let n = family.dim();
    let mut order: Vec<usize> = (0..family.points.len()).collect();
    order.sort_by(|&a, &b| {
        family.params[b]
            .partial_cmp(&family.params[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| lex(&family.points[a], &family.points[b]))
    });
    let mut covered = alloc::vec![false; family.points.len()];
    let mut selected = Vec::new();
    let mut rectangles: Vec<AxisBox> = Vec::new();
    for &j in &order {
        if covered[j] {
            continue;
        }
        let rect = family.rectangle(j);
        for (k, p) in family.points.iter().enumerate() {
            if !covered[k] && (k == j || rect.contains(p)) {
                covered[k] = true;
            }
        }
        selected.push(j);
        rectangles.push(rect);
    }
    let multiplicity_on_points =
        family.points.iter().map(|p| rectangles.iter().filter(|r| r.contains(p)).count()).max().unwrap_or(0);
    let multiplicity = max_overlap(&rectangles);
    Ok(CcCover { selected, rectangles, multiplicity_on_points, multiplicity, bound: 1 << n })
}

/// Exact maximum overlap of open boxes: compress each axis to the box faces and
/// accumulate an n-dimensional difference array over the arrangement cells.
pub fn max_overlap(boxes: &[AxisBox]) -> usize {
    let Some(first) = boxes.first() else { return 0 };
    let n = first.dim();
    let mut coords: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut c: Vec<f64> = boxes.iter().flat_map(|b| [b.lo[i], b.hi[i]]).collect();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        c.dedup();
        coords.push(c);
    }
    // arrangement cell k on axis i is (coords[i][k], coords[i][k+1]); the array has one
    // extra slot per axis for the difference markers
    let dims: Vec<usize> = coords.iter().map(|c| c.len()).collect();
    let total: usize = dims.iter().product();
    let mut diff = alloc::vec![0i32; total];
    let pos = |c: &[f64], v: f64| c.binary_search_by(|p| p.partial_cmp(&v).unwrap_or(Ordering::Equal)).unwrap_or(0);
    let mut lo_idx = alloc::vec![0usize; n];
    let mut hi_idx = alloc::vec![0usize; n];
    for b in boxes {
        if (0..n).any(|i| !(b.lo[i] < b.hi[i])) {
            continue;
        }
        for i in 0..n {
            lo_idx[i] = pos(&coords[i], b.lo[i]);
            hi_idx[i] = pos(&coords[i], b.hi[i]);
        }
        // inclusion-exclusion over the 2ⁿ corners
        for mask in 0..(1usize << n) {
            let mut flat = 0;
            let mut sign = 1;
            for i in 0..n {
                let k = if mask >> i & 1 == 1 {
                    sign = -sign;
                    hi_idx[i]
                } else {
                    lo_idx[i]
                };
                flat = flat * dims[i] + k;
            }
            diff[flat] += sign;
        }
    }
    // prefix sums along each axis
    let mut stride = 1;
    for i in (0..n).rev() {
        let len = dims[i];
        for flat in 0..total {
            let k = (flat / stride) % len;
            if k > 0 {
                diff[flat] += diff[flat - stride];
            }
        }
        stride *= len;
    }
    diff.iter().copied().max().unwrap_or(0).max(0) as usize
}

/// Number of boxes containing `x`.
pub fn multiplicity_at(boxes: &[AxisBox], x: &[f64]) -> usize {
    boxes.iter().filter(|b| b.contains(x)).count()
}
