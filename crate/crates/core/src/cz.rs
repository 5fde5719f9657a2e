//! Calderón–Zygmund selection with the anisotropic boxes `Q̃` on lattice sets.
//!
//! Sets are unions of generation-`g` dyadic cells of `Q₁`, so every measure is a
//! finite sum of box overlaps. The density test `|A ∩ Q̃| > δ|Q̃|` is applied to
//! every dyadic cube down to the lattice generation; deeper cubes are not visited.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use thiserror::Error;

use crate::covering::{max_overlap, AxisBox};
use crate::dyadic::DyadicCube;
use crate::profile::AnisotropyProfile;

/// Union of generation-`generation` cells of `Q₁`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeSet {
    n: usize,
    generation: u32,
    mask: Vec<bool>,
}

impl LatticeSet {
    pub fn empty(n: usize, generation: u32) -> Self {
        let side = 1usize << generation;
        Self { n, generation, mask: alloc::vec![false; side.pow(n as u32)] }
    }

    pub fn full(n: usize, generation: u32) -> Self {
        let mut s = Self::empty(n, generation);
        s.mask.iter_mut().for_each(|m| *m = true);
        s
    }

    /// Cells given by index vectors in `[0, 2^generation)ⁿ`; order and repeats are irrelevant.
    pub fn from_cells(n: usize, generation: u32, cells: &[Vec<u64>]) -> Result<Self, CzError> {
        let mut s = Self::empty(n, generation);
        for c in cells {
            if c.len() != n || c.iter().any(|k| *k >> generation != 0) {
                return Err(CzError::CellOutOfRange);
            }
            let f = s.flat(c);
            s.mask[f] = true;
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    fn side(&self) -> usize {
        1 << self.generation
    }

    fn flat(&self, idx: &[u64]) -> usize {
        idx.iter().fold(0, |acc, k| acc * self.side() + *k as usize)
    }

    fn unflat(&self, mut f: usize) -> Vec<u64> {
        let mut idx = alloc::vec![0u64; self.n];
        for i in (0..self.n).rev() {
            idx[i] = (f % self.side()) as u64;
            f /= self.side();
        }
        idx
    }

    pub fn contains_cell(&self, idx: &[u64]) -> bool {
        self.mask[self.flat(idx)]
    }

    pub fn insert(&mut self, idx: &[u64]) {
        let f = self.flat(idx);
        self.mask[f] = true;
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn cell_volume(&self) -> f64 {
        (-((self.n as u32 * self.generation) as f64)).exp2()
    }

    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.cell_volume()
    }

    /// Sorted cell indices.
    pub fn cells(&self) -> Vec<Vec<u64>> {
        (0..self.mask.len()).filter(|f| self.mask[*f]).map(|f| self.unflat(f)).collect()
    }

    pub fn is_subset(&self, other: &LatticeSet) -> bool {
        self.mask.iter().zip(&other.mask).all(|(a, b)| !*a || *b)
    }

    /// Index range of cells meeting `b` in positive measure, per axis.
    fn cell_range(&self, b: &AxisBox) -> Option<Vec<(usize, usize)>> {
        let side = self.side() as f64;
        let mut r = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let lo = ((b.lo[i] + 0.5) * side).floor().max(0.0);
            let hi = ((b.hi[i] + 0.5) * side).ceil().min(side);
            if !(lo < hi) {
                return None;
            }
            r.push((lo as usize, hi as usize));
        }
        Some(r)
    }

    fn for_cells_meeting(&self, b: &AxisBox, mut visit: impl FnMut(&[u64], f64)) {
        let Some(range) = self.cell_range(b) else { return };
        let e = 1.0 / self.side() as f64;
        let mut idx: Vec<u64> = range.iter().map(|(lo, _)| *lo as u64).collect();
        loop {
            let mut v = 1.0;
            for i in 0..self.n {
                let lo = -0.5 + idx[i] as f64 * e;
                let w = (lo + e).min(b.hi[i]) - lo.max(b.lo[i]);
                v *= w.max(0.0);
            }
            if v > 0.0 {
                visit(&idx, v);
            }
            let mut axis = self.n;
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                idx[axis] += 1;
                if (idx[axis] as usize) < range[axis].1 {
                    break;
                }
                idx[axis] = range[axis].0 as u64;
            }
        }
    }

    /// `|S ∩ b|`.
    pub fn intersection_measure(&self, b: &AxisBox) -> f64 {
        let mut total = 0.0;
        self.for_cells_meeting(b, |idx, v| {
            if self.contains_cell(idx) {
                total += v;
            }
        });
        total
    }

    /// Some cell meeting `b ∩ Q₁` in positive measure that is not in the set.
    pub fn first_missing(&self, b: &AxisBox) -> Option<Vec<u64>> {
        let mut found = None;
        self.for_cells_meeting(b, |idx, _| {
            if found.is_none() && !self.contains_cell(idx) {
                found = Some(idx.to_vec());
            }
        });
        found
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CzError {
    #[error("delta must lie in (0, 1], got {0}")]
    Delta(f64),
    #[error("A and B must share dimension and generation")]
    Mismatch,
    #[error("cell index out of range")]
    CellOutOfRange,
    #[error("A is not contained in B")]
    NotSubset,
    #[error("|A| = {measure} exceeds delta = {delta}")]
    TooLarge { measure: f64, delta: f64 },
    #[error("hypothesis fails at {witness:?}: its predecessor's box leaves B at cell {cell:?}")]
    Hypothesis { witness: DyadicCube, cell: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CzDecomposition {
    /// The selected boxes `R_j`.
    pub boxes: Vec<AxisBox>,
    /// Dyadic cube whose `Q̃` is each `R_j`.
    pub sources: Vec<DyadicCube>,
    pub maximal_bad: Vec<DyadicCube>,
    /// No dyadic cube has density above δ, so the hypothesis constrains nothing.
    pub hypothesis_vacuous: bool,
    pub measure_a: f64,
    pub measure_b: f64,
    /// `max_j |A ∩ R_j| / |R_j|`.
    pub max_density: f64,
    pub covers_a: bool,
    pub overlap: usize,
    /// `|A| / (δ|B|)`, or 0 when `A` is empty.
    pub c_measured: f64,
    /// The covering constant `2ⁿ`.
    pub c_bound: f64,
    pub certified: bool,
}

/// Selects `R_j = (Q_pred)~` for every maximal cube `Q` with `|A ∩ Q̃| > δ|Q̃|`, and
/// `R_j = Q̃` for cells of `A` no such cube contains.
pub fn cz_decompose(
    a: &LatticeSet,
    b: &LatticeSet,
    delta: f64,
    profile: &AnisotropyProfile,
) -> Result<CzDecomposition, CzError> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(CzError::Delta(delta));
    }
    if a.n != b.n || a.generation != b.generation || a.n != profile.n() {
        return Err(CzError::Mismatch);
    }
    if !a.is_subset(b) {
        return Err(CzError::NotSubset);
    }
    let measure_a = a.measure();
    if measure_a > delta {
        return Err(CzError::TooLarge { measure: measure_a, delta });
    }
    let g = a.generation;
    let density = |q: &DyadicCube| {
        let t = q.tilde(profile);
        a.intersection_measure(&t) / t.volume()
    };

    // every bad cube is checked; only maximal ones feed the selection
    let mut maximal_bad = Vec::new();
    let mut any_bad = false;
    let mut inside_bad = LatticeSet::empty(a.n, g);
    let mut level = alloc::vec![DyadicCube::root(a.n)];
    let mut under_bad: BTreeSet<DyadicCube> = BTreeSet::new();
    for _gen in 0..=g {
        let mut next = Vec::new();
        for q in level {
            let covered = q.generation > 0 && under_bad.contains(&q.predecessor().expect("non-root"));
            if density(&q) > delta {
                any_bad = true;
                let pred = q.predecessor().map_err(|_| CzError::Mismatch)?;
                let pt = pred.tilde(profile);
                let clipped = clip_to_unit(&pt);
                if let Some(cell) = b.first_missing(&clipped) {
                    return Err(CzError::Hypothesis { witness: q, cell });
                }
                if !covered {
                    maximal_bad.push(q.clone());
                    mark_cells(&mut inside_bad, &q);
                }
                under_bad.insert(q.clone());
            } else if covered {
                under_bad.insert(q.clone());
            }
            if q.generation < g {
                next.extend(q.children());
            }
        }
        level = next;
    }

    let mut sources: BTreeSet<DyadicCube> = BTreeSet::new();
    for q in &maximal_bad {
        sources.insert(q.predecessor().expect("maximal bad cube is never the root"));
    }
    for cell in a.cells() {
        if !inside_bad.contains_cell(&cell) {
            sources.insert(DyadicCube { generation: g, index: cell });
        }
    }
    let sources: Vec<DyadicCube> = sources.into_iter().collect();
    let boxes: Vec<AxisBox> = sources.iter().map(|q| q.tilde(profile)).collect();
    let max_density =
        boxes.iter().map(|r| a.intersection_measure(r) / r.volume()).fold(0.0_f64, f64::max);
    let covers_a = a.cells().iter().all(|c| {
        let cb = DyadicCube { generation: g, index: c.clone() }.as_box();
        boxes.iter().any(|r| (0..a.n).all(|i| r.lo[i] <= cb.lo[i] && cb.hi[i] <= r.hi[i]))
    });
    let measure_b = b.measure();
    let c_measured = if measure_a == 0.0 { 0.0 } else { measure_a / (delta * measure_b) };
    let c_bound = (1u64 << a.n) as f64;
    Ok(CzDecomposition {
        overlap: max_overlap(&boxes),
        boxes,
        sources,
        maximal_bad,
        hypothesis_vacuous: !any_bad,
        measure_a,
        measure_b,
        max_density,
        covers_a,
        c_measured,
        c_bound,
        certified: covers_a && max_density <= delta && c_measured <= c_bound,
    })
}

fn clip_to_unit(b: &AxisBox) -> AxisBox {
    AxisBox {
        lo: b.lo.iter().map(|v| v.max(-0.5)).collect(),
        hi: b.hi.iter().map(|v| v.min(0.5)).collect(),
    }
}

fn mark_cells(set: &mut LatticeSet, q: &DyadicCube) {
    let shift = set.generation - q.generation;
    let n = set.n;
    let span = 1u64 << shift;
    let mut idx: Vec<u64> = q.index.iter().map(|k| k << shift).collect();
    let base = idx.clone();
    loop {
        set.insert(&idx);
        let mut axis = n;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < base[axis] + span {
                break;
            }
            idx[axis] = base[axis];
        }
    }
}
