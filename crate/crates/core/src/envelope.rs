//! Concave envelope of `u⁺` over `B₃` (zero outside), contact sets and the
//! measure of the superdifferential image, for `n ≤ 2`.

use alloc::vec::Vec;
use core::f64::consts::PI;
use num_traits::Float;
use thiserror::Error;

use crate::covering::AxisBox;
use crate::field::{BoundedField, Grid};
use crate::hull::{self, convex_hull_2d, polygon_area};

/// Radius of the envelope's domain.
pub const ENVELOPE_RADIUS: f64 = 3.0;
/// Vertices of the polygon approximating `∂B₃` in two dimensions.
pub const RING_POINTS: usize = 512;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvelopeError {
    #[error("envelopes are implemented for n = 1, 2 (got {0})")]
    Dimension(usize),
    #[error("u = {value} > 0 outside B_1 at {point:?}")]
    PositiveOutside { point: Vec<f64>, value: f64 },
    #[error("the sampling grid must contain [-1, 1]^n")]
    GridTooSmall,
    #[error("hull construction failed: {0}")]
    Hull(#[from] hull::HullError),
    #[error("samples and values differ in length")]
    Shape,
}

/// Affine function `grad · x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub grad: Vec<f64>,
    pub offset: f64,
}

impl Plane {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.offset + self.grad.iter().zip(x).map(|(g, v)| g * v).sum::<f64>()
    }
}

/// Linear piece of Γ: a segment (n = 1) or triangle (n = 2) of hull vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub vertices: Vec<usize>,
    pub plane: Plane,
}

#[derive(Debug, Clone)]
pub struct ConcaveEnvelope {
    n: usize,
    /// Hull vertex positions and heights.
    pub vertices: Vec<Vec<f64>>,
    pub heights: Vec<f64>,
    pub cells: Vec<Cell>,
    vertex_cells: Vec<Vec<usize>>,
    grid: Grid,
    grid_values: Vec<f64>,
    buckets: Buckets,
    /// `u⁺` vanishes on every sample, so Γ ≡ 0.
    pub flat: bool,
}

#[derive(Debug, Clone, Default)]
struct Buckets {
    side: usize,
    lists: Vec<Vec<usize>>,
}

impl Buckets {
    const SPAN: f64 = 2.0 * ENVELOPE_RADIUS;

    fn coord(&self, v: f64) -> usize {
        let t = ((v + ENVELOPE_RADIUS) / Self::SPAN * self.side as f64).floor();
        (t.max(0.0) as usize).min(self.side - 1)
    }
}

fn in_ball(x: &[f64]) -> bool {
    x.iter().map(|v| v * v).sum::<f64>() < ENVELOPE_RADIUS * ENVELOPE_RADIUS
}

fn barycentric(p: &[f64], a: &[f64], b: &[f64], c: &[f64]) -> [f64; 3] {
    let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
    let l1 = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / det;
    let l2 = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / det;
    [l1, l2, 1.0 - l1 - l2]
}

fn plane_through(pts: &[&[f64]], z: &[f64]) -> Plane {
    if pts.len() == 2 {
        let g = (z[1] - z[0]) / (pts[1][0] - pts[0][0]);
        return Plane { grad: alloc::vec![g], offset: z[0] - g * pts[0][0] };
    }
    let (a, b, c) = (pts[0], pts[1], pts[2]);
    let (e1, e2) = ([b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]]);
    let (d1, d2) = (z[1] - z[0], z[2] - z[0]);
    let det = e1[0] * e2[1] - e1[1] * e2[0];
    let gx = (d1 * e2[1] - d2 * e1[1]) / det;
    let gy = (e1[0] * d2 - e2[0] * d1) / det;
    Plane { grad: alloc::vec![gx, gy], offset: z[0] - gx * a[0] - gy * a[1] }
}

/// Envelope of `u` sampled on `grid`, after checking `u ≤ tol` outside `B₁`
/// at the grid points and on rings of radii in `[1, 3]`.
pub fn concave_envelope(u: &BoundedField, grid: &Grid, tol: f64) -> Result<ConcaveEnvelope, EnvelopeError> {
    let n = grid.dim();
    if n == 0 || n > 2 {
        return Err(EnvelopeError::Dimension(n));
    }
    if (0..n).any(|i| grid.lo[i] > -1.0 || grid.hi[i] < 1.0) {
        return Err(EnvelopeError::GridTooSmall);
    }
    let check = |x: &[f64]| -> Result<(), EnvelopeError> {
        let v = u.eval(x);
        if v > tol {
            return Err(EnvelopeError::PositiveOutside { point: x.to_vec(), value: v });
        }
        Ok(())
    };
    let samples: Vec<Vec<f64>> = grid.points();
    let values: Vec<f64> = samples.iter().map(|x| u.eval(x)).collect();
    for (x, v) in samples.iter().zip(&values) {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        if r2 >= 1.0 && *v > tol {
            return Err(EnvelopeError::PositiveOutside { point: x.clone(), value: *v });
        }
    }
    for k in 0..64 {
        let r = 1.0 + 2.0 * k as f64 / 63.0;
        if n == 1 {
            check(&[r])?;
            check(&[-r])?;
        } else {
            for j in 0..64 {
                let t = 2.0 * PI * (j as f64 + 0.5 * (k % 2) as f64) / 64.0;
                check(&[r * t.cos(), r * t.sin()])?;
            }
        }
    }
    envelope_of_samples(grid.clone(), &values)
}

/// Envelope of the positive part of grid samples, without support checks.
pub fn envelope_of_samples(grid: Grid, values: &[f64]) -> Result<ConcaveEnvelope, EnvelopeError> {
    let n = grid.dim();
    if n == 0 || n > 2 {
        return Err(EnvelopeError::Dimension(n));
    }
    if values.len() != grid.len() {
        return Err(EnvelopeError::Shape);
    }
    let mut pos_points: Vec<Vec<f64>> = Vec::new();
    let mut pos_values: Vec<f64> = Vec::new();
    for (f, v) in values.iter().enumerate() {
        let x = grid.point(f);
        if *v > 0.0 && in_ball(&x) {
            pos_points.push(x);
            pos_values.push(*v);
        }
    }
    let mut env = if pos_points.is_empty() {
        ConcaveEnvelope {
            n,
            vertices: Vec::new(),
            heights: Vec::new(),
            cells: Vec::new(),
            vertex_cells: Vec::new(),
            grid: grid.clone(),
            grid_values: alloc::vec![0.0; grid.len()],
            buckets: Buckets::default(),
            flat: true,
        }
    } else if n == 1 {
        hull_1d(&pos_points, &pos_values, grid.clone())
    } else {
        hull_2d(&pos_points, &pos_values, grid.clone())?
    };
    if !env.flat {
        env.rasterise();
    }
    Ok(env)
}

fn finish(n: usize, vertices: Vec<Vec<f64>>, heights: Vec<f64>, cells: Vec<Cell>, grid: Grid) -> ConcaveEnvelope {
    let mut vertex_cells = alloc::vec![Vec::new(); vertices.len()];
    for (ci, c) in cells.iter().enumerate() {
        for &v in &c.vertices {
            vertex_cells[v].push(ci);
        }
    }
    let len = grid.len();
    ConcaveEnvelope {
        n,
        vertices,
        heights,
        cells,
        vertex_cells,
        grid,
        grid_values: alloc::vec![0.0; len],
        buckets: Buckets::default(),
        flat: false,
    }
}

fn hull_1d(points: &[Vec<f64>], values: &[f64], grid: Grid) -> ConcaveEnvelope {
    let mut pts: Vec<(f64, f64)> = points.iter().zip(values).map(|(x, v)| (x[0], *v)).collect();
    pts.push((-ENVELOPE_RADIUS, 0.0));
    pts.push((ENVELOPE_RADIUS, 0.0));
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // upper hull: drop middle points on or below the chord
    let mut h: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while h.len() >= 2 {
            let (a, b) = (h[h.len() - 2], h[h.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                h.pop();
            } else {
                break;
            }
        }
        h.push(p);
    }
    let vertices: Vec<Vec<f64>> = h.iter().map(|p| alloc::vec![p.0]).collect();
    let heights: Vec<f64> = h.iter().map(|p| p.1).collect();
    let cells = (0..h.len() - 1)
        .map(|i| Cell {
            vertices: alloc::vec![i, i + 1],
            plane: plane_through(&[&vertices[i], &vertices[i + 1]], &[heights[i], heights[i + 1]]),
        })
        .collect();
    finish(1, vertices, heights, cells, grid)
}

fn hull_2d(points: &[Vec<f64>], values: &[f64], grid: Grid) -> Result<ConcaveEnvelope, EnvelopeError> {
    let mut pts: Vec<hull::P3> = points.iter().zip(values).map(|(x, v)| [x[0], x[1], *v]).collect();
    let first_ring = pts.len();
    for j in 0..RING_POINTS {
        let t = 2.0 * PI * j as f64 / RING_POINTS as f64;
        pts.push([ENVELOPE_RADIUS * t.cos(), ENVELOPE_RADIUS * t.sin(), 0.0]);
    }
    let top = values.iter().fold(0.0_f64, |m, v| m.max(*v));
    let apex = pts.len();
    pts.push([0.0, 0.0, -10.0 * (top + 1.0)]);
    let faces = hull::convex_hull(&pts, 1e-12)?;
    let mut remap = alloc::vec![usize::MAX; pts.len()];
    let mut vertices = Vec::new();
    let mut heights = Vec::new();
    let mut cells = Vec::new();
    for f in faces {
        if f.vertices.contains(&apex) || f.normal[2] <= 0.0 {
            continue;
        }
        if f.vertices.iter().all(|&v| v >= first_ring) {
            continue;
        }
        let mut ids = Vec::with_capacity(3);
        for &v in &f.vertices {
            if remap[v] == usize::MAX {
                remap[v] = vertices.len();
                vertices.push(alloc::vec![pts[v][0], pts[v][1]]);
                heights.push(pts[v][2]);
            }
            ids.push(remap[v]);
        }
        let plane = plane_through(
            &[&vertices[ids[0]], &vertices[ids[1]], &vertices[ids[2]]],
            &[heights[ids[0]], heights[ids[1]], heights[ids[2]]],
        );
        cells.push(Cell { vertices: ids, plane });
    }
    Ok(finish(2, vertices, heights, cells, grid))
}

impl ConcaveEnvelope {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Γ at the sampling grid points (zero outside `B₃`).
    pub fn grid_values(&self) -> &[f64] {
        &self.grid_values
    }

    pub fn planes(&self) -> Vec<Plane> {
        self.cells.iter().map(|c| c.plane.clone()).collect()
    }

    fn rasterise(&mut self) {
        let n = self.n;
        self.grid_values = alloc::vec![f64::INFINITY; self.grid.len()];
        // buckets of cells for off-grid evaluation
        let side = if n == 1 { 1 } else { ((self.cells.len() as f64).sqrt().ceil() as usize).clamp(1, 256) };
        let mut lists = alloc::vec![Vec::new(); side.pow(n as u32)];
        let grid = self.grid.clone();
        let mut buckets = Buckets { side, lists: Vec::new() };
        for (ci, cell) in self.cells.iter().enumerate() {
            let mut lo = alloc::vec![f64::INFINITY; n];
            let mut hi = alloc::vec![f64::NEG_INFINITY; n];
            for &v in &cell.vertices {
                for i in 0..n {
                    lo[i] = lo[i].min(self.vertices[v][i]);
                    hi[i] = hi[i].max(self.vertices[v][i]);
                }
            }
            if n == 2 {
                for bx in buckets.coord(lo[0])..=buckets.coord(hi[0]) {
                    for by in buckets.coord(lo[1])..=buckets.coord(hi[1]) {
                        lists[bx * side + by].push(ci);
                    }
                }
            }
            // grid points in the cell's bounding box
            let range: Vec<(usize, usize)> = (0..n)
                .map(|i| {
                    let h = grid.spacing(i);
                    let a = ((lo[i] - grid.lo[i]) / h - 1e-9).ceil().max(0.0) as usize;
                    let b = (((hi[i] - grid.lo[i]) / h + 1e-9).floor().max(-1.0) + 1.0) as usize;
                    (a.min(grid.counts[i]), b.min(grid.counts[i]))
                })
                .collect();
            if range.iter().any(|(a, b)| a >= b) {
                continue;
            }
            let mut visit = |flat: usize, x: &[f64]| {
                let inside = if n == 1 {
                    true
                } else {
                    let [a, b, c] = [&self.vertices[cell.vertices[0]], &self.vertices[cell.vertices[1]], &self.vertices[cell.vertices[2]]];
                    barycentric(x, a, b, c).iter().all(|l| *l >= -1e-10)
                };
                if inside {
                    let v = cell.plane.eval(x).max(0.0);
                    if v < self.grid_values[flat] {
                        self.grid_values[flat] = v;
                    }
                }
            };
            if n == 1 {
                for i in range[0].0..range[0].1 {
                    visit(i, &[grid.coord(0, i as i64)]);
                }
            } else {
                for i in range[0].0..range[0].1 {
                    for j in range[1].0..range[1].1 {
                        let x = [grid.coord(0, i as i64), grid.coord(1, j as i64)];
                        visit(i * grid.counts[1] + j, &x);
                    }
                }
            }
        }
        buckets.lists = lists;
        self.buckets = buckets;
        for f in 0..self.grid.len() {
            let x = self.grid.point(f);
            if !in_ball(&x) {
                self.grid_values[f] = 0.0;
            } else if !self.grid_values[f].is_finite() {
                self.grid_values[f] = self.eval(&x);
            }
        }
    }

    /// Indices of the cells whose closure contains `x`.
    pub fn cells_at(&self, x: &[f64]) -> Vec<usize> {
        if self.flat || !in_ball(x) {
            return Vec::new();
        }
        if self.n == 1 {
            let xs = &self.vertices;
            let k = xs.partition_point(|v| v[0] < x[0]);
            let mut out = Vec::new();
            if k < xs.len() && xs[k][0] == x[0] {
                if k > 0 {
                    out.push(k - 1);
                }
                if k < self.cells.len() {
                    out.push(k);
                }
            } else if k > 0 && k <= self.cells.len() {
                out.push(k - 1);
            }
            return out;
        }
        let b = &self.buckets;
        let list = &b.lists[b.coord(x[0]) * b.side + b.coord(x[1])];
        list.iter()
            .copied()
            .filter(|&ci| {
                let c = &self.cells[ci];
                let [p, q, r] = [&self.vertices[c.vertices[0]], &self.vertices[c.vertices[1]], &self.vertices[c.vertices[2]]];
                barycentric(x, p, q, r).iter().all(|l| *l >= -1e-10)
            })
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.flat || !in_ball(x) {
            return 0.0;
        }
        let cells = self.cells_at(x);
        if !cells.is_empty() {
            return cells.iter().map(|&c| self.cells[c].plane.eval(x)).fold(f64::INFINITY, f64::min).max(0.0);
        }
        // thin rim between the ring polygon and ∂B₃
        let candidates: Vec<usize> = if self.n == 1 {
            (0..self.cells.len()).collect()
        } else {
            let b = &self.buckets;
            b.lists[b.coord(x[0]) * b.side + b.coord(x[1])].clone()
        };
        let m = candidates.iter().map(|&c| self.cells[c].plane.eval(x)).fold(f64::INFINITY, f64::min);
        if m.is_finite() {
            m.max(0.0)
        } else {
            0.0
        }
    }

    /// Gradients of the linear pieces meeting at `x`; their convex hull is the superdifferential.
    pub fn supergradients(&self, x: &[f64]) -> Vec<Vec<f64>> {
        if self.flat {
            return alloc::vec![alloc::vec![0.0; self.n]];
        }
        self.cells_at(x).iter().map(|&c| self.cells[c].plane.grad.clone()).collect()
    }

    /// One supergradient at `x` (average of the incident piece gradients).
    pub fn supergradient(&self, x: &[f64]) -> Vec<f64> {
        let g = self.supergradients(x);
        let mut out = alloc::vec![0.0; self.n];
        for v in &g {
            for i in 0..self.n {
                out[i] += v[i] / g.len() as f64;
            }
        }
        out
    }

    /// Measure of the superdifferential at hull vertex `v`.
    pub fn vertex_measure(&self, v: usize) -> f64 {
        let cells = &self.vertex_cells[v];
        if self.n == 1 {
            if cells.len() < 2 {
                return 0.0;
            }
            let (a, b) = (cells[0].min(cells[1]), cells[0].max(cells[1]));
            return (self.cells[a].plane.grad[0] - self.cells[b].plane.grad[0]).max(0.0);
        }
        let grads: Vec<[f64; 2]> = cells.iter().map(|&c| [self.cells[c].plane.grad[0], self.cells[c].plane.grad[1]]).collect();
        polygon_area(&convex_hull_2d(&grads))
    }

    /// `|∇Γ(region)|` for a closed box: sum of vertex superdifferential measures over
    /// hull vertices in the box and inside `B₃`.
    pub fn grad_image_measure(&self, region: &AxisBox) -> f64 {
        if self.flat {
            return 0.0;
        }
        let r_in = ENVELOPE_RADIUS * (1.0 - 1e-9);
        (0..self.vertices.len())
            .filter(|&v| {
                let x = &self.vertices[v];
                region.contains_closed(x) && x.iter().map(|c| c * c).sum::<f64>() < r_in * r_in
            })
            .map(|v| self.vertex_measure(v))
            .sum()
    }
}

/// Grid points of `B₃` with `Γ − u ≤ tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSet {
    pub indices: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    /// Γ ≡ 0, so every grid point of `B₃` where `u = 0` is in contact.
    pub degenerate: bool,
}

pub fn contact_set(u: &BoundedField, env: &ConcaveEnvelope, tol: f64) -> ContactSet {
    let grid = env.grid();
    let mut indices = Vec::new();
    let mut points = Vec::new();
    for f in 0..grid.len() {
        let x = grid.point(f);
        if in_ball(&x) && env.grid_values[f] - u.eval(&x) <= tol {
            indices.push(f);
            points.push(x);
        }
    }
    ContactSet { indices, points, degenerate: env.flat }
}

/// `2 h L` with `h` the largest spacing and `L` the largest piece gradient.
pub fn default_contact_tolerance(env: &ConcaveEnvelope) -> f64 {
    let h = (0..env.dim()).map(|i| env.grid().spacing(i)).fold(0.0_f64, f64::max);
    let lip = env
        .cells
        .iter()
        .map(|c| c.plane.grad.iter().map(|g| g * g).sum::<f64>().sqrt())
        .fold(0.0_f64, f64::max);
    2.0 * h * lip
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Exterior;
    use alloc::vec;

    fn tent(peak: f64) -> (BoundedField, Grid) {
        let g = Grid::cube(1, 3.0, 601);
        let u = BoundedField::sample(g.clone(), move |x: &[f64]| (1.0 - (x[0] - peak).abs()).max(0.0), Exterior::Constant(0.0));
        (u, g)
    }

    #[test]
    fn tent_envelope_slopes() {
        // support [-1, 1] lies in B_1 only for the centred tent
        let (u, g) = tent(0.0);
        let env = concave_envelope(&u, &g, 1e-12).unwrap();
        assert_eq!(env.vertices.len(), 3);
        assert!((env.cells[0].plane.grad[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((env.cells[1].plane.grad[0] + 1.0 / 3.0).abs() < 1e-12);
        let m = env.grad_image_measure(&AxisBox { lo: vec![-3.0], hi: vec![3.0] });
        assert!((m - 2.0 / 3.0).abs() < 1e-12);
        let c = contact_set(&u, &env, 1e-9);
        assert_eq!(c.points.len(), 1);
        assert!(c.points[0][0].abs() < 1e-12);
    }

    #[test]
    fn nonpositive_field_gives_zero() {
        let g = Grid::cube(2, 3.0, 21);
        let u = BoundedField::sample(g.clone(), |x: &[f64]| -x[0] * x[0], Exterior::Constant(-1.0));
        let env = concave_envelope(&u, &g, 1e-12).unwrap();
        assert!(env.flat);
        assert!(env.grid_values().iter().all(|v| *v == 0.0));
        assert_eq!(env.eval(&[0.3, 0.1]), 0.0);
    }

    #[test]
    fn positive_outside_is_rejected() {
        let g = Grid::cube(1, 3.0, 61);
        let u = BoundedField::sample(g.clone(), |x: &[f64]| 1.0 - x[0].abs() / 2.0, Exterior::Constant(0.0));
        assert!(matches!(concave_envelope(&u, &g, 1e-12), Err(EnvelopeError::PositiveOutside { .. })));
    }
}
