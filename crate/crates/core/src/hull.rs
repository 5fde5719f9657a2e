//! Incremental 3-D convex hull (quickhull with conflict lists).

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use num_traits::Float;
use thiserror::Error;

pub type P3 = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct HullFace {
    /// Counter-clockwise seen from outside.
    pub vertices: [usize; 3],
    /// Unit outward normal.
    pub normal: P3,
    /// `normal · x = offset` on the face.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HullError {
    #[error("fewer than four points or all points coplanar")]
    Degenerate,
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
}

fn sub(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: P3, b: P3) -> P3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: P3, b: P3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: P3) -> f64 {
    dot(a, a).sqrt()
}

struct Face {
    v: [usize; 3],
    n: P3,
    d: f64,
    outside: Vec<usize>,
    alive: bool,
}

fn make_face(pts: &[P3], v: [usize; 3]) -> Face {
    let c = cross(sub(pts[v[1]], pts[v[0]]), sub(pts[v[2]], pts[v[0]]));
    let l = norm(c);
    let n = if l > 0.0 { [c[0] / l, c[1] / l, c[2] / l] } else { [0.0, 0.0, 0.0] };
    Face { v, n, d: dot(n, pts[v[0]]), outside: Vec::new(), alive: true }
}

fn dist(f: &Face, p: P3) -> f64 {
    dot(f.n, p) - f.d
}

/// Faces of the convex hull of `pts`; points within `eps · scale` of a face count as on it.
pub fn convex_hull(pts: &[P3], eps: f64) -> Result<Vec<HullFace>, HullError> {
    if let Some(i) = pts.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
        return Err(HullError::NonFinite(i));
    }
    if pts.len() < 4 {
        return Err(HullError::Degenerate);
    }
    let scale = pts.iter().flat_map(|p| p.iter()).fold(0.0_f64, |m, c| m.max(c.abs())).max(1e-300);
    let tol = eps * scale;

    // initial simplex
    let (mut i0, mut i1) = (0, 0);
    for (i, p) in pts.iter().enumerate() {
        if p[0] < pts[i0][0] {
            i0 = i;
        }
        if p[0] > pts[i1][0] {
            i1 = i;
        }
    }
    if i0 == i1 {
        i1 = (0..pts.len()).max_by(|&a, &b| {
            norm(sub(pts[a], pts[i0])).partial_cmp(&norm(sub(pts[b], pts[i0]))).unwrap()
        })
        .unwrap();
    }
    let line = sub(pts[i1], pts[i0]);
    if norm(line) <= tol {
        return Err(HullError::Degenerate);
    }
    let i2 = (0..pts.len())
        .max_by(|&a, &b| {
            let da = norm(cross(line, sub(pts[a], pts[i0])));
            let db = norm(cross(line, sub(pts[b], pts[i0])));
            da.partial_cmp(&db).unwrap()
        })
        .unwrap();
    let nrm = cross(line, sub(pts[i2], pts[i0]));
    if norm(nrm) <= tol * norm(line) {
        return Err(HullError::Degenerate);
    }
    let i3 = (0..pts.len())
        .max_by(|&a, &b| {
            dot(nrm, sub(pts[a], pts[i0])).abs().partial_cmp(&dot(nrm, sub(pts[b], pts[i0])).abs()).unwrap()
        })
        .unwrap();
    if dot(nrm, sub(pts[i3], pts[i0])).abs() <= tol * norm(nrm) {
        return Err(HullError::Degenerate);
    }
    let simplex = [i0, i1, i2, i3];
    let centroid = {
        let mut c = [0.0; 3];
        for &i in &simplex {
            for k in 0..3 {
                c[k] += 0.25 * pts[i][k];
            }
        }
        c
    };

    let mut faces: Vec<Face> = Vec::new();
    let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let add_face = |faces: &mut Vec<Face>, edges: &mut BTreeMap<(usize, usize), usize>, f: Face| {
        let id = faces.len();
        for e in 0..3 {
            edges.insert((f.v[e], f.v[(e + 1) % 3]), id);
        }
        faces.push(f);
        id
    };
    for tri in [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]] {
        let mut f = make_face(pts, tri);
        if dist(&f, centroid) > 0.0 {
            f = make_face(pts, [tri[0], tri[2], tri[1]]);
        }
        add_face(&mut faces, &mut edges, f);
    }
    for (i, p) in pts.iter().enumerate() {
        if simplex.contains(&i) {
            continue;
        }
        let mut best = None;
        let mut best_d = tol;
        for (fi, f) in faces.iter().enumerate() {
            let d = dist(f, *p);
            if d > best_d {
                best_d = d;
                best = Some(fi);
            }
        }
        if let Some(fi) = best {
            faces[fi].outside.push(i);
        }
    }

    let mut stack: Vec<usize> = (0..faces.len()).collect();
    let mut visited_mark: Vec<usize> = Vec::new();
    let mut epoch = 0usize;
    while let Some(fi) = stack.pop() {
        if !faces[fi].alive || faces[fi].outside.is_empty() {
            continue;
        }
        epoch += 1;
        let apex = *faces[fi]
            .outside
            .iter()
            .max_by(|&&a, &&b| dist(&faces[fi], pts[a]).partial_cmp(&dist(&faces[fi], pts[b])).unwrap())
            .unwrap();
        let p = pts[apex];
        // visible region by flood fill
        visited_mark.resize(faces.len(), 0);
        let mut visible = alloc::vec![fi];
        visited_mark[fi] = epoch;
        let mut horizon: Vec<(usize, usize)> = Vec::new();
        let mut k = 0;
        while k < visible.len() {
            let f = visible[k];
            k += 1;
            for e in 0..3 {
                let (a, b) = (faces[f].v[e], faces[f].v[(e + 1) % 3]);
                let g = *edges.get(&(b, a)).expect("closed hull surface");
                if visited_mark[g] == epoch {
                    continue;
                }
                if dist(&faces[g], p) > tol {
                    visited_mark[g] = epoch;
                    visible.push(g);
                } else {
                    horizon.push((a, b));
                }
            }
        }

        let mut orphans: Vec<usize> = Vec::new();
        for &f in &visible {
            faces[f].alive = false;
            for e in 0..3 {
                let key = (faces[f].v[e], faces[f].v[(e + 1) % 3]);
                if edges.get(&key) == Some(&f) {
                    edges.remove(&key);
                }
            }
            orphans.extend(faces[f].outside.drain(..).filter(|&q| q != apex));
        }
        let mut new_faces = Vec::with_capacity(horizon.len());
        for &(a, b) in &horizon {
            let f = make_face(pts, [a, b, apex]);
            let id = add_face(&mut faces, &mut edges, f);
            new_faces.push(id);
        }
        for q in orphans {
            let mut best = None;
            let mut best_d = tol;
            for &nf in &new_faces {
                let d = dist(&faces[nf], pts[q]);
                if d > best_d {
                    best_d = d;
                    best = Some(nf);
                }
            }
            if let Some(nf) = best {
                faces[nf].outside.push(q);
            }
        }
        stack.extend(new_faces);
    }

    Ok(faces
        .into_iter()
        .filter(|f| f.alive)
        .map(|f| HullFace { vertices: f.v, normal: f.n, offset: f.d })
        .collect())
}

/// Convex hull of planar points by the monotone chain, counter-clockwise, collinear points dropped.
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p: Vec<[f64; 2]> = points.to_vec();
    p.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap().then(a[1].partial_cmp(&b[1]).unwrap()));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let turn = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut h: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = h.len();
        let iter: Vec<[f64; 2]> = if pass == 0 { p.clone() } else { p.iter().rev().copied().collect() };
        for q in iter {
            while h.len() >= start + 2 && turn(h[h.len() - 2], h[h.len() - 1], q) <= 0.0 {
                h.pop();
            }
            h.push(q);
        }
        h.pop();
    }
    h
}

/// Shoelace area of a counter-clockwise polygon.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut a = 0.0;
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        a += p[0] * q[1] - p[1] * q[0];
    }
    0.5 * a.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn cube_has_twelve_triangles() {
        let mut pts = Vec::new();
        for m in 0..8 {
            pts.push([(m & 1) as f64, (m >> 1 & 1) as f64, (m >> 2 & 1) as f64]);
        }
        pts.push([0.5, 0.5, 0.5]);
        pts.push([0.5, 0.5, 1.0]);
        let faces = convex_hull(&pts, 1e-12).unwrap();
        assert_eq!(faces.len(), 12);
        for f in &faces {
            for p in &pts {
                assert!(dot(f.normal, *p) - f.offset <= 1e-12);
            }
        }
    }

    #[test]
    fn coplanar_input_is_rejected() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]];
        assert_eq!(convex_hull(&pts, 1e-12), Err(HullError::Degenerate));
    }

    #[test]
    fn square_area() {
        let h = convex_hull_2d(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.0]]);
        assert_eq!(h.len(), 4);
        assert_eq!(polygon_area(&h), 1.0);
    }
}
