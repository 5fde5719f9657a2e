use std::collections::BTreeSet;
use std::sync::Arc;

use aniso_nonlocal::covering::*;
use aniso_nonlocal::cz::*;
use aniso_nonlocal::dyadic::DyadicCube;
use aniso_nonlocal::AnisotropyProfile;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Cube = (u32, Vec<u64>);

/// Largest count of open boxes over the midpoints of the face arrangement, tallied directly.
fn brute_overlap(boxes: &[AxisBox]) -> usize {
    if boxes.is_empty() {
        return 0;
    }
    let n = boxes[0].dim();
    let mids: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut c: Vec<f64> = boxes.iter().flat_map(|b| [b.lo[i], b.hi[i]]).collect();
            c.sort_by(|a, b| a.partial_cmp(b).unwrap());
            c.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
        })
        .collect();
    let mut best = 0;
    let mut idx = vec![0usize; n];
    loop {
        let x: Vec<f64> = (0..n).map(|i| mids[i][idx[i]]).collect();
        let count = boxes.iter().filter(|b| (0..n).all(|i| b.lo[i] < x[i] && x[i] < b.hi[i])).count();
        best = best.max(count);
        let mut axis = 0;
        loop {
            if axis == n {
                return best;
            }
            idx[axis] += 1;
            if idx[axis] < mids[axis].len() {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

fn random_family(rng: &mut ChaCha8Rng, n: usize, count: usize) -> ParamRectangleFamily {
    let exps: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..2.0)).collect();
    let edge_laws: Vec<EdgeLaw> = exps.iter().map(|&a| Arc::new(move |t: f64| t.powf(a)) as EdgeLaw).collect();
    let points = (0..count).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    // repeated parameters exercise the tie-break
    let params = (0..count).map(|_| if rng.gen_bool(0.2) { 0.5 } else { rng.gen_range(0.01..1.0) }).collect();
    ParamRectangleFamily { points, params, edge_laws }
}

#[test]
fn greedy_cover_multiplicity_is_at_most_two_to_the_n() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 1..=3usize {
        let mut worst = 0;
        for trial in 0..1000 {
            let count = rng.gen_range(1..40);
            let fam = random_family(&mut rng, n, count);
            let c = cc_cover(&fam).unwrap();
            assert_eq!(c.bound, 1 << n);
            assert!(c.multiplicity <= c.bound, "n={n} trial {trial}: {}", c.multiplicity);
            assert!(c.multiplicity_on_points <= c.multiplicity);
            for p in &fam.points {
                assert!(c.rectangles.iter().any(|r| r.contains(p)));
            }
            // selected centres avoid every earlier selected rectangle
            for (a, &j) in c.selected.iter().enumerate() {
                for r in &c.rectangles[..a] {
                    assert!(!r.contains(&fam.points[j]));
                }
            }
            if trial % 10 == 0 {
                assert_eq!(c.multiplicity, brute_overlap(&c.rectangles));
            }
            worst = worst.max(c.multiplicity);
        }
        assert!(worst >= 2, "n={n} never overlapped");
    }
}

#[test]
fn max_overlap_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in 1..=3usize {
        for _ in 0..200 {
            let boxes: Vec<AxisBox> = (0..rng.gen_range(1..12))
                .map(|_| {
                    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let h: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
                    AxisBox::centered(&c, &h)
                })
                .collect();
            assert_eq!(max_overlap(&boxes), brute_overlap(&boxes));
        }
    }
    // boxes sharing only a face do not overlap
    let a = AxisBox { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] };
    let b = AxisBox { lo: vec![1.0, 0.0], hi: vec![2.0, 1.0] };
    assert_eq!(max_overlap(&[a.clone(), b]), 1);
    assert_eq!(multiplicity_at(&[a.clone(), a], &[0.5, 0.5]), 2);
}

#[test]
fn invalid_families_are_rejected() {
    let law = |f: fn(f64) -> f64| Arc::new(f) as EdgeLaw;
    let fam = ParamRectangleFamily { points: vec![vec![0.0]], params: vec![0.5], edge_laws: vec![law(|t| 1.0 - t)] };
    assert!(matches!(cc_cover(&fam), Err(CoverError::NonMonotone { .. })));
    let fam = ParamRectangleFamily { points: vec![vec![0.0]], params: vec![-0.5], edge_laws: vec![law(|t| t)] };
    assert!(matches!(cc_cover(&fam), Err(CoverError::NegativeParameter(_))));
    let fam = ParamRectangleFamily { points: vec![vec![0.0, 1.0]], params: vec![0.5], edge_laws: vec![law(|t| t)] };
    assert!(matches!(cc_cover(&fam), Err(CoverError::Shape)));
}

fn profile_strategy() -> impl Strategy<Value = AnisotropyProfile> {
    (1usize..=3).prop_flat_map(|n| {
        proptest::collection::vec(0.1f64..1.99, n).prop_map(|s| AnisotropyProfile::new(&s, 1.0, 2.0).unwrap())
    })
}

proptest! {
    #[test]
    fn dyadic_navigation(g in 0u32..12, seed in any::<u64>(), prof in profile_strategy()) {
        let n = prof.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let index: Vec<u64> = (0..n).map(|_| rng.gen_range(0..1u64 << g)).collect();
        let q = DyadicCube::new(g, index.clone()).unwrap();
        let b = q.as_box();
        let kids = q.children();
        prop_assert_eq!(kids.len(), 1 << n);
        let vol: f64 = kids.iter().map(|c| c.as_box().volume()).sum();
        prop_assert!((vol - b.volume()).abs() <= 1e-15 * b.volume());
        for c in &kids {
            prop_assert_eq!(c.predecessor().unwrap(), q.clone());
            let cb = c.as_box();
            for i in 0..n {
                prop_assert!(b.lo[i] <= cb.lo[i] && cb.hi[i] <= b.hi[i]);
            }
        }
        let distinct: BTreeSet<_> = kids.iter().collect();
        prop_assert_eq!(distinct.len(), kids.len());
        prop_assert!(DyadicCube::new(g, index.iter().map(|k| k + (1 << g)).collect()).is_err());

        // R̃ shares the centre, keeps the cube's half-edge on the σ_min axis and contains the cube
        let t = q.tilde(&prof);
        let half = 0.5 * q.edge();
        let pmin = n as f64 + prof.sigma_min();
        for i in 0..n {
            let expect = half.powf(pmin / prof.orders()[i]);
            prop_assert!(((t.hi[i] - t.lo[i]) / 2.0 - expect).abs() <= 1e-14 * expect + 1e-15);
            prop_assert!(((t.hi[i] + t.lo[i]) / 2.0 - q.center()[i]).abs() <= 1e-14);
            prop_assert!(t.lo[i] <= b.lo[i] + 1e-15 && b.hi[i] <= t.hi[i] + 1e-15);
        }
        let imin = prof.i_min();
        prop_assert!(((t.hi[imin] - t.lo[imin]) - q.edge()).abs() <= 1e-14 * q.edge() + 2e-15);
    }
}

fn tilde_oracle(q: &(u32, Vec<u64>), prof: &AnisotropyProfile) -> AxisBox {
    let e = (-(q.0 as f64)).exp2();
    let pmin = prof.n() as f64 + prof.sigma_min();
    let c: Vec<f64> = q.1.iter().map(|k| -0.5 + (*k as f64 + 0.5) * e).collect();
    let h: Vec<f64> = prof.orders().iter().map(|p| (0.5 * e).powf(pmin / p)).collect();
    AxisBox { lo: c.iter().zip(&h).map(|(c, h)| c - h).collect(), hi: c.iter().zip(&h).map(|(c, h)| c + h).collect() }
}

fn overlap_with_cells(cells: &[Vec<u64>], g: u32, b: &AxisBox) -> f64 {
    let e = (-(g as f64)).exp2();
    cells
        .iter()
        .map(|c| {
            c.iter()
                .enumerate()
                .map(|(i, k)| {
                    let lo = -0.5 + *k as f64 * e;
                    ((lo + e).min(b.hi[i]) - lo.max(b.lo[i])).max(0.0)
                })
                .product::<f64>()
        })
        .sum()
}

fn all_indices(n: usize, g: u32) -> Vec<Vec<u64>> {
    let side = 1u64 << g;
    (0..side.pow(n as u32))
        .map(|mut f| {
            let mut v = vec![0; n];
            for i in (0..n).rev() {
                v[i] = f % side;
                f /= side;
            }
            v
        })
        .collect()
}

/// Every dyadic cube down to generation `g` with density above δ, and the maximal ones.
fn bad_cubes(a: &[Vec<u64>], g: u32, delta: f64, prof: &AnisotropyProfile) -> (Vec<Cube>, BTreeSet<Cube>) {
    let n = prof.n();
    let mut bad = Vec::new();
    for gen in 0..=g {
        for idx in all_indices(n, gen) {
            let t = tilde_oracle(&(gen, idx.clone()), prof);
            if overlap_with_cells(a, g, &t) > delta * t.volume() {
                bad.push((gen, idx));
            }
        }
    }
    let is_bad: BTreeSet<(u32, Vec<u64>)> = bad.iter().cloned().collect();
    let maximal = bad
        .iter()
        .filter(|(gen, idx)| (0..*gen).all(|h| !is_bad.contains(&(h, idx.iter().map(|k| k >> (gen - h)).collect()))))
        .cloned()
        .collect();
    (bad, maximal)
}

/// Random blobs of generation-`g` cells with total measure near `target`.
fn blobs(rng: &mut ChaCha8Rng, n: usize, g: u32, target: f64) -> Vec<Vec<u64>> {
    let side = 1i64 << g;
    let cell = (-(g as f64) * n as f64).exp2();
    let mut set: BTreeSet<Vec<u64>> = BTreeSet::new();
    while (set.len() as f64 + 1.0) * cell <= target {
        let c: Vec<i64> = (0..n).map(|_| rng.gen_range(0..side)).collect();
        let r = rng.gen_range(0..4i64);
        for off in all_indices(n, 3) {
            let p: Vec<i64> = c.iter().zip(&off).map(|(c, o)| c + *o as i64 - 4).collect();
            if p.iter().zip(&off).all(|(v, o)| (0..side).contains(v) && (*o as i64 - 4).abs() <= r)
                && (set.len() as f64 + 1.0) * cell <= target
            {
                set.insert(p.iter().map(|v| *v as u64).collect());
            }
        }
    }
    set.into_iter().collect()
}

fn cells_meeting(b: &AxisBox, n: usize, g: u32) -> Vec<Vec<u64>> {
    all_indices(n, g).into_iter().filter(|c| overlap_with_cells(std::slice::from_ref(c), g, b) > 0.0).collect()
}

#[test]
fn cz_matches_exhaustive_traversal() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let profiles = [
        AnisotropyProfile::new(&[0.6, 1.8], 1.0, 2.0).unwrap(),
        AnisotropyProfile::isotropic(2, 1.0, 1.0, 2.0).unwrap(),
        AnisotropyProfile::new(&[1.3], 1.0, 2.0).unwrap(),
    ];
    for (pi, prof) in profiles.iter().enumerate() {
        let n = prof.n();
        let g = if n == 1 { 9 } else { 6 };
        for trial in 0..4 {
            let delta = rng.gen_range(0.1..0.6);
            let cells = blobs(&mut rng, n, g, delta / 2.0);
            let (bad, maximal) = bad_cubes(&cells, g, delta, prof);
            // B holds A and the predecessor box of every bad cube, so the hypothesis holds
            let mut bcells: BTreeSet<Vec<u64>> = cells.iter().cloned().collect();
            for q in &bad {
                if q.0 > 0 {
                    let pred = (q.0 - 1, q.1.iter().map(|k| k / 2).collect());
                    bcells.extend(cells_meeting(&tilde_oracle(&pred, prof), n, g));
                }
            }
            let bcells: Vec<Vec<u64>> = bcells.into_iter().collect();
            let a = LatticeSet::from_cells(n, g, &cells).unwrap();
            let b = LatticeSet::from_cells(n, g, &bcells).unwrap();
            let d = cz_decompose(&a, &b, delta, prof).unwrap();
            let got: BTreeSet<(u32, Vec<u64>)> = d.maximal_bad.iter().map(|q| (q.generation, q.index.clone())).collect();
            assert_eq!(got, maximal, "profile {pi} trial {trial}");
            assert_eq!(d.hypothesis_vacuous, bad.is_empty());
            assert!((d.measure_a - overlap_with_cells(&cells, g, &AxisBox { lo: vec![-0.5; n], hi: vec![0.5; n] })).abs() < 1e-12);
            assert!(d.covers_a && d.max_density <= delta, "profile {pi} trial {trial}: {d:?}");
            assert!(d.c_measured <= d.c_bound);
            assert!(d.certified);
            for r in &d.boxes {
                assert!(overlap_with_cells(&cells, g, r) <= delta * r.volume() * (1.0 + 1e-12));
            }

            // dropping a B cell required by some predecessor box breaks the hypothesis
            if let Some(q) = bad.iter().find(|q| q.0 > 0) {
                let pred = (q.0 - 1, q.1.iter().map(|k| k / 2).collect());
                let need: BTreeSet<Vec<u64>> = cells_meeting(&tilde_oracle(&pred, prof), n, g).into_iter().collect();
                let a_set: BTreeSet<&Vec<u64>> = cells.iter().collect();
                if let Some(drop) = need.iter().find(|c| !a_set.contains(c)) {
                    let fewer: Vec<Vec<u64>> = bcells.iter().filter(|c| *c != drop).cloned().collect();
                    let b2 = LatticeSet::from_cells(n, g, &fewer).unwrap();
                    assert!(matches!(cz_decompose(&a, &b2, delta, prof), Err(CzError::Hypothesis { .. })));
                }
            }
        }
    }
}

#[test]
fn cz_relabelling_and_reflection() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let prof = AnisotropyProfile::new(&[0.7, 1.5], 1.0, 2.0).unwrap();
    let (n, g, delta) = (2, 5, 0.4);
    let full = LatticeSet::full(n, g);
    for _ in 0..5 {
        let mut cells = blobs(&mut rng, n, g, delta / 2.0);
        let d = cz_decompose(&LatticeSet::from_cells(n, g, &cells).unwrap(), &full, delta, &prof).unwrap();
        cells.shuffle(&mut rng);
        let mut doubled = cells.clone();
        doubled.extend(cells.iter().cloned());
        let d2 = cz_decompose(&LatticeSet::from_cells(n, g, &doubled).unwrap(), &full, delta, &prof).unwrap();
        assert_eq!(d, d2);
        // the reflection k ↦ 2^g − 1 − k maps the selection onto itself
        let side = 1u64 << g;
        let flip = |q: &DyadicCube| {
            let s = 1u64 << q.generation;
            (q.generation, q.index.iter().map(|k| s - 1 - k).collect::<Vec<u64>>())
        };
        let mirrored: Vec<Vec<u64>> = cells.iter().map(|c| c.iter().map(|k| side - 1 - k).collect()).collect();
        let dm = cz_decompose(&LatticeSet::from_cells(n, g, &mirrored).unwrap(), &full, delta, &prof).unwrap();
        let a: BTreeSet<_> = d.sources.iter().map(flip).collect();
        let b: BTreeSet<_> = dm.sources.iter().map(|q| (q.generation, q.index.clone())).collect();
        assert_eq!(a, b);
        assert_eq!(d.measure_a, dm.measure_a);
    }
}

#[test]
fn cz_edge_cases() {
    let prof = AnisotropyProfile::new(&[0.6, 1.8], 1.0, 2.0).unwrap();
    let empty = LatticeSet::empty(2, 4);
    let full = LatticeSet::full(2, 4);
    let d = cz_decompose(&empty, &full, 0.5, &prof).unwrap();
    assert!(d.boxes.is_empty() && d.hypothesis_vacuous && d.certified);
    assert_eq!(d.c_measured, 0.0);

    // one generation-6 cell with δ = 1: nothing can exceed density 1, so the cell is its own box
    let one = LatticeSet::from_cells(2, 6, &[vec![17, 40]]).unwrap();
    let d = cz_decompose(&one, &one, 1.0, &prof).unwrap();
    assert!(d.hypothesis_vacuous);
    assert_eq!(d.sources, vec![DyadicCube::new(6, vec![17, 40]).unwrap()]);
    assert!(d.covers_a);

    assert!(matches!(cz_decompose(&full, &full, 0.5, &prof), Err(CzError::TooLarge { .. })));
    assert!(matches!(cz_decompose(&full, &empty, 0.5, &prof), Err(CzError::NotSubset)));
    assert!(matches!(cz_decompose(&empty, &full, 0.0, &prof), Err(CzError::Delta(_))));
    assert!(matches!(cz_decompose(&empty, &LatticeSet::full(2, 3), 0.5, &prof), Err(CzError::Mismatch)));
    assert!(matches!(LatticeSet::from_cells(2, 2, &[vec![4, 0]]), Err(CzError::CellOutOfRange)));
}
