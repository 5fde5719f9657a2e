use std::collections::BTreeSet;
use std::sync::Arc;

use aniso_nonlocal::abp::*;
use aniso_nonlocal::covering::AxisBox;
use aniso_nonlocal::envelope::*;
use aniso_nonlocal::hull::{convex_hull, P3};
use aniso_nonlocal::{AnisotropyProfile, BoundedField, Grid, QuadratureScheme, QuadratureSettings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn field(n: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> BoundedField {
    BoundedField::analytic(n, Arc::new(f), 1.0)
}

/// Narrow cap, broad cap, and two bumps of unequal height at ±0.4 e₁.
fn instance(n: usize, which: usize) -> BoundedField {
    match which {
        0 => field(n, |x| (1.0 - 100.0 * norm2(x)).max(-1.0)),
        1 => field(n, |x| (1.0 - norm2(x)).max(-1.0)),
        _ => field(n, |x| {
            let shift = |c: f64| x.iter().enumerate().map(|(i, v)| if i == 0 { (v - c).powi(2) } else { v * v }).sum::<f64>();
            (1.0 - 16.0 * shift(0.4)).max(0.8 - 16.0 * shift(-0.4)).max(-1.0)
        }),
    }
}

fn grid(n: usize) -> Grid {
    if n == 1 {
        Grid::cube(1, 3.0, 2001)
    } else {
        Grid::cube(2, 3.0, 257)
    }
}

fn coarse(p: AnisotropyProfile) -> AnisotropyProfile {
    p.with_rho0(8.0).unwrap().with_frak_c(1).unwrap()
}

fn contacts_in_ball(u: &BoundedField, g: &Grid) -> Vec<Vec<f64>> {
    let env = concave_envelope(u, g, 1e-12).unwrap();
    let cs = contact_set(u, &env, default_contact_tolerance(&env));
    cs.points.into_iter().filter(|p| norm2(p) <= 1.0).collect()
}

/// Right-hand side certified by the quadrature at contact points.
fn certified_rhs(u: &BoundedField, g: &Grid, p: &AnisotropyProfile) -> f64 {
    let scheme = QuadratureScheme::build(p, QuadratureSettings::default()).unwrap();
    let pts = contacts_in_ball(u, g);
    let n = g.dim();
    check_subsolution(u, &BoundedField::constant(n, 0.0), p, &scheme, &spread(&pts, 16)).certified_rhs
}

#[test]
fn shifted_tent_has_single_contact() {
    let g = Grid::cube(1, 3.0, 601);
    let u = field(1, |x| (0.5 - (x[0] - 0.3).abs()).max(-0.5));
    let env = concave_envelope(&u, &g, 1e-12).unwrap();
    let left = 0.5 / 3.3;
    let right = -0.5 / 2.7;
    let grads: Vec<f64> = env.planes().iter().map(|p| p.grad[0]).collect();
    assert_eq!(grads.len(), 2);
    assert!((grads[0] - left).abs() < 1e-9, "{grads:?}");
    assert!((grads[1] - right).abs() < 1e-9, "{grads:?}");
    for x in [-2.5, -1.0, 0.0, 0.3, 1.2, 2.9] {
        let oracle = if x <= 0.3 { 0.5 + left * (x - 0.3) } else { 0.5 + right * (x - 0.3) };
        assert!((env.eval(&[x]) - oracle).abs() < 1e-9);
    }
    let c = contact_set(&u, &env, 1e-9);
    assert_eq!(c.points.len(), 1);
    assert!((c.points[0][0] - 0.3).abs() < 1e-9);
    let m = env.grad_image_measure(&AxisBox { lo: vec![-3.0], hi: vec![3.0] });
    assert!((m - (left - right)).abs() < 1e-9);
    // the supergradient at the kink spans both slopes
    let sg = env.supergradients(&c.points[0]);
    assert_eq!(sg.len(), 2);
}

#[test]
fn broad_paraboloid_envelope_matches_closed_form() {
    // tangent planes of 1 − |x|² stay nonnegative on B₃ exactly for |x| ≤ 3 − √8
    let r_star = 3.0 - 8f64.sqrt();
    let oracle = |r: f64| if r <= r_star { 1.0 - r * r } else { (1.0 - r_star * r_star) * (3.0 - r) / (3.0 - r_star) };
    for n in [1usize, 2] {
        let g = grid(n);
        let u = instance(n, 1);
        let env = concave_envelope(&u, &g, 1e-12).unwrap();
        let h = g.spacing(0);
        let mut worst = 0.0_f64;
        for (f, v) in env.grid_values().iter().enumerate() {
            let x = g.point(f);
            let r = norm2(&x).sqrt();
            if r < 2.9 {
                worst = worst.max((v - oracle(r)).abs());
            }
        }
        assert!(worst < 4.0 * h * h + 0.02 * h, "n={n} worst {worst}");
        // beyond r* the gap Γ − u is (r − r*)², so the tolerance widens the contact set by √tol
        let tol = default_contact_tolerance(&env);
        let c = contacts_in_ball(&u, &g);
        let rmax = c.iter().map(|p| norm2(p).sqrt()).fold(0.0, f64::max);
        assert!(rmax > r_star - 2.0 * h && rmax < r_star + tol.sqrt() + 2.0 * h, "n={n} contact radius {rmax}");
    }
}

#[test]
fn nonpositive_field_has_zero_envelope_and_no_cover() {
    let g = grid(2);
    let u = field(2, |x| -0.5 - norm2(x));
    let env = concave_envelope(&u, &g, 1e-12).unwrap();
    assert!(env.flat);
    assert!(env.grid_values().iter().all(|v| *v == 0.0));
    let p = coarse(AnisotropyProfile::isotropic(2, 1.0, 1.0, 2.0).unwrap());
    let r = abp_cover(&u, &BoundedField::constant(2, 1.0), &p, &g, &CoverSettings::default());
    assert!(matches!(r, Err(AbpError::NoContact)));
}

#[test]
fn concave_samples_are_their_own_envelope() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = Grid::cube(2, 3.0, 121);
    for _ in 0..5 {
        let planes: Vec<([f64; 2], f64)> = (0..6)
            .map(|_| {
                let b: [f64; 2] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let a = 3.0 * (b[0] * b[0] + b[1] * b[1]).sqrt() + rng.gen_range(0.1..1.0);
                (b, a)
            })
            .collect();
        let cone = rng.gen_range(0.2..1.0);
        let u = |x: &[f64]| {
            planes.iter().map(|(b, a)| a + b[0] * x[0] + b[1] * x[1]).fold(cone * (3.0 - norm2(x).sqrt()), f64::min)
        };
        let values: Vec<f64> = g.points().iter().map(|x| u(x)).collect();
        let env = envelope_of_samples(g.clone(), &values).unwrap();
        for (f, x) in g.points().iter().enumerate() {
            if norm2(x).sqrt() < 2.9 {
                assert!((env.grid_values()[f] - values[f]).abs() < 1e-9, "{x:?}");
            }
        }
    }
}

#[test]
fn gradient_image_of_quadratic_matches_jacobian() {
    // Γ = u on B₃ and ∇u = −2x/9, so |∇Γ(E)| = (2/9)² |E|
    let g = Grid::cube(2, 3.0, 241);
    let values: Vec<f64> = g.points().iter().map(|x| 1.0 - norm2(x) / 9.0).collect();
    let env = envelope_of_samples(g, &values).unwrap();
    let jac = 4.0 / 81.0;
    let whole = env.grad_image_measure(&AxisBox { lo: vec![-3.0, -3.0], hi: vec![3.0, 3.0] });
    let disc = std::f64::consts::PI * 4.0 / 9.0;
    assert!((whole / disc - 1.0).abs() < 0.05, "{whole} vs {disc}");
    let b = AxisBox { lo: vec![-1.01, -0.51], hi: vec![0.99, 1.49] };
    let part = env.grad_image_measure(&b);
    assert!((part / (jac * b.volume()) - 1.0).abs() < 0.05, "{part}");
}

#[test]
fn gradient_image_is_additive_over_quadrants() {
    let g = grid(2);
    let u = instance(2, 2);
    let env = concave_envelope(&u, &g, 1e-12).unwrap();
    let (cx, cy) = (0.0137, -0.0071);
    let whole = env.grad_image_measure(&AxisBox { lo: vec![-3.0, -3.0], hi: vec![3.0, 3.0] });
    let mut sum = 0.0;
    for (xl, xh) in [(-3.0, cx), (cx, 3.0)] {
        for (yl, yh) in [(-3.0, cy), (cy, 3.0)] {
            sum += env.grad_image_measure(&AxisBox { lo: vec![xl, yl], hi: vec![xh, yh] });
        }
    }
    assert!(whole > 0.0);
    assert!((sum - whole).abs() <= 1e-12 * whole, "{sum} vs {whole}");
}

#[test]
fn envelope_is_idempotent_and_monotone() {
    let g = grid(2);
    let u = instance(2, 2);
    let v = field(2, |x| {
        let shift = |c: f64| (x[0] - c).powi(2) + x[1] * x[1];
        (1.0 - 16.0 * shift(0.4)).max(0.9 - 16.0 * shift(-0.4)).max(0.5 - 4.0 * norm2(x)).max(-1.0)
    });
    let eu = concave_envelope(&u, &g, 1e-12).unwrap();
    let ev = concave_envelope(&v, &g, 1e-12).unwrap();
    let again = envelope_of_samples(g.clone(), eu.grid_values()).unwrap();
    let mut worst = 0.0_f64;
    for (a, b) in eu.grid_values().iter().zip(again.grid_values()) {
        worst = worst.max((a - b).abs());
    }
    assert!(worst < 1e-9, "idempotence {worst}");
    for (a, b) in eu.grid_values().iter().zip(ev.grid_values()) {
        assert!(a <= &(b + 1e-12));
    }
}

#[test]
fn touching_points_have_nonpositive_second_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for n in [1usize, 2] {
        let g = grid(n);
        for which in 0..3 {
            let u = instance(n, which);
            let env = concave_envelope(&u, &g, 1e-12).unwrap();
            let tol = default_contact_tolerance(&env);
            let pts = contacts_in_ball(&u, &g);
            for x in spread(&pts, 40) {
                let gap = env.eval(&x) - u.eval(&x);
                for _ in 0..200 {
                    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                    let plus: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
                    let minus: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                    let delta = u.eval(&plus) + u.eval(&minus) - 2.0 * u.eval(&x);
                    assert!(delta <= 2.0 * gap + 1e-12 && gap <= tol, "n={n} inst={which} x={x:?} δ={delta}");
                }
            }
        }
    }
}

fn brute_faces(pts: &[P3]) -> BTreeSet<[usize; 3]> {
    let mut out = BTreeSet::new();
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            for k in (j + 1)..pts.len() {
                let a = pts[i];
                let e1 = [pts[j][0] - a[0], pts[j][1] - a[1], pts[j][2] - a[2]];
                let e2 = [pts[k][0] - a[0], pts[k][1] - a[1], pts[k][2] - a[2]];
                let nrm = [e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2], e1[0] * e2[1] - e1[1] * e2[0]];
                let side = |p: &P3| nrm[0] * (p[0] - a[0]) + nrm[1] * (p[1] - a[1]) + nrm[2] * (p[2] - a[2]);
                let (mut pos, mut neg) = (false, false);
                for (m, p) in pts.iter().enumerate() {
                    if m == i || m == j || m == k {
                        continue;
                    }
                    let s = side(p);
                    pos |= s > 0.0;
                    neg |= s < 0.0;
                }
                if !(pos && neg) {
                    out.insert([i, j, k]);
                }
            }
        }
    }
    out
}

#[test]
fn hull_faces_match_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..20 {
        let count = 8 + trial * 2;
        let pts: Vec<P3> = (0..count).map(|_| [rng.gen(), rng.gen(), rng.gen::<f64>() * (1.0 + trial as f64)]).collect();
        let faces = convex_hull(&pts, 1e-12).unwrap();
        let mut got = BTreeSet::new();
        for f in &faces {
            let mut v = f.vertices;
            v.sort();
            got.insert(v);
            for p in &pts {
                let s = f.normal[0] * p[0] + f.normal[1] * p[1] + f.normal[2] * p[2] - f.offset;
                assert!(s <= 1e-9);
            }
        }
        assert_eq!(got, brute_faces(&pts), "trial {trial}");
        let verts: BTreeSet<usize> = got.iter().flatten().copied().collect();
        assert_eq!(faces.len(), 2 * verts.len() - 4);
    }
}

#[test]
fn detachment_of_concave_cap() {
    let p = coarse(AnisotropyProfile::isotropic(2, 1.0, 1.0, 2.0).unwrap());
    let g = grid(2);
    let s = DetachmentSettings { samples: 4000, ..Default::default() };

    // on each shell |y|² ≥ inf ⟨Az, z⟩, so 100|y|² beats M inf for M < 100 once the
    // threshold M inf = 99 · 4^{−k−1} is below the floor drop of 2
    let u = instance(2, 0);
    let env = concave_envelope(&u, &g, 1e-12).unwrap();
    for k in 2..6 {
        let d = detachment_measure(&u, &env, &[0.0, 0.0], &[0.0, 0.0], k, 99.0, &p, &s).unwrap();
        assert_eq!(d.ratio, 1.0);
        assert_eq!(d.asymmetry, 0.0);
        assert!((d.measure - d.shell_measure).abs() <= 1e-12 * d.shell_measure);
    }

    // flat on B_{1/3}, which contains the shells from k = 3 on
    let flat = field(2, |x| (1.5 * (1.0 - norm2(x).sqrt())).min(1.0));
    let envf = concave_envelope(&flat, &g, 1e-12).unwrap();
    for k in 3..7 {
        let d = detachment_measure(&flat, &envf, &[0.0, 0.0], &[0.0, 0.0], k, 1.0, &p, &s).unwrap();
        assert_eq!(d.measure, 0.0);
    }
}

#[test]
fn detachment_sets_need_not_be_symmetric() {
    // steep for y₁ < 0, shallow for y₁ ≥ 0
    let p = coarse(AnisotropyProfile::isotropic(2, 1.0, 1.0, 2.0).unwrap());
    let g = grid(2);
    let u = field(2, |x| {
        let a = if x[0] < 0.0 { 100.0 } else { 2.0 };
        (1.0 - a * norm2(x)).max(-1.0)
    });
    let env = concave_envelope(&u, &g, 1e-12).unwrap();
    let s = DetachmentSettings { samples: 20_000, ..Default::default() };
    let (outer, inner) = (p.radii_sequence(1).unwrap(), p.radii_sequence(2).unwrap());
    // the shallow side stays above once M/2 · inner^{2/3} exceeds the largest |y|² on the shell
    let m = 2.0 * 2f64.cbrt() * (outer / inner).powf(2.0 / 3.0) * 1.01;
    assert!(m < 100.0);
    let d = detachment_measure(&u, &env, &[0.0, 0.0], &[0.0, 0.0], 1, m, &p, &s).unwrap();
    assert_eq!(d.asymmetry, 1.0);
    assert!((d.ratio - 0.5).abs() < 3.0 * (0.25 / s.samples as f64).sqrt(), "{}", d.ratio);
}

#[test]
fn detachment_constant_is_smallest_on_ladder() {
    let p = coarse(AnisotropyProfile::isotropic(2, 1.0, 1.0, 2.0).unwrap());
    let g = grid(2);
    let u = instance(2, 0);
    let env = concave_envelope(&u, &g, 1e-12).unwrap();
    let s = DetachmentSettings { samples: 4000, k_max: 6, ..Default::default() };
    let (eps, fx) = (0.5, 1.0);
    let (c0, d) = detachment_constant(&u, &env, &[0.0, 0.0], &[0.0, 0.0], fx, eps, 16, &p, &s).unwrap().unwrap();
    assert!(d.ratio <= eps);
    assert!(c0 > 1.0);
    for k in 0..=s.k_max {
        let below = detachment_measure(&u, &env, &[0.0, 0.0], &[0.0, 0.0], k, c0 / 2.0 * fx / eps, &p, &s).unwrap();
        assert!(below.ratio > eps, "k={k}");
    }
    assert!(matches!(
        detachment_constant(&u, &env, &[0.0, 0.0], &[0.0, 0.0], 0.0, eps, 4, &p, &s),
        Err(AbpError::Parameter(_))
    ));
}

#[test]
fn concave_portion_hypothesis_implies_conclusion() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut held, mut failed) = (0usize, 0usize);
    for trial in 0..400 {
        let n = 1 + trial % 2;
        // min of linear pieces with 0 in their hull keeps 0 a supergradient at the origin
        let mut grads: Vec<Vec<f64>> = (0..5).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let mut sum = vec![0.0; n];
        for gr in &grads {
            for i in 0..n {
                sum[i] += gr[i];
            }
        }
        grads.push(sum.iter().map(|v| -v).collect());
        let shift: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let gamma = move |y: &[f64]| {
            grads.iter().map(|gr| gr.iter().zip(y).zip(&shift).map(|((a, b), c)| a * (b - c)).sum::<f64>() + gr.iter().zip(&shift).map(|(a, c)| a * c).sum::<f64>()).fold(0.0_f64, f64::min)
        };
        let h = rng.gen_range(0.0..0.6);
        let t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..1.5)).collect();
        let x = vec![0.0; n];
        let r = concave_portion_check(&gamma, &x, &vec![0.0; n], h, &t, 4000, trial as u64);
        assert_eq!(r.epsilon0, concave_portion_epsilon0(n));
        if r.hypothesis {
            held += 1;
            assert!(r.conclusion, "trial {trial}: {r:?}");
        } else {
            failed += 1;
        }
    }
    assert!(held > 20 && failed > 20, "held {held} failed {failed}");
}

#[test]
fn concave_portion_on_ellipsoid_annulus() {
    let p = AnisotropyProfile::new(&[0.8, 1.6], 1.0, 2.0).unwrap();
    let r: f64 = 0.3;
    let t: Vec<f64> = p.orders().iter().map(|q| r.powf(1.0 / q) / 2.0).collect();
    let gamma = |y: &[f64]| 1.0 - 0.5 * (y[0] * y[0] + 3.0 * y[1] * y[1]);
    let big = concave_portion_check(&gamma, &[0.0, 0.0], &[0.0, 0.0], 1.0, &t, 4000, 1);
    assert_eq!(big.violation_fraction, 0.0);
    assert!(big.hypothesis && big.conclusion);
    let none = concave_portion_check(&gamma, &[0.0, 0.0], &[0.0, 0.0], 0.0, &t, 4000, 1);
    assert_eq!(none.violation_fraction, 1.0);
    assert!(!none.hypothesis);
}

fn assert_cover(n: usize, which: usize, p: &AnisotropyProfile) -> (AbpCover, CoverReport) {
    let g = grid(n);
    let u = instance(n, which);
    let rhs = certified_rhs(&u, &g, p);
    let f = BoundedField::constant(n, rhs);
    let settings = CoverSettings { precondition: Some((QuadratureSettings::default(), 16)), ..Default::default() };
    let cover = abp_cover(&u, &f, p, &g, &settings).unwrap();
    let rep = verify_cover(&cover, &u, &f, p);
    assert!(rep.max_depth <= DEFAULT_DEPTH_CAP);
    assert!(rep.properties[..4].iter().all(|b| *b), "n={n} inst={which} {:?}", rep.properties);
    assert!(rep.rects > 0);
    (cover, rep)
}

#[test]
fn cover_of_instances_one_dimension() {
    let p = AnisotropyProfile::isotropic(1, 1.0, 1.0, 2.0).unwrap();
    for which in 0..3 {
        let (cover, rep) = assert_cover(1, which, &p);
        assert!(cover.subsolution.as_ref().unwrap().pass);
        assert!(rep.properties[4] && rep.properties[5], "inst={which} {rep:?}");
        assert_eq!(rep.at_floor, 0);
        assert!(rep.c5_measured <= cover.settings.c5);
        assert!(rep.varsigma_measured >= cover.settings.varsigma);
        assert!(rep.sup_constant.is_finite() && rep.sup_constant > 0.0);
    }
}

#[test]
fn cover_of_instances_two_dimensions() {
    let p = coarse(AnisotropyProfile::isotropic(2, 1.0, 1.0, 2.0).unwrap());
    for which in 0..3 {
        let (_, rep) = assert_cover(2, which, &p);
        assert!(rep.properties[4] && rep.properties[5], "inst={which} {rep:?}");
        assert!(rep.c6_smallest.is_some());
    }
}

#[test]
fn anisotropic_cover_respects_diameter_bound() {
    let p = coarse(AnisotropyProfile::new(&[0.9, 1.7], 1.0, 2.0).unwrap());
    let (cover, rep) = assert_cover(2, 1, &p);
    for r in &cover.rects {
        assert!(r.rect.diameter() <= rep.diameter_bound * (1.0 + 1e-12));
        for x in &cover.contact {
            if r.rect.contains_closed(x) {
                assert!(r.contacts > 0);
            }
        }
    }
}

#[test]
fn tiny_gradient_threshold_forces_splits() {
    let p = coarse(AnisotropyProfile::isotropic(2, 1.0, 1.0, 2.0).unwrap());
    let g = grid(2);
    let u = instance(2, 2);
    let f = BoundedField::constant(2, 1.0);
    let settings = CoverSettings { c5: 1e-6, ..Default::default() };
    let cover = abp_cover(&u, &f, &p, &g, &settings).unwrap();
    let rep = verify_cover(&cover, &u, &f, &p);
    assert!(cover.splits > 0);
    assert!(rep.max_depth > 0);
    assert!(rep.properties[..4].iter().all(|b| *b), "{:?}", rep.properties);
    for (r, props) in cover.rects.iter().zip(&rep.per_rect) {
        if !r.at_floor {
            assert!(props.gradient_image);
        }
    }
    // children would fall below the grid spacing
    let h = g.spacing(0);
    for r in cover.rects.iter().filter(|r| r.at_floor) {
        assert!(r.rect.hi[0] - r.rect.lo[0] < 2.0 * h);
    }
}

#[test]
fn depth_cap_reports_offending_chain() {
    let p = coarse(AnisotropyProfile::isotropic(2, 1.0, 1.0, 2.0).unwrap());
    let g = grid(2);
    let u = instance(2, 2);
    let f = BoundedField::constant(2, 1.0);
    let settings = CoverSettings { c5: 1e-6, min_edge: Some(0.0), depth_cap: 3, ..Default::default() };
    match abp_cover(&u, &f, &p, &g, &settings) {
        Err(AbpError::DepthCap { cap, chain }) => {
            assert_eq!(cap, 3);
            assert_eq!(chain.len(), 4);
            for (d, (depth, index)) in chain.iter().enumerate() {
                assert_eq!(*depth as usize, d);
                if d > 0 {
                    let parent = &chain[d - 1].1;
                    assert!(index.iter().zip(parent).all(|(k, pk)| k >> 1 == *pk));
                }
            }
        }
        other => panic!("expected depth cap, got {other:?}"),
    }
}

#[test]
fn precondition_failure_is_reported() {
    let p = coarse(AnisotropyProfile::isotropic(1, 1.0, 1.0, 2.0).unwrap());
    let g = grid(1);
    let u = instance(1, 1);
    let settings = CoverSettings { precondition: Some((QuadratureSettings::default(), 8)), ..Default::default() };
    let r = abp_cover(&u, &BoundedField::constant(1, 0.0), &p, &g, &settings);
    assert!(matches!(r, Err(AbpError::Precondition { .. })), "{r:?}");
}
