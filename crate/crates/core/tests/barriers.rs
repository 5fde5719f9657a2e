use std::sync::Arc;

use aniso_nonlocal::barrier::*;
use aniso_nonlocal::geometry::AnisoSet;
use aniso_nonlocal::ops::{eval_extremal, Extremal};
use aniso_nonlocal::stats;
use aniso_nonlocal::{AnisotropyProfile, BoundedField, QuadratureScheme, QuadratureSettings, ScalingMap};
use proptest::prelude::*;
use rand::Rng;

fn quad(seed: u64) -> QuadratureSettings {
    QuadratureSettings { shells: 64, nodes_per_shell: 256, far_radius: 64.0, r_inner: 1e-20, seed }
}

#[test]
fn find_p_certifies_isotropic_profiles() {
    for n in [1usize, 2] {
        for s in [0.8, 1.0, 1.5, 1.9] {
            let p = AnisotropyProfile::isotropic(n, s, 1.0, 2.0).unwrap();
            let r = 8.0 * (n as f64).sqrt();
            let found = find_p(&p, r, &FindPSettings::default()).unwrap();
            assert!(found.report.pass && found.report.min_slack >= 0.0, "n={n} σ={s}: {:?}", found.report);
            assert_eq!(found.delta_bound_violations, 0);
            assert_eq!((found.elementary.violations_1, found.elementary.violations_2), (0, 0));
            // every smaller p was tried and failed
            assert_eq!(found.margins.len() as u32, found.p);
            assert!(found.margins[..found.margins.len() - 1].iter().all(|m| m.2 < 0.0));
        }
    }
}

#[test]
fn margin_grows_from_p_to_p_plus_four() {
    let p = AnisotropyProfile::new(&[1.2, 1.6], 1.0, 2.0).unwrap();
    // an independent node set from the one find_p uses
    let scheme = QuadratureScheme::build(&p, quad(99)).unwrap();
    let pts = sample_ellipse_annulus(&p, 1.0, 1.0, 8.0 * 2f64.sqrt(), 60, 4);
    let margin = |e: f64| {
        let f = RadialBarrier::cap2p(e).field(2);
        verify_supersolution(&f, &pts, &p, &scheme, None).min_margin
    };
    for k in 1..=12 {
        let (a, b) = (margin(k as f64), margin(k as f64 + 4.0));
        assert!(b >= a, "p={k}: {a} -> {b}");
    }
}

/// `c/|y|²`-weighted integral of `λδ⁺ − Λδ⁻` by composite Simpson on pieces split at the
/// kinks of `min(2^p, |x|^{-p})`, in log coordinates near `y = 0`.
fn dense_minimal_1d(p: f64, x: f64, lo: f64, hi: f64, c: f64) -> f64 {
    let f = |t: f64| t.abs().powf(-p).min(p.exp2());
    let w = |y: f64| {
        let d = f(x + y) + f(x - y) - 2.0 * f(x);
        let v = if d > 0.0 { lo * d } else { hi * d };
        v * c / (y * y)
    };
    let simpson = |a: f64, b: f64, m: usize| {
        let h = (b - a) / m as f64;
        let mut s = w(a) + w(b);
        for k in 1..m {
            s += w(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    // y > 0 only; the integrand is even in y
    let mut cuts = vec![1e-6, x - 0.5, x + 0.5, x, 0.5 * x, 2.0 * x, 50.0, 5e4];
    cuts.retain(|c| *c >= 1e-6);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut total = 0.0;
    for w2 in cuts.windows(2) {
        total += simpson(w2[0], w2[1], 200_000);
    }
    // |y| < 1e-6: δ ≈ f''(x) y² with f'' = p(p+1)x^{-p-2} > 0
    total += lo * c * p * (p + 1.0) * x.powf(-p - 2.0) * 1e-6;
    // y > 5e4: δ → −2f(x)
    total += hi * c * (-2.0 * f(x)) / 5e4;
    2.0 * total
}

#[test]
fn one_dimensional_minimal_operator_matches_dense_reference() {
    let p = AnisotropyProfile::isotropic(1, 1.0, 1.0, 1.0).unwrap();
    let scheme = QuadratureScheme::build(&p, quad(3)).unwrap();
    for e in [1.0, 2.0, 4.0, 8.0] {
        let f = RadialBarrier::cap2p(e).field(1);
        let got = eval_extremal(&f, &[1.5], &p, &scheme, Extremal::Minus);
        let want = dense_minimal_1d(e, 1.5, 1.0, 1.0, p.c_sigma());
        assert_eq!(got.value > 0.0, want > 0.0, "p={e}: {got:?} vs {want}");
        assert!((got.value - want).abs() <= got.error, "p={e}: {got:?} vs {want}");
    }
}

#[test]
fn elementary_inequalities_hold_on_ten_thousand_trials() {
    let c = check_elementary_inequalities(10_000, 64.0, 2024);
    assert_eq!(c.trials, 10_000);
    assert_eq!((c.violations_1, c.violations_2), (0, 0));
    assert!(c.min_gap_1 >= 0.0 && c.min_gap_2 >= 0.0);
    // the stable forms agree with the literal expressions where those do not cancel
    let mut rng = stats::rng(5);
    for _ in 0..1000 {
        let a2: f64 = rng.gen_range(0.1..10.0);
        let a1 = a2 * rng.gen_range(0.2..0.95);
        let s: f64 = rng.gen_range(0.1..8.0);
        let lit1 = (a2 + a1).powf(-s) + (a2 - a1).powf(-s) - 2.0 * a2.powf(-s) - s * (s + 1.0) * a1 * a1 * a2.powf(-s - 2.0);
        let lit2 = (a2 + a1).powf(-s) - a2.powf(-s) * (1.0 - s * a1 / a2);
        let g1 = elementary_gap_1(a1, a2, s);
        let g2 = elementary_gap_2(a1, a2, s);
        assert!((g1 - lit1).abs() <= 1e-9 * a2.powf(-s).max(g1.abs()), "{g1} vs {lit1}");
        assert!((g2 - lit2).abs() <= 1e-9 * a2.powf(-s).max(g2.abs()), "{g2} vs {lit2}");
    }
}

#[test]
fn barrier_variants_and_caps() {
    let p = AnisotropyProfile::new(&[0.9, 1.7], 1.0, 2.0).unwrap();
    let f = build_barrier(&p, 3.0, BarrierVariant::FCap2p).unwrap();
    assert_eq!(f.eval(&[1.0, 0.0]), 1.0);
    assert_eq!(f.eval(&[0.0, -1.0]), 1.0);
    let (r, s) = (0.05, 0.3);
    let b = RadialBarrier::caps(3.0, s);
    assert!((b.cap_radius() - s).abs() < 1e-15);
    assert_eq!(b.eval(&[0.29, 0.0]), b.cap);
    assert!(b.eval(&[0.31, 0.0]) < b.cap);
    let g = build_barrier(&p, 3.0, BarrierVariant::GScaled { r, s }).unwrap();
    let t = ScalingMap::t(&p, r);
    let mut rng = stats::rng(6);
    for _ in 0..500 {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let want = b.eval(&t.apply(&x, true));
        assert!((g.eval(&x) - want).abs() <= 1e-13 * want, "{} vs {want}", g.eval(&x));
    }
    assert!(build_barrier(&p, -1.0, BarrierVariant::FCap2p).is_err());
    assert!(build_barrier(&p, 1.0, BarrierVariant::GScaled { r: 0.0, s: 1.0 }).is_err());
}

#[test]
fn scaling_identity_for_the_rescaled_barrier() {
    let p = AnisotropyProfile::new(&[1.1, 1.7], 1.0, 2.0).unwrap();
    let (r, e) = (0.02, 3.0);
    let g = build_barrier(&p, e, BarrierVariant::GScaled { r, s: 0.5 }).unwrap();
    let f = build_barrier(&p, e, BarrierVariant::FCap2p).unwrap();
    let t = ScalingMap::t(&p, r);
    let factor = t.det() / r;
    let fine = |seed| QuadratureSettings { shells: 128, nodes_per_shell: 16384, ..quad(seed) };
    let qg = QuadratureScheme::build(&p, QuadratureSettings { far_radius: 64.0 * r.powf(1.0 / 3.7), ..fine(21) }).unwrap();
    let qf = QuadratureScheme::build(&p, fine(37)).unwrap();
    let pts = sample_ellipse_annulus(&p, r, 1.0, 3.0, 50, 8);
    for x in &pts {
        let lhs = eval_extremal(&g, x, &p, &qg, Extremal::Minus);
        let rhs = eval_extremal(&f, &t.apply(x, true), &p, &qf, Extremal::Minus);
        let scaled = lhs.value / factor;
        assert!((scaled - rhs.value).abs() <= 0.02 * rhs.value.abs(), "x={x:?}: {scaled} vs {rhs:?}");
    }
}

#[test]
fn radial_barrier_is_symmetric_under_reflections_and_swaps() {
    let b = RadialBarrier::cap2p(5.0);
    let mut rng = stats::rng(7);
    for _ in 0..1000 {
        let (x, y) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let v = b.eval(&[x, y]);
        for w in [[y, x], [-x, y], [x, -y], [-y, -x]] {
            assert_eq!(v, b.eval(&w));
        }
    }
}

#[test]
fn psi_is_certified_outside_the_inner_ellipse() {
    for (sigma, n) in [(vec![1.0], 1usize), (vec![1.0, 1.5], 2), (vec![0.8, 1.9], 2)] {
        let p = AnisotropyProfile::new(&sigma, 1.0, 2.0).unwrap();
        let cert = certify_psi(&p, 1, &FindPSettings::default()).unwrap();
        assert!(cert.outside.pass && cert.outside.min_margin >= -cert.outside.error_at_worst, "{sigma:?}");
        assert!(cert.inside.pass, "{sigma:?}: {:?}", cert.inside);
        assert!(cert.floor_sample > 3.0);
        assert_eq!(cert.outside_support_max, 0.0);
        assert!(cert.psi.eval(&vec![0.0; n]) > 3.0);
        assert_eq!(FindPSettings::default().points, 200);
    }
}

#[test]
fn psi_branches_glue_to_first_order() {
    let p = AnisotropyProfile::new(&[1.0, 1.5], 1.0, 1.0).unwrap();
    let psi = build_psi(&p, 6.0, DEFAULT_SIGMA_FLOOR).unwrap();
    let l = psi.semi_axes[0];
    let at = |t: f64| psi.eval(&[t, 0.0]);
    let mut gaps = Vec::new();
    for k in 0..6 {
        let h = l * 1e-2 / 2f64.powi(k);
        let inner = (at(l) - at(l - h)) / h;
        let outer = (at(l + h) - at(l)) / h;
        gaps.push((outer - inner).abs());
    }
    // the jump of one-sided slopes is O(h): successive halvings halve it
    for w in gaps.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.8..2.2).contains(&ratio), "{gaps:?}");
    }
    let scale = psi.tilde_c * psi.p / l;
    assert!(gaps[0] < 0.1 * scale);
    assert!((at(l) - at(l * (1.0 - 1e-12))).abs() < 1e-9 * psi.max_value());
}

#[test]
fn spurious_bump_breaks_the_certificate_locally() {
    let p = AnisotropyProfile::new(&[1.0, 1.5], 1.0, 2.0).unwrap();
    let cert = certify_psi(&p, 1, &FindPSettings::default()).unwrap();
    let psi = cert.psi.clone();
    let spot = vec![2.2 * psi.semi_axes[0], 0.0];
    let s2 = spot.clone();
    let bump = move |x: &[f64]| {
        let d2 = (x[0] - s2[0]).powi(2) + (x[1] - s2[1]).powi(2);
        let b = (1.0 - d2 / 0.01).max(0.0);
        5.0 * b * b
    };
    let ps = psi.clone();
    let field = BoundedField::analytic(2, Arc::new(move |x: &[f64]| ps.eval(x) + bump(x)), psi.max_value() + 5.0);
    let scheme = QuadratureScheme::build(&p, quad(7)).unwrap();
    let mut pts = sample_ellipse_annulus(&p, 0.25, 1.0, 4.0 * 2f64.sqrt(), 200, 3);
    pts.push(spot.clone());
    let rep = verify_supersolution(&field, &pts, &p, &scheme, None);
    assert!(!rep.pass);
    let d = ((rep.worst_point[0] - spot[0]).powi(2) + (rep.worst_point[1] - spot[1]).powi(2)).sqrt();
    assert!(d < 0.1, "worst point {:?} far from the bump at {spot:?}", rep.worst_point);
    let clean = verify_supersolution(&psi.field(), &pts, &p, &scheme, None);
    assert!(clean.pass);
}

#[test]
fn constant_barrier_has_zero_margin() {
    let p = AnisotropyProfile::new(&[1.0, 1.2], 1.0, 2.0).unwrap();
    let scheme = QuadratureScheme::build(&p, quad(1)).unwrap();
    let pts = sample_ellipse_annulus(&p, 1.0, 1.0, 2.0, 20, 1);
    let rep = verify_supersolution(&BoundedField::constant(2, 3.0), &pts, &p, &scheme, None);
    assert!(rep.pass);
    assert_eq!(rep.min_margin, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psi_invariants_survive_profile_changes(
        s in prop::collection::vec(0.55f64..1.99, 1..=3),
        e in 1.0f64..20.0,
        seed in 0u64..1000,
    ) {
        let p = AnisotropyProfile::new(&s, 1.0, 1.0).unwrap();
        let psi = build_psi(&p, e, DEFAULT_SIGMA_FLOOR).unwrap();
        prop_assert!(psi.gluing_error < 1e-9);
        let n = s.len();
        let mut rng = stats::rng(seed);
        let rect = AnisoSet::rect(vec![0.0; n], 0.25, 3.0);
        let support = AnisoSet::ellipse(vec![0.0; n], 0.25, 3.0 * (n as f64).sqrt());
        for _ in 0..200 {
            let x = rect.sample(&p, &mut rng);
            prop_assert!(psi.eval(&x) > 3.0);
            let far: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            if !support.contains(&p, &far) {
                prop_assert_eq!(psi.eval(&far), 0.0);
            }
        }
    }
}
