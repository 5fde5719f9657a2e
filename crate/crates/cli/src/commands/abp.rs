use std::collections::BTreeSet;
use std::sync::Arc;

use aniso_nonlocal::abp::{abp_cover, check_subsolution, spread, AbpError, CoverSettings, DEFAULT_DEPTH_CAP};
use aniso_nonlocal::covering::AxisBox;
use aniso_nonlocal::cz::{cz_decompose, CzError, LatticeSet};
use aniso_nonlocal::envelope::{
    concave_envelope, contact_set, default_contact_tolerance, envelope_of_samples, ConcaveEnvelope, EnvelopeError,
};
use aniso_nonlocal::{stats, BoundedField, QuadratureScheme, QuadratureSettings};
use rand::Rng;
use serde::Deserialize;
use serde_json::json;

use super::{axis_columns, params, profile, quadrature, start};
use crate::config::{Command, RunConfig};
use crate::instances::{abp_grid, AbpInstance};
use crate::result::{num, Cell, ExperimentResult, Table};
use crate::CliError;

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Envelope failures that describe the input field rather than the configuration.
fn envelope_invalid(e: &EnvelopeError) -> bool {
    matches!(e, EnvelopeError::PositiveOutside { .. })
}

#[derive(Debug, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct EnvelopeParams {
    instance: AbpInstance,
    points: Option<usize>,
}

pub(super) fn envelope(cfg: &RunConfig) -> Result<ExperimentResult, CliError> {
    let p: EnvelopeParams = params(cfg)?;
    let n = cfg.profile.n;
    profile(cfg)?;
    let mut r = start(cfg, Command::Envelope);
    let g = abp_grid(n, p.points);
    let u = p.instance.field(n);
    // a pointwise larger field: the same instance raised by a cap at the origin
    let base = u.clone();
    let v = BoundedField::analytic(n, Arc::new(move |x: &[f64]| base.eval(x).max(0.5 - 4.0 * norm2(x))), 1.0);

    let build = |f: &BoundedField| concave_envelope(f, &g, 1e-12);
    let (eu, ev) = match (build(&u), build(&v)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) if envelope_invalid(&e) => {
            r.invalid.push(e.to_string());
            return Ok(r);
        }
        (Err(e), _) | (_, Err(e)) => return Err(CliError::config(e)),
    };
    let again = envelope_of_samples(g.clone(), eu.grid_values()).map_err(CliError::config)?;
    let idempotence = max_abs_diff(eu.grid_values(), again.grid_values());
    let monotone_excess =
        eu.grid_values().iter().zip(ev.grid_values()).map(|(a, b)| a - b).fold(0.0_f64, f64::max);
    let pts = g.points();
    let below = pts.iter().zip(eu.grid_values()).map(|(x, gv)| u.eval(x).max(0.0) - gv).fold(0.0_f64, f64::max);

    let tol = default_contact_tolerance(&eu);
    let cs = contact_set(&u, &eu, tol);
    let whole = AxisBox { lo: g.lo.clone(), hi: g.hi.clone() };

    r.scalar("instance", json!(p.instance.name()));
    r.scalar("grid_points", json!(g.len()));
    r.scalar("vertices", json!(eu.vertices.len()));
    r.scalar("cells", json!(eu.cells.len()));
    r.scalar("flat", json!(eu.flat));
    r.scalar("contact_points", json!(cs.points.len()));
    r.scalar("contact_tol", num(tol));
    r.scalar("degenerate", json!(cs.degenerate));
    r.scalar("sup_envelope", num(eu.grid_values().iter().copied().fold(f64::NEG_INFINITY, f64::max)));
    r.scalar("grad_image", num(eu.grad_image_measure(&whole)));
    r.scalar("idempotence_error", num(idempotence));
    r.scalar("monotonicity_excess", num(monotone_excess));
    r.scalar("majorant_defect", num(below));
    r.check("idempotent", idempotence <= 1e-9);
    r.check("monotone", monotone_excess <= 1e-12);
    r.check("majorant", below <= 1e-12);
    r.data = vertex_table(&eu);
    Ok(r)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn vertex_table(env: &ConcaveEnvelope) -> Table {
    let n = env.dim();
    let mut cols: Vec<(String, String)> =
        axis_columns("x", n).into_iter().map(|c| (c, "hull vertex coordinate".to_string())).collect();
    cols.push(("height".into(), "envelope value at the vertex".into()));
    cols.push(("measure".into(), "measure of the superdifferential at the vertex".into()));
    let mut t = Table::from_columns(cols);
    for (k, (x, h)) in env.vertices.iter().zip(&env.heights).enumerate() {
        let mut row: Vec<Cell> = x.iter().map(|&c| c.into()).collect();
        row.push((*h).into());
        row.push(env.vertex_measure(k).into());
        t.push(row);
    }
    t
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CoverParams {
    instance: AbpInstance,
    points: Option<usize>,
    /// `ρ₀ = 8`, `𝔠 = 1`; defaults on in two dimensions unless the profile sets either.
    coarse: Option<bool>,
    /// Constant right-hand side; certified from the quadrature at contact points when absent.
    rhs: Option<f64>,
    c5: f64,
    c6: f64,
    varsigma: f64,
    depth_cap: u32,
    samples: usize,
    precondition_points: usize,
}

impl Default for CoverParams {
    fn default() -> Self {
        let s = CoverSettings::default();
        Self {
            instance: AbpInstance::default(),
            points: None,
            coarse: None,
            rhs: None,
            c5: s.c5,
            c6: s.c6,
            varsigma: s.varsigma,
            depth_cap: DEFAULT_DEPTH_CAP,
            samples: s.samples,
            precondition_points: 16,
        }
    }
}

pub(super) fn cover(cfg: &RunConfig) -> Result<ExperimentResult, CliError> {
    let p: CoverParams = params(cfg)?;
    let mut prof = profile(cfg)?;
    let n = prof.n();
    let overridden = cfg.profile.rho0.is_some() || cfg.profile.frak_c.is_some();
    if p.coarse.unwrap_or(n >= 2 && !overridden) {
        prof = prof.with_rho0(8.0).and_then(|q| q.with_frak_c(1)).map_err(CliError::config)?;
    }
    let mut r = start(cfg, Command::AbpCover);
    r.scalar("instance", json!(p.instance.name()));
    r.scalar("rho0", num(prof.rho0()));
    r.scalar("frak_c", json!(prof.frak_c()));
    let g = abp_grid(n, p.points);
    let u = p.instance.field(n);
    let quad = quadrature(cfg, QuadratureSettings::default());

    let rhs = match p.rhs {
        Some(v) => v,
        None => {
            let env = match concave_envelope(&u, &g, 1e-12) {
                Ok(e) => e,
                Err(e) if envelope_invalid(&e) => {
                    r.invalid.push(e.to_string());
                    return Ok(r);
                }
                Err(e) => return Err(CliError::config(e)),
            };
            let cs = contact_set(&u, &env, default_contact_tolerance(&env));
            let pts: Vec<Vec<f64>> = cs.points.into_iter().filter(|x| norm2(x) <= 1.0).collect();
            let scheme = QuadratureScheme::build(&prof, quad).map_err(CliError::config)?;
            let zero = BoundedField::constant(n, 0.0);
            check_subsolution(&u, &zero, &prof, &scheme, &spread(&pts, p.precondition_points)).certified_rhs
        }
    };
    r.scalar("rhs", num(rhs));
    let f = BoundedField::constant(n, rhs);
    let defaults = CoverSettings::default();
    let settings = CoverSettings {
        c5: p.c5,
        c6: p.c6,
        varsigma: p.varsigma,
        depth_cap: p.depth_cap,
        samples: p.samples,
        seed: cfg.seed ^ defaults.seed,
        precondition: Some((quad, p.precondition_points)),
        ..defaults
    };

    let cover = match abp_cover(&u, &f, &prof, &g, &settings) {
        Ok(c) => c,
        Err(AbpError::DepthCap { cap, chain }) => {
            r.scalar("depth_cap", json!(cap));
            r.scalar(
                "chain",
                json!(chain.iter().map(|(d, idx)| json!({"depth": d, "index": idx.iter().map(|k| k.to_string()).collect::<Vec<_>>()})).collect::<Vec<_>>()),
            );
            r.check("depth_within_cap", false);
            return Ok(r);
        }
        Err(e @ (AbpError::NoContact | AbpError::Precondition { .. } | AbpError::NotContact { .. })) => {
            r.invalid.push(e.to_string());
            return Ok(r);
        }
        Err(AbpError::Envelope(e)) if envelope_invalid(&e) => {
            r.invalid.push(e.to_string());
            return Ok(r);
        }
        Err(e) => return Err(CliError::config(e)),
    };
    let rep = aniso_nonlocal::abp::verify_cover(&cover, &u, &f, &prof);
    r.scalar("rects", json!(rep.rects));
    r.scalar("max_depth", json!(rep.max_depth));
    r.scalar("splits", json!(cover.splits));
    r.scalar("at_floor", json!(rep.at_floor));
    r.scalar("contact_points", json!(cover.contact.len()));
    r.scalar("contact_tol", num(cover.contact_tol));
    r.scalar("c5_measured", num(rep.c5_measured));
    r.scalar("varsigma_measured", num(rep.varsigma_measured));
    r.scalar("c6_smallest", rep.c6_smallest.map_or(json!(null), num));
    r.scalar("diameter_bound", num(rep.diameter_bound));
    r.scalar("sup_u", num(rep.sup_u));
    r.scalar("sup_constant", num(rep.sup_constant));
    if let Some(s) = &cover.subsolution {
        r.scalar("subsolution_min_slack", num(s.min_slack));
        r.check("subsolution", s.pass);
    }
    r.check("depth_within_cap", rep.max_depth <= settings.depth_cap);
    let names = ["disjoint", "covers_contact", "meets_contact", "diameter", "gradient_image", "detachment"];
    for (k, (ok, name)) in rep.properties.iter().zip(names).enumerate() {
        r.check(&format!("property_{}_{name}", k + 1), *ok);
    }

    let mut cols: Vec<(String, String)> = vec![("depth".into(), "refinement depth".into())];
    cols.extend(axis_columns("lo", n).into_iter().map(|c| (c, "lower corner".to_string())));
    cols.extend(axis_columns("hi", n).into_iter().map(|c| (c, "upper corner".to_string())));
    for (c, d) in [
        ("diameter", "Euclidean diameter"),
        ("contacts", "contact points in the closed rectangle"),
        ("grad_image", "|∇Γ| of the closed rectangle"),
        ("f_max", "max f⁺ over the closed rectangle"),
        ("detachment_ratio", "|A_j| / |R̃_j|"),
        ("at_floor", "not split because children fall below the minimum edge"),
    ] {
        cols.push((c.into(), d.into()));
    }
    let mut t = Table::from_columns(cols);
    for c in &cover.rects {
        let mut row: Vec<Cell> = vec![c.depth.into()];
        row.extend(c.rect.lo.iter().map(|&v| Cell::from(v)));
        row.extend(c.rect.hi.iter().map(|&v| Cell::from(v)));
        row.extend([
            c.diameter.into(),
            c.contacts.into(),
            c.grad_image.into(),
            c.f_max.into(),
            c.detachment_ratio.into(),
            c.at_floor.into(),
        ]);
        t.push(row);
    }
    r.data = t;
    Ok(r)
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CzParams {
    generation: Option<u32>,
    delta: f64,
    /// Cells of `A`; random blobs when absent.
    a: Option<Vec<Vec<u64>>>,
    /// Cells of `B`; all of `Q₁` when absent.
    b: Option<Vec<Vec<u64>>>,
    blobs: usize,
    /// Chebyshev radius of a blob, in cells.
    blob_radius: u64,
}

impl Default for CzParams {
    fn default() -> Self {
        Self { generation: None, delta: 0.3, a: None, b: None, blobs: 3, blob_radius: 1 }
    }
}

fn blob_cells(n: usize, generation: u32, blobs: usize, radius: u64, seed: u64) -> Vec<Vec<u64>> {
    let side = 1u64 << generation;
    let mut rng = stats::rng_stream(seed, 0xc2);
    let mut cells = BTreeSet::new();
    for _ in 0..blobs {
        let c: Vec<u64> = (0..n).map(|_| rng.gen_range(0..side)).collect();
        let span = 2 * radius + 1;
        for k in 0..span.pow(n as u32) {
            let mut rest = k;
            let mut cell = Vec::with_capacity(n);
            for ci in &c {
                let off = rest % span;
                rest /= span;
                let v = *ci as i64 + off as i64 - radius as i64;
                if v < 0 || v >= side as i64 {
                    break;
                }
                cell.push(v as u64);
            }
            if cell.len() == n {
                cells.insert(cell);
            }
        }
    }
    cells.into_iter().collect()
}

pub(super) fn cz(cfg: &RunConfig) -> Result<ExperimentResult, CliError> {
    let p: CzParams = params(cfg)?;
    let prof = profile(cfg)?;
    let n = prof.n();
    let gen = p.generation.unwrap_or(if n <= 2 { 6 } else { 4 });
    let mut r = start(cfg, Command::Cz);
    let a_cells = p.a.clone().unwrap_or_else(|| blob_cells(n, gen, p.blobs, p.blob_radius, cfg.seed));
    let a = LatticeSet::from_cells(n, gen, &a_cells).map_err(CliError::config)?;
    let b = match &p.b {
        Some(c) => LatticeSet::from_cells(n, gen, c).map_err(CliError::config)?,
        None => LatticeSet::full(n, gen),
    };
    r.scalar("generation", json!(gen));
    r.scalar("delta", num(p.delta));
    r.scalar("cells_a", json!(a.count()));
    r.scalar("cells_b", json!(b.count()));

    let d = match cz_decompose(&a, &b, p.delta, &prof) {
        Ok(d) => d,
        Err(e @ (CzError::NotSubset | CzError::TooLarge { .. } | CzError::Hypothesis { .. })) => {
            r.invalid.push(e.to_string());
            return Ok(r);
        }
        Err(e) => return Err(CliError::config(e)),
    };
    r.scalar("boxes", json!(d.boxes.len()));
    r.scalar("maximal_bad", json!(d.maximal_bad.len()));
    r.scalar("hypothesis_vacuous", json!(d.hypothesis_vacuous));
    r.scalar("measure_a", num(d.measure_a));
    r.scalar("measure_b", num(d.measure_b));
    r.scalar("max_density", num(d.max_density));
    r.scalar("overlap", json!(d.overlap));
    r.scalar("c_measured", num(d.c_measured));
    r.scalar("c_bound", num(d.c_bound));
    r.check("covers_a", d.covers_a);
    r.check("density_at_most_delta", d.max_density <= p.delta);
    r.check("measure_bound", d.c_measured <= d.c_bound);
    r.check("certified", d.certified);

    let mut cols: Vec<(String, String)> = vec![("generation".into(), "generation of the source dyadic cube".into())];
    cols.extend(axis_columns("index", n).into_iter().map(|c| (c, "dyadic index of the source cube".to_string())));
    cols.extend(axis_columns("lo", n).into_iter().map(|c| (c, "lower corner of R_j".to_string())));
    cols.extend(axis_columns("hi", n).into_iter().map(|c| (c, "upper corner of R_j".to_string())));
    let mut t = Table::from_columns(cols);
    for (q, bx) in d.sources.iter().zip(&d.boxes) {
        let mut row: Vec<Cell> = vec![q.generation.into()];
        row.extend(q.index.iter().map(|&k| Cell::Int(k as i64)));
        row.extend(bx.lo.iter().map(|&v| Cell::from(v)));
        row.extend(bx.hi.iter().map(|&v| Cell::from(v)));
        t.push(row);
    }
    r.data = t;
    r.scalar("a_source", json!(if p.a.is_some() { "config" } else { "blobs" }));
    Ok(r)
}
