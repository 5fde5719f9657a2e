use std::sync::Arc;

use aniso_nonlocal::experiments::{kernel_modulus_check, truncated_kernel_control, ModulusSettings};
use aniso_nonlocal::field::PointFn;
use aniso_nonlocal::{stats, BoundedField, Exterior, Grid, Kernel, QuadratureScheme, QuadratureSettings};
use rand::Rng;
use serde::Deserialize;
use serde_json::json;

use super::{axis_columns, params, profile, quadrature, start};
use crate::config::{Command, RunConfig};
use crate::instances::KernelConfig;
use crate::result::{num, Cell, ExperimentResult, Table};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
enum Check {
    #[default]
    Modulus,
    Truncation,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Params {
    check: Check,
    kernel: KernelConfig,
    tau0: f64,
    /// Shifts `h`; a single `0.004 e₁` when absent.
    shifts: Option<Vec<Vec<f64>>>,
    /// `C₀`; when absent, the modulus of the constant kernel at the upper multiplier plus its error.
    c0: Option<f64>,
    octaves: Option<u32>,
    panels_per_octave: Option<usize>,
    directions: Option<usize>,
    instances: usize,
    /// Lattice points per axis of `[−1, 1]ⁿ` where truncation is checked.
    points: Option<usize>,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            check: Check::default(),
            kernel: KernelConfig::default(),
            tau0: 1.0,
            shifts: None,
            c0: None,
            octaves: None,
            panels_per_octave: None,
            directions: None,
            instances: 10,
            points: None,
        }
    }
}

pub(super) fn run(cfg: &RunConfig) -> Result<ExperimentResult, CliError> {
    let p: Params = params(cfg)?;
    match p.check {
        Check::Modulus => modulus(cfg, &p),
        Check::Truncation => truncation(cfg, &p),
    }
}

fn modulus(cfg: &RunConfig, p: &Params) -> Result<ExperimentResult, CliError> {
    let prof = profile(cfg)?;
    let n = prof.n();
    let kernel = p.kernel.build().map_err(CliError::Config)?;
    let d = ModulusSettings::default();
    let settings = ModulusSettings {
        octaves: p.octaves.unwrap_or(d.octaves),
        panels_per_octave: p.panels_per_octave.unwrap_or(64),
        directions: p.directions.unwrap_or(32),
        seed: cfg.seed ^ d.seed,
        ..d
    };
    let shifts = p.shifts.clone().unwrap_or_else(|| {
        let mut h = vec![0.0; n];
        h[0] = 0.004;
        vec![h]
    });
    let c0 = match p.c0 {
        Some(c) => c,
        None => {
            let reference = Kernel::constant(kernel.upper_multiplier());
            let m = kernel_modulus_check(&reference, &prof, p.tau0, &shifts, f64::INFINITY, &settings)
                .map_err(CliError::config)?;
            m.rows.iter().map(|row| row.integral + row.error).fold(0.0, f64::max)
        }
    };
    let m = kernel_modulus_check(&kernel, &prof, p.tau0, &shifts, c0, &settings).map_err(CliError::config)?;
    let mut r = start(cfg, Command::KernelCheck);
    r.scalar("check", json!("modulus"));
    r.scalar("tau0", num(p.tau0));
    r.scalar("c0", num(c0));
    r.scalar("worst", num(m.worst));
    r.check("modulus_within_c0", m.pass);

    let mut cols: Vec<(String, String)> =
        axis_columns("h", n).into_iter().map(|c| (c, "shift component".to_string())).collect();
    cols.push(("integral".into(), "∫ outside B_τ0 of |K(y) − K(y−h)| / |h|".into()));
    cols.push(("error".into(), "quadrature and tail error".into()));
    let mut t = Table::from_columns(cols);
    for row in &m.rows {
        let mut cells: Vec<Cell> = row.h.iter().map(|&v| v.into()).collect();
        cells.push(row.integral.into());
        cells.push(row.error.into());
        t.push(cells);
    }
    r.data = t;
    Ok(r)
}

/// `K = K₁ + amp·(1 − |y|²/ρ²)²₊` with its exact L¹ norm.
fn bump_part(n: usize, amp: f64, rho: f64) -> (PointFn, f64) {
    // ∫(1−s²)² over the unit ball: 16/15 in one dimension, π/3 in two, 32π/105 in three
    let unit = match n {
        1 => 16.0 / 15.0,
        2 => std::f64::consts::PI / 3.0,
        _ => 32.0 * std::f64::consts::PI / 105.0,
    };
    let part: PointFn = Arc::new(move |y: &[f64]| {
        let s = y.iter().map(|c| c * c).sum::<f64>() / (rho * rho);
        if s < 1.0 {
            amp * (1.0 - s) * (1.0 - s)
        } else {
            0.0
        }
    });
    (part, amp.abs() * unit * rho.powi(n as i32))
}

fn truncation(cfg: &RunConfig, p: &Params) -> Result<ExperimentResult, CliError> {
    let prof = profile(cfg)?;
    let n = prof.n();
    if n > 3 {
        return Err(CliError::Config("truncation check supports n ≤ 3".into()));
    }
    let base = p.kernel.build().map_err(CliError::Config)?;
    let scheme = QuadratureScheme::build(&prof, quadrature(cfg, QuadratureSettings::default())).map_err(CliError::config)?;
    let points = p.points.unwrap_or(match n {
        1 => 9,
        2 => 5,
        _ => 3,
    });
    let g = Grid::cube(n, 1.0, points);
    let mut rng = stats::rng_stream(cfg.seed, 0x7c);
    let mut r = start(cfg, Command::KernelCheck);
    let mut cols: Vec<(String, String)> = vec![("instance".into(), "random instance".into())];
    cols.extend(axis_columns("x", n).into_iter().map(|c| (c, "evaluation point".to_string())));
    cols.push(("difference".into(), "|I_K u − I_K1 u|".into()));
    cols.push(("bound".into(), "4 c0 sup|u| plus both quadrature errors".into()));
    cols.push(("c0".into(), "L1 budget of the truncated part".into()));
    let mut t = Table::from_columns(cols);
    let mut all = true;
    let mut worst_ratio = 0.0_f64;
    for case in 0..p.instances {
        let (amp, rho, freq): (f64, f64, f64) =
            (rng.gen_range(-0.5..0.5), rng.gen_range(0.5..2.0), rng.gen_range(0.5..3.0));
        let (part, l1) = bump_part(n, amp, rho);
        let k = Kernel::Truncated { base: Box::new(base.clone()), part, l1_bound: l1 };
        let wave: PointFn = Arc::new(move |x: &[f64]| (freq * x[0]).sin());
        let w = wave.clone();
        let u = BoundedField::sample(g.clone(), move |x| w(x), Exterior::Rule { f: wave, bound: 1.0 });
        let ctrl = truncated_kernel_control(&u, &g.points(), &k, &prof, &scheme);
        all &= ctrl.pass;
        for row in &ctrl.rows {
            if row.bound > 0.0 {
                worst_ratio = worst_ratio.max(row.difference / row.bound);
            }
            let mut cells: Vec<Cell> = vec![case.into()];
            cells.extend(row.point.iter().map(|&v| Cell::from(v)));
            cells.extend([row.difference.into(), row.bound.into(), ctrl.c0.into()]);
            t.push(cells);
        }
    }
    r.scalar("check", json!("truncation"));
    r.scalar("instances", json!(p.instances));
    r.scalar("worst_ratio", num(worst_ratio));
    r.check("within_l1_budget", all);
    r.data = t;
    Ok(r)
}
