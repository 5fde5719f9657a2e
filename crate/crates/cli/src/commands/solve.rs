use aniso_nonlocal::experiments::{
    distribution_decay, harnack_problem, harnack_quotient, holder_estimate, measured_c0, point_estimate,
    predicted_epsilon, random_exterior_bumps, sigma_sweep, solve_measured, source_problem, Bump, Decay,
    HarnackQuotient, PointEstimate, SweepTable,
};
use aniso_nonlocal::solver::{solve_dirichlet, DiscreteProblem};
use aniso_nonlocal::{AnisotropyProfile, BoundedField, Grid, Kernel, KernelFamily};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;

use super::{axis_columns, params, profile, start};
use crate::config::{Command, RunConfig};
use crate::instances::{ExteriorConfig, KernelConfig};
use crate::result::{num, nums, Cell, ExperimentResult, Table};
use crate::CliError;

fn default_points(n: usize) -> usize {
    match n {
        1 => 129,
        2 => 33,
        _ => 9,
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SolveParams {
    points: Option<usize>,
    /// `Ω = [−half, half]ⁿ`.
    half: f64,
    kernel: KernelConfig,
    exterior: ExteriorConfig,
    /// Constant right-hand side `f` in `I u = f`.
    rhs: f64,
    tolerance: f64,
    max_iters: usize,
    far_radius: f64,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            points: None,
            half: 2.0,
            kernel: KernelConfig::default(),
            exterior: ExteriorConfig::default(),
            rhs: 0.0,
            tolerance: 1e-10,
            max_iters: 5_000_000,
            far_radius: 8.0,
        }
    }
}

pub(super) fn solve(cfg: &RunConfig) -> Result<ExperimentResult, CliError> {
    let p: SolveParams = params(cfg)?;
    let prof = profile(cfg)?;
    let n = prof.n();
    let points = p.points.unwrap_or(default_points(n));
    if points < 2 || !(p.half > 0.0) {
        return Err(CliError::Config("solve needs at least 2 points per axis and half > 0".into()));
    }
    let kernel = p.kernel.build().map_err(CliError::Config)?;
    let exterior = p.exterior.build(n, cfg.seed).map_err(CliError::Config)?;
    let grid = Grid::cube(n, p.half, points);
    let problem = DiscreteProblem {
        grid: grid.clone(),
        exterior: exterior.clone(),
        family: KernelFamily::single(kernel),
        rhs: BoundedField::constant(n, p.rhs),
        profile: prof,
        tolerance: p.tolerance,
        max_iters: p.max_iters,
        far_radius: p.far_radius,
    };
    let sol = solve_dirichlet(&problem).map_err(CliError::config)?;
    let rep = &sol.report;
    let mut r = start(cfg, Command::Solve);
    let vals = sol.field.values();
    r.scalar("points", json!(grid.len()));
    r.scalar("iterations", json!(rep.iterations));
    r.scalar("residual", num(rep.residual));
    r.scalar("tau", num(rep.tau));
    r.scalar("max_weight_sum", num(rep.max_weight_sum));
    r.scalar("truncation_bound", num(rep.truncation_bound));
    r.scalar("u_min", num(vals.iter().copied().fold(f64::INFINITY, f64::min)));
    r.scalar("u_max", num(vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
    r.check("converged", rep.converged);
    if p.exterior.is_affine() && p.rhs == 0.0 {
        let err = grid.points().iter().zip(vals).map(|(x, v)| (v - exterior.eval(x)).abs()).fold(0.0, f64::max);
        r.scalar("affine_error", num(err));
        r.check("reproduces_affine_data", err <= p.tolerance);
    }

    let mut cols: Vec<(String, String)> =
        axis_columns("x", n).into_iter().map(|c| (c, "lattice point coordinate".to_string())).collect();
    cols.push(("u".into(), "solved value".into()));
    let mut t = Table::from_columns(cols);
    for (x, v) in grid.points().iter().zip(vals) {
        let mut row: Vec<Cell> = x.iter().map(|&c| c.into()).collect();
        row.push((*v).into());
        t.push(row);
    }
    r.data = t;
    Ok(r)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct HarnackParams {
    points: usize,
    instances: usize,
    bumps: usize,
    kernel: KernelConfig,
    tolerance: f64,
    /// Ball on which `C₀` is measured.
    c0_radius: f64,
    /// Optional upper bound the largest quotient must respect.
    bound: Option<f64>,
}

impl Default for HarnackParams {
    fn default() -> Self {
        Self {
            points: 129,
            instances: 20,
            bumps: 3,
            kernel: KernelConfig::default(),
            tolerance: 1e-9,
            c0_radius: 2.0,
            bound: None,
        }
    }
}

struct HarnackRun {
    seed: u64,
    converged: bool,
    iterations: usize,
    quotient: HarnackQuotient,
    scale_covariant: bool,
    gamma: Option<f64>,
    oscillations: Vec<(f64, f64)>,
}

/// Dyadic radii `1, 1/2, …` down to four grid cells of `[−2, 2]ⁿ`.
fn holder_radii(points: usize) -> Vec<f64> {
    let h = 4.0 / (points.max(2) - 1) as f64;
    let mut radii = Vec::new();
    let mut r = 1.0;
    while r >= 4.0 * h * (1.0 - 1e-12) {
        radii.push(r);
        r *= 0.5;
    }
    radii
}

fn harnack_run(prof: &AnisotropyProfile, hp: &HarnackParams, kernel: &Kernel, seed: u64) -> Result<HarnackRun, CliError> {
    let n = prof.n();
    let prob = harnack_problem(prof, hp.points, kernel.clone(), random_exterior_bumps(n, hp.bumps, seed), hp.tolerance);
    let (u, rep) = solve_measured(&prob).map_err(CliError::config)?;
    let c0 = measured_c0(&u, hp.c0_radius);
    let quotient = harnack_quotient(&u, c0, hp.tolerance);
    let scaled = harnack_quotient(&u.scaled(4.0), 4.0 * c0, 4.0 * hp.tolerance);
    let radii = holder_radii(hp.points);
    let (gamma, oscillations) = if radii.len() >= 4 {
        let fit = holder_estimate(&u.field, u.grid(), &vec![0.0; n], &radii).map_err(CliError::config)?;
        (fit.gamma, fit.oscillations)
    } else {
        (None, Vec::new())
    };
    Ok(HarnackRun {
        seed,
        converged: rep.converged,
        iterations: rep.iterations,
        scale_covariant: scaled.quotient == quotient.quotient,
        quotient,
        gamma,
        oscillations,
    })
}

fn harnack_family(prof: &AnisotropyProfile, hp: &HarnackParams, seed: u64) -> Result<Vec<HarnackRun>, CliError> {
    if hp.instances == 0 || hp.points < 3 {
        return Err(CliError::Config("harnack needs at least one instance and 3 points per axis".into()));
    }
    let kernel = hp.kernel.build().map_err(CliError::Config)?;
    (0..hp.instances).into_par_iter().map(|i| harnack_run(prof, hp, &kernel, seed.wrapping_add(i as u64))).collect()
}

/// Largest quotient over the family, or `None` when any instance is flagged.
fn family_quotient(runs: &[HarnackRun]) -> Option<f64> {
    if runs.iter().any(|r| !r.converged || !r.quotient.valid) {
        return None;
    }
    Some(runs.iter().map(|r| r.quotient.quotient).fold(f64::NEG_INFINITY, f64::max))
}

/// Mean fitted exponent over the family, or `None` when any fit is missing or flagged.
fn family_gamma(runs: &[HarnackRun]) -> Option<f64> {
    if runs.iter().any(|r| !r.converged || !r.quotient.valid) {
        return None;
    }
    let g: Option<Vec<f64>> = runs.iter().map(|r| r.gamma).collect();
    g.map(|g| g.iter().sum::<f64>() / g.len() as f64)
}

pub(super) fn harnack(cfg: &RunConfig) -> Result<ExperimentResult, CliError> {
    let hp: HarnackParams = params(cfg)?;
    let prof = profile(cfg)?;
    let runs = harnack_family(&prof, &hp, cfg.seed)?;
    let mut r = start(cfg, Command::Harnack);
    for (i, run) in runs.iter().enumerate() {
        if !run.quotient.valid {
            r.invalid.push(format!("instance {i} (seed {}): {:?}", run.seed, run.quotient.violations));
        }
    }
    let quotients: Vec<f64> = runs.iter().map(|x| x.quotient.quotient).collect();
    let max_q = quotients.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    r.scalar("instances", json!(runs.len()));
    r.scalar("max_quotient", num(max_q));
    r.scalar("mean_quotient", num(quotients.iter().sum::<f64>() / quotients.len() as f64));
    r.scalar("max_c0", num(runs.iter().map(|x| x.quotient.c0).fold(0.0, f64::max)));
    r.scalar("holder_radii", nums(&holder_radii(hp.points)));
    r.scalar("mean_gamma", family_gamma(&runs).map_or(json!(null), num));
    r.check("converged", runs.iter().all(|x| x.converged));
    r.check("scale_covariant", runs.iter().all(|x| x.scale_covariant));
    if let Some(b) = hp.bound {
        r.check("quotient_bound", max_q <= b);
    }

    let mut t = Table::new(&[
        ("instance", "index within the family"),
        ("seed", "seed of the exterior bumps"),
        ("iterations", "solver iterations"),
        ("converged", "residual reached the tolerance"),
        ("valid", "Harnack preconditions hold"),
        ("quotient", "sup_{B_1/2} u / (u(0) + C0)"),
        ("sup_half", "sup of u over the lattice points of B_1/2"),
        ("centre", "u(0)"),
        ("c0", "measured C0"),
        ("gamma", "fitted Hölder exponent at the origin, blank without a fit"),
    ]);
    let mut osc = Table::new(&[
        ("instance", "index within the family"),
        ("r", "radius of the ball about the origin"),
        ("oscillation", "osc of u over the lattice points of B_r"),
    ]);
    for (i, run) in runs.iter().enumerate() {
        let q = &run.quotient;
        t.push(vec![
            i.into(),
            Cell::Int(run.seed as i64),
            run.iterations.into(),
            run.converged.into(),
            q.valid.into(),
            q.quotient.into(),
            q.sup_half.into(),
            q.centre.into(),
            q.c0.into(),
            run.gamma.map_or(Cell::Text(String::new()), Cell::Num),
        ]);
        for &(rad, o) in &run.oscillations {
            osc.push(vec![i.into(), rad.into(), o.into()]);
        }
    }
    r.data = t;
    r.series.insert("oscillation".into(), osc);
    Ok(r)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SourceConfig {
    /// `0.3 e₁` when absent.
    centre: Option<Vec<f64>>,
    height: f64,
    width: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self { centre: None, height: 30.0, width: 0.12 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DecayParams {
    points: usize,
    m: f64,
    k_max: usize,
    kernel: KernelConfig,
    source: SourceConfig,
    tolerance: f64,
    /// Bound `ε₀` on `M⁻_h u` and the slack allowed on every precondition.
    eps0: f64,
    slack: f64,
    eps_min: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        Self {
            points: 129,
            m: 1.02,
            k_max: 40,
            kernel: KernelConfig::default(),
            source: SourceConfig::default(),
            tolerance: 1e-9,
            eps0: 0.0,
            slack: 1e-7,
            eps_min: 0.05,
        }
    }
}

struct DecayRun {
    converged: bool,
    iterations: usize,
    raw_centre: f64,
    estimate: PointEstimate,
    decay: Decay,
    predicted: f64,
}

/// Solves the source problem and normalises by `u(0)`; the inner error names a failed precondition.
fn decay_run(prof: &AnisotropyProfile, dp: &DecayParams) -> Result<Result<DecayRun, String>, CliError> {
    let n = prof.n();
    let kernel = dp.kernel.build().map_err(CliError::Config)?;
    let centre = dp.source.centre.clone().unwrap_or_else(|| {
        let mut c = vec![0.0; n];
        c[0] = 0.3;
        c
    });
    if centre.len() != n {
        return Err(CliError::Config(format!("source centre has {} entries, profile has n = {n}", centre.len())));
    }
    let source = Bump { centre, height: dp.source.height, width: dp.source.width };
    let (u, rep) = solve_measured(&source_problem(prof, dp.points, kernel, source, dp.tolerance)).map_err(CliError::config)?;
    let raw_centre = u.centre_value();
    if !(raw_centre > 0.0) {
        return Ok(Err(format!("u(0) = {raw_centre} is not positive")));
    }
    let u = u.scaled(1.0 / raw_centre);
    let estimate = point_estimate(&u, dp.m, dp.eps0, dp.slack).map_err(CliError::config)?;
    if !estimate.valid {
        return Ok(Err(format!("point-estimate preconditions: {:?}", estimate.violations)));
    }
    let decay = distribution_decay(&u, dp.m, dp.k_max).map_err(CliError::config)?;
    let predicted = predicted_epsilon(estimate.measure, dp.m);
    Ok(Ok(DecayRun { converged: rep.converged, iterations: rep.iterations, raw_centre, estimate, decay, predicted }))
}

fn decay_series(d: &Decay) -> Table {
    let mut t = Table::new(&[("k", "exponent k of the level M^k"), ("measure", "|{u > M^k} ∩ Q_1|")]);
    for (k, v) in d.measures.iter().enumerate() {
        t.push(vec![(k + 1).into(), (*v).into()]);
    }
    t
}

pub(super) fn decay(cfg: &RunConfig) -> Result<ExperimentResult, CliError> {
    let dp: DecayParams = params(cfg)?;
    let prof = profile(cfg)?;
    let mut r = start(cfg, Command::Decay);
    let empty = decay_series(&Decay { measures: Vec::new(), fit: aniso_nonlocal::experiments::fit_decay(&[], dp.m) });
    r.data = empty.clone();
    r.series.insert("decay".into(), empty);
    let run = match decay_run(&prof, &dp)? {
        Ok(run) => run,
        Err(why) => {
            r.invalid.push(why);
            return Ok(r);
        }
    };
    let fit = run.decay.fit;
    r.scalar("iterations", json!(run.iterations));
    r.scalar("u0_raw", num(run.raw_centre));
    r.scalar("m", num(dp.m));
    r.scalar("varsigma", num(run.estimate.measure));
    r.scalar("max_minus", num(run.estimate.max_minus));
    r.scalar("epsilon_fit", num(fit.epsilon));
    r.scalar("fit_residual", num(fit.residual));
    r.scalar("fit_terms", json!(fit.terms));
    r.scalar("epsilon_predicted", num(run.predicted));
    r.check("converged", run.converged);
    r.check("monotone", run.decay.measures.windows(2).all(|w| w[1] <= w[0]));
    r.check("epsilon_floor", fit.epsilon >= dp.eps_min);
    r.check("consistent_with_point_estimate", (fit.epsilon - run.predicted).abs() <= 0.25 * run.predicted);
    let t = decay_series(&run.decay);
    r.data = t.clone();
    r.series.insert("decay".into(), t);
    Ok(r)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SigmaSpec {
    /// The same exponent on every axis.
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
enum SweepExperiment {
    #[default]
    All,
    Harnack,
    Holder,
    Decay,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepParams {
    sigmas: Vec<SigmaSpec>,
    experiment: SweepExperiment,
    harnack: HarnackParams,
    decay: DecayParams,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            sigmas: [1.0, 1.5, 1.9, 1.99].into_iter().map(SigmaSpec::Scalar).collect(),
            experiment: SweepExperiment::All,
            harnack: HarnackParams::default(),
            decay: DecayParams::default(),
        }
    }
}

#[derive(Default)]
struct SweepOut {
    harnack: Option<f64>,
    gamma: Option<f64>,
    epsilon: Option<f64>,
}

pub(super) fn sweep(cfg: &RunConfig) -> Result<ExperimentResult, CliError> {
    let sp: SweepParams = params(cfg)?;
    let n = cfg.profile.n;
    let profiles = sp
        .sigmas
        .iter()
        .map(|s| {
            let sigma = match s {
                SigmaSpec::Scalar(v) => vec![*v; n],
                SigmaSpec::Vector(v) => v.clone(),
            };
            if sigma.len() != n {
                return Err(CliError::Config(format!("sweep entry {sigma:?} does not have n = {n} exponents")));
            }
            cfg.profile.with_sigma(&sigma).map_err(|e| CliError::Config(format!("profile: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if profiles.is_empty() {
        return Err(CliError::Config("sweep needs at least one σ".into()));
    }
    let which = sp.experiment;
    let family = matches!(which, SweepExperiment::All | SweepExperiment::Harnack | SweepExperiment::Holder);
    let decays = matches!(which, SweepExperiment::All | SweepExperiment::Decay);

    let outs: Vec<SweepOut> = profiles
        .par_iter()
        .map(|prof| -> Result<SweepOut, CliError> {
            let mut o = SweepOut::default();
            if family {
                let runs = harnack_family(prof, &sp.harnack, cfg.seed)?;
                o.harnack = family_quotient(&runs);
                o.gamma = family_gamma(&runs);
            }
            if decays {
                o.epsilon = match decay_run(prof, &sp.decay)? {
                    Ok(run) if run.converged => Some(run.decay.fit.epsilon),
                    _ => None,
                };
            }
            Ok(o)
        })
        .collect::<Result<_, _>>()?;

    let table = |pick: fn(&SweepOut) -> Option<f64>| -> Result<SweepTable, CliError> {
        let mut i = 0;
        sigma_sweep(&profiles, |_| {
            let q = pick(&outs[i]);
            i += 1;
            q
        })
        .map_err(CliError::config)
    };

    let mut r = start(cfg, Command::Sweep);
    let mut quantities: Vec<(&str, SweepTable, &str)> = Vec::new();
    if matches!(which, SweepExperiment::All | SweepExperiment::Harnack) {
        quantities.push(("harnack", table(|o| o.harnack)?, "largest Harnack quotient over the family"));
    }
    if matches!(which, SweepExperiment::All | SweepExperiment::Holder) {
        quantities.push(("gamma", table(|o| o.gamma)?, "mean fitted Hölder exponent over the family"));
    }
    if decays {
        quantities.push(("epsilon", table(|o| o.epsilon)?, "fitted decay exponent"));
    }

    let mut cols = vec![
        ("sigma".to_string(), "exponents σ_i, separated by ';'".to_string()),
        ("sigma_min".to_string(), "σ_min".to_string()),
    ];
    for (name, _, desc) in &quantities {
        cols.push((name.to_string(), format!("{desc}, blank when flagged")));
    }
    let mut data = Table::from_columns(cols);
    for (k, prof) in profiles.iter().enumerate() {
        let sig: Vec<String> = prof.sigma().iter().map(|s| s.to_string()).collect();
        let mut row: Vec<Cell> = vec![sig.join(";").into(), prof.sigma_min().into()];
        for (_, t, _) in &quantities {
            row.push(opt_cell(t.rows[k].quantity));
        }
        data.push(row);
    }
    r.data = data;

    for (name, t, desc) in &quantities {
        let mut s = Table::new(&[("sigma_min", "σ_min of the profile"), ("quantity", desc)]);
        for row in &t.rows {
            s.push(vec![row.sigma_min.into(), opt_cell(row.quantity)]);
        }
        r.series.insert(format!("sweep_{name}"), s);
        r.scalar(
            name,
            json!({
                "slope": t.slope.map_or(json!(null), num),
                "slope_se": num(t.slope_se),
                "stable": t.stable,
                "diverging": t.diverging,
                "flagged": t.flagged,
                "values": t.rows.iter().map(|x| x.quantity.map_or(json!(null), num)).collect::<Vec<_>>(),
            }),
        );
        r.check(&format!("{name}_rows_valid"), t.flagged == 0);
        match *name {
            "epsilon" => {
                let floor = sp.decay.eps_min;
                r.check("epsilon_floor", t.rows.iter().all(|x| x.quantity.is_some_and(|e| e >= floor)));
            }
            _ => r.check(&format!("{name}_stable"), t.stable && !t.diverging),
        }
    }
    r.scalar("sigma_min", nums(&profiles.iter().map(|p| p.sigma_min()).collect::<Vec<_>>()));
    Ok(r)
}

fn opt_cell(v: Option<f64>) -> Cell {
    v.map_or(Cell::Text(String::new()), Cell::Num)
}
