use aniso_nonlocal::barrier::{
    certify_psi, check_elementary_inequalities, find_p, BarrierError, FindPSettings, DEFAULT_SIGMA_FLOOR, P_MAX,
};
use serde::Deserialize;
use serde_json::json;

use super::{params, profile, quadrature, start};
use crate::config::{Command, RunConfig};
use crate::result::{num, nums, ExperimentResult, Table};
use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Params {
    /// Outer radius of the sampled annulus; `8√n` when absent.
    outer: Option<f64>,
    points: usize,
    p_max: u32,
    sigma_floor: f64,
    psi: bool,
    elementary_trials: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self { outer: None, points: 200, p_max: P_MAX, sigma_floor: DEFAULT_SIGMA_FLOOR, psi: true, elementary_trials: 10_000 }
    }
}

pub(super) fn run(cfg: &RunConfig) -> Result<ExperimentResult, CliError> {
    let p: Params = params(cfg)?;
    let prof = profile(cfg)?;
    let mut r = start(cfg, Command::BarrierVerify);
    let defaults = FindPSettings::default();
    let settings = FindPSettings {
        quadrature: quadrature(cfg, defaults.quadrature),
        points: p.points,
        seed: cfg.seed ^ defaults.seed,
        p_max: p.p_max,
        sigma_floor: p.sigma_floor,
    };
    let outer = p.outer.unwrap_or(8.0 * (prof.n() as f64).sqrt());
    r.scalar("outer", num(outer));
    r.data = Table::new(&[
        ("p", "barrier exponent tried"),
        ("min_margin", "smallest sampled M⁻f at this p"),
        ("min_slack", "smallest M⁻f + quadrature error"),
    ]);

    let found = match find_p(&prof, outer, &settings) {
        Ok(f) => f,
        Err(BarrierError::BelowSigmaFloor { sigma_min, floor }) => {
            r.invalid.push(format!("σ_min = {sigma_min} is not above the floor {floor}"));
            return Ok(r);
        }
        Err(BarrierError::NoAdmissibleP { p_max, best_p, best_slack }) => {
            r.scalar("best_p", json!(best_p));
            r.scalar("best_slack", num(best_slack));
            r.scalar("p_max", json!(p_max));
            r.check("find_p", false);
            return Ok(r);
        }
        Err(e) => return Err(CliError::config(e)),
    };
    for &(q, m, s) in &found.margins {
        r.data.push(vec![q.into(), m.into(), s.into()]);
    }
    let rep = &found.report;
    r.scalar("p", json!(found.p));
    r.scalar("min_margin", num(rep.min_margin));
    r.scalar("error", num(rep.error_at_worst));
    r.scalar("max_error", num(rep.max_error));
    r.scalar("min_slack", num(rep.min_slack));
    r.scalar("worst_point", nums(&rep.worst_point));
    r.scalar("delta_bound_violations", json!(found.delta_bound_violations));
    r.check("find_p", true);
    r.check("supersolution", rep.pass && rep.min_margin >= -rep.error_at_worst);
    r.check("delta_lower_bound", found.delta_bound_violations == 0);

    let el = check_elementary_inequalities(p.elementary_trials, found.p as f64 + 4.0, settings.seed);
    r.scalar("elementary_trials", json!(el.trials));
    r.scalar("elementary_min_gap", nums(&[el.min_gap_1, el.min_gap_2]));
    r.check("elementary_inequalities", el.violations_1 == 0 && el.violations_2 == 0);

    if p.psi {
        match certify_psi(&prof, 1, &settings) {
            Ok(c) => {
                r.scalar("psi_p", num(c.psi.p));
                r.scalar("psi_outside_min_margin", num(c.outside.min_margin));
                r.scalar("psi_outside_error", num(c.outside.error_at_worst));
                r.scalar("psi_deficit", num(c.deficit));
                r.scalar("psi_floor_sample", num(c.floor_sample));
                r.scalar("psi_outside_support_max", num(c.outside_support_max));
                r.check("psi_outside", c.outside.pass && c.outside.min_margin >= -c.outside.error_at_worst);
                r.check("psi_inside", c.inside.pass);
            }
            Err(BarrierError::NoAdmissibleP { best_p, best_slack, .. }) => {
                r.scalar("psi_best_p", json!(best_p));
                r.scalar("psi_best_slack", num(best_slack));
                r.check("psi_outside", false);
            }
            Err(e) => return Err(CliError::config(e)),
        }
    }
    Ok(r)
}
