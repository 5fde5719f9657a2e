use serde::Deserialize;
use serde_json::json;

use super::{params, profile, start};
use crate::config::{Command, RunConfig};
use crate::result::{num, nums, ExperimentResult, Table};
use crate::CliError;

#[derive(Debug, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct Params {
    /// Accepted range for `c_σ / (1 − 2^{−𝔠(n+σ_min)c_σ})`.
    ratio_bounds: Option<[f64; 2]>,
}

pub(super) fn run(cfg: &RunConfig) -> Result<ExperimentResult, CliError> {
    let p: Params = params(cfg)?;
    let prof = profile(cfg)?;
    let mut r = start(cfg, Command::Constants);
    let n = prof.n();
    let a = prof.matrix_a();
    let edges = prof.tile_edges();

    let q_min = prof.q().iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = prof.normalisation_ratio();
    let [lo, hi] = p.ratio_bounds.unwrap_or([1e-6, 1e6]);

    r.scalar("n", json!(n));
    r.scalar("c_sigma", num(prof.c_sigma()));
    r.scalar("q", nums(prof.q()));
    r.scalar("q_max", num(prof.q_max()));
    r.scalar("sigma_min", num(prof.sigma_min()));
    r.scalar("sigma_max", num(prof.sigma_max()));
    r.scalar("i_min", json!(prof.i_min()));
    r.scalar("frak_c", json!(prof.frak_c()));
    r.scalar("rho0", num(prof.rho0()));
    r.scalar("theta_exponent", num(prof.theta_exponent()));
    r.scalar("theta_unit_volume", num(prof.theta_unit_volume()));
    r.scalar("matrix_a", nums(&a.diag));
    r.scalar("base_radius", num(prof.base_radius()));
    r.scalar("radius_log2_step", num(prof.radius_log2_step()));
    r.scalar("normalisation_ratio", num(ratio));
    r.scalar("cover_diameter_bound", num(prof.cover_diameter_bound()));

    r.check("q_positive", prof.q().iter().all(|&v| v > 0.0));
    r.check("c_sigma_is_min_q", prof.c_sigma() == q_min);
    if prof.is_isotropic() {
        let s = prof.sigma()[0];
        let want = (2.0 - s) / (n as f64 + s);
        r.scalar("c_sigma_isotropic", num(want));
        r.check("isotropic_reduction", (prof.c_sigma() - want).abs() <= 1e-12);
    }
    r.check("normalisation_ratio_bounded", ratio >= lo && ratio <= hi);

    let mut t = Table::new(&[
        ("axis", "coordinate index i"),
        ("sigma", "σ_i"),
        ("order", "n + σ_i"),
        ("q", "q_i"),
        ("a", "diagonal entry of the rescaling matrix A"),
        ("tile_edge", "edge of the initial ABP tile along axis i"),
    ]);
    for i in 0..n {
        t.push(vec![i.into(), prof.sigma()[i].into(), prof.orders()[i].into(), prof.q()[i].into(), a.diag[i].into(), edges[i].into()]);
    }
    r.data = t;
    Ok(r)
}
