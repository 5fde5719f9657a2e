//! Named test fields, kernels and exterior data that configs refer to.

use std::sync::Arc;

use aniso_nonlocal::experiments::{bump_sum, random_exterior_bumps};
use aniso_nonlocal::field::PointFn;
use aniso_nonlocal::kernel::smooth_multiplier;
use aniso_nonlocal::{BoundedField, Exterior, Grid, Kernel, Multiplier};
use serde::{Deserialize, Serialize};

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn analytic(n: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> BoundedField {
    BoundedField::analytic(n, Arc::new(f), 1.0)
}

/// The three ABP instances: a narrow cap, a broad cap, and two bumps of unequal height at ±0.4 e₁.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AbpInstance {
    Narrow,
    Broad,
    #[default]
    Bumps,
}

impl AbpInstance {
    pub const ALL: [AbpInstance; 3] = [AbpInstance::Narrow, AbpInstance::Broad, AbpInstance::Bumps];

    pub fn name(self) -> &'static str {
        match self {
            AbpInstance::Narrow => "narrow",
            AbpInstance::Broad => "broad",
            AbpInstance::Bumps => "bumps",
        }
    }

    pub fn field(self, n: usize) -> BoundedField {
        match self {
            AbpInstance::Narrow => analytic(n, |x| (1.0 - 100.0 * norm2(x)).max(-1.0)),
            AbpInstance::Broad => analytic(n, |x| (1.0 - norm2(x)).max(-1.0)),
            AbpInstance::Bumps => analytic(n, |x| {
                let shift = |c: f64| {
                    x.iter().enumerate().map(|(i, v)| if i == 0 { (v - c).powi(2) } else { v * v }).sum::<f64>()
                };
                (1.0 - 16.0 * shift(0.4)).max(0.8 - 16.0 * shift(-0.4)).max(-1.0)
            }),
        }
    }
}

/// Lattice on `[−3, 3]ⁿ`: 2001 points in one dimension, 257 per axis in two.
pub fn abp_grid(n: usize, points: Option<usize>) -> Grid {
    let default = if n == 1 { 2001 } else { 257 };
    Grid::cube(n, 3.0, points.unwrap_or(default))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelConfig {
    /// `a(y) ≡ multiplier`.
    Constant { multiplier: f64 },
    /// `lo + (hi−lo)(1 + cos(frequency |y|²))/2`.
    Smooth { lo: f64, hi: f64, frequency: f64 },
    /// Alternates between `lo` and `hi` on `steps` equal shells of `inner ≤ |y| < outer`, `hi` elsewhere.
    Staircase { lo: f64, hi: f64, inner: f64, outer: f64, steps: u32 },
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig::Constant { multiplier: 1.5 }
    }
}

impl KernelConfig {
    pub fn build(&self) -> Result<Kernel, String> {
        match *self {
            KernelConfig::Constant { multiplier } => {
                if !(multiplier > 0.0 && multiplier.is_finite()) {
                    return Err(format!("kernel multiplier must be positive, got {multiplier}"));
                }
                Ok(Kernel::constant(multiplier))
            }
            KernelConfig::Smooth { lo, hi, frequency } => {
                check_range(lo, hi)?;
                Ok(Kernel::PowerLaw(smooth_multiplier(lo, hi, frequency)))
            }
            KernelConfig::Staircase { lo, hi, inner, outer, steps } => {
                check_range(lo, hi)?;
                if !(inner >= 0.0 && outer > inner) || steps == 0 {
                    return Err("staircase needs 0 ≤ inner < outer and steps ≥ 1".into());
                }
                let f: PointFn = Arc::new(move |y: &[f64]| {
                    let r = norm2(y).sqrt();
                    if r >= inner && r < outer {
                        let k = ((r - inner) / (outer - inner) * steps as f64) as u64;
                        if k.is_multiple_of(2) {
                            lo
                        } else {
                            hi
                        }
                    } else {
                        hi
                    }
                });
                Ok(Kernel::PowerLaw(Multiplier::Rule { f, lo, hi }))
            }
        }
    }
}

fn check_range(lo: f64, hi: f64) -> Result<(), String> {
    if lo > 0.0 && hi >= lo && hi.is_finite() {
        Ok(())
    } else {
        Err(format!("multiplier range must satisfy 0 < lo ≤ hi, got [{lo}, {hi}]"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExteriorConfig {
    Constant { value: f64 },
    Affine { offset: f64, slope: Vec<f64> },
    /// Random nonnegative bumps around the boundary of `[−2, 2]ⁿ`; `seed` defaults to the run seed.
    Bumps {
        count: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// `value` on the annulus `lo ≤ |x| ≤ hi`, zero elsewhere.
    Indicator { lo: f64, hi: f64, value: f64 },
}

impl Default for ExteriorConfig {
    fn default() -> Self {
        ExteriorConfig::Bumps { count: 3, seed: None }
    }
}

impl ExteriorConfig {
    pub fn build(&self, n: usize, run_seed: u64) -> Result<Exterior, String> {
        Ok(match self {
            ExteriorConfig::Constant { value } => Exterior::Constant(*value),
            ExteriorConfig::Affine { offset, slope } => {
                if slope.len() != n {
                    return Err(format!("affine slope has {} entries, profile has n = {n}", slope.len()));
                }
                Exterior::Affine { offset: *offset, slope: slope.clone() }
            }
            ExteriorConfig::Bumps { count, seed } => {
                let bumps = random_exterior_bumps(n, *count, seed.unwrap_or(run_seed));
                let bound = bumps.iter().map(|b| b.height).sum();
                Exterior::Rule { f: bump_sum(bumps), bound }
            }
            ExteriorConfig::Indicator { lo, hi, value } => {
                let (lo, hi, v) = (*lo, *hi, *value);
                if !(hi >= lo) {
                    return Err("indicator needs lo ≤ hi".into());
                }
                Exterior::Rule {
                    f: Arc::new(move |x: &[f64]| {
                        let r = norm2(x).sqrt();
                        if r >= lo && r <= hi {
                            v
                        } else {
                            0.0
                        }
                    }),
                    bound: v.abs(),
                }
            }
        })
    }

    /// Data that the solved field must reproduce exactly when the right-hand side vanishes.
    pub fn is_affine(&self) -> bool {
        matches!(self, ExteriorConfig::Constant { .. } | ExteriorConfig::Affine { .. })
    }
}
