//! Run configuration as read from JSON.

use std::fmt;
use std::str::FromStr;

use aniso_nonlocal::{AnisotropyProfile, ProfileError, QuadratureSettings};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Constants,
    BarrierVerify,
    Envelope,
    AbpCover,
    Cz,
    Solve,
    Harnack,
    Decay,
    Sweep,
    KernelCheck,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::Constants,
        Command::BarrierVerify,
        Command::Envelope,
        Command::AbpCover,
        Command::Cz,
        Command::Solve,
        Command::Harnack,
        Command::Decay,
        Command::Sweep,
        Command::KernelCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::BarrierVerify => "barrier-verify",
            Command::Envelope => "envelope",
            Command::AbpCover => "abp-cover",
            Command::Cz => "cz",
            Command::Solve => "solve",
            Command::Harnack => "harnack",
            Command::Decay => "decay",
            Command::Sweep => "sweep",
            Command::KernelCheck => "kernel-check",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown command {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub n: usize,
    pub sigma: Vec<f64>,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frak_c: Option<u32>,
}

impl ProfileConfig {
    pub fn build(&self) -> Result<AnisotropyProfile, ProfileError> {
        if self.sigma.len() != self.n {
            return Err(ProfileError::DimensionMismatch { n: self.n, len: self.sigma.len() });
        }
        self.with_sigma(&self.sigma)
    }

    /// Same `n`, ellipticity and radii overrides with different exponents.
    pub fn with_sigma(&self, sigma: &[f64]) -> Result<AnisotropyProfile, ProfileError> {
        let mut p = AnisotropyProfile::new(sigma, self.lambda_lo, self.lambda_hi)?;
        if let Some(r) = self.rho0 {
            p = p.with_rho0(r)?;
        }
        if let Some(c) = self.frak_c {
            p = p.with_frak_c(c)?;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub shells: usize,
    pub nodes_per_shell: usize,
    pub far_radius: f64,
    pub r_inner: f64,
}

impl QuadratureConfig {
    pub fn settings(&self, seed: u64) -> QuadratureSettings {
        QuadratureSettings {
            shells: self.shells,
            nodes_per_shell: self.nodes_per_shell,
            far_radius: self.far_radius,
            r_inner: self.r_inner,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    pub profile: ProfileConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureConfig>,
    #[serde(default = "empty_object")]
    pub params: Value,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// SHA-256 of the canonical JSON of everything that affects the results
    /// (the output directory does not).
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let v = serde_json::to_value(&c).expect("config serialises");
        let mut text = String::new();
        canonical(&v, &mut text);
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Command parameters, rejecting unknown keys.
    pub fn params<T: for<'de> Deserialize<'de>>(&self) -> Result<T, serde_json::Error> {
        serde_json::from_value(self.params.clone())
    }
}

/// JSON text with object keys sorted at every level.
fn canonical(v: &Value, out: &mut String) {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                canonical(&m[k], out);
            }
            out.push('}');
        }
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                canonical(x, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}
