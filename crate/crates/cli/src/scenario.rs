//! Scenario files: a flat JSON object with optional `sweep` and `sim`
//! groups. Command-line flags are merged on top of a loaded file.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use hetq_core::{PolicyKind, PolicySpec, SystemParams};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyChoice {
    Ps,
    Cd,
    DynamicPs,
    /// The blocking/sojourn conservation law itself (region sweeps only).
    Conservation,
}

impl PolicyChoice {
    pub fn kind(&self) -> Option<PolicyKind> {
        match self {
            PolicyChoice::Ps => Some(PolicyKind::Ps),
            PolicyChoice::Cd => Some(PolicyKind::Cd),
            PolicyChoice::DynamicPs => Some(PolicyKind::DynamicPs),
            PolicyChoice::Conservation => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    P,
    PBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub grid: usize,
}

pub const DEFAULT_GRID: usize = 101;
pub const DEFAULT_REPS: usize = 10;
pub const DEFAULT_HORIZON_ARRIVALS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "default_horizon")]
    pub horizon_arrivals: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_warmup")]
    pub warmup: f64,
}

fn default_horizon() -> u64 {
    DEFAULT_HORIZON_ARRIVALS
}
fn default_reps() -> usize {
    DEFAULT_REPS
}
fn default_warmup() -> f64 {
    hetq_core::sim::DEFAULT_WARMUP
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            horizon_arrivals: DEFAULT_HORIZON_ARRIVALS,
            reps: DEFAULT_REPS,
            seed: 0,
            warmup: default_warmup(),
        }
    }
}

/// Everything a command may need. Fields stay optional here; each command
/// asks for what it requires and reports the missing field by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub policy: PolicyChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_i: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_i: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_i: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_pb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSpec>,
}

fn missing(field: &str) -> CliError {
    CliError::usage(format!("missing required field: {field}"))
}

impl Scenario {
    pub fn empty(policy: PolicyChoice) -> Self {
        Scenario {
            policy,
            lambda_i: None,
            mu_i: None,
            rho_i: None,
            lambda_t: None,
            mu_t: None,
            p: None,
            k: None,
            target_pb: None,
            sweep: None,
            sim: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::usage(format!("bad scenario file: {e}")))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn k(&self) -> Result<usize, CliError> {
        self.k.ok_or_else(|| missing("k"))
    }

    pub fn p(&self) -> Result<f64, CliError> {
        self.p.ok_or_else(|| missing("p"))
    }

    pub fn lambda_t(&self) -> Result<f64, CliError> {
        self.lambda_t.ok_or_else(|| missing("lambda_t"))
    }

    pub fn mu_t(&self) -> Result<f64, CliError> {
        self.mu_t.ok_or_else(|| missing("mu_t"))
    }

    pub fn target_pb(&self) -> Result<f64, CliError> {
        self.target_pb.ok_or_else(|| missing("target_pb"))
    }

    /// `(lambda_i, mu_i)`. With only `rho_i` given, `mu_i` defaults to 1;
    /// the short-frequent-job formulas depend on `rho_i` alone.
    pub fn eager_rates(&self) -> Result<(f64, f64), CliError> {
        match (self.rho_i, self.lambda_i, self.mu_i) {
            (Some(rho), None, mu) => {
                let mu = mu.unwrap_or(1.0);
                Ok((rho * mu, mu))
            }
            (None, Some(l), Some(m)) => Ok((l, m)),
            (None, Some(_), None) => Err(missing("mu_i")),
            (Some(_), Some(_), _) => Err(CliError::usage("give either rho_i or lambda_i, not both")),
            (None, None, _) => Err(missing("rho_i (or lambda_i and mu_i)")),
        }
    }

    pub fn rho_i(&self) -> Result<f64, CliError> {
        let (l, m) = self.eager_rates()?;
        Ok(l / m)
    }

    /// True when the eager service rate was given rather than defaulted.
    pub fn has_mu_i(&self) -> bool {
        self.mu_i.is_some()
    }

    pub fn system(&self) -> Result<SystemParams, CliError> {
        let (lambda_i, mu_i) = self.eager_rates()?;
        SystemParams::new(lambda_i, mu_i, self.lambda_t()?, self.mu_t()?, self.p()?, self.k()?)
            .map_err(|e| CliError::usage(e.to_string()))
    }

    pub fn policy_spec(&self) -> Result<PolicySpec, CliError> {
        let kind = self
            .policy
            .kind()
            .ok_or_else(|| CliError::usage("policy conservation is only valid for region"))?;
        PolicySpec::new(kind, self.system()?).map_err(|e| CliError::usage(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut s = Scenario::empty(PolicyChoice::DynamicPs);
        s.rho_i = Some(0.225);
        s.k = Some(4);
        s.sim = Some(SimSpec::default());
        s.sweep = Some(SweepSpec {
            parameter: SweepParam::PBlock,
            grid: 7,
        });
        let back = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert!(s.to_json().contains("\"policy\": \"dynamic-ps\""));
        assert!(s.to_json().contains("\"p-block\""));
    }

    #[test]
    fn eager_rates_resolution() {
        let mut s = Scenario::empty(PolicyChoice::Ps);
        assert!(s.eager_rates().unwrap_err().message.contains("rho_i"));
        s.rho_i = Some(0.3);
        assert_eq!(s.eager_rates().unwrap(), (0.3, 1.0));
        s.mu_i = Some(100.0);
        let (l, m) = s.eager_rates().unwrap();
        assert!((l - 30.0).abs() < 1e-12 && m == 100.0);
        s.rho_i = None;
        s.lambda_i = Some(6.0);
        s.mu_i = None;
        assert!(s.eager_rates().unwrap_err().message.contains("mu_i"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(Scenario::from_json(r#"{"policy":"ps","kk":3}"#).is_err());
        assert!(Scenario::from_json(r#"{"policy":"fifo"}"#).is_err());
        let s = Scenario::from_json(r#"{"policy":"cd","k":3,"sim":{"seed":5}}"#).unwrap();
        assert_eq!(s.sim.unwrap().reps, DEFAULT_REPS);
    }
}
