//! Library side of the `hetq` binary: argument parsing, scenario merging
//! and the subcommands. `main` only forwards to [`run`].

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod output;
pub mod scenario;

use scenario::{PolicyChoice, Scenario, SimSpec, SweepParam, SweepSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

/// A failure carrying its process exit code. `detail` is a JSON object
/// printed on standard error for the machine-readable exit paths.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
    pub detail: Option<serde_json::Value>,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
            detail: None,
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError::usage(message)
    }

    pub fn from_core(err: hetq_core::Error) -> Self {
        use hetq_core::Error as E;
        let message = err.to_string();
        let (code, detail) = match &err {
            E::Unstable { reason } => (
                EXIT_INFEASIBLE,
                serde_json::json!({"error": "unstable", "reason": reason}),
            ),
            E::Infeasible { load } => (
                EXIT_INFEASIBLE,
                serde_json::json!({"error": "infeasible", "load": load}),
            ),
            E::TargetUnreachable { target, best } => (
                EXIT_INFEASIBLE,
                serde_json::json!({"error": "target-unreachable", "target_pb": target, "best_p_block": best}),
            ),
            E::TruncationInsufficient { t_cap, tail_mass, .. } => (
                EXIT_INFEASIBLE,
                serde_json::json!({"error": "truncation-insufficient", "t_cap": t_cap, "tail_mass": tail_mass}),
            ),
            E::DivergenceDetected {
                replication,
                cap,
                clock,
            } => (
                EXIT_DIVERGENCE,
                serde_json::json!({"error": "divergence", "replication": replication, "cap": cap, "clock": clock}),
            ),
            _ => (
                EXIT_USAGE,
                serde_json::json!({"error": "invalid-input", "reason": message}),
            ),
        };
        CliError {
            code,
            message,
            detail: Some(detail),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hetq", version, about = "Eager/tolerant two-class queue analytics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Blocking probability and tolerant sojourn time at one operating point (CSV).
    Analyze(ScenarioArgs),
    /// Achievable-region curve over a sweep of p or of the blocking probability (CSV).
    Region(ScenarioArgs),
    /// Replicated simulation with confidence intervals (JSON).
    Simulate(ScenarioArgs),
    /// Conservation-law deviation and sandwich containment checks (JSON).
    Validate(ScenarioArgs),
    /// Admission probability that attains a target blocking probability (JSON).
    Solve(ScenarioArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[arg(long, value_enum)]
    pub policy: Option<PolicyChoice>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long = "rho-i")]
    pub rho_i: Option<f64>,
    #[arg(long = "lambda-i")]
    pub lambda_i: Option<f64>,
    #[arg(long = "mu-i")]
    pub mu_i: Option<f64>,
    #[arg(long = "lambda-t")]
    pub lambda_t: Option<f64>,
    #[arg(long = "mu-t")]
    pub mu_t: Option<f64>,
    /// Number of grid points for sweeps and conservation checks.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Swept quantity for `region`; defaults to p-block for the conservation law and p otherwise.
    #[arg(long, value_enum)]
    pub sweep: Option<SweepParam>,
    #[arg(long = "target-pb")]
    pub target_pb: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long = "horizon-arrivals")]
    pub horizon_arrivals: Option<u64>,
    #[arg(long)]
    pub warmup: Option<f64>,
    /// Also solve the exact truncated chain (needs mu_i).
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the merged scenario as JSON and exit.
    #[arg(long = "dump-config")]
    pub dump_config: bool,
}

impl ScenarioArgs {
    /// Loads `--config` if given and lays the flags over it.
    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let mut s = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
                Scenario::from_json(&text)?
            }
            None => Scenario::empty(
                self.policy
                    .ok_or_else(|| CliError::usage("missing required field: policy"))?,
            ),
        };
        if let Some(policy) = self.policy {
            s.policy = policy;
        }
        if self.rho_i.is_some() {
            s.rho_i = self.rho_i;
            s.lambda_i = None;
        }
        if self.lambda_i.is_some() {
            s.lambda_i = self.lambda_i;
            s.rho_i = None;
        }
        s.mu_i = self.mu_i.or(s.mu_i);
        s.lambda_t = self.lambda_t.or(s.lambda_t);
        s.mu_t = self.mu_t.or(s.mu_t);
        s.p = self.p.or(s.p);
        s.k = self.k.or(s.k);
        s.target_pb = self.target_pb.or(s.target_pb);
        if self.grid.is_some() || self.sweep.is_some() {
            let base = s.sweep.unwrap_or(SweepSpec {
                parameter: default_sweep(s.policy),
                grid: scenario::DEFAULT_GRID,
            });
            s.sweep = Some(SweepSpec {
                parameter: self.sweep.unwrap_or(base.parameter),
                grid: self.grid.unwrap_or(base.grid),
            });
        }
        if self.seed.is_some() || self.reps.is_some() || self.horizon_arrivals.is_some() || self.warmup.is_some() {
            let base = s.sim.unwrap_or_default();
            s.sim = Some(SimSpec {
                horizon_arrivals: self.horizon_arrivals.unwrap_or(base.horizon_arrivals),
                reps: self.reps.unwrap_or(base.reps),
                seed: self.seed.unwrap_or(base.seed),
                warmup: self.warmup.unwrap_or(base.warmup),
            });
        }
        Ok(s)
    }
}

pub fn default_sweep(policy: PolicyChoice) -> SweepParam {
    match policy {
        PolicyChoice::Conservation => SweepParam::PBlock,
        _ => SweepParam::P,
    }
}

/// Sizes the global thread pool from `HETQ_THREADS` when set.
fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("HETQ_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::usage(format!("HETQ_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(CliError::usage("HETQ_THREADS must be at least 1"));
        }
        // A second call in the same process (tests) finds the pool built.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `argv`, runs the command and returns the exit code. Results go
/// to standard output or `--out`; diagnostics go to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match init_threads().and_then(|_| commands::dispatch(&cli.command)) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("hetq: {}", err.message);
            if let Some(detail) = &err.detail {
                eprintln!("{detail}");
            }
            err.code
        }
    }
}
