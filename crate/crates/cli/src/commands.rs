use std::io::Write;

use serde_json::{json, Value};

use hetq_core::cd::{cd_est_moments_exact, cd_sojourn_sfj};
use hetq_core::dynamic::{dynamic_blocking_ps, dynamic_sojourn_sfj};
use hetq_core::oracle::{oracle_perf, DEFAULT_T_CAP};
use hetq_core::ps::{mg1_sojourn, ps_blocking, ps_sojourn_bounds, ps_sojourn_sfj};
use hetq_core::region::{policy_region, solve_admission_for_pb, static_region, verify_conservation, StaticPolicy};
use hetq_core::sim::{run_replications, Horizon, SimConfig};
use hetq_core::{PolicyKind, PolicySpec};

use crate::output::{write_csv, ResultRow, Source};
use crate::scenario::{PolicyChoice, Scenario, SweepParam, DEFAULT_GRID};
use crate::{default_sweep, CliError, Command, ScenarioArgs};

pub const SCHEMA_SIMULATE: &str = "hetq.simulate/1";
pub const SCHEMA_VALIDATE: &str = "hetq.validate/1";
pub const SCHEMA_SOLVE: &str = "hetq.solve/1";

pub fn dispatch(command: &Command) -> Result<(), CliError> {
    let (args, run): (&ScenarioArgs, fn(&ScenarioArgs, &Scenario) -> Result<(), CliError>) = match command {
        Command::Analyze(a) => (a, analyze),
        Command::Region(a) => (a, region),
        Command::Simulate(a) => (a, simulate),
        Command::Validate(a) => (a, validate),
        Command::Solve(a) => (a, solve),
    };
    let scenario = args.scenario()?;
    if args.dump_config {
        return emit(args, scenario.to_json().as_bytes());
    }
    run(args, &scenario)
}

fn emit(args: &ScenarioArgs, bytes: &[u8]) -> Result<(), CliError> {
    match &args.out {
        Some(path) => {
            std::fs::write(path, bytes).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::io(e.to_string()))
        }
    }
}

fn emit_rows(args: &ScenarioArgs, rows: &[ResultRow]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    emit(args, &buf)
}

fn emit_json(args: &ScenarioArgs, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(e.to_string()))?;
    text.push('\n');
    emit(args, text.as_bytes())
}

fn static_policy(s: &Scenario) -> Result<StaticPolicy, CliError> {
    match s.policy {
        PolicyChoice::Ps => Ok(StaticPolicy::Ps),
        PolicyChoice::Cd => Ok(StaticPolicy::Cd),
        other => Err(CliError::usage(format!(
            "this command needs a static policy (ps or cd), got {}",
            serde_json::to_value(other).unwrap_or(Value::Null)
        ))),
    }
}

fn row(p: Option<f64>, p_block: f64, sojourn: Option<f64>, source: Source) -> ResultRow {
    ResultRow {
        p,
        p_block,
        e_sojourn: sojourn,
        stable: sojourn.is_some(),
        source,
        ci_halfwidth: None,
    }
}

fn analyze(args: &ScenarioArgs, s: &Scenario) -> Result<(), CliError> {
    let spec = s.policy_spec()?;
    let params = spec.params;
    let loads = params.loads();
    let (p, k) = (params.p, params.k);
    let mut rows = Vec::new();

    let (blocking, sfj) = match spec.kind {
        PolicyKind::Ps => (
            ps_blocking(p, loads.rho_i, k),
            ps_sojourn_sfj(p, loads.rho_i, k, params.lambda_t, params.mu_t),
        ),
        PolicyKind::Cd => (
            hetq_core::cd::cd_blocking(p, loads.rho_i, k),
            cd_sojourn_sfj(p, loads.rho_i, k, params.lambda_t, params.mu_t),
        ),
        PolicyKind::DynamicPs => match dynamic_blocking_ps(&params) {
            Ok(b) => (b, dynamic_sojourn_sfj(&params)),
            Err(e) => (ps_blocking(p, loads.rho_i, k), Err(e)),
        },
    };
    rows.push(row(Some(p), blocking, sfj.as_ref().ok().copied(), Source::FormulaSfj));

    if s.has_mu_i() {
        match spec.kind {
            PolicyKind::Ps => {
                let bounds = ps_sojourn_bounds(&params).ok();
                rows.push(row(Some(p), blocking, bounds.map(|b| b.lower), Source::BoundLower));
                rows.push(row(Some(p), blocking, bounds.map(|b| b.upper), Source::BoundUpper));
            }
            PolicyKind::Cd => {
                let exact = cd_est_moments_exact(&params)
                    .ok()
                    .and_then(|m| mg1_sojourn(&m, params.lambda_t).ok());
                rows.push(row(Some(p), blocking, exact, Source::FormulaExact));
            }
            PolicyKind::DynamicPs => {}
        }
    }
    if args.oracle {
        if !s.has_mu_i() {
            return Err(CliError::usage("--oracle needs mu_i"));
        }
        match oracle_perf(&spec, DEFAULT_T_CAP) {
            Ok(perf) => rows.push(row(Some(p), perf.p_block, perf.e_sojourn, Source::Oracle)),
            Err(hetq_core::Error::Unstable { .. }) => {}
            Err(e) => return Err(CliError::from_core(e)),
        }
    }
    emit_rows(args, &rows)?;
    sfj.map(|_| ()).map_err(CliError::from_core)
}

fn region(args: &ScenarioArgs, s: &Scenario) -> Result<(), CliError> {
    let sweep = s.sweep.map(|w| w.parameter).unwrap_or_else(|| default_sweep(s.policy));
    let grid = s.sweep.map(|w| w.grid).unwrap_or(DEFAULT_GRID);
    if grid < 2 {
        return Err(CliError::usage(format!("sweep grid must be at least 2, got {grid}")));
    }
    let expected = default_sweep(s.policy);
    if sweep != expected {
        return Err(CliError::usage(match expected {
            SweepParam::PBlock => "the conservation law is swept over p-block",
            SweepParam::P => "policy regions are swept over p",
        }));
    }
    let rho_i = s.rho_i()?;
    let (lambda_t, mu_t) = (s.lambda_t()?, s.mu_t()?);
    let curve = match s.policy.kind() {
        None => static_region(rho_i, lambda_t, mu_t, grid),
        Some(kind) => {
            let (lambda_i, mu_i) = s.eager_rates()?;
            let params = hetq_core::SystemParams::new(lambda_i, mu_i, lambda_t, mu_t, 1.0, s.k()?)
                .map_err(|e| CliError::usage(e.to_string()))?;
            let spec = PolicySpec::new(kind, params).map_err(|e| CliError::usage(e.to_string()))?;
            policy_region(&spec, grid)
        }
    }
    .map_err(|e| CliError::usage(e.to_string()))?;
    let rows: Vec<ResultRow> = curve
        .points
        .iter()
        .map(|pt| row(pt.p, pt.p_block, pt.e_sojourn, Source::FormulaSfj))
        .collect();
    emit_rows(args, &rows)
}

fn sim_config(s: &Scenario) -> (SimConfig, usize, u64) {
    let spec = s.sim.unwrap_or_default();
    let config = SimConfig::new(Horizon::TolerantArrivals(spec.horizon_arrivals)).with_warmup(spec.warmup);
    (config, spec.reps, spec.seed)
}

fn simulate(args: &ScenarioArgs, s: &Scenario) -> Result<(), CliError> {
    let spec = s.policy_spec()?;
    let mut resolved = s.clone();
    resolved.sim = Some(s.sim.unwrap_or_default());
    let (config, reps, seed) = sim_config(&resolved);
    let est = run_replications(&spec, &config, reps, seed).map_err(CliError::from_core)?;
    emit_json(
        args,
        &json!({
            "schema": SCHEMA_SIMULATE,
            "inputs": resolved,
            "estimate": est,
        }),
    )
}

fn validate(args: &ScenarioArgs, s: &Scenario) -> Result<(), CliError> {
    let kind = static_policy(s)?;
    let spec = s.policy_spec()?;
    let grid = s.sweep.map(|w| w.grid).unwrap_or(DEFAULT_GRID);
    let deviation = verify_conservation(kind, &spec.params, grid).map_err(|e| CliError::usage(e.to_string()))?;

    let sandwich = if kind == StaticPolicy::Ps && s.has_mu_i() {
        match ps_sojourn_bounds(&spec.params) {
            Ok(b) => {
                let oracle = oracle_perf(&spec, DEFAULT_T_CAP).map_err(CliError::from_core)?;
                let o = oracle.e_sojourn.expect("oracle sojourn on a stable chain");
                let simulation = match s.sim {
                    Some(_) => {
                        let (config, reps, seed) = sim_config(s);
                        let est = run_replications(&spec, &config, reps, seed).map_err(CliError::from_core)?;
                        let e = est.e_sojourn;
                        json!({
                            "mean": e.mean,
                            "half_width": e.half_width,
                            "contained": e.mean + e.half_width >= b.lower && e.mean - e.half_width <= b.upper,
                        })
                    }
                    None => Value::Null,
                };
                json!({
                    "lower": b.lower,
                    "upper": b.upper,
                    "oracle": o,
                    "oracle_contained": b.contains(o),
                    "simulation": simulation,
                })
            }
            Err(e) => json!({ "unavailable": e.to_string() }),
        }
    } else {
        Value::Null
    };
    emit_json(
        args,
        &json!({
            "schema": SCHEMA_VALIDATE,
            "inputs": s,
            "grid": grid,
            "max_conservation_deviation": deviation,
            "conservation_ok": deviation < 1e-10,
            "sandwich": sandwich,
        }),
    )
}

fn solve(args: &ScenarioArgs, s: &Scenario) -> Result<(), CliError> {
    let kind = static_policy(s)?;
    let (k, rho_i, target) = (s.k()?, s.rho_i()?, s.target_pb()?);
    let p = solve_admission_for_pb(kind, k, rho_i, target).map_err(CliError::from_core)?;
    let p_block = kind.blocking(p, rho_i, k);
    let sojourn = match (s.lambda_t, s.mu_t) {
        (Some(lt), Some(mt)) => kind.sojourn_sfj(p, rho_i, k, lt, mt).ok(),
        _ => None,
    };
    emit_json(
        args,
        &json!({
            "schema": SCHEMA_SOLVE,
            "inputs": s,
            "target_pb": target,
            "p": p,
            "p_block": p_block,
            "e_sojourn": sojourn,
        }),
    )
}
