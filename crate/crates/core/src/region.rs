//! The blocking/sojourn conservation law, achievable-region curves and the
//! inverse map from a target blocking probability to an admission
//! probability.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cd::{cd_blocking, cd_sojourn_sfj};
use crate::dynamic::dynamic_blocking_ps;
use crate::error::{Error, Result};
use crate::model::{check_k, check_probability, PolicyKind, PolicySpec, SystemParams};
use crate::ps::{ps_blocking, ps_sojourn_sfj};

const BISECTION_MAX_ITER: usize = 200;
const BISECTION_TOL: f64 = 1e-9;

/// Expected tolerant sojourn time of any static t-work-conserving policy
/// that blocks a fraction `p_block` of eager arrivals:
/// `1 / (mu_t (1 - rho_i (1 - p_block)) - lambda_t)`.
pub fn conservation_sojourn(p_block: f64, rho_i: f64, lambda_t: f64, mu_t: f64) -> Result<f64> {
    let load = rho_i * (1.0 - p_block) + lambda_t / mu_t;
    if load >= 1.0 {
        return Err(Error::Infeasible { load });
    }
    Ok(1.0 / (mu_t * (1.0 - rho_i * (1.0 - p_block)) - lambda_t))
}

/// The two static policy families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StaticPolicy {
    Ps,
    Cd,
}

impl StaticPolicy {
    pub fn blocking(&self, p: f64, rho_i: f64, k: usize) -> f64 {
        match self {
            StaticPolicy::Ps => ps_blocking(p, rho_i, k),
            StaticPolicy::Cd => cd_blocking(p, rho_i, k),
        }
    }

    pub fn sojourn_sfj(&self, p: f64, rho_i: f64, k: usize, lambda_t: f64, mu_t: f64) -> Result<f64> {
        match self {
            StaticPolicy::Ps => ps_sojourn_sfj(p, rho_i, k, lambda_t, mu_t),
            StaticPolicy::Cd => cd_sojourn_sfj(p, rho_i, k, lambda_t, mu_t),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StaticPolicy::Ps => "ps",
            StaticPolicy::Cd => "cd",
        }
    }
}

impl TryFrom<PolicyKind> for StaticPolicy {
    type Error = Error;

    fn try_from(kind: PolicyKind) -> Result<Self> {
        match kind {
            PolicyKind::Ps => Ok(StaticPolicy::Ps),
            PolicyKind::Cd => Ok(StaticPolicy::Cd),
            PolicyKind::DynamicPs => Err(Error::InvalidArgument("dynamic-ps is not a static policy".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    /// Admission probability; absent on the conservation-law curve, which
    /// is parameterized by blocking directly.
    pub p: Option<f64>,
    pub p_block: f64,
    pub e_sojourn: Option<f64>,
    pub stable: bool,
}

/// Which curve a [`RegionCurve`] traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionSource {
    Policy(PolicyKind),
    ConservationLaw,
}

impl RegionSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionSource::Policy(kind) => kind.as_str(),
            RegionSource::ConservationLaw => "conservation-law",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCurve {
    pub source: RegionSource,
    pub points: Vec<RegionPoint>,
}

fn check_grid(grid_size: usize) -> Result<()> {
    if grid_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid_size must be at least 2, got {grid_size}"
        )));
    }
    Ok(())
}

fn uniform(lo: f64, hi: f64, n: usize, j: usize) -> f64 {
    if j + 1 == n {
        hi
    } else {
        lo + (hi - lo) * j as f64 / (n - 1) as f64
    }
}

/// Smallest blocking probability the conservation law can accommodate,
/// `max(0, 1 - (1 - rho_t) / rho_i)`, clamped to `[0, 1]`.
pub fn feasible_pb_lower(rho_i: f64, rho_t: f64) -> f64 {
    if rho_i <= 0.0 {
        return 0.0;
    }
    (1.0 - (1.0 - rho_t) / rho_i).clamp(0.0, 1.0)
}

/// The conservation-law curve on a uniform blocking grid from the
/// feasibility bound to 1. The boundary itself is infeasible and is kept,
/// flagged unstable.
pub fn static_region(rho_i: f64, lambda_t: f64, mu_t: f64, grid_size: usize) -> Result<RegionCurve> {
    check_grid(grid_size)?;
    let lo = feasible_pb_lower(rho_i, lambda_t / mu_t);
    let points = (0..grid_size)
        .into_par_iter()
        .map(|j| {
            let p_block = uniform(lo, 1.0, grid_size, j);
            let sojourn = conservation_sojourn(p_block, rho_i, lambda_t, mu_t).ok();
            RegionPoint {
                p: None,
                p_block,
                e_sojourn: sojourn,
                stable: sojourn.is_some(),
            }
        })
        .collect();
    Ok(RegionCurve {
        source: RegionSource::ConservationLaw,
        points,
    })
}

/// A policy's achievable curve on a uniform grid of `p` in `[0, 1]`; the
/// `p` field of `policy.params` is ignored.
///
/// For the dynamic policy the blocking comes from the busy/idle mixture
/// where the tolerant queue is stable and from the static formula where it
/// is not (those points are flagged unstable either way).
pub fn policy_region(policy: &PolicySpec, grid_size: usize) -> Result<RegionCurve> {
    check_grid(grid_size)?;
    let base = policy.params;
    let rho_i = base.loads().rho_i;
    let k = base.k;
    let points = (0..grid_size)
        .into_par_iter()
        .map(|j| {
            let p = uniform(0.0, 1.0, grid_size, j);
            let (p_block, sojourn) = match policy.kind {
                PolicyKind::Ps | PolicyKind::Cd => {
                    let kind = StaticPolicy::try_from(policy.kind).expect("static kind");
                    (
                        kind.blocking(p, rho_i, k),
                        kind.sojourn_sfj(p, rho_i, k, base.lambda_t, base.mu_t).ok(),
                    )
                }
                PolicyKind::DynamicPs => {
                    let params = SystemParams { p, ..base };
                    match dynamic_blocking_ps(&params) {
                        Ok(b) => (b, ps_sojourn_sfj(p, rho_i, k, base.lambda_t, base.mu_t).ok()),
                        Err(_) => (ps_blocking(p, rho_i, k), None),
                    }
                }
            };
            RegionPoint {
                p: Some(p),
                p_block,
                e_sojourn: sojourn,
                stable: sojourn.is_some(),
            }
        })
        .collect();
    Ok(RegionCurve {
        source: RegionSource::Policy(policy.kind),
        points,
    })
}

/// Finds `p` with `P_B(p) = target_pb` by bisection on the bracket
/// `P_B(0) = 1 >= target >= P_B(1)`. Monotonicity in `p` is not assumed.
pub fn solve_admission_for_pb(kind: StaticPolicy, k: usize, rho_i: f64, target_pb: f64) -> Result<f64> {
    check_k(k)?;
    check_probability("target_pb", target_pb)?;
    if !(rho_i >= 0.0) || !rho_i.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "rho_i must be finite and >= 0, got {rho_i}"
        )));
    }
    let f = |p: f64| kind.blocking(p, rho_i, k) - target_pb;
    let best = kind.blocking(1.0, rho_i, k);
    if target_pb < best {
        return Err(Error::TargetUnreachable {
            target: target_pb,
            best,
        });
    }
    // f(0) = 1 - target >= 0 and f(1) = best - target <= 0.
    if f(1.0).abs() < BISECTION_TOL {
        return Ok(1.0);
    }
    if f(0.0).abs() < BISECTION_TOL {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() < BISECTION_TOL {
            return Ok(mid);
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    Ok(mid)
}

/// Largest relative gap between a policy's short-frequent-job sojourn and
/// the conservation law evaluated at that policy's blocking, over the
/// stable points of a `grid_size` grid in `p`.
pub fn verify_conservation(kind: StaticPolicy, params: &SystemParams, grid_size: usize) -> Result<f64> {
    check_grid(grid_size)?;
    let rho_i = params.loads().rho_i;
    let worst = (0..grid_size)
        .into_par_iter()
        .map(|j| {
            let p = uniform(0.0, 1.0, grid_size, j);
            let Ok(policy) = kind.sojourn_sfj(p, rho_i, params.k, params.lambda_t, params.mu_t) else {
                return 0.0;
            };
            let p_block = kind.blocking(p, rho_i, params.k);
            match conservation_sojourn(p_block, rho_i, params.lambda_t, params.mu_t) {
                Ok(law) => ((policy - law) / law).abs(),
                // Stable for the policy yet infeasible for the law would be
                // a contradiction; surface it as a maximal deviation.
                Err(_) => f64::INFINITY,
            }
        })
        .collect::<Vec<f64>>();
    Ok(worst.into_iter().fold(0.0, f64::max))
}
