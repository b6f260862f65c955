//! Exact stationary analysis of the full chain `(n_i, n_t)` at finite eager
//! rates, truncated at `n_t = t_cap` with a reflecting boundary.
//!
//! The generator is block tridiagonal in `n_t`, so it is solved directly by
//! level reduction: `pi_n = pi_{n-1} R_n` with
//! `R_n = lambda_t (-(A1_n + R_{n+1} A2_{n+1}))^{-1}`, working down from
//! the truncation level. A dense solve of a separately assembled generator
//! is kept for small grids and for cross-checking.

use nalgebra::{DMatrix, DVector};

use crate::cd::CdConstants;
use crate::dynamic::t_busy_idle_sfj;
use crate::error::{Error, Result};
use crate::model::{a0, PerfPoint, PolicyKind, PolicySpec};
use crate::sim::rates_at;

pub const DEFAULT_EPSILON: f64 = 1e-9;
pub const DEFAULT_T_CAP: usize = 256;
pub const MAX_T_CAP: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// First truncation level tried.
    pub t_cap: usize,
    /// Largest truncation level before giving up.
    pub max_t_cap: usize,
    /// Acceptable stationary mass on the truncation level.
    pub epsilon: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            t_cap: DEFAULT_T_CAP,
            max_t_cap: MAX_T_CAP,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Stationary law on the grid `n_i in 0..=K`, `n_t in 0..=t_cap`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedChain {
    pub k: usize,
    pub t_cap: usize,
    /// Indexed by `n_t * (K + 1) + n_i`.
    pub stationary: Vec<f64>,
    /// Mass on `n_t = t_cap`.
    pub tail_mass: f64,
}

impl TruncatedChain {
    pub fn prob(&self, n_i: usize, n_t: usize) -> f64 {
        self.stationary[n_t * (self.k + 1) + n_i]
    }

    pub fn eager_marginal(&self) -> Vec<f64> {
        let w = self.k + 1;
        let mut out = vec![0.0; w];
        for (idx, p) in self.stationary.iter().enumerate() {
            out[idx % w] += p;
        }
        out
    }

    pub fn tolerant_marginal(&self) -> Vec<f64> {
        self.stationary.chunks(self.k + 1).map(|c| c.iter().sum()).collect()
    }

    pub fn mean_n_t(&self) -> f64 {
        self.tolerant_marginal()
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// Eager blocking by PASTA: the probability an arrival is turned away.
    pub fn blocking(&self, policy: &PolicySpec) -> f64 {
        let w = self.k + 1;
        self.stationary
            .iter()
            .enumerate()
            .map(|(idx, p)| p * (1.0 - rates_at(idx % w, idx / w, policy).admit_prob))
            .sum()
    }
}

/// The tolerant class is stable iff `lambda_t` is below the long-run
/// capacity it is left at `n_t >= 1`; with the eager chain independent of
/// `n_t` there, this is exactly the short-frequent-job criterion.
fn check_stable(policy: &PolicySpec) -> Result<()> {
    let s = &policy.params;
    let rho_ip = s.lambda_i / s.mu_i * s.p;
    let residual = match policy.kind {
        PolicyKind::Ps | PolicyKind::DynamicPs => 1.0 / a0(rho_ip, s.k),
        PolicyKind::Cd => CdConstants::new(rho_ip, s.k).residual_capacity(),
    };
    let load = s.lambda_t / (s.mu_t * residual);
    if load >= 1.0 {
        return Err(Error::Unstable {
            reason: format!("tolerant load {load} >= 1 for the full chain"),
        });
    }
    if policy.kind == PolicyKind::DynamicPs {
        t_busy_idle_sfj(s)?;
    }
    Ok(())
}

fn local_block(policy: &PolicySpec, n_t: usize, t_cap: usize) -> (DMatrix<f64>, Vec<f64>) {
    let w = policy.params.k + 1;
    let mut a1 = DMatrix::zeros(w, w);
    let mut down = vec![0.0; w];
    for j in 0..w {
        let r = rates_at(j, n_t, policy);
        let up_i = r.i_arrival * r.admit_prob;
        let up_t = if n_t < t_cap { r.t_arrival } else { 0.0 };
        if j + 1 < w {
            a1[(j, j + 1)] = up_i;
        }
        if j > 0 {
            a1[(j, j - 1)] = r.i_departure;
        }
        down[j] = r.t_departure;
        a1[(j, j)] = -(up_i + r.i_departure + up_t + r.t_departure);
    }
    (a1, down)
}

/// Solves the truncated chain at exactly `t_cap` levels.
pub fn ctmc_stationary_at(policy: &PolicySpec, t_cap: usize) -> Result<TruncatedChain> {
    if t_cap == 0 {
        return Err(Error::InvalidArgument("t_cap must be at least 1".into()));
    }
    let k = policy.params.k;
    let w = k + 1;
    let lambda_t = policy.params.lambda_t;

    // Blocks depend on n_t only through n_t = 0 and n_t = t_cap.
    let (a1_bottom, _) = local_block(policy, 0, t_cap);
    let (a1_mid, down_mid) = local_block(policy, 1, t_cap);
    let (a1_top, down_top) = local_block(policy, t_cap, t_cap);

    // R[n] for n = 1..=t_cap, stored at index n - 1.
    let mut rs: Vec<DMatrix<f64>> = Vec::with_capacity(t_cap);
    let mut b = a1_top.clone();
    let mut down_above = &down_top;
    for n in (1..=t_cap).rev() {
        let neg = -&b;
        let inv = neg
            .try_inverse()
            .ok_or(Error::DegenerateRecursion { level: n, value: 0.0 })?;
        let r = inv * lambda_t;
        // B_{n-1} = A1_{n-1} + R_n A2_n, with A2_n diagonal.
        let mut r_down = r.clone();
        for (j, d) in down_above.iter().enumerate() {
            r_down.column_mut(j).scale_mut(*d);
        }
        let a1 = if n - 1 == 0 { &a1_bottom } else { &a1_mid };
        b = a1 + r_down;
        rs.push(r);
        down_above = &down_mid;
    }
    rs.reverse();

    // pi_0 B_0 = 0 with one equation swapped for normalization.
    let mut lhs = b.transpose();
    for j in 0..w {
        lhs[(w - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(w);
    rhs[w - 1] = 1.0;
    let pi0 = lhs
        .lu()
        .solve(&rhs)
        .ok_or(Error::DegenerateRecursion { level: 0, value: 0.0 })?;

    let mut stationary = Vec::with_capacity(w * (t_cap + 1));
    let mut row = pi0.transpose();
    stationary.extend(row.iter().map(|x| x.max(0.0)));
    for r in &rs {
        row = &row * r;
        stationary.extend(row.iter().map(|x| x.max(0.0)));
    }
    let total: f64 = stationary.iter().sum();
    stationary.iter_mut().for_each(|x| *x /= total);
    let tail_mass = stationary[t_cap * w..].iter().sum();
    Ok(TruncatedChain {
        k,
        t_cap,
        stationary,
        tail_mass,
    })
}

/// Stationary law with the truncation level doubled from `config.t_cap`
/// until the tail mass drops below `config.epsilon`.
pub fn ctmc_stationary_with(policy: &PolicySpec, config: &OracleConfig) -> Result<TruncatedChain> {
    check_stable(policy)?;
    let mut t_cap = config.t_cap.max(1);
    loop {
        let chain = ctmc_stationary_at(policy, t_cap)?;
        if chain.tail_mass < config.epsilon {
            return Ok(chain);
        }
        if t_cap >= config.max_t_cap {
            return Err(Error::TruncationInsufficient {
                t_cap,
                tail_mass: chain.tail_mass,
                epsilon: config.epsilon,
            });
        }
        t_cap = (t_cap * 2).min(config.max_t_cap);
    }
}

/// [`ctmc_stationary_with`] with default tolerance, starting at `t_cap`.
pub fn ctmc_stationary(policy: &PolicySpec, t_cap: usize) -> Result<TruncatedChain> {
    ctmc_stationary_with(
        policy,
        &OracleConfig {
            t_cap,
            ..OracleConfig::default()
        },
    )
}

/// Blocking and tolerant sojourn (by Little's law) of the full chain.
pub fn oracle_perf(policy: &PolicySpec, t_cap: usize) -> Result<PerfPoint> {
    let chain = ctmc_stationary(policy, t_cap)?;
    Ok(PerfPoint::stable(
        chain.blocking(policy),
        chain.mean_n_t() / policy.params.lambda_t,
    ))
}

/// Generator on the truncated grid, assembled state by state straight from
/// the policy definitions (independently of the simulator's rate table).
pub fn generator_dense(policy: &PolicySpec, t_cap: usize) -> DMatrix<f64> {
    let s = &policy.params;
    let k = s.k;
    let w = k + 1;
    let n = w * (t_cap + 1);
    let idx = |i: usize, t: usize| t * w + i;
    let mut q = DMatrix::zeros(n, n);
    for t in 0..=t_cap {
        for i in 0..=k {
            let from = idx(i, t);
            let mut moves: Vec<(usize, f64)> = Vec::with_capacity(4);
            if i < k {
                let coin = if policy.kind == PolicyKind::DynamicPs && t == 0 {
                    1.0
                } else {
                    s.p
                };
                moves.push((idx(i + 1, t), s.lambda_i * coin));
            }
            if i > 0 {
                let rate = match policy.kind {
                    PolicyKind::Cd => s.mu_i * i as f64 / k as f64,
                    _ => s.mu_i,
                };
                moves.push((idx(i - 1, t), rate));
            }
            if t < t_cap {
                moves.push((idx(i, t + 1), s.lambda_t));
            }
            if t > 0 {
                let rate = match policy.kind {
                    PolicyKind::Cd => s.mu_t * (k - i) as f64 / k as f64,
                    _ if i == 0 => s.mu_t,
                    _ => 0.0,
                };
                moves.push((idx(i, t - 1), rate));
            }
            let mut out = 0.0;
            for (to, rate) in moves {
                q[(from, to)] += rate;
                out += rate;
            }
            q[(from, from)] = -out;
        }
    }
    q
}

/// Dense direct solve of `pi Q = 0`, `sum pi = 1`; meant for small grids.
pub fn ctmc_stationary_dense(policy: &PolicySpec, t_cap: usize) -> Result<TruncatedChain> {
    let q = generator_dense(policy, t_cap);
    let n = q.nrows();
    let mut lhs = q.transpose();
    for j in 0..n {
        lhs[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = lhs
        .lu()
        .solve(&rhs)
        .ok_or(Error::DegenerateRecursion { level: 0, value: 0.0 })?;
    let w = policy.params.k + 1;
    let stationary: Vec<f64> = pi.iter().copied().collect();
    let tail_mass = stationary[t_cap * w..].iter().sum();
    Ok(TruncatedChain {
        k: policy.params.k,
        t_cap,
        stationary,
        tail_mass,
    })
}
