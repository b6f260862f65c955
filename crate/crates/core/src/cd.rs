//! Capacity-division admission policy: each admitted eager customer takes a
//! `1/K` slice of the server and the tolerant customer in service keeps the
//! rest.
//!
//! The eager class is an M/M/K/K loss system with per-customer rate
//! `nu = mu_i / K`, so everything below is expressed through the offered
//! ratio `r = lambda_i p / nu = K rho_ip`.

use crate::error::{Error, Result};
use crate::model::{CompensatedSum, MomentPair, SystemParams};
use crate::ps::STABILITY_GUARD;

/// Denominators below this are reported as degenerate.
const DENOMINATOR_FLOOR: f64 = 1e-300;

/// Erlang-B loss probability for offered load `r` on `k` servers, via the
/// recurrence `B_j = r B_{j-1} / (j + r B_{j-1})`, `B_0 = 1`.
pub fn erlang_b(r: f64, k: usize) -> f64 {
    let mut b = 1.0;
    for j in 1..=k {
        b = r * b / (j as f64 + r * b);
    }
    b
}

pub fn cd_blocking(p: f64, rho_i: f64, k: usize) -> f64 {
    (1.0 - p) + p * erlang_b(k as f64 * rho_i * p, k)
}

/// `max(0, 1 - 1/rho_i)`: limit of `cd_blocking(1, rho_i, K)` as `K` grows.
pub fn cd_blocking_k_limit(rho_i: f64) -> f64 {
    crate::ps::ps_blocking_k_limit(rho_i)
}

/// Normalizers of the CD short-frequent-job formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdConstants {
    /// Offered ratio `K rho_ip`.
    pub r: f64,
    pub k: usize,
    /// `sum_{j=0}^{K} r^j / j!`.
    pub a_check: f64,
    /// `sum_{j=0}^{K-1} (r^j / j!) (K - j) / K`.
    pub eta: f64,
}

impl CdConstants {
    pub fn new(rho_ip: f64, k: usize) -> Self {
        let r = k as f64 * rho_ip;
        let (a_hat, eta_hat, log_scale) = Self::scaled_sums(r, k);
        let scale = log_scale.exp();
        CdConstants {
            r,
            k,
            a_check: a_hat * scale,
            eta: eta_hat * scale,
        }
    }

    /// Both sums divided by their largest term `r^j*/j*`, plus `ln` of that
    /// term. The largest term sits at `j* = min(K, floor(r))`.
    fn scaled_sums(r: f64, k: usize) -> (f64, f64, f64) {
        let kf = k as f64;
        let peak = (r.floor() as usize).min(k);
        let mut a_check = CompensatedSum::default();
        let mut eta = CompensatedSum::default();
        let mut add = |j: usize, term: f64| {
            a_check.add(term);
            if j < k {
                eta.add(term * (kf - j as f64) / kf);
            }
        };
        let mut term = 1.0;
        add(peak, term);
        for j in (0..peak).rev() {
            term *= (j + 1) as f64 / r;
            add(j, term);
        }
        term = 1.0;
        for j in (peak + 1)..=k {
            term *= r / j as f64;
            add(j, term);
        }
        let log_scale: f64 = (1..=peak).map(|j| (r / j as f64).ln()).sum();
        (a_check.value(), eta.value(), log_scale)
    }

    /// Fraction of capacity left to the tolerant class, `eta / a_check`.
    ///
    /// Computed from rescaled sums, so it stays finite when `a_check` itself
    /// overflows (offered ratios in the hundreds with large `K`).
    pub fn residual_capacity(&self) -> f64 {
        let (a_hat, eta_hat, _) = Self::scaled_sums(self.r, self.k);
        eta_hat / a_hat
    }
}

/// Moments of the effective server time in the short-frequent-job limit.
pub fn cd_est_moments_sfj(p: f64, rho_i: f64, k: usize, mu_t: f64) -> MomentPair {
    let c = CdConstants::new(rho_i * p, k);
    let m1 = c.a_check / (c.eta * mu_t);
    MomentPair::new(m1, 2.0 * m1 * m1)
}

/// Tolerant sojourn time in the short-frequent-job limit: an M/M/1 queue
/// with service rate `eta mu_t / a_check`.
pub fn cd_sojourn_sfj(p: f64, rho_i: f64, k: usize, lambda_t: f64, mu_t: f64) -> Result<f64> {
    let c = CdConstants::new(rho_i * p, k);
    let rate = c.residual_capacity() * mu_t;
    let load = lambda_t / rate;
    if load >= 1.0 - STABILITY_GUARD {
        return Err(Error::Unstable {
            reason: format!("tolerant load lambda_t * a_check / (eta mu_t) = {load} >= 1"),
        });
    }
    Ok(1.0 / (rate * (1.0 - load)))
}

/// Coefficients of the first-step equations for the effective server time
/// `U_l` of a tolerant customer whose service starts with `l` eager
/// customers present, all indexed by level `l = 0..=K`.
///
/// Each level solves `E[U_l] = m_l + n_l E[U_{l-1}]` (with `n_0 = 0`), and
/// the second moments follow `E[U_l^2] = r_l + n_l E[U_{l-1}^2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdRecursionState {
    /// Admitted eager arrival rate.
    pub lambda_adm: f64,
    /// Per-customer eager departure rate.
    pub nu: f64,
    /// Total event rate at level `l`: `lambda_adm + l nu + (K-l) mu_t / K`.
    pub alpha: Vec<f64>,
    /// `l nu + (K-l) mu_t / K`.
    pub gamma: Vec<f64>,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    /// Elimination pivots `alpha_l - lambda_adm n_{l+1}` (`gamma_K` at the top).
    pub delta: Vec<f64>,
    pub r_coef: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `E[U_l]`.
    pub first: Vec<f64>,
    /// `E[U_l^2]`.
    pub second: Vec<f64>,
}

impl CdRecursionState {
    pub fn new(lambda_adm: f64, nu: f64, mu_t: f64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::ZeroK { field: "k" });
        }
        let kf = k as f64;
        let t_rate = |l: usize| (k - l) as f64 * mu_t / kf;
        let gamma: Vec<f64> = (0..=k).map(|l| l as f64 * nu + t_rate(l)).collect();
        let alpha: Vec<f64> = gamma.iter().map(|g| lambda_adm + g).collect();

        // Backward pass for first moments. `slack_l = 1 - n_l` is carried
        // separately: n_l -> 1 as nu grows and the pivots would cancel.
        let mut m = vec![0.0; k + 1];
        let mut n = vec![0.0; k + 1];
        let mut delta = vec![0.0; k + 1];
        let mut slack_above = 0.0;
        for l in (0..=k).rev() {
            let pivot = if l == k {
                gamma[k]
            } else {
                l as f64 * nu + t_rate(l) + lambda_adm * slack_above
            };
            if !(pivot >= DENOMINATOR_FLOOR) {
                return Err(Error::DegenerateRecursion { level: l, value: pivot });
            }
            delta[l] = pivot;
            let m_above = if l == k { 0.0 } else { m[l + 1] };
            m[l] = (1.0 + lambda_adm * m_above) / pivot;
            n[l] = l as f64 * nu / pivot;
            slack_above = if l == k {
                0.0
            } else {
                (t_rate(l) + lambda_adm * slack_above) / pivot
            };
        }

        let mut first = vec![0.0; k + 1];
        first[0] = m[0];
        for l in 1..=k {
            first[l] = m[l] + n[l] * first[l - 1];
        }

        // Second moments: same pivots, right-hand side 2/alpha_l + sigma_l.
        let mut sigma = vec![0.0; k + 1];
        for l in 0..=k {
            let up = if l == k { first[k] } else { first[l + 1] };
            let down = if l == 0 { 0.0 } else { first[l - 1] };
            sigma[l] = (2.0 * lambda_adm * up + 2.0 * l as f64 * nu * down) / alpha[l];
        }
        let mut r_coef = vec![0.0; k + 1];
        for l in (0..=k).rev() {
            let r_above = if l == k { 0.0 } else { r_coef[l + 1] };
            r_coef[l] = (2.0 / alpha[l] + lambda_adm * r_above + sigma[l]) / delta[l];
        }
        let mut second = vec![0.0; k + 1];
        second[0] = r_coef[0];
        for l in 1..=k {
            second[l] = r_coef[l] + n[l] * second[l - 1];
        }

        Ok(CdRecursionState {
            lambda_adm,
            nu,
            alpha,
            gamma,
            m,
            n,
            delta,
            r_coef,
            sigma,
            first,
            second,
        })
    }

    pub fn k(&self) -> usize {
        self.alpha.len() - 1
    }

    /// Moments of the effective server time started with no eager customer.
    pub fn level0(&self) -> MomentPair {
        MomentPair::new(self.first[0], self.second[0])
    }
}

/// Exact (finite `mu_i`) moments of the effective server time started with
/// no eager customer present.
pub fn cd_est_moments_exact(params: &SystemParams) -> Result<MomentPair> {
    let state = cd_recursion(params)?;
    Ok(state.level0())
}

pub fn cd_recursion(params: &SystemParams) -> Result<CdRecursionState> {
    CdRecursionState::new(
        params.lambda_i * params.p,
        params.mu_i / params.k as f64,
        params.mu_t,
        params.k,
    )
}
