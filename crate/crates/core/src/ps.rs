//! Processor-sharing admission policy: eager-chain stationary law, blocking,
//! eager busy-period moments, effective-server-time moments, the M/G/1
//! sandwich bounds and the short-frequent-job sojourn time.

use crate::error::{Error, Result};
use crate::model::{a0, derived_loads, geometric_sum, CompensatedSum, MomentPair, SystemParams};

/// Loads at or above `1 - STABILITY_GUARD` are treated as unstable.
pub const STABILITY_GUARD: f64 = 1e-12;

/// Stationary law of the number of eager customers in service.
#[derive(Debug, Clone, PartialEq)]
pub struct PsStationary {
    /// `pi[l]` for `l = 0..=K`.
    pub pi: Vec<f64>,
}

impl PsStationary {
    pub fn k(&self) -> usize {
        self.pi.len() - 1
    }

    /// Largest absolute residual of the birth-death balance equations,
    /// scaled by the departure rate (which cancels).
    pub fn balance_residual(&self, rho_ip: f64) -> f64 {
        let k = self.k();
        let pi = &self.pi;
        if k == 0 {
            return 0.0;
        }
        let mut worst = (pi[0] * rho_ip - pi[1]).abs();
        for l in 1..k {
            let r = pi[l] * (rho_ip + 1.0) - rho_ip * pi[l - 1] - pi[l + 1];
            worst = worst.max(r.abs());
        }
        worst.max((pi[k] - rho_ip * pi[k - 1]).abs())
    }
}

/// `pi_l = rho_ip^l / a_0` for `l = 0..=K`.
///
/// For `rho_ip > 1` the terms are evaluated as `rho_ip^{-(K-l)}` normalized
/// by `sum_j rho_ip^{-j}`, which is the same quantity without overflow.
pub fn ps_stationary(rho_ip: f64, k: usize) -> PsStationary {
    debug_assert!(rho_ip >= 0.0 && k >= 1);
    let pi = if rho_ip <= 1.0 {
        let norm = a0(rho_ip, k);
        let mut term = 1.0;
        (0..=k)
            .map(|l| {
                if l > 0 {
                    term *= rho_ip;
                }
                term / norm
            })
            .collect()
    } else {
        let inv = 1.0 / rho_ip;
        let norm = geometric_sum(inv, k);
        let mut pi = vec![0.0; k + 1];
        let mut term = 1.0;
        for l in (0..=k).rev() {
            if l < k {
                term *= inv;
            }
            pi[l] = term / norm;
        }
        pi
    };
    PsStationary { pi }
}

/// Probability that an eager arrival is not served: rejected by the
/// admission coin or admitted while `K` are already in service.
pub fn ps_blocking(p: f64, rho_i: f64, k: usize) -> f64 {
    let full = ps_stationary(rho_i * p, k).pi[k];
    (1.0 - p) + p * full
}

/// `max(0, 1 - 1/rho_i)`: limit of `ps_blocking(1, rho_i, K)` as `K` grows.
pub fn ps_blocking_k_limit(rho_i: f64) -> f64 {
    if rho_i <= 1.0 {
        0.0
    } else {
        1.0 - 1.0 / rho_i
    }
}

/// Constants of the busy-period recursions. The `c_i` are dimensionless:
/// the time-squared constants of the recursion are `c_i / mu_i^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsConstants {
    pub q: f64,
    /// `a[i] = sum_{j=0}^{K-i} rho_ip^j` for `i = 0..=K`.
    pub a: Vec<f64>,
    /// `b[i] = sum_{j=K-i+1}^{K-1} (K-j) rho_ip^j` for `i = 1..=K`; `b[0] = 0`.
    pub b: Vec<f64>,
    /// `c[i]` for `i = 1..=K`; `c[0]` is unused and zero.
    pub c: Vec<f64>,
}

impl PsConstants {
    pub fn new(rho_ip: f64, k: usize) -> Self {
        let q = rho_ip / (1.0 + rho_ip);
        let a: Vec<f64> = (0..=k).map(|i| geometric_sum(rho_ip, k - i)).collect();
        let mut b = vec![0.0; k + 1];
        for (i, bi) in b.iter_mut().enumerate().skip(2) {
            let mut acc = CompensatedSum::default();
            for j in (k + 1 - i)..k {
                acc.add((k - j) as f64 * rho_ip.powi(j as i32));
            }
            *bi = acc.value();
        }
        let mut consts = PsConstants {
            q,
            a,
            b,
            c: vec![0.0; k + 1],
        };
        let denom = (1.0 + rho_ip) * (1.0 + rho_ip);
        for i in 1..=k {
            // From level i an admitted arrival moves to i+1 (or stays at K);
            // a departure moves to i-1, and level 0 ends the busy period.
            let up = consts.level_mean(if i == k { k } else { i + 1 });
            let down = consts.level_mean(i - 1);
            consts.c[i] = (2.0 * rho_ip * up + 2.0 * down + 2.0) / denom;
        }
        consts
    }

    pub fn k(&self) -> usize {
        self.a.len() - 1
    }

    /// `i * a_i + b_i`, i.e. `mu_i * E[Psi_i]`; zero at `i = 0`.
    pub fn level_mean(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            i as f64 * self.a[i] + self.b[i]
        }
    }

    /// `sum_{i=1}^{K} q^{i-1} c_i / (1-q)^i`, i.e. `mu_i^2 * E[Psi_1^2]`.
    pub fn second_moment_sum(&self) -> f64 {
        let mut acc = CompensatedSum::default();
        let mut weight = 1.0 / (1.0 - self.q);
        for i in 1..=self.k() {
            acc.add(weight * self.c[i]);
            weight *= self.q / (1.0 - self.q);
        }
        acc.value()
    }
}

/// Moments of the eager busy periods `Psi_1..Psi_K` (busy period started
/// with `i` eager customers in service).
#[derive(Debug, Clone, PartialEq)]
pub struct BusyPeriodMoments {
    /// `per_level[i - 1]` holds the moments of `Psi_i`.
    pub per_level: Vec<MomentPair>,
    /// The ordinary busy period, started by a single arrival.
    pub top: MomentPair,
}

pub fn busy_period_moments(rho_ip: f64, mu_i: f64, k: usize) -> BusyPeriodMoments {
    debug_assert!(k >= 1 && mu_i > 0.0);
    let mu2 = mu_i * mu_i;
    if k == 1 {
        let top = MomentPair::new(1.0 / mu_i, 2.0 / mu2);
        return BusyPeriodMoments {
            per_level: vec![top],
            top,
        };
    }
    let consts = PsConstants::new(rho_ip, k);
    let q = consts.q;
    // Increments E[Psi_i^2] - E[Psi_{i-1}^2] solved from the top level down.
    let mut inc = vec![0.0; k + 1];
    inc[k] = consts.c[k] / (1.0 - q);
    for i in (1..k).rev() {
        inc[i] = (consts.c[i] + q * inc[i + 1]) / (1.0 - q);
    }
    let mut second = 0.0;
    let per_level: Vec<MomentPair> = (1..=k)
        .map(|i| {
            second += inc[i];
            MomentPair::new(consts.level_mean(i) / mu_i, second / mu2)
        })
        .collect();
    BusyPeriodMoments {
        top: per_level[0],
        per_level,
    }
}

/// Moments of the effective server time: from a tolerant customer's service
/// start to its completion, including eager interruptions.
pub fn est_moments_ps(params: &SystemParams) -> MomentPair {
    let loads = derived_loads(params);
    let rho_ip = loads.rho_ip;
    let a_0 = a0(rho_ip, params.k);
    let m1 = a_0 / params.mu_t;
    let tail = if params.k == 1 {
        // E[Psi^2] = 2 / mu_i^2 in closed form.
        2.0
    } else {
        PsConstants::new(rho_ip, params.k).second_moment_sum()
    };
    let m2 = 2.0 * a_0 * a_0 / (params.mu_t * params.mu_t) + rho_ip / (params.mu_t * params.mu_i) * tail;
    MomentPair::new(m1, m2)
}

/// Mean sojourn time of an M/G/1 FCFS queue (Pollaczek-Khinchine).
pub fn mg1_sojourn(service: &MomentPair, lambda: f64) -> Result<f64> {
    let load = lambda * service.m1;
    if load >= 1.0 - STABILITY_GUARD {
        return Err(Error::Unstable {
            reason: format!("M/G/1 load {load} >= 1"),
        });
    }
    Ok(service.m1 + lambda * service.m2 / (2.0 * (1.0 - load)))
}

/// Service-time moments of the lower (`M_L`) and upper (`M_U`) M/G/1
/// systems that sandwich the original PS system.
pub fn ps_sandwich_moments(params: &SystemParams) -> (MomentPair, MomentPair) {
    let est = est_moments_ps(params);
    if params.p == 0.0 {
        return (est, est);
    }
    let busy = busy_period_moments(derived_loads(params).rho_ip, params.mu_i, params.k).top;
    (est, est.convolve(&busy))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SojournBounds {
    pub lower: f64,
    pub upper: f64,
}

impl SojournBounds {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Expected tolerant sojourn time of the two M/G/1 sandwich systems.
pub fn ps_sojourn_bounds(params: &SystemParams) -> Result<SojournBounds> {
    let (low, up) = ps_sandwich_moments(params);
    let lower = mg1_sojourn(&low, params.lambda_t).map_err(|e| Error::Unstable {
        reason: format!("lower-bound system M_L: {}", reason_of(&e)),
    })?;
    let upper = mg1_sojourn(&up, params.lambda_t).map_err(|e| Error::Unstable {
        reason: format!("upper-bound system M_U: {}", reason_of(&e)),
    })?;
    Ok(SojournBounds { lower, upper })
}

fn reason_of(e: &Error) -> String {
    match e {
        Error::Unstable { reason } => reason.clone(),
        other => other.to_string(),
    }
}

/// Tolerant sojourn time in the short-frequent-job limit:
/// `a_0 / (mu_t (1 - a_0 rho_t))`.
pub fn ps_sojourn_sfj(p: f64, rho_i: f64, k: usize, lambda_t: f64, mu_t: f64) -> Result<f64> {
    let a_0 = a0(rho_i * p, k);
    let load = a_0 * lambda_t / mu_t;
    if load >= 1.0 - STABILITY_GUARD {
        return Err(Error::Unstable {
            reason: format!("a_0 * rho_t = {load} >= 1"),
        });
    }
    Ok(a_0 / (mu_t * (1.0 - load)))
}
