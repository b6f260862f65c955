//! Shared vocabulary: system parameters, derived loads, policies and the
//! small value types every other module passes around.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rates and admission controls of the two-class system.
///
/// Eager customers arrive at `lambda_i` and would be served at `mu_i` with the
/// full server; tolerant customers arrive at `lambda_t` and are served at
/// `mu_t` with the full server. An eager arrival passes the admission coin
/// with probability `p`; at most `k` eager customers are in service at once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub lambda_i: f64,
    pub mu_i: f64,
    pub lambda_t: f64,
    pub mu_t: f64,
    pub p: f64,
    pub k: usize,
}

impl SystemParams {
    /// Builds and validates a parameter set.
    pub fn new(lambda_i: f64, mu_i: f64, lambda_t: f64, mu_t: f64, p: f64, k: usize) -> Result<Self> {
        validate_params(SystemParams {
            lambda_i,
            mu_i,
            lambda_t,
            mu_t,
            p,
            k,
        })
    }

    /// Same as [`SystemParams::new`] but parameterized by the eager load.
    pub fn from_load(rho_i: f64, mu_i: f64, lambda_t: f64, mu_t: f64, p: f64, k: usize) -> Result<Self> {
        Self::new(rho_i * mu_i, mu_i, lambda_t, mu_t, p, k)
    }

    pub fn loads(&self) -> DerivedLoads {
        derived_loads(self)
    }

    /// Copy with a different admission probability.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        validate_params(SystemParams { p, ..*self })
    }
}

pub fn validate_params(params: SystemParams) -> Result<SystemParams> {
    let rates = [
        ("lambda_i", params.lambda_i),
        ("mu_i", params.mu_i),
        ("lambda_t", params.lambda_t),
        ("mu_t", params.mu_t),
    ];
    for (field, value) in rates {
        // `!(v > 0)` also rejects NaN.
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveRate { field, value });
        }
    }
    check_probability("p", params.p)?;
    if params.k == 0 {
        return Err(Error::ZeroK { field: "k" });
    }
    Ok(params)
}

pub(crate) fn check_probability(field: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange { field, value })
    }
}

pub(crate) fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::ZeroK { field: "k" })
    } else {
        Ok(())
    }
}

/// Load factors derived from [`SystemParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedLoads {
    pub rho_i: f64,
    pub rho_t: f64,
    /// Offered eager load after the admission coin, `rho_i * p`.
    pub rho_ip: f64,
}

pub fn derived_loads(params: &SystemParams) -> DerivedLoads {
    let rho_i = params.lambda_i / params.mu_i;
    DerivedLoads {
        rho_i,
        rho_t: params.lambda_t / params.mu_t,
        rho_ip: rho_i * params.p,
    }
}

/// `sum_{j=0}^{n} ratio^j`, accumulated in ascending order with compensation.
///
/// There is no closed form here on purpose, so `ratio == 1` is not special.
pub fn geometric_sum(ratio: f64, n: usize) -> f64 {
    let mut acc = CompensatedSum::default();
    let mut term = 1.0;
    for j in 0..=n {
        if j > 0 {
            term *= ratio;
        }
        acc.add(term);
    }
    acc.value()
}

/// `a_0 = sum_{j=0}^{K} rho_ip^j`, the normalizer of the PS eager chain.
pub fn a0(rho_ip: f64, k: usize) -> f64 {
    geometric_sum(rho_ip, k)
}

/// True iff the tolerant class is stable under the PS policy in the
/// short-frequent-job limit, i.e. `a_0 * rho_t < 1`.
pub fn stability_ps(loads: &DerivedLoads, k: usize) -> bool {
    a0(loads.rho_ip, k) * loads.rho_t < 1.0
}

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Scheduling policy family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Admitted eager customers processor-share the full server, up to `k`.
    Ps,
    /// Each admitted eager customer takes a fixed `1/k` slice of capacity.
    Cd,
    /// PS, but eager arrivals are always admitted while no tolerant customer is present.
    DynamicPs,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Ps => "ps",
            PolicyKind::Cd => "cd",
            PolicyKind::DynamicPs => "dynamic-ps",
        }
    }
}

/// A policy together with the system it runs on. For PS `k` caps the number
/// of processor-sharing eager customers; for CD it is the number of slices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub params: SystemParams,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, params: SystemParams) -> Result<Self> {
        Ok(PolicySpec {
            kind,
            params: validate_params(params)?,
        })
    }
}

/// A point of an achievable region: blocking probability and, when the
/// tolerant class is stable, its expected sojourn time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfPoint {
    pub p_block: f64,
    pub e_sojourn: Option<f64>,
    pub stable: bool,
}

impl PerfPoint {
    pub fn stable(p_block: f64, e_sojourn: f64) -> Self {
        PerfPoint {
            p_block,
            e_sojourn: Some(e_sojourn),
            stable: true,
        }
    }

    pub fn unstable(p_block: f64) -> Self {
        PerfPoint {
            p_block,
            e_sojourn: None,
            stable: false,
        }
    }
}

/// First and second moment of a nonnegative random time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    pub m1: f64,
    pub m2: f64,
}

impl MomentPair {
    pub fn new(m1: f64, m2: f64) -> Self {
        MomentPair { m1, m2 }
    }

    /// Moments of an exponential time with the given rate.
    pub fn exponential(rate: f64) -> Self {
        MomentPair {
            m1: 1.0 / rate,
            m2: 2.0 / (rate * rate),
        }
    }

    pub fn variance(&self) -> f64 {
        self.m2 - self.m1 * self.m1
    }

    /// Moments of the sum of two independent times.
    pub fn convolve(&self, other: &MomentPair) -> MomentPair {
        MomentPair {
            m1: self.m1 + other.m1,
            m2: self.m2 + other.m2 + 2.0 * self.m1 * other.m1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_accepts_legal_params() {
        let params = SystemParams::new(1.0, 1.0, 1.0, 2.0, 0.5, 3).unwrap();
        assert_eq!(params.k, 3);
    }

    #[test]
    fn validate_rejects_bad_fields() {
        assert_eq!(
            SystemParams::new(1.0, 1.0, 1.0, 2.0, 1.2, 3).unwrap_err(),
            Error::ProbabilityOutOfRange { field: "p", value: 1.2 }
        );
        assert_eq!(
            SystemParams::new(1.0, 0.0, 1.0, 2.0, 0.5, 3).unwrap_err(),
            Error::NonPositiveRate {
                field: "mu_i",
                value: 0.0
            }
        );
        assert_eq!(
            SystemParams::new(1.0, 1.0, 1.0, 2.0, 0.5, 0).unwrap_err(),
            Error::ZeroK { field: "k" }
        );
        assert!(matches!(
            SystemParams::new(1.0, 1.0, f64::NAN, 2.0, 0.5, 1),
            Err(Error::NonPositiveRate { field: "lambda_t", .. })
        ));
    }

    #[test]
    fn derived_loads_examples() {
        let l = SystemParams::new(30.0, 100.0, 5.6, 8.0, 1.0, 3).unwrap().loads();
        assert!((l.rho_i - 0.3).abs() < 1e-15);
        assert!((l.rho_ip - 0.3).abs() < 1e-15);
        assert!((l.rho_t - 0.7).abs() < 1e-15);
        let l0 = SystemParams::new(30.0, 100.0, 5.6, 8.0, 0.0, 3).unwrap().loads();
        assert_eq!(l0.rho_ip, 0.0);
    }

    #[test]
    fn stability_examples() {
        let loads = |rho_ip: f64, rho_t: f64| DerivedLoads {
            rho_i: rho_ip,
            rho_t,
            rho_ip,
        };
        assert!(stability_ps(&loads(0.0, 0.99), 5));
        // a_0 = 1 + 0.3 + 0.09 + 0.027 = 1.417
        assert!((a0(0.3, 3) - 1.417).abs() < 1e-14);
        assert!(stability_ps(&loads(0.3, 0.7), 3));
        assert!(!stability_ps(&loads(0.3, 0.71), 3));
    }

    #[test]
    fn geometric_sum_at_unit_ratio() {
        assert_eq!(geometric_sum(1.0, 9), 10.0);
        assert_eq!(geometric_sum(0.0, 4), 1.0);
    }

    #[test]
    fn convolve_matches_independent_sum() {
        let a = MomentPair::exponential(2.0);
        let b = MomentPair::exponential(3.0);
        let c = a.convolve(&b);
        assert!((c.m1 - (0.5 + 1.0 / 3.0)).abs() < 1e-15);
        // Var adds for independent summands.
        assert!((c.variance() - (a.variance() + b.variance())).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn loads_are_scale_invariant(
                li in 0.01f64..50.0, mi in 0.01f64..50.0, p in 0.0f64..=1.0, c in 0.01f64..100.0
            ) {
                let a = SystemParams::new(li, mi, 1.0, 2.0, p, 2).unwrap().loads();
                let b = SystemParams::new(li * c, mi * c, 1.0, 2.0, p, 2).unwrap().loads();
                prop_assert!((a.rho_i - b.rho_i).abs() <= 1e-12 * a.rho_i.max(1.0));
                prop_assert!((a.rho_ip - b.rho_ip).abs() <= 1e-12 * a.rho_ip.max(1.0));
                prop_assert!(a.rho_ip <= a.rho_i);
            }

            #[test]
            fn stability_is_monotone_in_rho_t(
                rho_ip in 0.0f64..3.0, k in 1usize..8, rho_t in 0.0f64..1.0, bump in 0.0f64..1.0
            ) {
                let lo = DerivedLoads { rho_i: rho_ip, rho_t, rho_ip };
                let hi = DerivedLoads { rho_t: rho_t + bump, ..lo };
                if !stability_ps(&lo, k) {
                    prop_assert!(!stability_ps(&hi, k));
                }
            }
        }
    }
}
