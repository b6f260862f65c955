//! Alternating-admission dynamic PS policy: eager arrivals are always
//! admitted while no tolerant customer is present and admitted with
//! probability `p` otherwise.

use crate::error::{Error, Result};
use crate::model::{a0, derived_loads, SystemParams};
use crate::ps::{ps_blocking, ps_sojourn_sfj, STABILITY_GUARD};

/// Mean tolerant busy and idle period lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TBusyIdle {
    pub e_busy: f64,
    pub e_idle: f64,
}

impl TBusyIdle {
    /// Long-run fraction of time the tolerant queue is busy.
    pub fn busy_fraction(&self) -> f64 {
        self.e_busy / (self.e_busy + self.e_idle)
    }
}

/// Short-frequent-job approximations: the idle period is exponential with
/// rate `lambda_t` and the busy period is that of the M/G/1 lower system,
/// `a_0 / (mu_t - lambda_t a_0)`.
pub fn t_busy_idle_sfj(params: &SystemParams) -> Result<TBusyIdle> {
    let a_0 = a0(derived_loads(params).rho_ip, params.k);
    let load = params.lambda_t * a_0 / params.mu_t;
    if load >= 1.0 - STABILITY_GUARD {
        return Err(Error::Unstable {
            reason: format!("a_0 * rho_t = {load} >= 1"),
        });
    }
    Ok(TBusyIdle {
        e_busy: a_0 / (params.mu_t - params.lambda_t * a_0),
        e_idle: 1.0 / params.lambda_t,
    })
}

/// Renewal-reward mixture of the full-admission and `p`-admission blocking.
pub fn dynamic_blocking_ps(params: &SystemParams) -> Result<f64> {
    let periods = t_busy_idle_sfj(params)?;
    let rho_i = derived_loads(params).rho_i;
    let idle_block = ps_blocking(1.0, rho_i, params.k);
    let busy_block = ps_blocking(params.p, rho_i, params.k);
    let total = periods.e_busy + periods.e_idle;
    Ok((periods.e_idle * idle_block + periods.e_busy * busy_block) / total)
}

/// Asymptotically the dynamic policy leaves the tolerant sojourn time of
/// the static policy with the same `p` unchanged.
pub fn dynamic_sojourn_sfj(params: &SystemParams) -> Result<f64> {
    let rho_i = derived_loads(params).rho_i;
    ps_sojourn_sfj(params.p, rho_i, params.k, params.lambda_t, params.mu_t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig9(p: f64) -> SystemParams {
        SystemParams::from_load(0.225, 200.0, 5.6, 8.0, p, 4).unwrap()
    }

    #[test]
    fn busy_idle_examples() {
        let p0 = fig9(0.0);
        let t = t_busy_idle_sfj(&p0).unwrap();
        assert!((t.e_busy - 1.0 / (8.0 - 5.6)).abs() < 1e-12);
        assert!((t.e_idle - 0.178571).abs() < 1e-6);
        let t = t_busy_idle_sfj(&fig9(0.5)).unwrap();
        assert!((a0(0.1125, 4) - 1.12674).abs() < 1e-5);
        assert!((t.e_busy - 0.6666).abs() < 1e-3, "{}", t.e_busy);
    }

    #[test]
    fn blocking_examples() {
        let full = fig9(1.0);
        assert_eq!(dynamic_blocking_ps(&full).unwrap(), ps_blocking(1.0, 0.225, 4));
        let b = dynamic_blocking_ps(&fig9(0.5)).unwrap();
        assert!((b - 0.3948).abs() < 1e-4, "{b}");
    }

    #[test]
    fn mixture_bounds_and_dominance() {
        for step in 0..=100 {
            let p = step as f64 / 100.0;
            let params = fig9(p);
            let d = dynamic_blocking_ps(&params).unwrap();
            let full = ps_blocking(1.0, 0.225, 4);
            let stat = ps_blocking(p, 0.225, 4);
            assert!(full.min(stat) <= d + 1e-15 && d <= full.max(stat) + 1e-15);
            assert!(d <= stat + 1e-15);
        }
    }

    #[test]
    fn unstable_is_reported() {
        let params = SystemParams::from_load(0.3, 100.0, 5.7, 8.0, 1.0, 3).unwrap();
        assert!(matches!(dynamic_blocking_ps(&params), Err(Error::Unstable { .. })));
    }
}
