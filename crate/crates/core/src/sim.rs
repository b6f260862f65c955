//! Discrete-event simulation of the two-class system and a Monte Carlo
//! estimator of eager busy-period moments.
//!
//! Every channel is exponential, so each step draws the holding time from
//! the total rate and then picks the channel with one uniform, in the fixed
//! order i-arrival, i-departure, t-arrival, t-departure. An eager arrival
//! then draws its admission coin. Runs are fully determined by the seed.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::model::{check_probability, MomentPair, PolicyKind, PolicySpec};

/// Default cap on the tolerant queue before a run is declared divergent.
pub const DEFAULT_T_CAP: usize = 1_000_000;
pub const DEFAULT_WARMUP: f64 = 0.1;

/// Event rates out of a state, plus the probability that an eager arrival
/// is admitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTable {
    pub i_arrival: f64,
    pub i_departure: f64,
    pub t_arrival: f64,
    pub t_departure: f64,
    pub admit_prob: f64,
}

impl RateTable {
    pub fn total(&self) -> f64 {
        self.i_arrival + self.i_departure + self.t_arrival + self.t_departure
    }
}

/// Rates at eager count `n_i` and tolerant count `n_t`.
pub fn rates_at(n_i: usize, n_t: usize, policy: &PolicySpec) -> RateTable {
    let s = &policy.params;
    let k = s.k;
    let room = n_i < k;
    let (i_departure, t_departure) = match policy.kind {
        PolicyKind::Ps | PolicyKind::DynamicPs => {
            let i = if n_i >= 1 { s.mu_i } else { 0.0 };
            let t = if n_i == 0 && n_t >= 1 { s.mu_t } else { 0.0 };
            (i, t)
        }
        PolicyKind::Cd => {
            let kf = k as f64;
            let i = n_i as f64 * s.mu_i / kf;
            let t = if n_t >= 1 { s.mu_t * (k - n_i) as f64 / kf } else { 0.0 };
            (i, t)
        }
    };
    let coin = match policy.kind {
        PolicyKind::DynamicPs if n_t == 0 => 1.0,
        _ => s.p,
    };
    RateTable {
        i_arrival: s.lambda_i,
        i_departure,
        t_arrival: s.lambda_t,
        t_departure,
        admit_prob: if room { coin } else { 0.0 },
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimCounters {
    pub i_arrivals: u64,
    pub i_blocked: u64,
    pub t_completed: u64,
    /// Integral of `n_t` over the measurement window.
    pub area_under_n_t: f64,
}

/// Live state of one run. `t_fifo` holds arrival epochs, front in service.
#[derive(Debug, Clone, Default)]
pub struct SimState {
    pub n_i: usize,
    pub n_t: usize,
    pub t_fifo: VecDeque<f64>,
    pub clock: f64,
    pub counters: SimCounters,
}

pub fn transition_rates(state: &SimState, policy: &PolicySpec) -> RateTable {
    rates_at(state.n_i, state.n_t, policy)
}

/// Run length: simulated time, or number of tolerant arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Horizon {
    Time(f64),
    TolerantArrivals(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub horizon: Horizon,
    /// Leading fraction of the horizon excluded from all estimates.
    pub warmup_fraction: f64,
    /// Tolerant queue length that aborts the run as divergent.
    pub t_cap: usize,
}

impl SimConfig {
    pub fn new(horizon: Horizon) -> Self {
        SimConfig {
            horizon,
            warmup_fraction: DEFAULT_WARMUP,
            t_cap: DEFAULT_T_CAP,
        }
    }

    pub fn with_warmup(self, warmup_fraction: f64) -> Self {
        SimConfig {
            warmup_fraction,
            ..self
        }
    }

    fn validate(&self) -> Result<()> {
        check_probability("warmup_fraction", self.warmup_fraction)?;
        if self.warmup_fraction >= 1.0 {
            return Err(Error::InvalidArgument("warmup_fraction must be below 1".into()));
        }
        match self.horizon {
            Horizon::Time(t) if !(t > 0.0 && t.is_finite()) => Err(Error::InvalidArgument(format!(
                "time horizon must be positive, got {t}"
            ))),
            Horizon::TolerantArrivals(n) if (n as f64 * (1.0 - self.warmup_fraction)) < 1.0 => Err(
                Error::InvalidArgument(format!("horizon of {n} arrivals leaves nothing after warm-up")),
            ),
            _ => Ok(()),
        }
    }
}

/// Statistics of one run over its measurement window.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub counters: SimCounters,
    pub window: f64,
    pub events: u64,
    pub sojourn_sum: f64,
    pub sojourn_sq_sum: f64,
    /// Time spent at each eager level `0..=K` inside the window.
    pub level_time: Vec<f64>,
    pub lambda_t: f64,
}

impl RunStats {
    pub fn p_block(&self) -> f64 {
        if self.counters.i_arrivals == 0 {
            return f64::NAN;
        }
        self.counters.i_blocked as f64 / self.counters.i_arrivals as f64
    }

    pub fn mean_sojourn(&self) -> f64 {
        self.sojourn_sum / self.counters.t_completed as f64
    }

    pub fn mean_n_t(&self) -> f64 {
        self.counters.area_under_n_t / self.window
    }

    /// Relative gap between the tagged mean sojourn and `E[n_t] / lambda_t`.
    pub fn littles_gap(&self) -> f64 {
        let s = self.mean_sojourn();
        ((s - self.mean_n_t() / self.lambda_t) / s).abs()
    }
}

/// One seeded run.
///
/// Tolerant customers arriving inside the measurement window are tagged and
/// followed to departure, even past the end of the window; eager blocking
/// and the `n_t` area are measured inside the window only.
pub fn simulate(policy: &PolicySpec, config: &SimConfig, seed: u64) -> Result<RunStats> {
    config.validate()?;
    let k = policy.params.k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = SimState::default();
    let mut level_time = vec![0.0; k + 1];
    let mut events: u64 = 0;
    let (mut sojourn_sum, mut sojourn_sq_sum) = (0.0, 0.0);

    // Window bounds; for an arrival horizon they are fixed by arrival epochs.
    let (mut w_start, mut w_end, tag_from, tag_to) = match config.horizon {
        Horizon::Time(t) => (config.warmup_fraction * t, t, 0, u64::MAX),
        Horizon::TolerantArrivals(n) => {
            let from = (config.warmup_fraction * n as f64).floor() as u64;
            (f64::INFINITY, f64::INFINITY, from, n)
        }
    };
    let by_time = matches!(config.horizon, Horizon::Time(_));
    let mut t_arrivals: u64 = 0;
    let mut tagged_in_system: u64 = 0;
    // Tagged flag rides along with each arrival epoch.
    let mut tags: VecDeque<bool> = VecDeque::new();

    loop {
        let done_tagging = if by_time {
            st.clock > w_end
        } else {
            t_arrivals >= tag_to
        };
        if done_tagging && tagged_in_system == 0 {
            break;
        }
        let rates = transition_rates(&st, policy);
        let total = rates.total();
        let hold: f64 = rng.sample::<f64, _>(Exp1) / total;
        let next = st.clock + hold;
        let lo = st.clock.max(w_start);
        let hi = next.min(w_end);
        if hi > lo {
            st.counters.area_under_n_t += st.n_t as f64 * (hi - lo);
            level_time[st.n_i] += hi - lo;
        }
        st.clock = next;
        events += 1;

        let u: f64 = rng.random::<f64>() * total;
        if u < rates.i_arrival {
            let coin: f64 = rng.random();
            let in_window = st.clock >= w_start && st.clock <= w_end;
            let admitted = coin < rates.admit_prob;
            if in_window {
                st.counters.i_arrivals += 1;
                if !admitted {
                    st.counters.i_blocked += 1;
                }
            }
            if admitted {
                st.n_i += 1;
            }
        } else if u < rates.i_arrival + rates.i_departure {
            st.n_i -= 1;
        } else if u < rates.i_arrival + rates.i_departure + rates.t_arrival {
            let tagged = if by_time {
                st.clock >= w_start && st.clock <= w_end
            } else {
                if t_arrivals == tag_from {
                    w_start = st.clock;
                }
                if t_arrivals + 1 == tag_to {
                    w_end = st.clock;
                }
                t_arrivals >= tag_from && t_arrivals < tag_to
            };
            t_arrivals += 1;
            st.t_fifo.push_back(st.clock);
            tags.push_back(tagged);
            st.n_t += 1;
            if tagged {
                tagged_in_system += 1;
            }
            if st.n_t > config.t_cap {
                return Err(Error::DivergenceDetected {
                    replication: 0,
                    cap: config.t_cap,
                    clock: st.clock,
                });
            }
        } else if st.n_t > 0 {
            let arrived = st.t_fifo.pop_front().expect("fifo matches n_t");
            st.n_t -= 1;
            if tags.pop_front().expect("tags match n_t") {
                let s = st.clock - arrived;
                sojourn_sum += s;
                sojourn_sq_sum += s * s;
                st.counters.t_completed += 1;
                tagged_in_system -= 1;
            }
        }
        // Rounding can land `u` on `total` with a zero last channel; the
        // `n_t > 0` guard above turns that into a no-op step.
    }

    Ok(RunStats {
        counters: st.counters,
        window: w_end - w_start,
        events,
        sojourn_sum,
        sojourn_sq_sum,
        level_time,
        lambda_t: policy.params.lambda_t,
    })
}

/// SplitMix64 finalizer applied to `base ^ golden * (index + 1)`: the seed
/// of replication `index`.
pub fn replication_seed(base_seed: u64, index: u64) -> u64 {
    let mut z = base_seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A mean with the half-width of its 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
}

impl Estimate {
    /// Student-t interval over independent replicate values.
    pub fn from_replicates(values: &[f64]) -> Estimate {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Estimate {
                mean,
                half_width: f64::INFINITY,
            };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("degrees of freedom >= 1")
            .inverse_cdf(0.975);
        Estimate {
            mean,
            half_width: t * (var / n as f64).sqrt(),
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        (value - self.mean).abs() <= self.half_width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub p_block: Estimate,
    pub e_sojourn: Estimate,
    pub reps: usize,
    pub seed: u64,
    pub events: u64,
    /// Largest per-replication Little's-law gap.
    pub littles_check: f64,
    pub rep_p_block: Vec<f64>,
    pub rep_sojourn: Vec<f64>,
}

/// Independent replications, run in parallel and reduced in index order.
pub fn run_replications(policy: &PolicySpec, config: &SimConfig, reps: usize, base_seed: u64) -> Result<SimEstimate> {
    if reps < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 replications, got {reps}"
        )));
    }
    config.validate()?;
    let runs: Vec<Result<RunStats>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            simulate(policy, config, replication_seed(base_seed, r as u64)).map_err(|e| match e {
                Error::DivergenceDetected { cap, clock, .. } => Error::DivergenceDetected {
                    replication: r,
                    cap,
                    clock,
                },
                other => other,
            })
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let rep_p_block: Vec<f64> = runs.iter().map(RunStats::p_block).collect();
    let rep_sojourn: Vec<f64> = runs.iter().map(RunStats::mean_sojourn).collect();
    Ok(SimEstimate {
        p_block: Estimate::from_replicates(&rep_p_block),
        e_sojourn: Estimate::from_replicates(&rep_sojourn),
        reps,
        seed: base_seed,
        events: runs.iter().map(|r| r.events).sum(),
        littles_check: runs.iter().map(RunStats::littles_gap).fold(0.0, f64::max),
        rep_p_block,
        rep_sojourn,
    })
}

/// Sample moments of the eager busy period with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusyPeriodEstimate {
    pub moments: MomentPair,
    pub se_m1: f64,
    pub se_m2: f64,
    pub samples: u64,
}

const BUSY_CHUNK: u64 = 1 << 16;

/// Busy periods of the PS eager subsystem started by one customer: total
/// departure rate `mu_i` while busy, arrivals at `rho_ip mu_i` dropped at
/// `K`. Samples are drawn in fixed-size chunks with their own streams so the
/// result does not depend on the thread count.
pub fn busy_period_mc(rho_ip: f64, mu_i: f64, k: usize, samples: u64, seed: u64) -> Result<BusyPeriodEstimate> {
    crate::model::check_k(k)?;
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    if !(mu_i > 0.0) || !(rho_ip >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need mu_i > 0 and rho_ip >= 0, got {mu_i}, {rho_ip}"
        )));
    }
    let lambda = rho_ip * mu_i;
    let chunks = samples.div_ceil(BUSY_CHUNK);
    let sums: Vec<[f64; 3]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(seed, c));
            let n = BUSY_CHUNK.min(samples - c * BUSY_CHUNK);
            let mut acc = [0.0; 3];
            for _ in 0..n {
                let mut level = 1usize;
                let mut t = 0.0;
                while level > 0 {
                    let up = if level < k { lambda } else { 0.0 };
                    let total = up + mu_i;
                    t += rng.sample::<f64, _>(Exp1) / total;
                    if rng.random::<f64>() * total < up {
                        level += 1;
                    } else {
                        level -= 1;
                    }
                }
                let t2 = t * t;
                acc[0] += t;
                acc[1] += t2;
                acc[2] += t2 * t2;
            }
            acc
        })
        .collect();
    let mut tot = [0.0; 3];
    for s in &sums {
        for j in 0..3 {
            tot[j] += s[j];
        }
    }
    let n = samples as f64;
    let m1 = tot[0] / n;
    let m2 = tot[1] / n;
    let m4 = tot[2] / n;
    let spread = |var: f64| {
        if samples > 1 {
            (var.max(0.0) / (n - 1.0)).sqrt()
        } else {
            f64::INFINITY
        }
    };
    Ok(BusyPeriodEstimate {
        moments: MomentPair::new(m1, m2),
        se_m1: spread(m2 - m1 * m1),
        se_m2: spread(m4 - m2 * m2),
        samples,
    })
}
