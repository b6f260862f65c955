use thiserror::Error;

/// Errors produced by the analytics, the simulator and the chain solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{field} must be a positive rate, got {value}")]
    NonPositiveRate { field: &'static str, value: f64 },

    #[error("{field} must lie in [0, 1], got {value}")]
    ProbabilityOutOfRange { field: &'static str, value: f64 },

    #[error("{field} must be at least 1")]
    ZeroK { field: &'static str },

    #[error("unstable: {reason}")]
    Unstable { reason: String },

    #[error("infeasible: rho_i*(1-p_block) + rho_t = {load} >= 1")]
    Infeasible { load: f64 },

    #[error("target blocking {target} is below the best achievable P_B(1) = {best}")]
    TargetUnreachable { target: f64, best: f64 },

    #[error("recursion denominator {value:e} at level {level} is degenerate")]
    DegenerateRecursion { level: usize, value: f64 },

    #[error("replication {replication}: tolerant queue exceeded {cap} customers at t = {clock}")]
    DivergenceDetected { replication: usize, cap: usize, clock: f64 },

    #[error("tail mass {tail_mass:e} at t_cap = {t_cap} exceeds {epsilon:e}")]
    TruncationInsufficient { t_cap: usize, tail_mass: f64, epsilon: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
