//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Arrival rate reached or passed the service rate; the M/M/1 delay is
    /// unbounded there.
    #[error("server {server}: arrival rate {beta} >= service rate {mu}, queue unstable")]
    UnstableServer { server: usize, mu: f64, beta: f64 },

    /// A pure unit-weight operation was applied to a fractional or
    /// unequal-weight state.
    #[error("not a pure unit-weight assignment: {0}")]
    NotPureUnitWeight(String),

    /// The client's demand cannot be placed within the residual capacity.
    #[error("demand {demand} cannot be placed within residual capacity {capacity}")]
    InfeasibleLoad { demand: f64, capacity: f64 },

    /// The requested initial strategy violates server stability.
    #[error("initial strategy overloads server {server}: arrival {beta} > cap {cap}")]
    InfeasibleInitial { server: usize, beta: f64, cap: f64 },

    /// The step bound diverges as epsilon approaches zero; pure Nash
    /// dynamics needs an explicit round cap instead.
    #[error("step bound is undefined for epsilon = 0; set an explicit round cap")]
    UnboundedForZeroEpsilon,

    /// The simplex grid would exceed the enumeration cap.
    #[error("grid has {points} points, more than the cap of {cap}; reduce the resolution or the server count")]
    ResourceLimit { points: u64, cap: u64 },

    /// Every grid point violates stability for this client.
    #[error("no feasible grid point for client {client}")]
    NoFeasiblePoint { client: usize },

    /// Malformed scenario document.
    #[error("scenario parse error: {0}")]
    Parse(String),

    /// Well-formed document that violates a scenario invariant.
    #[error("scenario validation error: {0}")]
    Validation(String),

    /// The workload generator could not draw a feasible scenario.
    #[error("workload generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: u32, reason: String },
}
