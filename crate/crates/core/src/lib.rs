//! Static load balancing for a client/server system, modeled as a
//! congestion game over M/M/1 servers.
//!
//! Clients split their job streams across servers in fractions. Each server
//! is an M/M/1 queue whose expected response time `1/(mu - beta)` grows with
//! its arrival rate, so clients congest each other. The [`dynamics`] module
//! runs round-robin epsilon-Nash dynamics: each client in turn recomputes a
//! capacity-proportional strategy row ([`best_response`]) and keeps it only
//! when the improvement clears the epsilon test. The [`oracle`] module
//! certifies converged states by exhaustive search over a discretized
//! strategy simplex, with its own cost evaluator so the two sides check each
//! other.

pub mod best_response;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod oracle;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
