//! Round-robin epsilon-Nash dynamics over the clients.
//!
//! Clients are visited in index order. Each visit recomputes the client's
//! capacity-proportional row against the other clients' current load and
//! installs it only when the cost improvement clears the epsilon test. The
//! run stops when a full pass installs nothing, or at the round cap.

use serde::{Deserialize, Serialize};

use crate::best_response::{optimal, ResidualRates};
use crate::error::{Error, Result};
use crate::game::{
    ClientSpec, GameConfig, InitialKind, MaxRounds, ServerSpec, StrategyMatrix, SystemState,
};

/// One visit to one client: what it paid, what the candidate offered, and
/// the state metrics after the accept/reject decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Global step counter, assigned by [`run`] (1-based).
    pub round: u64,
    pub mover: usize,
    pub accepted: bool,
    pub cost_before: f64,
    pub cost_after: f64,
    /// System potential of the post-decision state.
    pub potential: f64,
    /// Per-server load ratios of the post-decision state.
    pub load_ratios: Vec<f64>,
    /// Every client's cost in the post-decision state.
    pub per_client_costs: Vec<f64>,
}

/// Outcome of a full dynamics run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub config: GameConfig,
    pub final_state: SystemState,
    /// Total client visits, across all passes.
    pub rounds: u64,
    /// Completed round-robin passes.
    pub passes: u64,
    /// Step bound computed from the scenario; absent when epsilon is zero.
    pub theoretical_bound: Option<u64>,
    /// True when the last full pass installed no move.
    pub converged: bool,
    pub trace: Vec<TraceRecord>,
    /// Relative cost gap of each client's proportional row against the grid
    /// optimum on the final state. Filled by the caller when an oracle pass
    /// is requested; empty otherwise.
    pub best_response_gaps: Vec<f64>,
}

impl EquilibriumReport {
    /// Sum of all client costs in the final state.
    pub fn final_total_cost(&self) -> Result<f64> {
        Ok(self.final_state.per_client_costs()?.iter().sum())
    }
}

/// Capacity each server still offers client `j`, recomputed from the
/// maximum rates: `mu_i_max - sum_{k != j} S[k][i] * phi_k`.
pub fn residual_rates(state: &SystemState, client: usize) -> ResidualRates {
    let mu = (0..state.servers.len())
        .map(|i| {
            let others: f64 = state
                .clients
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != client)
                .map(|(k, c)| state.strategy.row(k)[i] * c.phi)
                .sum();
            state.servers[i].mu_max - others
        })
        .collect();
    ResidualRates::new(mu)
}

/// Offer client `j` its proportional row; install it when the epsilon test
/// passes. Returns the (possibly unchanged) state and the trace record with
/// `round` left at zero.
pub fn step(state: &SystemState, client: usize, cfg: &GameConfig) -> Result<(SystemState, TraceRecord)> {
    let cost_before = state.client_cost(client)?;
    let residual = residual_rates(state, client);
    let candidate = optimal(&residual, state.clients[client].phi, cfg)?;

    let mut next = state.clone();
    next.strategy.set_row(client, candidate.into_vec())?;
    let cost_after = next.client_cost(client)?;

    let accepted = cfg.is_epsilon_move(cost_before, cost_after);
    let decided = if accepted { next } else { state.clone() };

    let record = TraceRecord {
        round: 0,
        mover: client,
        accepted,
        cost_before,
        cost_after,
        potential: decided.system_potential()?,
        load_ratios: decided.load_ratios(),
        per_client_costs: decided.per_client_costs()?,
    };
    Ok((decided, record))
}

/// Ceiling of `m * alpha / epsilon * ln(m * C)`: the step bound for the
/// dynamics under the bounded-jump condition. `C` is an upper bound on any
/// client's cost.
pub fn convergence_bound(m_players: u64, alpha: f64, epsilon: f64, cost_bound: f64) -> Result<u64> {
    debug_assert!(m_players >= 1);
    debug_assert!(alpha >= 1.0);
    debug_assert!(cost_bound > 0.0);
    if epsilon <= 0.0 {
        return Err(Error::UnboundedForZeroEpsilon);
    }
    let m = m_players as f64;
    let steps = m * alpha / epsilon * (m * cost_bound).ln();
    Ok(steps.ceil().max(0.0) as u64)
}

/// Largest delay jump factor over all servers for the configured phi_max.
pub fn max_alpha(servers: &[ServerSpec], phi_max: f64) -> f64 {
    servers
        .iter()
        .map(|s| s.alpha_bound(phi_max))
        .fold(1.0, f64::max)
}

/// Build the starting matrix for a run and reject it when it overloads any
/// server.
pub fn initial_strategy(
    servers: &[ServerSpec],
    clients: &[ClientSpec],
    kind: InitialKind,
    stability_slack: f64,
) -> Result<StrategyMatrix> {
    let n = servers.len();
    let rows: Vec<Vec<f64>> = match kind {
        InitialKind::OwnServer => (0..clients.len())
            .map(|j| {
                let mut row = vec![0.0; n];
                row[j % n] = 1.0;
                row
            })
            .collect(),
        InitialKind::Uniform => vec![vec![1.0 / n as f64; n]; clients.len()],
    };
    let matrix = StrategyMatrix::new(rows)?;
    for (i, server) in servers.iter().enumerate() {
        let beta: f64 = clients
            .iter()
            .enumerate()
            .map(|(j, c)| matrix.row(j)[i] * c.phi)
            .sum();
        let cap = server.mu_max * (1.0 - stability_slack);
        if beta > cap {
            return Err(Error::InfeasibleInitial { server: i, beta, cap });
        }
    }
    Ok(matrix)
}

/// Run the dynamics to quiescence or the round cap.
pub fn run(state0: &SystemState, cfg: &GameConfig) -> Result<EquilibriumReport> {
    let m = state0.clients.len();
    let alpha = max_alpha(&state0.servers, cfg.phi_max);
    let initial_costs = state0.per_client_costs()?;
    // the step bound needs ln(m * C) > 0; sub-unit response times would
    // collapse it, and anything above the true maximum is still a bound
    let cost_bound = initial_costs.iter().copied().fold(0.0, f64::max).max(1.0);
    let theoretical_bound = if cfg.epsilon > 0.0 {
        Some(convergence_bound(m as u64, alpha, cfg.epsilon, cost_bound)?)
    } else {
        None
    };
    let cap = match cfg.max_rounds {
        MaxRounds::Fixed(v) => v,
        MaxRounds::Bound => theoretical_bound.ok_or(Error::UnboundedForZeroEpsilon)?,
    };

    let mut state = state0.clone();
    let mut trace = Vec::new();
    let mut rounds: u64 = 0;
    let mut passes: u64 = 0;
    let mut converged = false;

    'outer: loop {
        let mut accepted_in_pass = 0u64;
        for client in 0..m {
            if rounds >= cap {
                break 'outer;
            }
            let (next, mut record) = step(&state, client, cfg)?;
            rounds += 1;
            record.round = rounds;
            accepted_in_pass += u64::from(record.accepted);
            trace.push(record);
            state = next;
        }
        passes += 1;
        if accepted_in_pass == 0 {
            converged = true;
            break;
        }
    }

    Ok(EquilibriumReport {
        config: cfg.clone(),
        final_state: state,
        rounds,
        passes,
        theoretical_bound,
        converged,
        trace,
        best_response_gaps: Vec::new(),
    })
}
