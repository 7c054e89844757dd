//! Brute-force verification over a discretized strategy simplex.
//!
//! Candidate rows are all composition vectors `(k_1, ..., k_n)` of a
//! resolution `G` divided by `G`, enumerated in ascending lexicographic
//! order. Costs here are evaluated by a direct transcription of the
//! response-time formula rather than by the game module, so the oracle and
//! the production path check each other.

use serde::{Deserialize, Serialize};

use crate::best_response::optimal;
use crate::dynamics::residual_rates;
use crate::error::{Error, Result};
use crate::game::{GameConfig, SystemState};

/// Default cap on enumerated grid points.
pub const DEFAULT_MAX_POINTS: u64 = 10_000_000;

/// Resolution of the simplex grid and the enumeration budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub resolution: u32,
    pub max_points: u64,
}

impl GridSpec {
    pub fn new(resolution: u32) -> Self {
        Self { resolution, max_points: DEFAULT_MAX_POINTS }
    }

    pub fn with_max_points(resolution: u32, max_points: u64) -> Self {
        Self { resolution, max_points }
    }

    /// `C(G + n - 1, n - 1)` points, or `ResourceLimit` past the cap.
    pub fn point_count(&self, n: usize) -> Result<u64> {
        composition_count(n, self.resolution, self.max_points)
    }
}

/// Number of compositions of `g` into `n` nonnegative parts, erroring out
/// once it exceeds `cap`.
fn composition_count(n: usize, g: u32, cap: u64) -> Result<u64> {
    // C(g + n - 1, n - 1) built factor by factor in u128
    let mut count: u128 = 1;
    for i in 1..n as u128 {
        count = count * (u128::from(g) + i) / i;
        if count > u128::from(cap) {
            return Err(Error::ResourceLimit { points: count.min(u128::from(u64::MAX)) as u64, cap });
        }
    }
    Ok(count as u64)
}

/// Lexicographically ordered stream of grid rows.
pub struct SimplexGrid {
    parts: Vec<u32>,
    resolution: u32,
    done: bool,
}

impl Iterator for SimplexGrid {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        if self.done {
            return None;
        }
        let g = f64::from(self.resolution);
        let row: Vec<f64> = self.parts.iter().map(|&k| f64::from(k) / g).collect();
        self.advance();
        Some(row)
    }
}

impl SimplexGrid {
    fn advance(&mut self) {
        let n = self.parts.len();
        // find the rightmost non-final slot with mass to its right, bump it,
        // and push the remainder to the tail
        for i in (0..n.saturating_sub(1)).rev() {
            let tail: u32 = self.parts[i + 1..].iter().sum();
            if tail > 0 {
                self.parts[i] += 1;
                for p in &mut self.parts[i + 1..] {
                    *p = 0;
                }
                self.parts[n - 1] = tail - 1;
                return;
            }
        }
        self.done = true;
    }
}

/// All compositions of the grid resolution into `n` parts, each divided by
/// the resolution, in ascending lexicographic order.
pub fn enumerate_simplex(n: usize, grid: &GridSpec) -> Result<SimplexGrid> {
    debug_assert!(n >= 1);
    debug_assert!(grid.resolution >= 1);
    grid.point_count(n)?;
    let mut parts = vec![0u32; n];
    parts[n - 1] = grid.resolution;
    Ok(SimplexGrid { parts, resolution: grid.resolution, done: false })
}

/// Direct evaluation of client `j`'s response time with its row replaced:
/// `sum_i row[i] / (mu_i - beta_i)`. Returns `None` when any server would
/// be at or past its service rate.
fn response_time_with_row(state: &SystemState, client: usize, row: &[f64]) -> Option<f64> {
    let mut cost = 0.0;
    for (i, (server, &own_share)) in state.servers.iter().zip(row).enumerate() {
        let mut beta = 0.0;
        for (k, c) in state.clients.iter().enumerate() {
            let share = if k == client { own_share } else { state.strategy.row(k)[i] };
            beta += share * c.phi;
        }
        if beta >= server.mu_max {
            return None;
        }
        if own_share > 0.0 {
            cost += own_share / (server.mu_max - beta);
        }
    }
    Some(cost)
}

/// Client `j`'s current cost under the oracle's own evaluator.
pub fn response_time(state: &SystemState, client: usize) -> Result<f64> {
    response_time_with_row(state, client, state.strategy.row(client)).ok_or_else(|| {
        Error::Validation(format!("state is unstable while evaluating client {client}"))
    })
}

/// Cheapest feasible grid row for client `j` with everyone else fixed.
/// Ties resolve to the lexicographically smallest row.
pub fn brute_best_response(
    state: &SystemState,
    client: usize,
    grid: &GridSpec,
) -> Result<(Vec<f64>, f64)> {
    let n = state.servers.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for row in enumerate_simplex(n, grid)? {
        if let Some(cost) = response_time_with_row(state, client, &row) {
            match &best {
                Some((_, c)) if cost >= *c => {}
                _ => best = Some((row, cost)),
            }
        }
    }
    best.ok_or(Error::NoFeasiblePoint { client })
}

/// Certificate that no grid deviation improves any client by more than the
/// checked epsilon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashCertificate {
    pub epsilon_checked: f64,
    pub grid_resolution: u32,
    /// Best relative improvement `1 - c_best / c_current` found per client.
    pub per_client_gap: Vec<f64>,
    /// All gaps within `epsilon_checked`.
    pub holds: bool,
    /// Twice the largest relative cost change observed for a one-step grid
    /// shift, a numeric bound on what discretization can hide.
    pub grid_slack: f64,
    /// All gaps within `epsilon_checked + grid_slack`.
    pub holds_with_slack: bool,
}

/// Check every client's best grid deviation against epsilon.
pub fn verify_epsilon_nash(
    state: &SystemState,
    epsilon: f64,
    grid: &GridSpec,
) -> Result<NashCertificate> {
    let mut gaps = Vec::with_capacity(state.clients.len());
    for client in 0..state.clients.len() {
        let current = response_time(state, client)?;
        let (_, best) = brute_best_response(state, client, grid)?;
        gaps.push(1.0 - best / current);
    }
    let grid_slack = grid_step_sensitivity(state, grid) * 2.0;
    let holds = gaps.iter().all(|g| *g <= epsilon);
    let holds_with_slack = gaps.iter().all(|g| *g <= epsilon + grid_slack);
    Ok(NashCertificate {
        epsilon_checked: epsilon,
        grid_resolution: grid.resolution,
        per_client_gap: gaps,
        holds,
        grid_slack,
        holds_with_slack,
    })
}

/// Largest relative cost change any client sees from moving one grid step
/// of mass between two servers, estimated at the current state.
fn grid_step_sensitivity(state: &SystemState, grid: &GridSpec) -> f64 {
    let step = 1.0 / f64::from(grid.resolution);
    let n = state.servers.len();
    let mut max_rel: f64 = 0.0;
    for client in 0..state.clients.len() {
        let row = state.strategy.row(client);
        let Some(base) = response_time_with_row(state, client, row) else {
            continue;
        };
        if base <= 0.0 {
            continue;
        }
        for from in 0..n {
            if row[from] < step {
                continue;
            }
            for to in 0..n {
                if to == from {
                    continue;
                }
                let mut moved = row.to_vec();
                moved[from] -= step;
                moved[to] = (moved[to] + step).min(1.0);
                if let Some(cost) = response_time_with_row(state, client, &moved) {
                    max_rel = max_rel.max((cost - base).abs() / base);
                }
            }
        }
    }
    max_rel
}

/// Relative cost gap of the proportional row against the grid optimum in
/// the same residual environment: `(c_row - c_best) / c_best`.
pub fn best_response_gap(
    state: &SystemState,
    client: usize,
    grid: &GridSpec,
    cfg: &GameConfig,
) -> Result<f64> {
    let residual = residual_rates(state, client);
    let row = optimal(&residual, state.clients[client].phi, cfg)?;
    let c_row = response_time_with_row(state, client, row.fractions()).ok_or_else(|| {
        Error::Validation(format!("proportional row for client {client} is unstable"))
    })?;
    let (_, c_best) = brute_best_response(state, client, grid)?;
    Ok((c_row - c_best) / c_best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{ClientSpec, ServerSpec, StrategyMatrix};
    use crate::rng::Xoshiro256StarStar;

    fn state(mus: &[f64], phis: &[f64], rows: Vec<Vec<f64>>) -> SystemState {
        let servers = mus
            .iter()
            .enumerate()
            .map(|(i, &mu)| ServerSpec::new(i, mu, 0.95 * mu).unwrap())
            .collect();
        let clients = phis
            .iter()
            .enumerate()
            .map(|(j, &phi)| ClientSpec::new(j, phi).unwrap())
            .collect();
        SystemState::new(servers, clients, StrategyMatrix::new(rows).unwrap(), 1e-9).unwrap()
    }

    #[test]
    fn simplex_two_parts_resolution_two() {
        let rows: Vec<Vec<f64>> = enumerate_simplex(2, &GridSpec::new(2)).unwrap().collect();
        assert_eq!(rows, vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]);
    }

    #[test]
    fn simplex_single_part() {
        let rows: Vec<Vec<f64>> = enumerate_simplex(1, &GridSpec::new(17)).unwrap().collect();
        assert_eq!(rows, vec![vec![1.0]]);
    }

    #[test]
    fn simplex_three_parts_count() {
        let rows: Vec<Vec<f64>> = enumerate_simplex(3, &GridSpec::new(2)).unwrap().collect();
        assert_eq!(rows.len(), 6);
        // lexicographic and exactly stochastic at the composition level
        for w in rows.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn simplex_count_formula() {
        for (n, g, expected) in [(2usize, 2u32, 3u64), (3, 2, 6), (3, 4, 15), (4, 3, 20)] {
            assert_eq!(GridSpec::new(g).point_count(n).unwrap(), expected);
            let rows = enumerate_simplex(n, &GridSpec::new(g)).unwrap().count() as u64;
            assert_eq!(rows, expected);
        }
    }

    #[test]
    fn simplex_resource_limit() {
        let err = GridSpec::new(1000).point_count(10).unwrap_err();
        assert!(matches!(err, Error::ResourceLimit { .. }));
        assert!(enumerate_simplex(10, &GridSpec::new(1000)).is_err());
    }

    #[test]
    fn brute_best_even_split() {
        let st = state(&[10.0, 10.0], &[4.0], vec![vec![1.0, 0.0]]);
        let (row, cost) = brute_best_response(&st, 0, &GridSpec::new(2)).unwrap();
        assert_eq!(row, vec![0.5, 0.5]);
        assert!((cost - 0.125).abs() < 1e-15);
    }

    #[test]
    fn brute_best_single_server() {
        let st = state(&[10.0], &[2.0], vec![vec![1.0]]);
        let (row, cost) = brute_best_response(&st, 0, &GridSpec::new(5)).unwrap();
        assert_eq!(row, vec![1.0]);
        assert!((cost - 0.125).abs() < 1e-15);
    }

    #[test]
    fn brute_best_no_feasible_point() {
        // demand exceeds every server alone; with G=1 only corners exist
        let st = state(&[10.0, 10.0], &[8.0], vec![vec![0.5, 0.5]]);
        let mut overload = st.clone();
        overload.clients[0].phi = 11.0;
        let err = brute_best_response(&overload, 0, &GridSpec::new(1)).unwrap_err();
        assert!(matches!(err, Error::NoFeasiblePoint { client: 0 }));
    }

    #[test]
    fn verify_holds_at_grid_optimum() {
        let st = state(&[10.0, 10.0], &[4.0], vec![vec![0.5, 0.5]]);
        let cert = verify_epsilon_nash(&st, 0.0, &GridSpec::new(2)).unwrap();
        assert!(cert.holds);
        assert!(cert.holds_with_slack);
        assert!(cert.per_client_gap.iter().all(|g| g.abs() <= 1e-15));
    }

    #[test]
    fn verify_flags_perturbed_state() {
        // client 0 parked on the crowded server while an even split is better
        let st = state(
            &[10.0, 10.0],
            &[3.0, 3.0],
            vec![vec![0.0, 1.0], vec![0.5, 0.5]],
        );
        let cert = verify_epsilon_nash(&st, 6.1e-5, &GridSpec::new(100)).unwrap();
        assert!(!cert.holds);
        assert!(cert.per_client_gap[0] > 0.1);
    }

    #[test]
    fn certificate_soundness_in_epsilon() {
        // at the equilibrium both levels hold; at a perturbed state the
        // tight level fails while a level above the true gap holds
        let eq = state(
            &[10.0, 10.0],
            &[3.0, 3.0],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        );
        let tight = verify_epsilon_nash(&eq, 6.1e-5, &GridSpec::new(50)).unwrap();
        let loose = verify_epsilon_nash(&eq, 1e-2, &GridSpec::new(50)).unwrap();
        assert!(tight.holds && loose.holds);

        let perturbed = state(
            &[10.0, 10.0],
            &[3.0, 3.0],
            vec![vec![0.0, 1.0], vec![0.5, 0.5]],
        );
        let tight = verify_epsilon_nash(&perturbed, 0.1, &GridSpec::new(50)).unwrap();
        let loose = verify_epsilon_nash(&perturbed, 0.3, &GridSpec::new(50)).unwrap();
        assert!(!tight.holds);
        assert!(loose.holds);
    }

    #[test]
    fn gap_zero_on_single_server() {
        let st = state(&[10.0], &[2.0], vec![vec![1.0]]);
        let gap = best_response_gap(&st, 0, &GridSpec::new(100), &GameConfig::default()).unwrap();
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn gap_zero_when_proportional_row_is_grid_optimal() {
        // a light client before a fast/slow pair: all-on-fastest is both the
        // proportional answer and the exhaustive optimum
        let st = state(&[6.0, 4.0], &[1.0], vec![vec![1.0, 0.0]]);
        let gap = best_response_gap(&st, 0, &GridSpec::new(100), &GameConfig::default()).unwrap();
        assert!(gap.abs() <= 1e-12, "gap {gap}");
    }

    #[test]
    fn gap_positive_when_splitting_beats_proportional() {
        // heavier demand: the exhaustive optimum splits, the proportional
        // heuristic still sends everything to the fast server
        let st = state(&[6.0, 4.0], &[3.0], vec![vec![0.5, 0.5]]);
        let gap = best_response_gap(&st, 0, &GridSpec::new(100), &GameConfig::default()).unwrap();
        assert!((gap - 0.2072588347659979).abs() < 1e-12, "gap {gap}");
    }

    #[test]
    fn proportional_row_never_beats_grid_by_more_than_slack() {
        // the heuristic row may fall between grid points, so it can edge
        // out the grid optimum only by a discretization-sized margin
        let mut rng = Xoshiro256StarStar::new(31337);
        for _ in 0..30 {
            let mus = [rng.uniform(6.0, 45.0), rng.uniform(6.0, 45.0)];
            // keep the even initial split stable on the slower server
            let phi = rng.uniform(0.5, 1.5 * mus[0].min(mus[1]));
            let st = state(&mus, &[phi], vec![vec![0.5, 0.5]]);
            let gap =
                best_response_gap(&st, 0, &GridSpec::new(100), &GameConfig::default()).unwrap();
            assert!(gap >= -0.05, "heuristic beat the grid by {gap}");
            assert!(gap.is_finite());
        }
    }

    #[test]
    fn grid_refinement_never_hurts() {
        let mut rng = Xoshiro256StarStar::new(2024);
        for _ in 0..20 {
            let mus = [rng.uniform(8.0, 40.0), rng.uniform(8.0, 40.0)];
            let phi = rng.uniform(0.5, 6.0);
            let st = state(&mus, &[phi], vec![vec![0.5, 0.5]]);
            for g in [3u32, 5, 10] {
                let (_, coarse) = brute_best_response(&st, 0, &GridSpec::new(g)).unwrap();
                let (_, fine) = brute_best_response(&st, 0, &GridSpec::new(2 * g)).unwrap();
                assert!(fine <= coarse + 1e-15, "G={g}: {fine} > {coarse}");
            }
        }
    }

    #[test]
    fn grid_optimum_tracks_continuous_optimum() {
        // one client, two servers: ternary search on the split fraction is
        // an independent route to the continuous best response
        let mut rng = Xoshiro256StarStar::new(77);
        for _ in 0..10 {
            let mus = [rng.uniform(10.0, 40.0), rng.uniform(10.0, 40.0)];
            let phi = rng.uniform(1.0, 8.0);
            let st = state(&mus, &[phi], vec![vec![0.5, 0.5]]);
            let cost_at = |x: f64| {
                let mut c = 0.0;
                if x > 0.0 {
                    c += x / (mus[0] - x * phi);
                }
                if x < 1.0 {
                    c += (1.0 - x) / (mus[1] - (1.0 - x) * phi);
                }
                c
            };
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            while hi - lo > 1e-10 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if cost_at(m1) < cost_at(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let x_star = 0.5 * (lo + hi);
            let (row, _) = brute_best_response(&st, 0, &GridSpec::new(1000)).unwrap();
            assert!(
                (row[0] - x_star).abs() <= 2.0 / 1000.0,
                "grid {} vs continuous {}",
                row[0],
                x_star
            );
        }
    }

    #[test]
    fn oracle_agrees_with_game_cost() {
        let mut rng = Xoshiro256StarStar::new(555);
        for _ in 0..40 {
            let n = 1 + (rng.next_u64() % 4) as usize;
            let m = 1 + (rng.next_u64() % 4) as usize;
            let mus: Vec<f64> = (0..n).map(|_| rng.uniform(15.0, 50.0)).collect();
            let phis: Vec<f64> = (0..m).map(|_| rng.uniform(0.1, 2.0)).collect();
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|_| {
                    let raw: Vec<f64> = (0..n).map(|_| rng.uniform(0.01, 1.0)).collect();
                    let sum: f64 = raw.iter().sum();
                    raw.into_iter().map(|x| x / sum).collect()
                })
                .collect();
            let st = state(&mus, &phis, rows);
            for j in 0..m {
                let direct = response_time(&st, j).unwrap();
                let via_game = st.client_cost(j).unwrap();
                assert!(
                    (direct - via_game).abs() <= 1e-12 * via_game.abs().max(1.0),
                    "oracle {direct} vs game {via_game}"
                );
            }
        }
    }
}
