//! Core types and closed-form quantities of the load balancing game:
//! arrival rates, M/M/1 delay, client response time, system potential,
//! load ratio, the bounded-jump factor, and the epsilon-move test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on strategy row sums.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Default relative margin kept below each server's maximum rate so that
/// float round-off cannot produce a nominally stable state with unbounded
/// delay.
pub const DEFAULT_STABILITY_SLACK: f64 = 1e-9;

/// A processing node: maximum service rate and the arrival rate it is
/// expected to tolerate in practice, both in jobs per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerSpec {
    pub id: usize,
    pub mu_max: f64,
    pub lambda_max: f64,
}

impl ServerSpec {
    pub fn new(id: usize, mu_max: f64, lambda_max: f64) -> Result<Self> {
        let spec = Self { id, mu_max, lambda_max };
        spec.check()?;
        Ok(spec)
    }

    pub(crate) fn check(&self) -> Result<()> {
        if !(self.mu_max.is_finite() && self.mu_max > 0.0) {
            return Err(Error::Validation(format!(
                "server {}: mu_max must be finite and > 0, got {}",
                self.id, self.mu_max
            )));
        }
        if !(self.lambda_max.is_finite() && self.lambda_max > 0.0 && self.lambda_max < self.mu_max)
        {
            return Err(Error::Validation(format!(
                "server {}: lambda_max must satisfy 0 < lambda_max < mu_max, got {}",
                self.id, self.lambda_max
            )));
        }
        Ok(())
    }

    /// Fraction of the maximum rate consumed by an arrival rate `beta`:
    /// `LR = (mu_max - mu_effective) / mu_max = beta / mu_max`.
    pub fn load_ratio(&self, beta: f64) -> f64 {
        debug_assert!(beta >= 0.0 && beta < self.mu_max);
        beta / self.mu_max
    }

    /// Worst-case jump factor of this server's delay when one more client
    /// joins: `1 + phi_max / (mu_max - lambda_max)`.
    pub fn alpha_bound(&self, phi_max: f64) -> f64 {
        1.0 + phi_max / (self.mu_max - self.lambda_max)
    }
}

/// A load generator emitting jobs at rate `phi` (jobs per second).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientSpec {
    pub id: usize,
    pub phi: f64,
}

impl ClientSpec {
    pub fn new(id: usize, phi: f64) -> Result<Self> {
        let spec = Self { id, phi };
        spec.check()?;
        Ok(spec)
    }

    pub(crate) fn check(&self) -> Result<()> {
        if !(self.phi.is_finite() && self.phi > 0.0) {
            return Err(Error::Validation(format!(
                "client {}: phi must be finite and > 0, got {}",
                self.id, self.phi
            )));
        }
        Ok(())
    }
}

/// Row-stochastic m-by-n matrix; entry `[j][i]` is the fraction of client
/// j's load sent to server i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct StrategyMatrix {
    rows: Vec<Vec<f64>>,
}

impl StrategyMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Validation(format!(
                    "strategy row {j} has {} entries, expected {n}",
                    row.len()
                )));
            }
            check_row(row).map_err(|e| Error::Validation(format!("strategy row {j}: {e}")))?;
        }
        Ok(Self { rows })
    }

    pub fn num_clients(&self) -> usize {
        self.rows.len()
    }

    pub fn num_servers(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn row(&self, client: usize) -> &[f64] {
        &self.rows[client]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn set_row(&mut self, client: usize, row: Vec<f64>) -> Result<()> {
        if row.len() != self.num_servers() {
            return Err(Error::Validation(format!(
                "replacement row has {} entries, expected {}",
                row.len(),
                self.num_servers()
            )));
        }
        check_row(&row).map_err(|e| Error::Validation(format!("strategy row {client}: {e}")))?;
        self.rows[client] = row;
        Ok(())
    }
}

impl TryFrom<Vec<Vec<f64>>> for StrategyMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<StrategyMatrix> for Vec<Vec<f64>> {
    fn from(m: StrategyMatrix) -> Self {
        m.rows
    }
}

/// A fraction vector must lie in `[0,1]^n` and sum to one.
pub(crate) fn check_row(row: &[f64]) -> std::result::Result<(), String> {
    let mut sum = 0.0;
    for (i, &s) in row.iter().enumerate() {
        if !(s.is_finite() && (0.0..=1.0).contains(&s)) {
            return Err(format!("entry {i} = {s} outside [0, 1]"));
        }
        sum += s;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(format!("sums to {sum}, expected 1 within {ROW_SUM_TOL}"));
    }
    Ok(())
}

/// Full game state: the static specs plus the current strategy matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemState {
    pub servers: Vec<ServerSpec>,
    pub clients: Vec<ClientSpec>,
    pub strategy: StrategyMatrix,
}

impl SystemState {
    pub fn new(
        servers: Vec<ServerSpec>,
        clients: Vec<ClientSpec>,
        strategy: StrategyMatrix,
        stability_slack: f64,
    ) -> Result<Self> {
        let state = Self { servers, clients, strategy };
        state.validate(stability_slack)?;
        Ok(state)
    }

    /// Check dimensions, spec ranges, row sums, and the stability margin
    /// `beta_i <= mu_i_max * (1 - slack)` at every server.
    pub fn validate(&self, stability_slack: f64) -> Result<()> {
        for s in &self.servers {
            s.check()?;
        }
        for c in &self.clients {
            c.check()?;
        }
        let dims_ok = self.strategy.num_clients() == self.clients.len()
            && (self.clients.is_empty() || self.strategy.num_servers() == self.servers.len());
        if !dims_ok {
            return Err(Error::Validation(format!(
                "strategy is {}x{}, expected {}x{}",
                self.strategy.num_clients(),
                self.strategy.num_servers(),
                self.clients.len(),
                self.servers.len()
            )));
        }
        for (j, row) in self.strategy.rows().iter().enumerate() {
            check_row(row).map_err(|e| Error::Validation(format!("strategy row {j}: {e}")))?;
        }
        for (i, server) in self.servers.iter().enumerate() {
            let beta = self.arrival_rate(i);
            let cap = server.mu_max * (1.0 - stability_slack);
            if beta > cap {
                return Err(Error::Validation(format!(
                    "stability violated at server {i}: arrival rate {beta} > {cap}"
                )));
            }
        }
        Ok(())
    }

    /// Total arrival rate at server i: `beta_i = sum_j S[j][i] * phi_j`.
    pub fn arrival_rate(&self, server: usize) -> f64 {
        self.clients
            .iter()
            .enumerate()
            .map(|(j, c)| self.strategy.row(j)[server] * c.phi)
            .sum()
    }

    pub fn arrival_rates(&self) -> Vec<f64> {
        (0..self.servers.len()).map(|i| self.arrival_rate(i)).collect()
    }

    /// Number of clients sending a nonzero fraction to server i.
    pub fn active_clients(&self, server: usize) -> usize {
        self.strategy.rows().iter().filter(|row| row[server] > 0.0).count()
    }

    /// Expected response time of client j:
    /// `R_j = sum_i S[j][i] / (mu_i - beta_i)`.
    ///
    /// Stability is global: an overloaded server fails the call even when
    /// this client sends nothing there.
    pub fn client_cost(&self, client: usize) -> Result<f64> {
        let betas = self.arrival_rates();
        let row = self.strategy.row(client);
        let mut cost = 0.0;
        for (i, server) in self.servers.iter().enumerate() {
            let delay = server_delay_at(i, server.mu_max, betas[i])?;
            if row[i] > 0.0 {
                cost += row[i] * delay;
            }
        }
        Ok(cost)
    }

    pub fn per_client_costs(&self) -> Result<Vec<f64>> {
        (0..self.clients.len()).map(|j| self.client_cost(j)).collect()
    }

    /// Weighted potential: the double sum `sum_j sum_i S[j][i] * delay_i`,
    /// which equals the total of all client response times.
    pub fn system_potential(&self) -> Result<f64> {
        let betas = self.arrival_rates();
        let mut total = 0.0;
        for (i, server) in self.servers.iter().enumerate() {
            let delay = server_delay_at(i, server.mu_max, betas[i])?;
            for row in self.strategy.rows() {
                if row[i] > 0.0 {
                    total += row[i] * delay;
                }
            }
        }
        Ok(total)
    }

    /// Classic congestion-game potential `sum_i sum_{t=1..f(i)} 1/(mu_i - t*phi)`,
    /// defined only when every row is a 0/1 indicator and all clients share
    /// one generation rate.
    pub fn rosenthal_potential_pure(&self) -> Result<f64> {
        let phi = match self.clients.first() {
            Some(c) => c.phi,
            None => return Ok(0.0),
        };
        if self.clients.iter().any(|c| c.phi != phi) {
            return Err(Error::NotPureUnitWeight(
                "clients have unequal generation rates".into(),
            ));
        }
        for (j, row) in self.strategy.rows().iter().enumerate() {
            if row.iter().any(|&s| s != 0.0 && s != 1.0) {
                return Err(Error::NotPureUnitWeight(format!(
                    "row {j} is not a 0/1 indicator"
                )));
            }
        }
        let mut total = 0.0;
        for (i, server) in self.servers.iter().enumerate() {
            let count = self.active_clients(i);
            for t in 1..=count {
                total += server_delay_at(i, server.mu_max, t as f64 * phi)?;
            }
        }
        Ok(total)
    }

    /// Per-server load ratios in server order.
    pub fn load_ratios(&self) -> Vec<f64> {
        self.servers
            .iter()
            .enumerate()
            .map(|(i, s)| s.load_ratio(self.arrival_rate(i)))
            .collect()
    }
}

/// M/M/1 expected response time `1/(mu - beta)`; errors when the queue is
/// unstable (`beta >= mu`).
pub fn server_delay(mu: f64, beta: f64) -> Result<f64> {
    server_delay_at(usize::MAX, mu, beta)
}

fn server_delay_at(server: usize, mu: f64, beta: f64) -> Result<f64> {
    if beta >= mu {
        return Err(Error::UnstableServer { server, mu, beta });
    }
    Ok(1.0 / (mu - beta))
}

/// How an improvement is measured against epsilon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsMode {
    /// Accept when `c_new < (1 - epsilon) * c_old`.
    Relative,
    /// Accept when `c_old - c_new > epsilon`.
    Absolute,
}

/// Which strategy matrix a run starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    /// Client j sends everything to server `j mod n`.
    OwnServer,
    /// Every row is `1/n` everywhere.
    Uniform,
}

/// Round cap for the dynamics: a fixed count, or the theoretical step bound
/// computed from the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxRounds {
    Bound,
    Fixed(u64),
}

impl Serialize for MaxRounds {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MaxRounds::Bound => ser.serialize_str("bound"),
            MaxRounds::Fixed(v) => ser.serialize_u64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for MaxRounds {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = MaxRounds;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a nonnegative integer or the string \"bound\"")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<MaxRounds, E> {
                Ok(MaxRounds::Fixed(v))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<MaxRounds, E> {
                if v == "bound" {
                    Ok(MaxRounds::Bound)
                } else {
                    Err(E::invalid_value(serde::de::Unexpected::Str(v), &self))
                }
            }
        }
        de.deserialize_any(V)
    }
}

/// Run parameters shared by the dynamics, the generators, and the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub epsilon: f64,
    pub eps_mode: EpsMode,
    /// System-wide maximum generation rate; must dominate every client.
    pub phi_max: f64,
    pub stability_slack: f64,
    pub initial_kind: InitialKind,
    pub seed: u64,
    pub max_rounds: MaxRounds,
    #[serde(rename = "grid_G")]
    pub grid_g: u32,
}

impl GameConfig {
    /// True when replacing cost `cost_old` with `cost_new` clears the
    /// epsilon threshold under the configured mode.
    pub fn is_epsilon_move(&self, cost_old: f64, cost_new: f64) -> bool {
        debug_assert!(cost_old >= 0.0 && cost_new >= 0.0);
        match self.eps_mode {
            EpsMode::Relative => cost_new < (1.0 - self.epsilon) * cost_old,
            EpsMode::Absolute => cost_old - cost_new > self.epsilon,
        }
    }
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            epsilon: 6.1e-5,
            eps_mode: EpsMode::Relative,
            phi_max: 0.0,
            stability_slack: DEFAULT_STABILITY_SLACK,
            initial_kind: InitialKind::OwnServer,
            seed: 0,
            max_rounds: MaxRounds::Fixed(100_000),
            grid_g: 100,
        }
    }
}
