//! Scenario documents and seeded workload generation.
//!
//! A scenario is a JSON file with the server and client specs plus the run
//! configuration. Generators draw maximum rates uniformly, couple each
//! client's raw demand to one server so the own-server start stays
//! feasible, and rescale demands so the aggregate utilization hits the
//! workload kind's target.

use serde::{Deserialize, Serialize};

use crate::dynamics::initial_strategy;
use crate::error::{Error, Result};
use crate::game::{
    ClientSpec, EpsMode, GameConfig, InitialKind, MaxRounds, ServerSpec, SystemState,
};
use crate::oracle::GridSpec;
use crate::rng::Xoshiro256StarStar;

pub const SCENARIO_VERSION: u32 = 1;

/// Default range maximum service rates are drawn from, jobs per second.
pub const MU_RANGE: (f64, f64) = (5.0, 50.0);
/// Tolerated arrival cap as a fraction of the maximum rate.
pub const LAMBDA_FACTOR: f64 = 0.95;
/// Draw attempts before the generator gives up.
const MAX_ATTEMPTS: u32 = 100;
/// Grid-point budget behind the per-scenario default resolution.
const GRID_POINT_BUDGET: u64 = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub servers: Vec<ServerSpec>,
    pub clients: Vec<ClientSpec>,
    pub config: GameConfig,
}

impl Scenario {
    /// Check every document invariant, naming the violated constraint.
    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_VERSION {
            return Err(Error::Validation(format!(
                "unsupported version {}, expected {SCENARIO_VERSION}",
                self.version
            )));
        }
        if self.servers.is_empty() {
            return Err(Error::Validation("servers must be nonempty".into()));
        }
        if self.clients.is_empty() {
            return Err(Error::Validation("clients must be nonempty".into()));
        }
        for (i, s) in self.servers.iter().enumerate() {
            if s.id != i {
                return Err(Error::Validation(format!(
                    "server ids must be dense 0..n-1: position {i} has id {}",
                    s.id
                )));
            }
            s.check()?;
        }
        for (j, c) in self.clients.iter().enumerate() {
            if c.id != j {
                return Err(Error::Validation(format!(
                    "client ids must be dense 0..m-1: position {j} has id {}",
                    c.id
                )));
            }
            c.check()?;
        }
        let cfg = &self.config;
        if !(cfg.epsilon.is_finite() && (0.0..1.0).contains(&cfg.epsilon)) {
            return Err(Error::Validation(format!(
                "epsilon must lie in [0, 1), got {}",
                cfg.epsilon
            )));
        }
        if !(cfg.stability_slack.is_finite() && (0.0..1.0).contains(&cfg.stability_slack)) {
            return Err(Error::Validation(format!(
                "stability_slack must lie in [0, 1), got {}",
                cfg.stability_slack
            )));
        }
        if cfg.grid_g < 2 {
            return Err(Error::Validation(format!(
                "grid_G must be at least 2, got {}",
                cfg.grid_g
            )));
        }
        let phi_top = self.clients.iter().map(|c| c.phi).fold(0.0, f64::max);
        if !(cfg.phi_max.is_finite() && cfg.phi_max >= phi_top) {
            return Err(Error::Validation(format!(
                "phi_max {} must dominate every client rate (max is {phi_top})",
                cfg.phi_max
            )));
        }
        let total_phi: f64 = self.clients.iter().map(|c| c.phi).sum();
        let capacity: f64 =
            self.servers.iter().map(|s| s.mu_max).sum::<f64>() * (1.0 - cfg.stability_slack);
        if total_phi >= capacity {
            return Err(Error::Validation(format!(
                "global feasibility violated: total demand {total_phi} >= usable capacity {capacity}"
            )));
        }
        Ok(())
    }

    pub fn utilization(&self) -> f64 {
        let total_phi: f64 = self.clients.iter().map(|c| c.phi).sum();
        let total_mu: f64 = self.servers.iter().map(|s| s.mu_max).sum();
        total_phi / total_mu
    }

    /// Build the starting state from the configured initial kind.
    pub fn initial_state(&self) -> Result<SystemState> {
        let matrix = initial_strategy(
            &self.servers,
            &self.clients,
            self.config.initial_kind,
            self.config.stability_slack,
        )?;
        SystemState::new(
            self.servers.clone(),
            self.clients.clone(),
            matrix,
            self.config.stability_slack,
        )
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.config.grid_g)
    }
}

/// Load shapes from the simulation experiments: heavy aggregate demand,
/// light demand, or Gaussian-spread demand around a medium target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorkloadKind {
    High { utilization: f64 },
    Low { utilization: f64 },
    GaussianAverage { utilization: f64, sigma: f64 },
}

impl WorkloadKind {
    pub fn high() -> Self {
        WorkloadKind::High { utilization: 0.9 }
    }

    pub fn low() -> Self {
        WorkloadKind::Low { utilization: 0.2 }
    }

    pub fn gaussian_average() -> Self {
        WorkloadKind::GaussianAverage { utilization: 0.5, sigma: 0.25 }
    }

    pub fn target_utilization(&self) -> f64 {
        match *self {
            WorkloadKind::High { utilization }
            | WorkloadKind::Low { utilization }
            | WorkloadKind::GaussianAverage { utilization, .. } => utilization,
        }
    }

    fn check(&self) -> Result<()> {
        match *self {
            WorkloadKind::High { utilization } => {
                if !(0.8..0.95).contains(&utilization) {
                    return Err(Error::Validation(format!(
                        "high workload utilization must lie in [0.8, 0.95), got {utilization}"
                    )));
                }
            }
            WorkloadKind::Low { utilization } => {
                if !(utilization > 0.0 && utilization <= 0.3) {
                    return Err(Error::Validation(format!(
                        "low workload utilization must lie in (0, 0.3], got {utilization}"
                    )));
                }
            }
            WorkloadKind::GaussianAverage { utilization, sigma } => {
                if !(utilization > 0.0 && utilization < 1.0) {
                    return Err(Error::Validation(format!(
                        "gaussian workload utilization must lie in (0, 1), got {utilization}"
                    )));
                }
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(Error::Validation(format!(
                        "gaussian workload sigma must be nonnegative, got {sigma}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Largest resolution from a fixed ladder whose grid stays within the
/// point budget for `n` servers.
pub fn default_grid_resolution(n: usize) -> u32 {
    for g in [100u32, 40, 20, 12, 10, 8, 6, 5, 4, 3, 2] {
        if GridSpec::with_max_points(g, GRID_POINT_BUDGET).point_count(n).is_ok() {
            return g;
        }
    }
    2
}

/// Draw a scenario for the given workload kind. Same arguments, same bytes.
pub fn generate(kind: &WorkloadKind, m: usize, n: usize, seed: u64) -> Result<Scenario> {
    if m < 1 || n < 1 {
        return Err(Error::Validation(format!(
            "generate needs m >= 1 and n >= 1, got m={m}, n={n}"
        )));
    }
    kind.check()?;
    let mut rng = Xoshiro256StarStar::new(seed);
    let target = kind.target_utilization();

    // heavy workloads start own-server (an even spread cannot fit a heavy
    // aggregate on heterogeneous rates); the others start uniform
    let initial_kind = match kind {
        WorkloadKind::High { .. } => InitialKind::OwnServer,
        _ => InitialKind::Uniform,
    };

    let mut last_reason = String::new();
    for _ in 0..MAX_ATTEMPTS {
        let mus: Vec<f64> = (0..n).map(|_| rng.uniform(MU_RANGE.0, MU_RANGE.1)).collect();
        // clients per server under the own-server pairing
        let share: Vec<f64> = (0..n)
            .map(|i| (0..m).filter(|j| j % n == i).count().max(1) as f64)
            .collect();
        let raw: Vec<f64> = match *kind {
            // demand rides on the paired server's rate so the own-server
            // start scales with capacity; the heavy kind keeps the spread
            // tight enough to fit inside every server
            WorkloadKind::High { .. } => (0..m)
                .map(|j| rng.uniform(0.95, 1.05) * mus[j % n] / share[j % n])
                .collect(),
            WorkloadKind::Low { .. } => (0..m)
                .map(|j| rng.uniform(0.5, 1.5) * mus[j % n] / share[j % n])
                .collect(),
            WorkloadKind::GaussianAverage { sigma, .. } => (0..m)
                // spread demands around a common level; clamp keeps the
                // truncated draw positive
                .map(|_| (1.0 + sigma * rng.normal()).max(0.05))
                .collect(),
        };
        let total_mu: f64 = mus.iter().sum();
        let raw_sum: f64 = raw.iter().sum();
        let scale = target * total_mu / raw_sum;

        let servers: Vec<ServerSpec> = mus
            .iter()
            .enumerate()
            .map(|(i, &mu)| ServerSpec { id: i, mu_max: mu, lambda_max: LAMBDA_FACTOR * mu })
            .collect();
        let clients: Vec<ClientSpec> = raw
            .iter()
            .enumerate()
            .map(|(j, &r)| ClientSpec { id: j, phi: r * scale })
            .collect();
        let phi_max = clients.iter().map(|c| c.phi).fold(0.0, f64::max);
        let config = GameConfig {
            epsilon: 6.1e-5,
            eps_mode: EpsMode::Relative,
            phi_max,
            stability_slack: 1e-9,
            initial_kind,
            seed,
            max_rounds: MaxRounds::Fixed(100_000),
            grid_g: default_grid_resolution(n),
        };
        let scenario = Scenario { version: SCENARIO_VERSION, servers, clients, config };

        if let Err(e) = scenario.validate() {
            last_reason = e.to_string();
            continue;
        }
        if let Err(e) = initial_strategy(
            &scenario.servers,
            &scenario.clients,
            initial_kind,
            scenario.config.stability_slack,
        ) {
            last_reason = e.to_string();
            continue;
        }
        return Ok(scenario);
    }
    Err(Error::GenerationFailed { attempts: MAX_ATTEMPTS, reason: last_reason })
}

/// Parse a scenario document and validate every invariant.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let scenario: Scenario =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

/// Render a scenario as pretty JSON with a trailing newline.
pub fn serialize_scenario(scenario: &Scenario) -> String {
    let mut text = serde_json::to_string_pretty(scenario)
        .expect("scenario serialization cannot fail");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_parses() {
        let text = r#"{
            "version": 1,
            "servers": [{"id": 0, "mu_max": 10.0, "lambda_max": 9.5}],
            "clients": [{"id": 0, "phi": 2.0}],
            "config": {
                "epsilon": 6.1e-5,
                "eps_mode": "relative",
                "phi_max": 2.0,
                "stability_slack": 1e-9,
                "initial_kind": "own-server",
                "seed": 7,
                "max_rounds": 1000,
                "grid_G": 100
            }
        }"#;
        let scenario = parse_scenario(text).unwrap();
        assert_eq!(scenario.servers.len(), 1);
        assert_eq!(scenario.clients[0].phi, 2.0);
        assert_eq!(scenario.config.max_rounds, MaxRounds::Fixed(1000));
    }

    #[test]
    fn unknown_key_is_rejected_with_position() {
        let text = r#"{
            "version": 1,
            "servers": [{"id": 0, "mu_max": 10.0, "lambda_max": 9.5, "cores": 4}],
            "clients": [{"id": 0, "phi": 2.0}],
            "config": {
                "epsilon": 0.0001,
                "eps_mode": "relative",
                "phi_max": 2.0,
                "stability_slack": 1e-9,
                "initial_kind": "own-server",
                "seed": 7,
                "max_rounds": 1000,
                "grid_G": 100
            }
        }"#;
        let err = parse_scenario(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cores"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn malformed_document_is_a_parse_error() {
        assert!(matches!(parse_scenario("{"), Err(Error::Parse(_))));
    }

    #[test]
    fn overloaded_document_names_feasibility() {
        let text = r#"{
            "version": 1,
            "servers": [{"id": 0, "mu_max": 10.0, "lambda_max": 9.5}],
            "clients": [{"id": 0, "phi": 12.0}],
            "config": {
                "epsilon": 0.0001,
                "eps_mode": "relative",
                "phi_max": 12.0,
                "stability_slack": 1e-9,
                "initial_kind": "own-server",
                "seed": 7,
                "max_rounds": 1000,
                "grid_G": 100
            }
        }"#;
        let err = parse_scenario(text).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("global feasibility"), "{err}");
    }

    #[test]
    fn low_kind_hits_its_band() {
        let s = generate(&WorkloadKind::low(), 4, 4, 7).unwrap();
        let u = s.utilization();
        assert!(u > 0.0 && u <= 0.3, "utilization {u}");
        assert!((u - 0.2).abs() < 1e-12);
    }

    #[test]
    fn high_kind_hits_its_band() {
        let s = generate(&WorkloadKind::high(), 6, 6, 3).unwrap();
        let u = s.utilization();
        assert!((0.8..0.95).contains(&u), "utilization {u}");
    }

    #[test]
    fn same_seed_same_bytes() {
        for kind in [
            WorkloadKind::high(),
            WorkloadKind::low(),
            WorkloadKind::gaussian_average(),
        ] {
            let a = serialize_scenario(&generate(&kind, 5, 3, 11).unwrap());
            let b = serialize_scenario(&generate(&kind, 5, 3, 11).unwrap());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_sigma_means_equal_rates() {
        let kind = WorkloadKind::GaussianAverage { utilization: 0.5, sigma: 0.0 };
        let s = generate(&kind, 5, 3, 13).unwrap();
        let first = s.clients[0].phi;
        for c in &s.clients {
            assert!((c.phi - first).abs() < 1e-12);
        }
    }

    #[test]
    fn generated_scenarios_support_their_initial_kinds() {
        for seed in 0..20 {
            let m = 1 + (seed as usize % 6);
            let n = 1 + (seed as usize % 5);
            for kind in [WorkloadKind::low(), WorkloadKind::gaussian_average()] {
                let s = generate(&kind, m, n, seed).unwrap();
                s.validate().unwrap();
                s.initial_state().unwrap();
                // these kinds guarantee the uniform start in particular
                initial_strategy(
                    &s.servers,
                    &s.clients,
                    InitialKind::Uniform,
                    s.config.stability_slack,
                )
                .unwrap();
            }
            // the heavy kind needs at least one client per server
            let s = generate(&WorkloadKind::high(), m.max(n), n, seed).unwrap();
            s.validate().unwrap();
            s.initial_state().unwrap();
        }
    }

    #[test]
    fn round_trip_is_identity() {
        for seed in 0..24 {
            let m = 2 + (seed as usize % 5);
            let n = 2 + (seed as usize % 4);
            let (kind, m, n) = match seed % 3 {
                0 => (WorkloadKind::high(), m.max(n), n),
                1 => (WorkloadKind::low(), m, n),
                _ => (WorkloadKind::gaussian_average(), m, n),
            };
            let original = generate(&kind, m, n, seed).unwrap();
            let text = serialize_scenario(&original);
            let parsed = parse_scenario(&text).unwrap();
            assert_eq!(parsed, original);
            assert_eq!(serialize_scenario(&parsed), text);
        }
    }

    #[test]
    fn impossible_draw_fails_generation() {
        // fewer clients than servers cannot carry a heavy aggregate from
        // an own-server start
        let err = generate(&WorkloadKind::high(), 3, 6, 1).unwrap_err();
        assert!(matches!(err, Error::GenerationFailed { attempts: 100, .. }));
    }

    #[test]
    fn out_of_band_targets_are_rejected() {
        let err = generate(&WorkloadKind::High { utilization: 0.5 }, 4, 4, 1).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let err = generate(&WorkloadKind::Low { utilization: 0.6 }, 4, 4, 1).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let err =
            generate(&WorkloadKind::GaussianAverage { utilization: 0.5, sigma: -1.0 }, 4, 4, 1)
                .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn grid_ladder_respects_budget() {
        for n in 1..=10 {
            let g = default_grid_resolution(n);
            assert!(g >= 2);
            assert!(
                GridSpec::with_max_points(g, GRID_POINT_BUDGET).point_count(n).is_ok(),
                "n={n} g={g}"
            );
        }
        assert_eq!(default_grid_resolution(2), 100);
    }
}
