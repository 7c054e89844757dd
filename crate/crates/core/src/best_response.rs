//! Capacity-proportional strategy computation for one client.
//!
//! Given the residual rate each server offers the client (its maximum rate
//! minus everyone else's load), the client prunes servers that the rest of
//! the pool can cover without them, then splits its load over the survivors
//! in proportion to their residual rates. Pruning walks the rates in
//! decreasing order and keeps dropping the slowest server while the
//! remaining capacity minus the client's demand still covers that server's
//! own rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{check_row, GameConfig};

/// Effective capacity each server offers one client, in original server
/// order. A sorted view is derived on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRates {
    mu: Vec<f64>,
}

impl ResidualRates {
    pub fn new(mu: Vec<f64>) -> Self {
        debug_assert!(mu.iter().all(|&r| r > 0.0), "residual rates must be positive");
        Self { mu }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn rates(&self) -> &[f64] {
        &self.mu
    }

    pub fn total(&self) -> f64 {
        self.mu.iter().sum()
    }

    /// Original server indices ordered by decreasing residual rate, ties by
    /// ascending index (stable sort keeps the original order on ties).
    pub fn sorted_desc(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.mu.len()).collect();
        order.sort_by(|&a, &b| self.mu[b].partial_cmp(&self.mu[a]).unwrap());
        order
    }
}

/// One client's fraction vector over the servers, in original server order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StrategyRow {
    fractions: Vec<f64>,
}

impl StrategyRow {
    pub fn new(fractions: Vec<f64>) -> Result<Self> {
        check_row(&fractions).map_err(Error::Validation)?;
        Ok(Self { fractions })
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.fractions
    }
}

impl TryFrom<Vec<f64>> for StrategyRow {
    type Error = Error;

    fn try_from(fractions: Vec<f64>) -> Result<Self> {
        Self::new(fractions)
    }
}

impl From<StrategyRow> for Vec<f64> {
    fn from(row: StrategyRow) -> Self {
        row.fractions
    }
}

/// Number of servers (from the fastest down) the client should consider.
///
/// `sorted_mu` must be sorted in decreasing order. Starting from the full
/// set, the slowest server is dropped while `sum(mu[..k]) - phi_j >= mu[k-1]`.
/// The count never reaches zero: for `phi_j > 0` the single fastest server
/// always fails the drop test.
pub fn prune_servers(sorted_mu: &[f64], phi_j: f64) -> usize {
    debug_assert!(!sorted_mu.is_empty());
    debug_assert!(phi_j > 0.0);
    debug_assert!(sorted_mu.windows(2).all(|w| w[0] >= w[1]));
    let mut k = sorted_mu.len();
    let mut temp: f64 = sorted_mu.iter().sum::<f64>() - phi_j;
    while k > 1 && temp >= sorted_mu[k - 1] {
        k -= 1;
        temp = sorted_mu[..k].iter().sum::<f64>() - phi_j;
    }
    k
}

/// True when sending `frac` of the client's load to a server keeps that
/// server inside its stability margin: `frac * phi_j <= mu * (1 - slack)`.
pub fn can_assign(frac: f64, phi_j: f64, residual_mu: f64, stability_slack: f64) -> bool {
    debug_assert!((0.0..=1.0).contains(&frac));
    frac * phi_j <= residual_mu * (1.0 - stability_slack)
}

/// Compute the client's capacity-proportional row against residual rates.
///
/// Servers are sorted by decreasing residual rate, pruned, and the
/// survivors each receive `mu_i / sum`. If any survivor fails [`can_assign`]
/// it is removed and the proportional pass restarts over the smaller set, so
/// the returned fractions always sum to one. Fractions are reported in
/// original server order.
pub fn optimal(residual: &ResidualRates, phi_j: f64, cfg: &GameConfig) -> Result<StrategyRow> {
    let total = residual.total();
    if total <= phi_j {
        return Err(Error::InfeasibleLoad { demand: phi_j, capacity: total });
    }
    let order = residual.sorted_desc();
    let sorted: Vec<f64> = order.iter().map(|&i| residual.rates()[i]).collect();
    let k = prune_servers(&sorted, phi_j);
    let mut eligible: Vec<usize> = order[..k].to_vec();
    'pass: loop {
        if eligible.is_empty() {
            return Err(Error::InfeasibleLoad { demand: phi_j, capacity: total });
        }
        let sum: f64 = eligible.iter().map(|&i| residual.rates()[i]).sum();
        for (pos, &i) in eligible.iter().enumerate() {
            let frac = residual.rates()[i] / sum;
            if !can_assign(frac, phi_j, residual.rates()[i], cfg.stability_slack) {
                eligible.remove(pos);
                continue 'pass;
            }
        }
        let mut fractions = vec![0.0; residual.len()];
        for &i in &eligible {
            fractions[i] = residual.rates()[i] / sum;
        }
        return StrategyRow::new(fractions);
    }
}
