//! Cross-run aggregation: per-round mean and standard deviation of the
//! cumulative regret and conservative-count trajectories, plus run-level
//! failure fractions.
//!
//! Moments are accumulated with Welford's updates so a long batch of runs
//! never needs to be resident twice; the reported std is the population
//! form (divide by n), which is what the plotted bands use.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::runner::RunLog;
use crate::policies::PolicyVariant;

/// Per-round and run-level aggregates over a batch of runs of one policy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub policy: PolicyVariant,
    pub horizon: usize,
    pub n_runs: usize,
    /// Mean cumulative regret per round, length = horizon.
    pub mean_regret: Vec<f64>,
    /// Population standard deviation of cumulative regret per round.
    pub std_regret: Vec<f64>,
    /// Mean cumulative conservative count per round.
    pub mean_ntc: Vec<f64>,
    /// Fraction of runs with at least one audited constraint violation.
    pub violation_run_fraction: f64,
    /// Fraction of runs where a confidence set ever missed the truth.
    pub ellipsoid_failure_fraction: f64,
}

impl Summary {
    pub fn final_mean_regret(&self) -> f64 {
        *self.mean_regret.last().expect("horizon >= 1")
    }

    pub fn final_mean_ntc(&self) -> f64 {
        *self.mean_ntc.last().expect("horizon >= 1")
    }
}

/// Collapse a batch of runs into per-round moments.
///
/// All runs must share one policy and one horizon; mixing either is an
/// aggregation error rather than a silent truncation.
pub fn aggregate(logs: &[RunLog]) -> Result<Summary> {
    let first = logs
        .first()
        .ok_or_else(|| Error::Aggregation("no runs to aggregate".into()))?;
    let horizon = first.horizon();
    let policy = first.policy;
    if horizon == 0 {
        return Err(Error::Aggregation("runs have zero rounds".into()));
    }
    for log in logs {
        if log.horizon() != horizon {
            return Err(Error::Aggregation(format!(
                "mixed horizons in one batch: {} vs {}",
                horizon,
                log.horizon()
            )));
        }
        if log.policy != policy {
            return Err(Error::Aggregation(format!(
                "mixed policies in one batch: {} vs {}",
                policy, log.policy
            )));
        }
    }

    let n = logs.len();
    let mut mean_regret = vec![0.0; horizon];
    let mut m2_regret = vec![0.0; horizon];
    let mut mean_ntc = vec![0.0; horizon];
    let mut violating_runs = 0usize;
    let mut failed_runs = 0usize;

    for (k, log) in logs.iter().enumerate() {
        let count = (k + 1) as f64;
        for (i, r) in log.records.iter().enumerate() {
            let d = r.cum_regret - mean_regret[i];
            mean_regret[i] += d / count;
            m2_regret[i] += d * (r.cum_regret - mean_regret[i]);
            mean_ntc[i] += (r.n_conservative as f64 - mean_ntc[i]) / count;
        }
        violating_runs += usize::from(log.summary.any_violation);
        failed_runs += usize::from(log.summary.ellipsoid_ever_violated);
    }

    let std_regret = m2_regret
        .iter()
        .map(|m2| (m2 / n as f64).max(0.0).sqrt())
        .collect();

    Ok(Summary {
        policy,
        horizon,
        n_runs: n,
        mean_regret,
        std_regret,
        mean_ntc,
        violation_run_fraction: violating_runs as f64 / n as f64,
        ellipsoid_failure_fraction: failed_runs as f64 / n as f64,
    })
}
