//! One seeded experiment: the decide → feedback → audit → observe loop,
//! with every diagnostic recorded per round.
//!
//! Randomness is split into three independent substreams of one seeded
//! generator family: observation noise, the policy's own draws, and the
//! per-round unit perturbation ζ_t. The noise and perturbation streams
//! advance by a fixed number of draws per round, so two policies run at the
//! same seed on the same instance face identical noise (common random
//! numbers), which sharpens paired comparisons.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::environment::{sample_unit_sphere, ConstraintKind, Instance};
use crate::error::{Error, Result};
use crate::linalg::Channel;
use crate::policies::{PolicyState, PolicyVariant, RoundContext, Tag};

/// Substream ids; the policy's own stream (2) is set inside `PolicyState`.
const NOISE_STREAM: u64 = 1;
const ZETA_STREAM: u64 = 3;

/// Everything observed about one round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    /// 1-based round index.
    pub t: usize,
    pub action: Vec<f64>,
    /// Noisy observed reward.
    pub y: f64,
    /// True expected reward of the played action.
    pub expected_reward: f64,
    pub tag: Tag,
    pub beta: f64,
    pub lambda_min: f64,
    /// Gate threshold in force this round.
    pub gate: f64,
    pub safe_set_size: usize,
    pub violation: bool,
    /// Distance inside the true constraint (negative = outside).
    pub margin: f64,
    /// Cumulative pseudo-regret through this round.
    pub cum_regret: f64,
    /// Conservative rounds played so far, this one included.
    pub n_conservative: usize,
}

/// Terminal aggregates of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub final_regret: f64,
    pub n_optimistic: usize,
    pub n_conservative: usize,
    pub any_violation: bool,
    /// Whether the true parameter ever left its confidence set (either
    /// channel) at any round of this run.
    pub ellipsoid_ever_violated: bool,
}

/// Full record of one seeded run.
#[derive(Clone, Debug)]
pub struct RunLog {
    pub run_id: u64,
    pub policy: PolicyVariant,
    pub records: Vec<RoundRecord>,
    pub summary: RunSummary,
}

impl RunLog {
    pub fn horizon(&self) -> usize {
        self.records.len()
    }
}

/// Run one policy for `horizon` rounds at the given seed.
pub fn run_experiment(
    instance: &Instance,
    variant: PolicyVariant,
    horizon: usize,
    seed: u64,
) -> Result<RunLog> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    let cfg = instance.policy_config(variant)?;
    let mut policy = PolicyState::new(variant, cfg, horizon, seed)?;
    let mut noise_rng = ChaCha12Rng::seed_from_u64(seed);
    noise_rng.set_stream(NOISE_STREAM);
    let mut zeta_rng = ChaCha12Rng::seed_from_u64(seed);
    zeta_rng.set_stream(ZETA_STREAM);

    let kind = ConstraintKind::for_policy(variant);
    let def = instance.regret_definition(variant);
    let optimal = instance.optimal_values(kind, def)?;
    let needs_reward_floor = matches!(
        variant,
        PolicyVariant::Sclts | PolicyVariant::Sclucb
    );
    let needs_constraint_floor = variant == PolicyVariant::ScltsBf;
    let track_mu = instance.model.mu_star.is_some();

    let mut records = Vec::with_capacity(horizon);
    let mut cum_regret = 0.0;
    let mut n_conservative = 0usize;
    let mut any_violation = false;
    let mut ellipsoid_ever_violated = false;

    for t in 1..=horizon {
        let x_b = instance.baseline.action_at(t);
        let zeta = sample_unit_sphere(&mut zeta_rng, instance.cfg.d);
        let ctx = RoundContext {
            baseline_action: x_b,
            baseline_reward: needs_reward_floor.then(|| instance.r_b(t)),
            baseline_constraint: if needs_constraint_floor {
                Some(instance.q_b(t)?)
            } else {
                None
            },
            zeta: &zeta,
        };
        let decision = policy
            .decide(&instance.actions, &ctx)
            .map_err(|e| annotate_round(e, t))?;

        // Coverage audit of the confidence set(s) the decision just used.
        if !ellipsoid_ever_violated {
            let covered = policy
                .ellipsoid(Channel::Reward)?
                .contains(&instance.model.theta_star)?;
            let mu_covered = if track_mu && policy.gram().tracks_constraint() {
                policy
                    .ellipsoid(Channel::Constraint)?
                    .contains(instance.model.mu_star.as_ref().expect("mu tracked"))?
            } else {
                true
            };
            ellipsoid_ever_violated = !(covered && mu_covered);
        }

        let (y, w) = instance.model.emit_feedback(&decision.action, &mut noise_rng);
        let (violated, margin) = instance
            .audit(kind, &decision.action, t)
            .map_err(|e| annotate_round(e, t))?;
        any_violation |= violated;
        if decision.tag == Tag::Conservative {
            n_conservative += 1;
        }
        let expected_reward = instance.model.expected_reward(&decision.action);
        cum_regret += optimal[instance.baseline.index_at(t)] - expected_reward;

        records.push(RoundRecord {
            t,
            action: decision.action.clone(),
            y,
            expected_reward,
            tag: decision.tag,
            beta: decision.diagnostics.beta,
            lambda_min: decision.diagnostics.lambda_min,
            gate: decision.diagnostics.gate,
            safe_set_size: decision.diagnostics.safe_set_size,
            violation: violated,
            margin,
            cum_regret,
            n_conservative,
        });

        policy
            .observe(&decision.action, y, w)
            .map_err(|e| annotate_round(e, t))?;
    }

    Ok(RunLog {
        run_id: seed,
        policy: variant,
        summary: RunSummary {
            final_regret: cum_regret,
            n_optimistic: horizon - n_conservative,
            n_conservative,
            any_violation,
            ellipsoid_ever_violated,
        },
        records,
    })
}

/// Fan a policy out over many seeds. Runs execute and are returned in seed
/// order, so downstream aggregation is deterministic.
pub fn run_many(
    instance: &Instance,
    variant: PolicyVariant,
    horizon: usize,
    seeds: &[u64],
) -> Result<Vec<RunLog>> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    seeds
        .iter()
        .map(|&seed| run_experiment(instance, variant, horizon, seed))
        .collect()
}

/// Consecutive seeds base..base+n.
pub fn seed_range(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base + i).collect()
}

fn annotate_round(e: Error, t: usize) -> Error {
    match e {
        Error::Degenerate(m) => Error::Degenerate(format!("round {t}: {m}")),
        Error::Contract(m) => Error::Contract(format!("round {t}: {m}")),
        Error::SafetyContract(m) => Error::SafetyContract(format!("round {t}: {m}")),
        other => other,
    }
}
