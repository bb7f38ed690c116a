//! The decision rules. All policies share one skeleton per round:
//!
//! 1. (sampling policies) draw the perturbation η_t first,
//! 2. form the regularized estimate and its confidence set E_t(δ′),
//! 3. carve the certified-safe subset out of the action set,
//! 4. check the information gate λ_min(V_t) ≥ k_t,
//! 5. if the safe set is nonempty and the gate is open, play the optimist:
//!    argmax of ⟨x, θ̃_t⟩ (sampling) or of the upper confidence value
//!    (deterministic); otherwise play the conservative blend
//!    (1 − ρ̄) x_{b_t} + ρ̄ ζ_t, or ρ̄ ζ_t for the capped variant.
//!
//! The sampled parameter is θ̃_t = θ̂_t + β_t V_t^{-1/2} η_t with η_t a
//! standard normal vector, so θ̃_t is optimistic with probability at least
//! p = Φ(−1) whenever the true parameter is covered.
//!
//! The gate threshold k_t scales like (2Lβ_t / gap)² for a variant-specific
//! gap; it postpones optimistic play until the Gram matrix carries enough
//! information in every direction. `gate_scale` in the configuration
//! multiplies k_t: 1 runs the published rule, 0 drops the gate and switches
//! on safe-set feasibility alone.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::action_space::{
    conservative_action, max_rho, scan, ActionSet, ConstraintVariant, Objective, SafeSetSpec,
};
use crate::config::ProblemConfig;
use crate::error::{Error, Result};
use crate::estimation::{build_ellipsoid, confidence_radius, rls_center, ConfidenceEllipsoid};
use crate::linalg::{inv_sqrt, min_eigenvalue, Channel, GramState};

/// RNG substream carrying the policy's own randomness (perturbation draws).
const POLICY_STREAM: u64 = 2;

/// The seven implemented decision rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyVariant {
    /// Sampling policy, stage-wise constraint against a revealed baseline reward.
    Sclts,
    /// Deterministic optimist, same constraint as `Sclts`.
    Sclucb,
    /// Sampling policy, constraint side learned from its own noisy feedback.
    ScltsBf,
    /// Sampling policy, baseline reward never revealed.
    Sclts2,
    /// Deterministic optimist, capped linear constraint xᵀBθ⋆ ≤ C.
    Sclucb2,
    /// Unconstrained sampling baseline.
    Lts,
    /// Unconstrained deterministic baseline.
    Lucb,
}

impl PolicyVariant {
    pub const ALL: [PolicyVariant; 7] = [
        PolicyVariant::Sclts,
        PolicyVariant::Sclucb,
        PolicyVariant::ScltsBf,
        PolicyVariant::Sclts2,
        PolicyVariant::Sclucb2,
        PolicyVariant::Lts,
        PolicyVariant::Lucb,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "sclts" => Ok(PolicyVariant::Sclts),
            "sclucb" => Ok(PolicyVariant::Sclucb),
            "sclts-bf" => Ok(PolicyVariant::ScltsBf),
            "sclts2" => Ok(PolicyVariant::Sclts2),
            "sclucb2" => Ok(PolicyVariant::Sclucb2),
            "lts" => Ok(PolicyVariant::Lts),
            "lucb" => Ok(PolicyVariant::Lucb),
            other => Err(Error::Config(format!(
                "unknown policy `{other}`; expected one of sclts, sclucb, sclts-bf, sclts2, sclucb2, lts, lucb"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyVariant::Sclts => "sclts",
            PolicyVariant::Sclucb => "sclucb",
            PolicyVariant::ScltsBf => "sclts-bf",
            PolicyVariant::Sclts2 => "sclts2",
            PolicyVariant::Sclucb2 => "sclucb2",
            PolicyVariant::Lts => "lts",
            PolicyVariant::Lucb => "lucb",
        }
    }

    /// Whether the optimist is driven by a sampled parameter.
    pub fn is_sampling(&self) -> bool {
        matches!(
            self,
            PolicyVariant::Sclts | PolicyVariant::ScltsBf | PolicyVariant::Sclts2 | PolicyVariant::Lts
        )
    }

    /// The safety rule this policy enforces, if any.
    pub fn constraint_variant(&self) -> Option<ConstraintVariant> {
        match self {
            PolicyVariant::Sclts | PolicyVariant::Sclucb => Some(ConstraintVariant::KnownReward),
            PolicyVariant::ScltsBf => Some(ConstraintVariant::BanditFeedback),
            PolicyVariant::Sclts2 => Some(ConstraintVariant::UnknownBaseline),
            PolicyVariant::Sclucb2 => Some(ConstraintVariant::UpperBound),
            PolicyVariant::Lts | PolicyVariant::Lucb => None,
        }
    }

    pub fn is_constrained(&self) -> bool {
        self.constraint_variant().is_some()
    }
}

impl std::fmt::Display for PolicyVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-round inputs the environment reveals before the decision.
#[derive(Clone, Copy, Debug)]
pub struct RoundContext<'a> {
    pub baseline_action: &'a [f64],
    /// Revealed baseline reward r_{b_t}; required by the known-reward rule.
    pub baseline_reward: Option<f64>,
    /// Revealed baseline constraint value q_{b_t}; required by the
    /// constraint-feedback rule.
    pub baseline_constraint: Option<f64>,
    /// Unit perturbation direction for the conservative blend.
    pub zeta: &'a [f64],
}

/// How the played action was chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tag {
    SafeOptimistic,
    Conservative,
}

impl Tag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tag::SafeOptimistic => "safe-optimistic",
            Tag::Conservative => "conservative",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "safe-optimistic" => Ok(Tag::SafeOptimistic),
            "conservative" => Ok(Tag::Conservative),
            other => Err(Error::Parse {
                path: "<tag>".into(),
                message: format!("unknown action tag `{other}`"),
            }),
        }
    }
}

/// Observable internals of one decision, logged per round.
#[derive(Clone, Debug)]
pub struct Diagnostics {
    /// Confidence radius β_t used this round.
    pub beta: f64,
    /// Smallest eigenvalue of the Gram matrix before the round's update.
    pub lambda_min: f64,
    /// Gate threshold in force (0 when the gate is disabled or absent).
    pub gate: f64,
    /// Certified-safe action count (full set size for unconstrained rules).
    pub safe_set_size: usize,
    /// Sampled parameter, for sampling policies.
    pub theta_tilde: Option<Vec<f64>>,
}

/// One round's outcome: the action to play plus how it was chosen.
#[derive(Clone, Debug)]
pub struct Decision {
    pub action: Vec<f64>,
    pub tag: Tag,
    pub diagnostics: Diagnostics,
}

/// Mutable per-run policy state: the shared Gram state plus the policy's
/// own randomness and cached constants.
#[derive(Clone, Debug)]
pub struct PolicyState {
    variant: PolicyVariant,
    cfg: ProblemConfig,
    gram: GramState,
    rng: ChaCha12Rng,
    delta_prime: f64,
    /// Certified mixing budget ρ̄ (constrained variants only).
    rho_bar: Option<f64>,
    /// Spectral norm of B, cached for the capped variant's gate.
    b_norm: Option<f64>,
}

impl PolicyState {
    pub fn new(variant: PolicyVariant, cfg: ProblemConfig, horizon: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let delta_prime = cfg.per_round_risk(horizon)?;
        let track_constraint = variant == PolicyVariant::ScltsBf;
        let gram = GramState::new(cfg.d, cfg.regularizer, track_constraint)?;
        let rho_bar = match variant.constraint_variant() {
            Some(cv) => Some(max_rho(cv, &cfg)?),
            None => None,
        };
        let b_norm = match variant {
            PolicyVariant::Sclucb2 => {
                let b = cfg.matrix_b.as_ref().ok_or(Error::SpecMismatch(
                    "capped-constraint policy needs the matrix B in its configuration",
                ))?;
                if b.dim() != cfg.d {
                    return Err(Error::Config(format!(
                        "constraint matrix is {}x{} but the problem dimension is {}",
                        b.dim(),
                        b.dim(),
                        cfg.d
                    )));
                }
                Some(b.spectral_norm()?)
            }
            _ => None,
        };
        // Fail fast on gate inputs the variant will need every round.
        if cfg.gate_scale > 0.0 {
            match variant {
                PolicyVariant::Sclts | PolicyVariant::Sclucb | PolicyVariant::Sclts2 => {
                    let kappa_l = cfg.bounds.require("kappa_l")?;
                    let r_l = cfg.bounds.require("r_l")?;
                    if kappa_l + cfg.alpha * r_l <= 0.0 {
                        return Err(Error::Config(
                            "gate gap kappa_l + alpha * r_l must be positive".into(),
                        ));
                    }
                }
                PolicyVariant::ScltsBf => {
                    let nu_l = cfg.bounds.require("nu_l")?;
                    let q_l = cfg.bounds.require("q_l")?;
                    if nu_l + cfg.alpha * q_l <= 0.0 {
                        return Err(Error::Config(
                            "gate gap nu_l + alpha * q_l must be positive".into(),
                        ));
                    }
                }
                PolicyVariant::Sclucb2 => {
                    let gap = cfg.delta_gap.ok_or(Error::SpecMismatch(
                        "capped-constraint gate needs the safety gap delta_gap",
                    ))?;
                    if gap <= 0.0 {
                        return Err(Error::UnsupportedRegime(format!(
                            "safety gap {gap} is nonpositive; the capped variant needs strict slack at the safe optimum"
                        )));
                    }
                }
                PolicyVariant::Lts | PolicyVariant::Lucb => {}
            }
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(POLICY_STREAM);
        Ok(PolicyState { variant, cfg, gram, rng, delta_prime, rho_bar, b_norm })
    }

    pub fn variant(&self) -> PolicyVariant {
        self.variant
    }

    pub fn config(&self) -> &ProblemConfig {
        &self.cfg
    }

    pub fn gram(&self) -> &GramState {
        &self.gram
    }

    pub fn delta_prime(&self) -> f64 {
        self.delta_prime
    }

    pub fn rho_bar(&self) -> Option<f64> {
        self.rho_bar
    }

    /// The confidence set the policy is currently working with, for
    /// out-of-band coverage checks.
    pub fn ellipsoid(&self, channel: Channel) -> Result<ConfidenceEllipsoid<'_>> {
        build_ellipsoid(&self.gram, channel, &self.cfg, self.delta_prime)
    }

    /// Choose this round's action.
    pub fn decide(&mut self, set: &ActionSet, ctx: &RoundContext<'_>) -> Result<Decision> {
        if set.dim() != self.cfg.d {
            return Err(Error::Contract(format!(
                "action set dimension {} vs problem dimension {}",
                set.dim(),
                self.cfg.d
            )));
        }
        // Perturbation is drawn before anything else so the stream of draws
        // depends only on the round index, never on the data path taken.
        let eta: Option<Vec<f64>> = self
            .variant
            .is_sampling()
            .then(|| standard_normal_vector(&mut self.rng, self.cfg.d));

        let beta = confidence_radius(self.gram.count(), &self.cfg, self.delta_prime)?;
        let theta_hat = rls_center(&self.gram, Channel::Reward)?;
        let theta_tilde: Option<Vec<f64>> = match &eta {
            Some(eta) => {
                let root = inv_sqrt(self.gram.v())?;
                let step = root.mat_vec(eta);
                Some(theta_hat.iter().zip(&step).map(|(c, s)| c + beta * s).collect())
            }
            None => None,
        };
        let reward_ell = ConfidenceEllipsoid {
            center: theta_hat,
            gram: &self.gram,
            radius: beta,
            risk: self.delta_prime,
        };
        let constraint_ell: Option<ConfidenceEllipsoid<'_>> =
            if self.variant == PolicyVariant::ScltsBf {
                Some(ConfidenceEllipsoid {
                    center: rls_center(&self.gram, Channel::Constraint)?,
                    gram: &self.gram,
                    radius: beta,
                    risk: self.delta_prime,
                })
            } else {
                None
            };

        let spec: Option<SafeSetSpec<'_>> = match self.variant.constraint_variant() {
            None => None,
            Some(variant) => {
                let (ellipsoid, baseline_value) = match variant {
                    ConstraintVariant::KnownReward => {
                        let r = ctx.baseline_reward.ok_or(Error::MissingFeedback(
                            "this policy needs the revealed baseline reward each round",
                        ))?;
                        (&reward_ell, Some(r))
                    }
                    ConstraintVariant::BanditFeedback => {
                        let q = ctx.baseline_constraint.ok_or(Error::MissingFeedback(
                            "this policy needs the revealed baseline constraint value each round",
                        ))?;
                        (constraint_ell.as_ref().expect("constraint ellipsoid built above"), Some(q))
                    }
                    ConstraintVariant::UnknownBaseline => (&reward_ell, None),
                    ConstraintVariant::UpperBound => (&reward_ell, None),
                };
                Some(SafeSetSpec {
                    variant,
                    ellipsoid,
                    baseline_action: ctx.baseline_action,
                    baseline_value,
                    alpha: self.cfg.alpha,
                    matrix_b: self.cfg.matrix_b.as_ref(),
                    cap_c: self.cfg.cap_c,
                })
            }
        };

        let objective = match &theta_tilde {
            Some(tt) => Objective::Linear(tt),
            None => Objective::Ucb(&reward_ell),
        };
        let scan_result = scan(set, spec.as_ref(), objective)?;

        let lambda_min = min_eigenvalue(self.gram.v())?;
        let gate = if self.variant.is_constrained() && self.cfg.gate_scale > 0.0 {
            self.cfg.gate_scale * gate_threshold(self.variant, beta, &self.cfg, self.b_norm)?
        } else {
            0.0
        };

        let optimistic = scan_result.best_index.filter(|_| lambda_min >= gate);
        let (action, tag) = match optimistic {
            Some(i) => (set.action(i).to_vec(), Tag::SafeOptimistic),
            None => {
                if !self.variant.is_constrained() {
                    // Unconstrained rules scan without a filter over a
                    // nonempty set, so a missing maximizer is a bug.
                    return Err(Error::Contract(
                        "unconstrained scan produced no maximizer".into(),
                    ));
                }
                let rho_bar = self.rho_bar.expect("constrained variants cache rho_bar");
                let blend = if self.variant == PolicyVariant::Sclucb2 {
                    // The capped variant retreats toward the origin, which
                    // is strictly inside the constraint since C > 0.
                    let origin = vec![0.0; self.cfg.d];
                    conservative_action(&origin, rho_bar, rho_bar, ctx.zeta)?
                } else {
                    conservative_action(ctx.baseline_action, rho_bar, rho_bar, ctx.zeta)?
                };
                (blend, Tag::Conservative)
            }
        };

        Ok(Decision {
            action,
            tag,
            diagnostics: Diagnostics {
                beta,
                lambda_min,
                gate,
                safe_set_size: scan_result.safe_count,
                theta_tilde,
            },
        })
    }

    /// Feed back the played action's outcome(s).
    pub fn observe(&mut self, x: &[f64], y: f64, w: Option<f64>) -> Result<()> {
        self.gram.update(x, y, w)
    }
}

/// Gate threshold k_t for the given radius:
///
/// - known reward / unknown baseline energy gap: (2Lβ / (κ_l + α r_l))²,
///   with an extra (2 − α) factor on the radius for the unknown-baseline rule
/// - constraint feedback: (2Lβ / (ν_l + α q_l))²
/// - capped constraint: (2Lβ‖B‖ / Δ)²
pub fn gate_threshold(
    variant: PolicyVariant,
    beta: f64,
    cfg: &ProblemConfig,
    b_norm: Option<f64>,
) -> Result<f64> {
    let l = cfg.action_bound;
    let k = match variant {
        PolicyVariant::Sclts | PolicyVariant::Sclucb => {
            let gap = cfg.bounds.require("kappa_l")? + cfg.alpha * cfg.bounds.require("r_l")?;
            (2.0 * l * beta / gap).powi(2)
        }
        PolicyVariant::ScltsBf => {
            let gap = cfg.bounds.require("nu_l")? + cfg.alpha * cfg.bounds.require("q_l")?;
            (2.0 * l * beta / gap).powi(2)
        }
        PolicyVariant::Sclts2 => {
            let gap = cfg.bounds.require("kappa_l")? + cfg.alpha * cfg.bounds.require("r_l")?;
            (2.0 * l * beta * (2.0 - cfg.alpha) / gap).powi(2)
        }
        PolicyVariant::Sclucb2 => {
            let gap = cfg.delta_gap.ok_or(Error::SpecMismatch(
                "capped-constraint gate needs the safety gap delta_gap",
            ))?;
            let b = b_norm.ok_or(Error::SpecMismatch(
                "capped-constraint gate needs the spectral norm of B",
            ))?;
            (2.0 * l * beta * b / gap).powi(2)
        }
        PolicyVariant::Lts | PolicyVariant::Lucb => {
            return Err(Error::Unsupported(
                "unconstrained policies have no information gate".into(),
            ))
        }
    };
    if !k.is_finite() {
        return Err(Error::Config(format!("gate threshold {k} is not finite")));
    }
    Ok(k)
}

/// Standard normal vector in d dimensions.
pub fn standard_normal_vector(rng: &mut ChaCha12Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}
