//! Regularized least squares and the confidence ellipsoids built on it.
//!
//! The point estimate after t observations is θ̂_t = V_t⁻¹ Σ_{s≤t} y_s x_s
//! with V_t = λI + Σ x_s x_sᵀ. With R-subgaussian noise, ‖θ⋆‖ ≤ S and
//! ‖x‖ ≤ L, the parameter lies with probability 1 − δ′ in
//!
//! ```text
//! E_t(δ′) = { v : ‖v − θ̂_t‖_{V_t} ≤ β_t(δ′) },
//! β_t(δ′) = R √( d · log( (1 + t L²/λ) / δ′ ) ) + √λ · S.
//! ```
//!
//! Policies that learn a second parameter from constraint-side feedback
//! build the same ellipsoid around the constraint-channel estimate; the
//! radius formula is shared.

use crate::config::ProblemConfig;
use crate::error::{Error, Result};
use crate::linalg::{weighted_norm, Channel, GramState};

/// Point estimate for one feedback channel: V_t⁻¹ b_t.
pub fn rls_center(gram: &GramState, channel: Channel) -> Result<Vec<f64>> {
    let b = match channel {
        Channel::Reward => gram.b_reward(),
        Channel::Constraint => gram.b_constraint().ok_or(Error::MissingFeedback(
            "constraint-channel estimate requested but the state tracks no constraint feedback",
        ))?,
    };
    Ok(gram.v_inv().mat_vec(b))
}

/// Ellipsoid radius β_t(δ′) after t observations.
pub fn confidence_radius(t: usize, cfg: &ProblemConfig, delta_prime: f64) -> Result<f64> {
    if !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(Error::Config(format!(
            "per-round risk {delta_prime} must lie in (0, 1)"
        )));
    }
    let l2 = cfg.action_bound * cfg.action_bound;
    let ratio = (1.0 + t as f64 * l2 / cfg.regularizer) / delta_prime;
    let log_term = (cfg.d as f64 * ratio.ln()).max(0.0);
    Ok(cfg.noise_scale * log_term.sqrt() + cfg.regularizer.sqrt() * cfg.param_bound)
}

/// A confidence set ‖v − center‖_{V} ≤ radius, tied to the Gram state that
/// defines its metric.
#[derive(Clone, Debug)]
pub struct ConfidenceEllipsoid<'a> {
    pub center: Vec<f64>,
    pub gram: &'a GramState,
    pub radius: f64,
    /// The per-round risk the radius was built at.
    pub risk: f64,
}

impl ConfidenceEllipsoid<'_> {
    /// Whether `v` lies inside. The boundary is inclusive with a 1e-12
    /// slack so actions constructed to sit exactly on it stay members.
    pub fn contains(&self, v: &[f64]) -> Result<bool> {
        if v.len() != self.center.len() {
            return Err(Error::Contract(format!(
                "ellipsoid membership: dimension {} vs center {}",
                v.len(),
                self.center.len()
            )));
        }
        let diff: Vec<f64> = v.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        Ok(weighted_norm(self.gram.v(), &diff)? <= self.radius + 1e-12)
    }
}

/// Assemble the channel's ellipsoid at the state's current observation count.
pub fn build_ellipsoid<'a>(
    gram: &'a GramState,
    channel: Channel,
    cfg: &ProblemConfig,
    delta_prime: f64,
) -> Result<ConfidenceEllipsoid<'a>> {
    let center = rls_center(gram, channel)?;
    let radius = confidence_radius(gram.count(), cfg, delta_prime)?;
    Ok(ConfidenceEllipsoid { center, gram, radius, risk: delta_prime })
}
