//! Problem configuration: the knobs a simulated instance exposes to the
//! policies (dimension, noise scale R, parameter bound S, action bound L,
//! ridge weight λ, risk budget δ, safety slack α), the interval bounds the
//! learner is assumed to know about baseline performance, and the constants
//! that enter the closed-form theoretical bounds.
//!
//! Per-round risk: the ellipsoid radius at round t is built at
//! δ′ = δ / (4T), so a union bound over both channels and all rounds keeps
//! total failure probability within δ. The only exception lives in the
//! bound calculator, which evaluates one published regret expression at
//! δ / (6T) as that expression requires.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Known interval bounds on baseline performance. Which fields must be
/// present depends on the policy variant; `require` enforces that.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BaselineBounds {
    /// Lower bound on every baseline reward r_{b_t}.
    pub r_l: Option<f64>,
    /// Upper bound on every baseline reward r_{b_t}.
    pub r_h: Option<f64>,
    /// Lower bound on the baseline optimality gap Δ_{b_t} = optimal − r_{b_t}.
    pub kappa_l: Option<f64>,
    /// Upper bound on that gap.
    pub kappa_h: Option<f64>,
    /// Lower bound on every baseline constraint value q_{b_t}.
    pub q_l: Option<f64>,
    /// Upper bound on every baseline constraint value q_{b_t}.
    pub q_h: Option<f64>,
    /// Lower bound on the constraint-side gap ν_{b_t}.
    pub nu_l: Option<f64>,
    /// Upper bound on that gap.
    pub nu_h: Option<f64>,
}

impl BaselineBounds {
    pub fn require(&self, field: &'static str) -> Result<f64> {
        let v = match field {
            "r_l" => self.r_l,
            "r_h" => self.r_h,
            "kappa_l" => self.kappa_l,
            "kappa_h" => self.kappa_h,
            "q_l" => self.q_l,
            "q_h" => self.q_h,
            "nu_l" => self.nu_l,
            "nu_h" => self.nu_h,
            other => return Err(Error::Config(format!("unknown bounds field `{other}`"))),
        };
        v.ok_or(Error::SpecMismatch(field))
    }
}

/// Constants entering the closed-form bounds: the Gaussian anti-concentration
/// probability p = Φ(−1) and the norm-concentration constants (c, c′, c0)
/// for the sampled perturbation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BoundConstants {
    pub p: f64,
    pub c: f64,
    pub c_prime: f64,
    pub c0: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        // Φ(−1), the chance a standard normal lands one deviation low.
        BoundConstants { p: 0.158_655_253_931_457_07, c: 2.0, c_prime: 4.0, c0: 1.0 }
    }
}

/// Which benchmark the regret is measured against.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum RegretDefinition {
    /// Best action in the full set, ignoring the safety constraint.
    Unconstrained,
    /// Best action among those truly safe under the ground-truth parameter.
    TrueSafe,
}

/// Everything a policy needs to know about the problem it faces. Ground
/// truth (θ⋆ and friends) lives elsewhere; this is the learner-visible side.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemConfig {
    /// Ambient dimension d.
    pub d: usize,
    /// Subgaussian noise scale R.
    pub noise_scale: f64,
    /// Parameter norm bound S (‖θ⋆‖ ≤ S).
    pub param_bound: f64,
    /// Action norm bound L (‖x‖ ≤ L for all actions).
    pub action_bound: f64,
    /// Ridge regularizer λ.
    pub regularizer: f64,
    /// Total risk budget δ.
    pub risk: f64,
    /// Safety slack α: the constraint tolerates performance down to
    /// (1 − α) times the baseline.
    pub alpha: f64,
    /// Known interval bounds on baseline performance.
    pub bounds: BaselineBounds,
    /// Constraint cap C for the upper-bound variant.
    pub cap_c: Option<f64>,
    /// Known constraint matrix B for the upper-bound variant.
    #[serde(skip)]
    pub matrix_b: Option<Matrix>,
    /// Safety gap Δ = C − x⋆ᵀBθ⋆ for the upper-bound variant's gate.
    /// Injected from ground truth by the instance loader.
    pub delta_gap: Option<f64>,
    /// Multiplier on the eigenvalue gate threshold. 1 runs the published
    /// switching rule; 0 disables the gate so the policy goes optimistic as
    /// soon as the safe set is nonempty.
    pub gate_scale: f64,
    /// Constants for the closed-form bounds.
    pub constants: BoundConstants,
    /// Regret benchmark override; each policy has a natural default.
    pub regret: Option<RegretDefinition>,
}

impl ProblemConfig {
    /// Structural sanity checks shared by all variants.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("dimension d must be positive".into()));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::Config(format!(
                "noise scale R = {} must be finite and nonnegative",
                self.noise_scale
            )));
        }
        if !(self.param_bound.is_finite() && self.param_bound > 0.0) {
            return Err(Error::Config(format!(
                "parameter bound S = {} must be positive",
                self.param_bound
            )));
        }
        if !(self.action_bound.is_finite() && self.action_bound > 0.0) {
            return Err(Error::Config(format!(
                "action bound L = {} must be positive",
                self.action_bound
            )));
        }
        if !(self.regularizer.is_finite() && self.regularizer > 0.0) {
            return Err(Error::Config(format!(
                "regularizer lambda = {} must be positive",
                self.regularizer
            )));
        }
        if !(self.risk > 0.0 && self.risk < 1.0) {
            return Err(Error::Config(format!(
                "risk delta = {} must lie in (0, 1)",
                self.risk
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "safety slack alpha = {} must lie in (0, 1]",
                self.alpha
            )));
        }
        if !(self.gate_scale.is_finite() && self.gate_scale >= 0.0) {
            return Err(Error::Config(format!(
                "gate scale {} must be finite and nonnegative",
                self.gate_scale
            )));
        }
        let pairs = [
            ("r_l", self.bounds.r_l, "r_h", self.bounds.r_h),
            ("kappa_l", self.bounds.kappa_l, "kappa_h", self.bounds.kappa_h),
            ("q_l", self.bounds.q_l, "q_h", self.bounds.q_h),
            ("nu_l", self.bounds.nu_l, "nu_h", self.bounds.nu_h),
        ];
        for (lo_name, lo, hi_name, hi) in pairs {
            if let (Some(lo), Some(hi)) = (lo, hi) {
                if lo > hi {
                    return Err(Error::Config(format!(
                        "bounds {lo_name} = {lo} exceeds {hi_name} = {hi}"
                    )));
                }
            }
        }
        for (name, v) in [
            ("r_l", self.bounds.r_l),
            ("r_h", self.bounds.r_h),
            ("kappa_l", self.bounds.kappa_l),
            ("kappa_h", self.bounds.kappa_h),
            ("q_l", self.bounds.q_l),
            ("q_h", self.bounds.q_h),
            ("nu_l", self.bounds.nu_l),
            ("nu_h", self.bounds.nu_h),
        ] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(Error::Config(format!("bounds field {name} = {v} is not finite")));
                }
            }
        }
        if let Some(c) = self.cap_c {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(format!("constraint cap C = {c} must be positive")));
            }
        }
        if let Some(gap) = self.delta_gap {
            if !gap.is_finite() {
                return Err(Error::Config(format!("safety gap {gap} is not finite")));
            }
        }
        let k = &self.constants;
        for (name, v) in [("p", k.p), ("c", k.c), ("c_prime", k.c_prime), ("c0", k.c0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("constant {name} = {v} must be positive")));
            }
        }
        if k.p >= 1.0 {
            return Err(Error::Config(format!("constant p = {} must be below 1", k.p)));
        }
        Ok(())
    }

    /// Per-round risk budget δ′ = δ / (4T).
    pub fn per_round_risk(&self, horizon: usize) -> Result<f64> {
        if horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        Ok(self.risk / (4.0 * horizon as f64))
    }
}
