//! Action sets and the pessimistic safe subsets carved out of them.
//!
//! For a confidence set E = {v : ‖v − θ̂‖_V ≤ β}, the worst-case value of
//! ⟨x, v⟩ over E is ⟨x, θ̂⟩ − β‖x‖_{V⁻¹}, and the best case flips the sign.
//! Each constraint variant certifies an action by checking the worst case
//! against its threshold:
//!
//! - known baseline reward r_b:    ⟨x, θ̂⟩ − β‖x‖_{V⁻¹} ≥ (1 − α) r_b
//! - constraint-side feedback q_b: same test against (1 − α) q_b, with the
//!   estimate learned from that feedback channel
//! - unknown baseline value:       the right side is replaced by the
//!   *optimistic* baseline estimate (1 − α)(⟨x_b, θ̂⟩ + β‖x_b‖_{V⁻¹})
//! - capped linear constraint:     xᵀBθ̂ + β‖Bx‖_{V⁻¹} ≤ C
//!
//! Certified actions stay safe on the event that the true parameter lies in
//! E; pessimism is what converts high-probability coverage into per-round
//! safety.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::config::ProblemConfig;
use crate::error::{Error, Result};
use crate::estimation::ConfidenceEllipsoid;
use crate::linalg::{dot, norm2, weighted_norm, Matrix};

/// Tolerance for membership of actions in the norm ball.
const BALL_TOL: f64 = 1e-9;
/// Unit-vector check slack for mixing directions.
const UNIT_TOL: f64 = 1e-9;

/// Finite action set, stored flat (row i is action i) for scan locality.
#[derive(Clone, Debug)]
pub struct ActionSet {
    d: usize,
    data: Vec<f64>,
}

impl ActionSet {
    /// Wrap an explicit list, checking dimensions and the norm bound L.
    pub fn finite(actions: &[Vec<f64>], l: f64) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::Config("action set must be nonempty".into()));
        }
        let d = actions[0].len();
        if d == 0 {
            return Err(Error::Config("actions must have positive dimension".into()));
        }
        let mut data = Vec::with_capacity(actions.len() * d);
        for (i, x) in actions.iter().enumerate() {
            if x.len() != d {
                return Err(Error::Config(format!(
                    "action {i} has dimension {} but action 0 has {d}",
                    x.len()
                )));
            }
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::Config(format!("action {i} has a non-finite entry")));
            }
            if norm2(x) > l * (1.0 + BALL_TOL) {
                return Err(Error::Config(format!(
                    "action {i} has norm {} above the bound {l}",
                    norm2(x)
                )));
            }
            data.extend_from_slice(x);
        }
        Ok(ActionSet { d, data })
    }

    /// Discretization of the radius-L ball. In two dimensions: the origin,
    /// then `n_shell` concentric rings of `n_grid` equally spaced points,
    /// inner ring first. In other dimensions: the origin plus
    /// `n_grid * n_shell` seeded quasi-random points, drawn with uniform
    /// volume density (gaussian direction, radius L·u^{1/d}).
    pub fn ball_grid(d: usize, l: f64, n_grid: usize, n_shell: usize, seed: u64) -> Result<Self> {
        if d == 0 || n_grid == 0 || n_shell == 0 {
            return Err(Error::Config(
                "ball grid needs positive dimension, grid count, and shell count".into(),
            ));
        }
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Config(format!("ball grid radius {l} must be positive")));
        }
        let mut data = Vec::with_capacity((1 + n_grid * n_shell) * d);
        data.extend(std::iter::repeat(0.0).take(d));
        if d == 2 {
            for k in 1..=n_shell {
                let r = l * k as f64 / n_shell as f64;
                for j in 0..n_grid {
                    let angle = 2.0 * std::f64::consts::PI * j as f64 / n_grid as f64;
                    data.push(r * angle.cos());
                    data.push(r * angle.sin());
                }
            }
        } else {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            for _ in 0..n_grid * n_shell {
                let dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let n = norm2(&dir).max(1e-12);
                let u: f64 = rng.gen_range(0.0..1.0);
                let r = l * u.powf(1.0 / d as f64);
                data.extend(dir.iter().map(|v| v / n * r));
            }
        }
        Ok(ActionSet { d, data })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn action(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }
}

/// The four safety rules a policy can enforce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintVariant {
    /// Baseline reward r_{b_t} is revealed; constraint ⟨x, θ⋆⟩ ≥ (1−α) r_{b_t}.
    KnownReward,
    /// Constraint side has its own parameter and noisy feedback;
    /// constraint ⟨x, μ⋆⟩ ≥ (1−α) q_{b_t} with q_{b_t} revealed.
    BanditFeedback,
    /// Baseline reward unknown; both sides estimated from the same channel.
    UnknownBaseline,
    /// Known matrix B and cap C; constraint xᵀBθ⋆ ≤ C.
    UpperBound,
}

/// Everything needed to test one action for certified safety.
#[derive(Clone, Copy, Debug)]
pub struct SafeSetSpec<'a> {
    pub variant: ConstraintVariant,
    /// Confidence set for the parameter the constraint involves.
    pub ellipsoid: &'a ConfidenceEllipsoid<'a>,
    pub baseline_action: &'a [f64],
    /// Revealed baseline performance (r_{b_t} or q_{b_t}); unused by the
    /// unknown-baseline and capped variants.
    pub baseline_value: Option<f64>,
    pub alpha: f64,
    pub matrix_b: Option<&'a Matrix>,
    pub cap_c: Option<f64>,
}

impl SafeSetSpec<'_> {
    /// Worst-case (over the ellipsoid) value of ⟨x, v⟩.
    fn pessimistic_value(&self, x: &[f64]) -> Result<f64> {
        let e = self.ellipsoid;
        Ok(dot(x, &e.center) - e.radius * weighted_norm(e.gram.v_inv(), x)?)
    }

    /// Best-case (over the ellipsoid) value of ⟨x, v⟩.
    fn optimistic_value(&self, x: &[f64]) -> Result<f64> {
        let e = self.ellipsoid;
        Ok(dot(x, &e.center) + e.radius * weighted_norm(e.gram.v_inv(), x)?)
    }

    /// Whether `x` is certified safe under this spec.
    pub fn is_safe(&self, x: &[f64]) -> Result<bool> {
        match self.variant {
            ConstraintVariant::KnownReward | ConstraintVariant::BanditFeedback => {
                let baseline = self.baseline_value.ok_or(Error::SpecMismatch(
                    "safety check needs the revealed baseline value for this variant",
                ))?;
                Ok(self.pessimistic_value(x)? >= (1.0 - self.alpha) * baseline)
            }
            ConstraintVariant::UnknownBaseline => {
                let floor = (1.0 - self.alpha) * self.optimistic_value(self.baseline_action)?;
                Ok(self.pessimistic_value(x)? >= floor)
            }
            ConstraintVariant::UpperBound => {
                let b = self.matrix_b.ok_or(Error::SpecMismatch(
                    "capped-constraint safety check needs the matrix B",
                ))?;
                let c = self.cap_c.ok_or(Error::SpecMismatch(
                    "capped-constraint safety check needs the cap C",
                ))?;
                let bx = b.mat_vec(x);
                let e = self.ellipsoid;
                let worst = dot(&bx, &e.center) + e.radius * weighted_norm(e.gram.v_inv(), &bx)?;
                Ok(worst <= c)
            }
        }
    }
}

/// What the scan maximizes over the (safe) actions.
#[derive(Clone, Copy, Debug)]
pub enum Objective<'a> {
    /// ⟨x, w⟩ for a fixed weight vector (a sampled parameter, usually).
    Linear(&'a [f64]),
    /// ⟨x, θ̂⟩ + β‖x‖_{V⁻¹}, the optimistic value over the given set.
    Ucb(&'a ConfidenceEllipsoid<'a>),
}

/// Result of scanning an action set.
#[derive(Clone, Debug)]
pub struct SafeScan {
    /// Lowest index attaining the best objective among certified actions.
    pub best_index: Option<usize>,
    pub best_value: f64,
    /// How many actions passed the safety check.
    pub safe_count: usize,
}

/// Single pass over the set: count certified actions and maximize the
/// objective among them. `spec: None` treats every action as safe. Ties go
/// to the lowest index.
pub fn scan(set: &ActionSet, spec: Option<&SafeSetSpec<'_>>, objective: Objective<'_>) -> Result<SafeScan> {
    let mut best_index = None;
    let mut best_value = f64::NEG_INFINITY;
    let mut safe_count = 0usize;
    for (i, x) in set.iter().enumerate() {
        if let Some(s) = spec {
            if !s.is_safe(x)? {
                continue;
            }
        }
        safe_count += 1;
        let value = match objective {
            Objective::Linear(w) => dot(x, w),
            Objective::Ucb(e) => dot(x, &e.center) + e.radius * weighted_norm(e.gram.v_inv(), x)?,
        };
        if value > best_value {
            best_value = value;
            best_index = Some(i);
        }
    }
    Ok(SafeScan { best_index, best_value, safe_count })
}

/// Maximize ⟨x, w⟩ over the certified actions.
pub fn safe_argmax_linear(
    set: &ActionSet,
    spec: Option<&SafeSetSpec<'_>>,
    w: &[f64],
) -> Result<Option<(Vec<f64>, f64)>> {
    let s = scan(set, spec, Objective::Linear(w))?;
    Ok(s.best_index.map(|i| (set.action(i).to_vec(), s.best_value)))
}

/// Maximize the optimistic value over the certified actions.
pub fn safe_argmax_ucb(
    set: &ActionSet,
    spec: Option<&SafeSetSpec<'_>>,
    ellipsoid: &ConfidenceEllipsoid<'_>,
) -> Result<Option<(Vec<f64>, f64)>> {
    let s = scan(set, spec, Objective::Ucb(ellipsoid))?;
    Ok(s.best_index.map(|i| (set.action(i).to_vec(), s.best_value)))
}

/// Largest mixing weight ρ̄ that keeps the blended action provably safe,
/// per variant:
///
/// - known reward:      α r_l / (S + r_h)
/// - constraint floor:  α q_l / (S + q_h)
/// - unknown baseline:  α r_l / (S + 1)
/// - capped constraint: C / (‖B‖ S)
pub fn max_rho(variant: ConstraintVariant, cfg: &ProblemConfig) -> Result<f64> {
    let rho = match variant {
        ConstraintVariant::KnownReward => {
            let r_l = cfg.bounds.require("r_l")?;
            let r_h = cfg.bounds.require("r_h")?;
            if r_l <= 0.0 {
                return Err(Error::Config(format!(
                    "baseline reward floor r_l = {r_l} must be positive for safe mixing"
                )));
            }
            cfg.alpha * r_l / (cfg.param_bound + r_h)
        }
        ConstraintVariant::BanditFeedback => {
            let q_l = cfg.bounds.require("q_l")?;
            let q_h = cfg.bounds.require("q_h")?;
            if q_l <= 0.0 {
                return Err(Error::Config(format!(
                    "baseline constraint floor q_l = {q_l} must be positive for safe mixing"
                )));
            }
            cfg.alpha * q_l / (cfg.param_bound + q_h)
        }
        ConstraintVariant::UnknownBaseline => {
            let r_l = cfg.bounds.require("r_l")?;
            if r_l <= 0.0 {
                return Err(Error::Config(format!(
                    "baseline reward floor r_l = {r_l} must be positive for safe mixing"
                )));
            }
            cfg.alpha * r_l / (cfg.param_bound + 1.0)
        }
        ConstraintVariant::UpperBound => {
            let b = cfg
                .matrix_b
                .as_ref()
                .ok_or(Error::SpecMismatch("mixing weight needs the constraint matrix B"))?;
            let c = cfg
                .cap_c
                .ok_or(Error::SpecMismatch("mixing weight needs the constraint cap C"))?;
            let b_norm = b.spectral_norm()?;
            if b_norm <= 0.0 {
                return Err(Error::Config("constraint matrix B must be nonzero".into()));
            }
            c / (b_norm * cfg.param_bound)
        }
    };
    if !rho.is_finite() || rho <= 0.0 {
        return Err(Error::Config(format!("mixing weight {rho} must be positive")));
    }
    Ok(rho)
}

/// Blend the baseline with a unit perturbation: (1 − ρ) x_b + ρ ζ.
/// Callers must keep ρ within the certified budget ρ̄; that inequality is
/// what makes the blend safe, so breaching it is a safety-contract error.
pub fn conservative_action(
    x_b: &[f64],
    rho: f64,
    rho_bar: f64,
    zeta: &[f64],
) -> Result<Vec<f64>> {
    if zeta.len() != x_b.len() {
        return Err(Error::Contract(format!(
            "mixing: perturbation dimension {} vs baseline {}",
            zeta.len(),
            x_b.len()
        )));
    }
    let n = norm2(zeta);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::Contract(format!(
            "mixing: perturbation norm {n} departs from 1"
        )));
    }
    if !(rho >= 0.0) {
        return Err(Error::Contract(format!("mixing weight {rho} must be nonnegative")));
    }
    if rho > rho_bar * (1.0 + 1e-12) {
        return Err(Error::SafetyContract(format!(
            "mixing weight {rho} exceeds certified budget {rho_bar}"
        )));
    }
    Ok(x_b.iter().zip(zeta).map(|(b, z)| (1.0 - rho) * b + rho * z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BaselineBounds, BoundConstants};
    use crate::linalg::GramState;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fresh_ellipsoid(gram: &GramState, center: Vec<f64>, radius: f64) -> ConfidenceEllipsoid<'_> {
        ConfidenceEllipsoid { center, gram, radius, risk: 0.05 }
    }

    fn cfg_with_bounds() -> ProblemConfig {
        ProblemConfig {
            d: 2,
            noise_scale: 0.1,
            param_bound: 1.0,
            action_bound: 1.0,
            regularizer: 1.0,
            risk: 0.1,
            alpha: 0.2,
            bounds: BaselineBounds {
                r_l: Some(0.4),
                r_h: Some(0.5),
                q_l: Some(0.4),
                q_h: Some(0.5),
                ..BaselineBounds::default()
            },
            cap_c: None,
            matrix_b: None,
            delta_gap: None,
            gate_scale: 1.0,
            constants: BoundConstants::default(),
            regret: None,
        }
    }

    #[test]
    fn finite_set_round_trips_and_validates() {
        let set = ActionSet::finite(&[vec![0.6, 0.5], vec![0.0, 0.0]], 1.0).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.action(0), &[0.6, 0.5]);
        assert!(ActionSet::finite(&[], 1.0).is_err());
        assert!(ActionSet::finite(&[vec![1.0, 1.0]], 1.0).is_err(), "norm sqrt(2) above 1");
        assert!(ActionSet::finite(&[vec![1.0], vec![1.0, 0.0]], 2.0).is_err());
    }

    #[test]
    fn ball_grid_planar_layout() {
        let set = ActionSet::ball_grid(2, 1.0, 8, 4, 0).unwrap();
        assert_eq!(set.len(), 1 + 8 * 4);
        assert_eq!(set.action(0), &[0.0, 0.0]);
        // First ring starts on the positive first axis at radius 1/4.
        assert_relative_eq!(set.action(1)[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(set.action(1)[1], 0.0, epsilon = 1e-15);
        for x in set.iter() {
            assert!(norm2(x) <= 1.0 + 1e-12);
        }
        // Outermost ring touches the boundary.
        let last = set.action(set.len() - 1);
        assert_relative_eq!(norm2(last), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ball_grid_higher_dim_stays_inside_and_keeps_origin() {
        let set = ActionSet::ball_grid(4, 0.8, 16, 4, 7).unwrap();
        assert_eq!(set.len(), 1 + 64);
        assert_eq!(set.action(0), &[0.0; 4]);
        for x in set.iter() {
            assert!(norm2(x) <= 0.8 + 1e-12);
        }
        // Seeded: same seed reproduces, different seed differs.
        let again = ActionSet::ball_grid(4, 0.8, 16, 4, 7).unwrap();
        assert_eq!(set.action(5), again.action(5));
        let other = ActionSet::ball_grid(4, 0.8, 16, 4, 8).unwrap();
        assert_ne!(set.action(5), other.action(5));
    }

    #[test]
    fn known_reward_safety_oracle() {
        // Identity Gram, center (0.5, 0.4), testing the action (0.6, 0.5)
        // against floor 0.8 * 0.5 = 0.4. Pessimistic value is
        // 0.5 - beta * sqrt(0.61).
        let gram = GramState::new(2, 1.0, false).unwrap();
        let ell = fresh_ellipsoid(&gram, vec![0.5, 0.4], 0.05);
        let spec = SafeSetSpec {
            variant: ConstraintVariant::KnownReward,
            ellipsoid: &ell,
            baseline_action: &[0.6, 0.5],
            baseline_value: Some(0.5),
            alpha: 0.2,
            matrix_b: None,
            cap_c: None,
        };
        // 0.5 - 0.05 * 0.7810249675906654 = 0.46095 >= 0.4.
        assert!(spec.is_safe(&[0.6, 0.5]).unwrap());
        let wide = fresh_ellipsoid(&gram, vec![0.5, 0.4], 1.3);
        let spec_wide = SafeSetSpec { ellipsoid: &wide, ..spec };
        assert!(!spec_wide.is_safe(&[0.6, 0.5]).unwrap());
        // Missing revealed baseline is a contract violation for this variant.
        let spec_missing = SafeSetSpec { baseline_value: None, ..spec };
        assert!(spec_missing.is_safe(&[0.6, 0.5]).is_err());
    }

    #[test]
    fn unknown_baseline_compares_against_optimistic_estimate() {
        let gram = GramState::new(2, 1.0, false).unwrap();
        let ell = fresh_ellipsoid(&gram, vec![0.5, 0.4], 0.01);
        let spec = SafeSetSpec {
            variant: ConstraintVariant::UnknownBaseline,
            ellipsoid: &ell,
            baseline_action: &[0.6, 0.5],
            baseline_value: None,
            alpha: 0.2,
            matrix_b: None,
            cap_c: None,
        };
        // Pessimistic 0.5 - 0.01*0.78102 = 0.49219 versus floor
        // 0.8 * (0.5 + 0.01*0.78102) = 0.40625.
        assert!(spec.is_safe(&[0.6, 0.5]).unwrap());
        // A huge radius empties the certified set entirely.
        let wide = fresh_ellipsoid(&gram, vec![0.5, 0.4], 10.0);
        let spec_wide = SafeSetSpec { ellipsoid: &wide, ..spec };
        assert!(!spec_wide.is_safe(&[0.6, 0.5]).unwrap());
    }

    #[test]
    fn upper_bound_safety_and_origin() {
        let gram = GramState::new(2, 1.0, false).unwrap();
        let ell = fresh_ellipsoid(&gram, vec![0.5, 0.4], 0.05);
        let b = Matrix::identity(2);
        let spec = SafeSetSpec {
            variant: ConstraintVariant::UpperBound,
            ellipsoid: &ell,
            baseline_action: &[0.0, 0.0],
            baseline_value: None,
            alpha: 0.2,
            matrix_b: Some(&b),
            cap_c: Some(0.4),
        };
        // 0.5 + 0.05*0.78102 = 0.53905 > 0.4: not certified.
        assert!(!spec.is_safe(&[0.6, 0.5]).unwrap());
        // The origin maps to zero on both terms, so any positive cap admits it.
        assert!(spec.is_safe(&[0.0, 0.0]).unwrap());
        // A small action passes: 0.1*0.5 + 0.05*0.1 = 0.055 <= 0.4.
        assert!(spec.is_safe(&[0.1, 0.0]).unwrap());
        let spec_no_b = SafeSetSpec { matrix_b: None, ..spec };
        assert!(spec_no_b.is_safe(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn scan_counts_and_breaks_ties_low() {
        let set = ActionSet::finite(
            &[vec![0.5, 0.0], vec![0.5, 0.0], vec![0.0, 0.5], vec![0.9, 0.0]],
            1.0,
        )
        .unwrap();
        let s = scan(&set, None, Objective::Linear(&[1.0, 0.0])).unwrap();
        assert_eq!(s.best_index, Some(3));
        assert_relative_eq!(s.best_value, 0.9, epsilon = 1e-15);
        assert_eq!(s.safe_count, 4);
        // Duplicate maxima resolve to the lowest index.
        let set2 = ActionSet::finite(&[vec![0.5, 0.0], vec![0.5, 0.0]], 1.0).unwrap();
        let s2 = scan(&set2, None, Objective::Linear(&[1.0, 0.0])).unwrap();
        assert_eq!(s2.best_index, Some(0));
    }

    #[test]
    fn scan_with_spec_filters_unsafe_actions() {
        let gram = GramState::new(2, 1.0, false).unwrap();
        let ell = fresh_ellipsoid(&gram, vec![0.5, 0.4], 0.05);
        let spec = SafeSetSpec {
            variant: ConstraintVariant::KnownReward,
            ellipsoid: &ell,
            baseline_action: &[0.6, 0.5],
            baseline_value: Some(0.5),
            alpha: 0.2,
            matrix_b: None,
            cap_c: None,
        };
        // (0.6,0.5) certifies (0.46095 >= 0.4); (0.0,0.9) has pessimistic
        // value 0.36 - 0.045 = 0.315 < 0.4 and is excluded.
        let set = ActionSet::finite(&[vec![0.0, 0.9], vec![0.6, 0.5]], 1.0).unwrap();
        let s = scan(&set, Some(&spec), Objective::Linear(&[0.5, 0.4])).unwrap();
        assert_eq!(s.safe_count, 1);
        assert_eq!(s.best_index, Some(1));
        let (x, v) = safe_argmax_linear(&set, Some(&spec), &[0.5, 0.4]).unwrap().unwrap();
        assert_eq!(x, vec![0.6, 0.5]);
        assert_relative_eq!(v, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn scan_empty_safe_set_returns_none() {
        let gram = GramState::new(2, 1.0, false).unwrap();
        let ell = fresh_ellipsoid(&gram, vec![0.5, 0.4], 10.0);
        let spec = SafeSetSpec {
            variant: ConstraintVariant::KnownReward,
            ellipsoid: &ell,
            baseline_action: &[0.6, 0.5],
            baseline_value: Some(0.5),
            alpha: 0.2,
            matrix_b: None,
            cap_c: None,
        };
        let set = ActionSet::finite(&[vec![0.6, 0.5]], 1.0).unwrap();
        assert!(safe_argmax_linear(&set, Some(&spec), &[1.0, 0.0]).unwrap().is_none());
    }

    #[test]
    fn ucb_objective_adds_exploration_width() {
        let gram = GramState::new(2, 1.0, false).unwrap();
        let ell = fresh_ellipsoid(&gram, vec![0.5, 0.0], 0.1);
        let set = ActionSet::finite(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1.0).unwrap();
        let (x, v) = safe_argmax_ucb(&set, None, &ell).unwrap().unwrap();
        // First action: 0.5 + 0.1; second: 0.0 + 0.1.
        assert_eq!(x, vec![1.0, 0.0]);
        assert_relative_eq!(v, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn max_rho_closed_forms() {
        let cfg = cfg_with_bounds();
        // 0.2 * 0.4 / (1 + 0.5) = 0.05333...
        assert_relative_eq!(
            max_rho(ConstraintVariant::KnownReward, &cfg).unwrap(),
            0.2 * 0.4 / 1.5,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            max_rho(ConstraintVariant::BanditFeedback, &cfg).unwrap(),
            0.2 * 0.4 / 1.5,
            epsilon = 1e-15
        );
        // Unknown baseline replaces r_h by the reward cap 1.
        assert_relative_eq!(
            max_rho(ConstraintVariant::UnknownBaseline, &cfg).unwrap(),
            0.2 * 0.4 / 2.0,
            epsilon = 1e-15
        );
        let mut capped = cfg.clone();
        capped.matrix_b = Some(Matrix::identity(2));
        capped.cap_c = Some(0.4);
        assert_relative_eq!(
            max_rho(ConstraintVariant::UpperBound, &capped).unwrap(),
            0.4,
            epsilon = 1e-12
        );
        let mut missing = cfg;
        missing.bounds.q_l = None;
        assert!(max_rho(ConstraintVariant::BanditFeedback, &missing).is_err());
    }

    #[test]
    fn conservative_action_blend_oracle() {
        // (1 - rho) * (0.6, 0.5) + rho * (1, 0) at rho = 4/75.
        let rho = 0.2 * 0.4 / 1.5;
        let x = conservative_action(&[0.6, 0.5], rho, rho, &[1.0, 0.0]).unwrap();
        assert_relative_eq!(x[0], 0.6 + rho * 0.4, epsilon = 1e-15);
        assert_relative_eq!(x[1], 0.5 * (1.0 - rho), epsilon = 1e-15);
        assert!((x[0] - 0.621_333_333).abs() < 1e-9);
        assert!((x[1] - 0.473_333_333).abs() < 1e-9);
    }

    #[test]
    fn conservative_action_contract_checks() {
        assert!(conservative_action(&[0.6, 0.5], 0.05, 0.05, &[0.5, 0.5]).is_err(), "non-unit zeta");
        assert!(matches!(
            conservative_action(&[0.6, 0.5], 0.06, 0.05, &[1.0, 0.0]),
            Err(Error::SafetyContract(_))
        ));
        assert!(conservative_action(&[0.6, 0.5], -0.01, 0.05, &[1.0, 0.0]).is_err());
        assert!(conservative_action(&[0.6, 0.5], 0.05, 0.05, &[1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn blended_action_keeps_the_true_constraint(
            angle_b in 0.0..std::f64::consts::TAU,
            angle_z in 0.0..std::f64::consts::TAU,
            rho_frac in 0.0..1.0_f64,
        ) {
            // Ground truth theta with norm 0.640..., baselines scaled so the
            // true baseline reward sits inside [r_l, r_h] = [0.4, 0.5].
            let theta = [0.5, 0.4];
            let s_bound = 1.0;
            let (r_l, r_h) = (0.4, 0.5);
            let alpha = 0.2;
            let r_b = r_l + (r_h - r_l) * 0.5;
            // Baseline direction with exact reward r_b.
            let dir = [angle_b.cos(), angle_b.sin()];
            let d = dir[0] * theta[0] + dir[1] * theta[1];
            prop_assume!(d.abs() > 0.05);
            let scale = r_b / d;
            prop_assume!(scale.abs() <= 1.5);
            let x_b = [dir[0] * scale, dir[1] * scale];
            let zeta = [angle_z.cos(), angle_z.sin()];
            let rho_bar = alpha * r_l / (s_bound + r_h);
            let rho = rho_bar * rho_frac;
            let x = conservative_action(&x_b, rho, rho_bar, &zeta).unwrap();
            let value = x[0] * theta[0] + x[1] * theta[1];
            // (1-rho) r_b - rho S >= (1-alpha) r_b whenever rho <= rho_bar.
            prop_assert!(value >= (1.0 - alpha) * r_b - 1e-12);
        }

        #[test]
        fn scan_matches_brute_force(
            seed in 0u64..300,
        ) {
            use rand::{Rng, SeedableRng};
            use rand_chacha::ChaCha12Rng;
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..40);
            let actions: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-0.7..0.7)).collect();
                    x
                })
                .collect();
            let set = ActionSet::finite(&actions, 1.0).unwrap();
            let w: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = scan(&set, None, Objective::Linear(&w)).unwrap();
            let mut best = f64::NEG_INFINITY;
            let mut best_i = None;
            for (i, x) in actions.iter().enumerate() {
                let v = x[0] * w[0] + x[1] * w[1];
                if v > best {
                    best = v;
                    best_i = Some(i);
                }
            }
            prop_assert_eq!(s.best_index, best_i);
            prop_assert!((s.best_value - best).abs() < 1e-14);
        }
    }
}
