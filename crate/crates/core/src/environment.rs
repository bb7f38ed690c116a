//! Ground truth: the hidden parameters, the feedback generator, the
//! baseline stream, and the auditor that scores every played action against
//! the *true* constraint (the policies only ever see estimates).
//!
//! An instance bundles the learner-visible configuration with the hidden
//! model and checks the standing assumptions at load time: parameter norms
//! within S, actions within the radius-L ball, expected rewards at most 1,
//! and any declared baseline bounds consistent with the actual baselines.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::action_space::ActionSet;
use crate::config::{BaselineBounds, BoundConstants, ProblemConfig, RegretDefinition};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, Matrix};
use crate::policies::PolicyVariant;

/// Margins below this count as genuine violations; anything in between is
/// arithmetic noise on a boundary action.
pub const VIOLATION_TOL: f64 = 1e-9;
/// Slack for load-time consistency checks between declared bounds and truth.
const CHECK_TOL: f64 = 1e-9;

/// Hidden parameters and the noise generator.
#[derive(Clone, Debug)]
pub struct TrueModel {
    pub theta_star: Vec<f64>,
    /// Constraint-side parameter, present only when that channel exists.
    pub mu_star: Option<Vec<f64>>,
    pub matrix_b: Option<Matrix>,
    pub cap_c: Option<f64>,
    pub noise_scale: f64,
}

impl TrueModel {
    pub fn expected_reward(&self, x: &[f64]) -> f64 {
        dot(x, &self.theta_star)
    }

    pub fn expected_constraint(&self, x: &[f64]) -> Result<f64> {
        let mu = self.mu_star.as_ref().ok_or(Error::SpecMismatch(
            "constraint-side expectation requested but the model has no constraint parameter",
        ))?;
        Ok(dot(x, mu))
    }

    /// Draw the round's feedback: the reward observation always, plus the
    /// constraint observation when that channel exists. Both channels share
    /// the noise scale R.
    pub fn emit_feedback(&self, x: &[f64], rng: &mut ChaCha12Rng) -> (f64, Option<f64>) {
        let noise: f64 = StandardNormal.sample(rng);
        let y = self.expected_reward(x) + self.noise_scale * noise;
        let w = self.mu_star.as_ref().map(|mu| {
            let noise: f64 = StandardNormal.sample(rng);
            dot(x, mu) + self.noise_scale * noise
        });
        (y, w)
    }
}

/// How the baseline action evolves over rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    Fixed,
    Cycle,
}

/// The (non-learned) baseline the environment would have played.
#[derive(Clone, Debug)]
pub struct BaselineStream {
    mode: BaselineMode,
    actions: Vec<Vec<f64>>,
}

impl BaselineStream {
    pub fn new(mode: BaselineMode, actions: Vec<Vec<f64>>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::Config("baseline stream needs at least one action".into()));
        }
        if mode == BaselineMode::Fixed && actions.len() != 1 {
            return Err(Error::Config(format!(
                "fixed baseline mode takes exactly one action, got {}",
                actions.len()
            )));
        }
        let d = actions[0].len();
        for (i, a) in actions.iter().enumerate() {
            if a.len() != d {
                return Err(Error::Config(format!(
                    "baseline action {i} has dimension {} but action 0 has {d}",
                    a.len()
                )));
            }
        }
        Ok(BaselineStream { mode, actions })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn mode(&self) -> BaselineMode {
        self.mode
    }

    /// Baseline for 1-based round t; cycling streams walk their list.
    pub fn action_at(&self, t: usize) -> &[f64] {
        let idx = match self.mode {
            BaselineMode::Fixed => 0,
            BaselineMode::Cycle => (t.saturating_sub(1)) % self.actions.len(),
        };
        &self.actions[idx]
    }

    /// Index into the action list for 1-based round t.
    pub fn index_at(&self, t: usize) -> usize {
        match self.mode {
            BaselineMode::Fixed => 0,
            BaselineMode::Cycle => (t.saturating_sub(1)) % self.actions.len(),
        }
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }
}

/// Which true constraint the auditor scores against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    /// ⟨x, θ⋆⟩ ≥ (1 − α) r_{b_t}.
    RewardFloor,
    /// ⟨x, μ⋆⟩ ≥ (1 − α) q_{b_t}.
    ConstraintFloor,
    /// xᵀ B θ⋆ ≤ C.
    UpperCap,
}

impl ConstraintKind {
    /// The constraint a policy is audited against. Unconstrained baselines
    /// are scored against the reward floor so their violation rates are
    /// comparable with the constrained policies run beside them.
    pub fn for_policy(variant: PolicyVariant) -> ConstraintKind {
        match variant {
            PolicyVariant::ScltsBf => ConstraintKind::ConstraintFloor,
            PolicyVariant::Sclucb2 => ConstraintKind::UpperCap,
            _ => ConstraintKind::RewardFloor,
        }
    }
}

/// One file-loadable experiment: hidden truth plus learner-visible config.
#[derive(Clone, Debug)]
pub struct Instance {
    pub cfg: ProblemConfig,
    pub model: TrueModel,
    pub baseline: BaselineStream,
    pub actions: ActionSet,
    /// Default horizon suggested by the file, if any.
    pub horizon: Option<usize>,
    /// The parsed file, for echoing into result summaries.
    pub echo: serde_json::Value,
}

/// On-disk schema. Scalar names follow the conventional symbols; everything
/// else is spelled out.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: Option<usize>,
    pub theta_star: Vec<f64>,
    pub mu_star: Option<Vec<f64>>,
    #[serde(rename = "R")]
    pub noise_scale: f64,
    #[serde(rename = "S")]
    pub param_bound: f64,
    #[serde(rename = "L")]
    pub action_bound: f64,
    pub lambda: f64,
    pub delta: f64,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub matrix_b: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C")]
    pub cap_c: Option<f64>,
    pub gate_scale: Option<f64>,
    pub delta_gap: Option<f64>,
    pub regret: Option<RegretDefinition>,
    pub baseline: BaselineSection,
    pub bounds: Option<BaselineBounds>,
    pub action_set: ActionSetSection,
    pub constants: Option<BoundConstants>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub mode: Option<BaselineMode>,
    pub actions: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSetSection {
    /// "ball-grid" or "finite".
    pub kind: String,
    pub n_grid: Option<usize>,
    pub n_shell: Option<usize>,
    pub grid_seed: Option<u64>,
    pub actions: Option<Vec<Vec<f64>>>,
}

impl Instance {
    /// Parse an instance description without building it, so callers can
    /// adjust fields (parameter sweeps) before construction.
    pub fn load_file(path: &std::path::Path) -> Result<InstanceFile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn from_toml_path(path: &std::path::Path) -> Result<Instance> {
        Self::from_file(Self::load_file(path)?)
    }

    pub fn from_file(file: InstanceFile) -> Result<Instance> {
        let echo = serde_json::to_value(&file).map_err(|e| Error::Parse {
            path: "<instance>".into(),
            message: e.to_string(),
        })?;
        let matrix_b = match &file.matrix_b {
            Some(rows) => Some(Matrix::from_rows(rows)?),
            None => None,
        };
        let cfg = ProblemConfig {
            d: file.d,
            noise_scale: file.noise_scale,
            param_bound: file.param_bound,
            action_bound: file.action_bound,
            regularizer: file.lambda,
            risk: file.delta,
            alpha: file.alpha,
            bounds: file.bounds.unwrap_or_default(),
            cap_c: file.cap_c,
            matrix_b: matrix_b.clone(),
            delta_gap: file.delta_gap,
            gate_scale: file.gate_scale.unwrap_or(1.0),
            constants: file.constants.unwrap_or_default(),
            regret: file.regret,
        };
        let actions = match file.action_set.kind.as_str() {
            "ball-grid" => ActionSet::ball_grid(
                file.d,
                file.action_bound,
                file.action_set.n_grid.unwrap_or(256),
                file.action_set.n_shell.unwrap_or(8),
                file.action_set.grid_seed.unwrap_or(0),
            )?,
            "finite" => {
                let listed = file.action_set.actions.as_ref().ok_or_else(|| {
                    Error::Config("finite action set needs an explicit `actions` list".into())
                })?;
                ActionSet::finite(listed, file.action_bound)?
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown action set kind `{other}`; expected ball-grid or finite"
                )))
            }
        };
        let baseline = BaselineStream::new(
            file.baseline.mode.unwrap_or(BaselineMode::Fixed),
            file.baseline.actions.clone(),
        )?;
        let model = TrueModel {
            theta_star: file.theta_star.clone(),
            mu_star: file.mu_star.clone(),
            matrix_b,
            cap_c: file.cap_c,
            noise_scale: file.noise_scale,
        };
        let instance =
            Instance { cfg, model, baseline, actions, horizon: file.horizon, echo };
        instance.validate()?;
        Ok(instance)
    }

    /// Check model, action set, and declared bounds against each other.
    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        let d = self.cfg.d;
        if self.model.theta_star.len() != d {
            return Err(Error::Config(format!(
                "theta_star has dimension {} but d = {d}",
                self.model.theta_star.len()
            )));
        }
        if norm2(&self.model.theta_star) > self.cfg.param_bound * (1.0 + CHECK_TOL) {
            return Err(Error::Config(format!(
                "theta_star norm {} exceeds the bound S = {}",
                norm2(&self.model.theta_star),
                self.cfg.param_bound
            )));
        }
        if let Some(mu) = &self.model.mu_star {
            if mu.len() != d {
                return Err(Error::Config(format!(
                    "mu_star has dimension {} but d = {d}",
                    mu.len()
                )));
            }
            if norm2(mu) > self.cfg.param_bound * (1.0 + CHECK_TOL) {
                return Err(Error::Config(format!(
                    "mu_star norm {} exceeds the bound S = {}",
                    norm2(mu),
                    self.cfg.param_bound
                )));
            }
        }
        if self.actions.dim() != d {
            return Err(Error::Config(format!(
                "action set dimension {} but d = {d}",
                self.actions.dim()
            )));
        }
        match (&self.cfg.matrix_b, self.cfg.cap_c) {
            (Some(b), Some(_)) => {
                if b.dim() != d {
                    return Err(Error::Config(format!(
                        "constraint matrix is {}x{} but d = {d}",
                        b.dim(),
                        b.dim()
                    )));
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::Config(
                    "constraint matrix B and cap C must be given together".into(),
                ))
            }
        }
        // Expected rewards stay within the unit cap everywhere the policy
        // or the baseline can reach.
        for x in self.actions.iter() {
            if self.model.expected_reward(x) > 1.0 + CHECK_TOL {
                return Err(Error::Config(format!(
                    "an action has expected reward {} above the cap 1",
                    self.model.expected_reward(x)
                )));
            }
        }
        for (i, x_b) in self.baseline.actions().iter().enumerate() {
            if x_b.len() != d {
                return Err(Error::Config(format!(
                    "baseline action {i} has dimension {} but d = {d}",
                    x_b.len()
                )));
            }
            if norm2(x_b) > self.cfg.action_bound * (1.0 + CHECK_TOL) {
                return Err(Error::Config(format!(
                    "baseline action {i} has norm {} above L = {}",
                    norm2(x_b),
                    self.cfg.action_bound
                )));
            }
            let r_b = self.model.expected_reward(x_b);
            if r_b > 1.0 + CHECK_TOL {
                return Err(Error::Config(format!(
                    "baseline action {i} has expected reward {r_b} above the cap 1"
                )));
            }
            let bounds = &self.cfg.bounds;
            if let Some(r_l) = bounds.r_l {
                if r_b < r_l - CHECK_TOL {
                    return Err(Error::Config(format!(
                        "baseline action {i} has reward {r_b} below the declared floor r_l = {r_l}"
                    )));
                }
            }
            if let Some(r_h) = bounds.r_h {
                if r_b > r_h + CHECK_TOL {
                    return Err(Error::Config(format!(
                        "baseline action {i} has reward {r_b} above the declared cap r_h = {r_h}"
                    )));
                }
            }
            let opt = self.unconstrained_optimum();
            if let Some(kappa_l) = bounds.kappa_l {
                if opt - r_b < kappa_l - CHECK_TOL {
                    return Err(Error::Config(format!(
                        "baseline action {i} has optimality gap {} below the declared floor kappa_l = {kappa_l}",
                        opt - r_b
                    )));
                }
            }
            if let Some(kappa_h) = bounds.kappa_h {
                if opt - r_b > kappa_h + CHECK_TOL {
                    return Err(Error::Config(format!(
                        "baseline action {i} has optimality gap {} above the declared cap kappa_h = {kappa_h}",
                        opt - r_b
                    )));
                }
            }
            if let Some(mu) = &self.model.mu_star {
                let q_b = dot(x_b, mu);
                if let Some(q_l) = bounds.q_l {
                    if q_b < q_l - CHECK_TOL {
                        return Err(Error::Config(format!(
                            "baseline action {i} has constraint value {q_b} below the declared floor q_l = {q_l}"
                        )));
                    }
                }
                if let Some(q_h) = bounds.q_h {
                    if q_b > q_h + CHECK_TOL {
                        return Err(Error::Config(format!(
                            "baseline action {i} has constraint value {q_b} above the declared cap q_h = {q_h}"
                        )));
                    }
                }
                let q_opt = self
                    .actions
                    .iter()
                    .map(|x| dot(x, mu))
                    .fold(f64::NEG_INFINITY, f64::max);
                if let Some(nu_l) = bounds.nu_l {
                    if q_opt - q_b < nu_l - CHECK_TOL {
                        return Err(Error::Config(format!(
                            "baseline action {i} has constraint-side gap {} below the declared floor nu_l = {nu_l}",
                            q_opt - q_b
                        )));
                    }
                }
                if let Some(nu_h) = bounds.nu_h {
                    if q_opt - q_b > nu_h + CHECK_TOL {
                        return Err(Error::Config(format!(
                            "baseline action {i} has constraint-side gap {} above the declared cap nu_h = {nu_h}",
                            q_opt - q_b
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// True baseline reward for 1-based round t.
    pub fn r_b(&self, t: usize) -> f64 {
        self.model.expected_reward(self.baseline.action_at(t))
    }

    /// True baseline constraint value for 1-based round t.
    pub fn q_b(&self, t: usize) -> Result<f64> {
        self.model.expected_constraint(self.baseline.action_at(t))
    }

    /// Best expected reward over the whole action set.
    pub fn unconstrained_optimum(&self) -> f64 {
        self.actions
            .iter()
            .map(|x| self.model.expected_reward(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Score a played action against the true constraint for round t.
    /// Returns (violated, margin); the margin is how far inside the
    /// constraint the action sits (negative means outside).
    pub fn audit(&self, kind: ConstraintKind, x: &[f64], t: usize) -> Result<(bool, f64)> {
        let margin = match kind {
            ConstraintKind::RewardFloor => {
                self.model.expected_reward(x) - (1.0 - self.cfg.alpha) * self.r_b(t)
            }
            ConstraintKind::ConstraintFloor => {
                self.model.expected_constraint(x)? - (1.0 - self.cfg.alpha) * self.q_b(t)?
            }
            ConstraintKind::UpperCap => {
                let b = self.cfg.matrix_b.as_ref().ok_or(Error::SpecMismatch(
                    "capped-constraint audit needs the matrix B",
                ))?;
                let c = self.cfg.cap_c.ok_or(Error::SpecMismatch(
                    "capped-constraint audit needs the cap C",
                ))?;
                c - dot(&b.mat_vec(x), &self.model.theta_star)
            }
        };
        Ok((margin < -VIOLATION_TOL, margin))
    }

    /// Whether an action satisfies the true constraint for round t
    /// (boundary counts as satisfied, up to the violation tolerance).
    pub fn truly_safe(&self, kind: ConstraintKind, x: &[f64], t: usize) -> Result<bool> {
        Ok(!self.audit(kind, x, t)?.0)
    }

    /// The regret benchmark a policy is measured against: configured
    /// override first, then the variant's natural default. The capped
    /// variant competes against the best truly safe action (playing beyond
    /// the cap is not an option it is ever allowed); everything else
    /// competes against the unconstrained optimum.
    pub fn regret_definition(&self, variant: PolicyVariant) -> RegretDefinition {
        self.cfg.regret.unwrap_or(match variant {
            PolicyVariant::Sclucb2 => RegretDefinition::TrueSafe,
            _ => RegretDefinition::Unconstrained,
        })
    }

    /// Benchmark value per baseline index (cycling baselines change the
    /// floor, hence possibly the safe benchmark, with the round).
    pub fn optimal_values(
        &self,
        kind: ConstraintKind,
        def: RegretDefinition,
    ) -> Result<Vec<f64>> {
        let n = self.baseline.len();
        match def {
            RegretDefinition::Unconstrained => Ok(vec![self.unconstrained_optimum(); n]),
            RegretDefinition::TrueSafe => {
                let mut out = Vec::with_capacity(n);
                for idx in 0..n {
                    // Round number hitting baseline index idx (1-based).
                    let t = idx + 1;
                    let mut best = f64::NEG_INFINITY;
                    for x in self.actions.iter() {
                        if self.truly_safe(kind, x, t)? {
                            best = best.max(self.model.expected_reward(x));
                        }
                    }
                    if best == f64::NEG_INFINITY {
                        return Err(Error::UnsupportedRegime(format!(
                            "no action in the set satisfies the true constraint for baseline index {idx}"
                        )));
                    }
                    out.push(best);
                }
                Ok(out)
            }
        }
    }

    /// Safety slack at the best truly safe action: Δ = C − x⋆ᵀBθ⋆.
    pub fn true_safe_gap(&self) -> Result<f64> {
        let b = self.cfg.matrix_b.as_ref().ok_or(Error::SpecMismatch(
            "the safety gap is defined only for the capped constraint",
        ))?;
        let c = self.cfg.cap_c.ok_or(Error::SpecMismatch(
            "the safety gap is defined only for the capped constraint",
        ))?;
        let mut best_reward = f64::NEG_INFINITY;
        let mut best_load = f64::NAN;
        for x in self.actions.iter() {
            let load = dot(&b.mat_vec(x), &self.model.theta_star);
            if load <= c + VIOLATION_TOL {
                let r = self.model.expected_reward(x);
                if r > best_reward {
                    best_reward = r;
                    best_load = load;
                }
            }
        }
        if best_reward == f64::NEG_INFINITY {
            return Err(Error::UnsupportedRegime(
                "no action in the set satisfies the capped constraint".into(),
            ));
        }
        Ok(c - best_load)
    }

    /// Learner-visible configuration for one policy, with the capped
    /// variant's safety gap filled in from ground truth when absent.
    pub fn policy_config(&self, variant: PolicyVariant) -> Result<ProblemConfig> {
        let mut cfg = self.cfg.clone();
        if variant == PolicyVariant::Sclucb2 && cfg.delta_gap.is_none() {
            cfg.delta_gap = Some(self.true_safe_gap()?);
        }
        Ok(cfg)
    }

    /// Uniform draw from the unit sphere, the perturbation used by
    /// conservative blends. Its covariance is I/d.
    pub fn sample_unit_sphere(&self, rng: &mut ChaCha12Rng) -> Vec<f64> {
        sample_unit_sphere(rng, self.cfg.d)
    }
}

/// Uniform unit-sphere vector in d dimensions.
pub fn sample_unit_sphere(rng: &mut ChaCha12Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm2(&v);
        if n > 1e-9 {
            return v.iter().map(|x| x / n).collect();
        }
        // Astronomically unlikely; redraw keeps the distribution exact.
        let _: f64 = rng.gen();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn planar_file() -> InstanceFile {
        toml::from_str(
            r#"
            d = 2
            T = 1000
            theta_star = [0.5, 0.4]
            R = 0.1
            S = 1.0
            L = 1.0
            lambda = 1.0
            delta = 0.1
            alpha = 0.2
            gate_scale = 0.0

            [baseline]
            actions = [[0.6, 0.5]]

            [bounds]
            r_l = 0.4
            r_h = 0.5
            kappa_l = 0.0
            kappa_h = 0.25

            [action_set]
            kind = "ball-grid"
            n_grid = 64
            n_shell = 8
            "#,
        )
        .unwrap()
    }

    #[test]
    fn instance_loads_and_echoes() {
        let inst = Instance::from_file(planar_file()).unwrap();
        assert_eq!(inst.cfg.d, 2);
        assert_eq!(inst.horizon, Some(1000));
        assert_eq!(inst.actions.len(), 1 + 64 * 8);
        assert_eq!(inst.cfg.gate_scale, 0.0);
        assert_eq!(inst.echo["theta_star"][0], 0.5);
        assert_eq!(inst.echo["S"], 1.0);
        // Default constants fill in.
        assert!((inst.cfg.constants.p - 0.1586552539).abs() < 1e-9);
    }

    #[test]
    fn baseline_reward_and_unconstrained_optimum() {
        let inst = Instance::from_file(planar_file()).unwrap();
        assert_relative_eq!(inst.r_b(1), 0.5, epsilon = 1e-15);
        // Brute-force the optimum independently.
        let brute = inst
            .actions
            .iter()
            .map(|x| 0.5 * x[0] + 0.4 * x[1])
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(inst.unconstrained_optimum(), brute, epsilon = 1e-15);
        let theta_norm = (0.5f64 * 0.5 + 0.4 * 0.4).sqrt();
        assert!(inst.unconstrained_optimum() <= theta_norm + 1e-12);
        assert!(inst.unconstrained_optimum() > 0.98 * theta_norm, "grid should come close");
    }

    #[test]
    fn audit_reward_floor_oracle() {
        let inst = Instance::from_file(planar_file()).unwrap();
        // Played the baseline itself: margin 0.5 - 0.8*0.5 = 0.1.
        let (violated, margin) = inst.audit(ConstraintKind::RewardFloor, &[0.6, 0.5], 1).unwrap();
        assert!(!violated);
        assert_relative_eq!(margin, 0.1, epsilon = 1e-12);
        // The origin earns 0 < 0.4: a genuine violation.
        let (violated, margin) = inst.audit(ConstraintKind::RewardFloor, &[0.0, 0.0], 1).unwrap();
        assert!(violated);
        assert_relative_eq!(margin, -0.4, epsilon = 1e-12);
    }

    #[test]
    fn audit_boundary_is_not_a_violation() {
        let inst = Instance::from_file(planar_file()).unwrap();
        // An action earning exactly the floor 0.4 sits on the boundary.
        let x = [0.8, 0.0];
        let (violated, margin) = inst.audit(ConstraintKind::RewardFloor, &x, 1).unwrap();
        assert_relative_eq!(margin, 0.0, epsilon = 1e-12);
        assert!(!violated);
    }

    #[test]
    fn noiseless_feedback_is_exact_and_seeded_feedback_reproduces() {
        let mut file = planar_file();
        file.noise_scale = 0.0;
        let inst = Instance::from_file(file).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let (y, w) = inst.model.emit_feedback(&[0.6, 0.5], &mut rng);
        assert_relative_eq!(y, 0.5, epsilon = 1e-15);
        assert!(w.is_none());

        let noisy = Instance::from_file(planar_file()).unwrap();
        let mut r1 = ChaCha12Rng::seed_from_u64(9);
        let mut r2 = ChaCha12Rng::seed_from_u64(9);
        assert_eq!(
            noisy.model.emit_feedback(&[0.6, 0.5], &mut r1).0,
            noisy.model.emit_feedback(&[0.6, 0.5], &mut r2).0
        );
    }

    #[test]
    fn cycling_baseline_walks_its_list() {
        let stream = BaselineStream::new(
            BaselineMode::Cycle,
            vec![vec![0.6, 0.5], vec![0.5, 0.6]],
        )
        .unwrap();
        assert_eq!(stream.action_at(1), &[0.6, 0.5]);
        assert_eq!(stream.action_at(2), &[0.5, 0.6]);
        assert_eq!(stream.action_at(3), &[0.6, 0.5]);
        assert!(BaselineStream::new(BaselineMode::Fixed, vec![vec![0.0], vec![1.0]]).is_err());
        assert!(BaselineStream::new(BaselineMode::Cycle, vec![]).is_err());
    }

    #[test]
    fn validation_rejects_inconsistent_instances() {
        let mut file = planar_file();
        file.theta_star = vec![1.2, 0.9];
        assert!(Instance::from_file(file).is_err(), "theta_star norm above S");

        let mut file = planar_file();
        file.bounds.as_mut().unwrap().r_l = Some(0.6);
        assert!(Instance::from_file(file).is_err(), "true baseline reward below declared r_l");

        let mut file = planar_file();
        file.matrix_b = Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(Instance::from_file(file).is_err(), "B without C");

        let mut file = planar_file();
        file.baseline.actions = vec![vec![1.2, 0.0]];
        assert!(Instance::from_file(file).is_err(), "baseline outside the ball");
    }

    #[test]
    fn capped_instance_gap_and_benchmark() {
        let mut file = planar_file();
        // Odd angle count: with 64 angles the vertical grid point loads the
        // cap exactly and the safe gap collapses to zero.
        file.action_set.n_grid = Some(63);
        file.matrix_b = Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        file.cap_c = Some(0.4);
        file.baseline.actions = vec![vec![0.0, 0.0]];
        file.bounds = None;
        let inst = Instance::from_file(file).unwrap();
        let gap = inst.true_safe_gap().unwrap();
        assert!(gap > 0.0, "grid quantization leaves slack below the cap");
        assert!(gap < 0.4);
        // The safe benchmark sits essentially at the cap.
        let opts = inst.optimal_values(ConstraintKind::UpperCap, RegretDefinition::TrueSafe).unwrap();
        assert_eq!(opts.len(), 1);
        assert_relative_eq!(opts[0], 0.4 - gap, epsilon = 1e-12);
        assert!(opts[0] <= 0.4 + 1e-12);
        // The capped policy defaults to the safe benchmark; others do not.
        assert_eq!(inst.regret_definition(PolicyVariant::Sclucb2), RegretDefinition::TrueSafe);
        assert_eq!(inst.regret_definition(PolicyVariant::Sclts), RegretDefinition::Unconstrained);
        // Learner config for the capped policy picks up the gap.
        let cfg = inst.policy_config(PolicyVariant::Sclucb2).unwrap();
        assert_relative_eq!(cfg.delta_gap.unwrap(), gap, epsilon = 1e-15);
    }

    #[test]
    fn unit_sphere_samples_are_unit_norm() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for d in [1usize, 2, 5, 16] {
            for _ in 0..50 {
                let z = sample_unit_sphere(&mut rng, d);
                assert_eq!(z.len(), d);
                assert_relative_eq!(norm2(&z), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn unit_sphere_covariance_is_identity_over_d() {
        // Second moment of a uniform sphere vector is I/d; check the first
        // coordinate's variance at d = 2 with a generous Monte Carlo band.
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let n = 20_000;
        let mut sum_sq = 0.0;
        let mut sum_cross = 0.0;
        for _ in 0..n {
            let z = sample_unit_sphere(&mut rng, 2);
            sum_sq += z[0] * z[0];
            sum_cross += z[0] * z[1];
        }
        assert!((sum_sq / n as f64 - 0.5).abs() < 0.01);
        assert!((sum_cross / n as f64).abs() < 0.01);
    }
}
