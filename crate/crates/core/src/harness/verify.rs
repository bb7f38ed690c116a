//! Self-check suite: every load-bearing inequality in the library, re-derived
//! independently and tested against fresh simulation.
//!
//! Each check either re-implements a computation from first principles
//! (brute-force argmax, Gauss-Jordan inversion, explicit quadratic roots) or
//! tests a probabilistic guarantee empirically with a three-sigma binomial
//! allowance on top of the guaranteed level. A failed check returns a
//! `CheckResult` with `passed: false`; infrastructure problems (a run that
//! cannot execute at all) surface as errors instead.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::action_space::{
    conservative_action, max_rho, scan, ActionSet, ConstraintVariant, Objective, SafeSetSpec,
};
use crate::environment::{sample_unit_sphere, ConstraintKind, Instance, InstanceFile};
use crate::error::{Error, Result};
use crate::estimation::ConfidenceEllipsoid;
use crate::harness::bounds::{azuma_envelope, regret_decomposition, sigma_zeta, solve_quadratic_bound};
use crate::harness::runner::{run_many, seed_range, RunLog};
use crate::linalg::{dot, norm2, Channel, GramState, SpdMatrix};
use crate::policies::{PolicyState, PolicyVariant, RoundContext, Tag};

/// Outcome of one named check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, details: String) -> Self {
        CheckResult { name, passed, details }
    }
}

/// Run a named suite. `seeds` sets the size of the simulation batch behind
/// the statistical checks; the deterministic checks ignore it.
pub fn run_suite(suite: &str, seeds: usize) -> Result<Vec<CheckResult>> {
    match suite {
        "lemmas" => lemma_suite(seeds),
        other => Err(Error::Config(format!(
            "unknown suite {other:?}; the available suite is \"lemmas\""
        ))),
    }
}

fn lemma_suite(seeds: usize) -> Result<Vec<CheckResult>> {
    if seeds == 0 {
        return Err(Error::Config("the suite needs at least one seed".into()));
    }
    let mut out = Vec::new();
    out.push(safe_argmax_brute()?);
    out.push(sherman_morrison_drift()?);
    out.push(mixing_safety()?);
    out.push(quadratic_boundary()?);

    let instance = shared_instance()?;
    let logs = run_many(&instance, PolicyVariant::Sclts, 400, &seed_range(0, seeds))?;
    out.push(confidence_coverage(&instance, &logs));
    out.push(gram_growth_tail(&instance, &logs)?);
    out.push(regret_split(&instance, &logs)?);
    out.push(conservative_matrix_tail(&instance, &logs)?);
    out.push(optimism_frequency()?);
    Ok(out)
}

/// The instance behind the statistical checks: the standard two-dimensional
/// problem on a coarse grid, switching on feasibility alone.
fn shared_instance() -> Result<Instance> {
    let file: InstanceFile = toml::from_str(
        r#"
        d = 2
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
        r_l = 0.5
        r_h = 1.0
        kappa_l = 0.0
        kappa_h = 0.2

        [action_set]
        kind = "ball-grid"
        n_grid = 32
        n_shell = 4
        "#,
    )
    .expect("embedded instance parses");
    Instance::from_file(file)
}

/// Plain Gauss-Jordan inverse, kept local so the checks that need an
/// independent inverse do not lean on the code under test.
fn gauss_jordan_inverse(m: &SpdMatrix) -> Result<Vec<Vec<f64>>> {
    let d = m.dim();
    let mut a: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| m.at(i, j)).collect()).collect();
    let mut inv: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty range");
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::Degenerate("matrix is numerically singular".into()));
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let scale = a[col][col];
        for j in 0..d {
            a[col][j] /= scale;
            inv[col][j] /= scale;
        }
        for i in 0..d {
            if i == col {
                continue;
            }
            let factor = a[i][col];
            for j in 0..d {
                a[i][j] -= factor * a[col][j];
                inv[i][j] -= factor * inv[col][j];
            }
        }
    }
    Ok(inv)
}

fn quadform_rows(m: &[Vec<f64>], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            acc += x[i] * v * x[j];
        }
    }
    acc
}

fn ball_point(rng: &mut ChaCha12Rng, d: usize, l: f64) -> Vec<f64> {
    // Gaussian direction with a radius that is uniform in volume.
    let dir = sample_unit_sphere(rng, d);
    let r = l * rng.gen::<f64>().powf(1.0 / d as f64);
    dir.into_iter().map(|c| c * r).collect()
}

/// The certified-argmax scan against a from-scratch reimplementation on
/// random finite instances: same safety rule, same objective, own loops.
fn safe_argmax_brute() -> Result<CheckResult> {
    let mut rng = ChaCha12Rng::seed_from_u64(7777);
    let trials = 1000;
    let mut mismatches = 0usize;
    let mut worst = String::new();
    for trial in 0..trials {
        let d = 2 + rng.gen_range(0..2usize);
        let k = rng.gen_range(1..=40usize);
        let actions: Vec<Vec<f64>> = (0..k).map(|_| ball_point(&mut rng, d, 1.0)).collect();
        let set = ActionSet::finite(&actions, 1.0)?;
        let mut gram = GramState::new(d, 1.0, false)?;
        for _ in 0..rng.gen_range(0..30usize) {
            let x = ball_point(&mut rng, d, 1.0);
            gram.update(&x, rng.gen_range(-1.0..1.0), None)?;
        }
        let center = ball_point(&mut rng, d, 1.0);
        let radius = rng.gen_range(0.05..2.0);
        let ellipsoid = ConfidenceEllipsoid {
            center: center.clone(),
            gram: &gram,
            radius,
            risk: 0.05,
        };
        let baseline = ball_point(&mut rng, d, 1.0);
        let alpha = rng.gen_range(0.05..0.95);
        let baseline_value = rng.gen_range(0.1..0.9);
        let spec = SafeSetSpec {
            variant: ConstraintVariant::KnownReward,
            ellipsoid: &ellipsoid,
            baseline_action: &baseline,
            baseline_value: Some(baseline_value),
            alpha,
            matrix_b: None,
            cap_c: None,
        };
        let weights = ball_point(&mut rng, d, 1.0);
        let use_ucb = trial % 2 == 1;
        let objective = if use_ucb {
            Objective::Ucb(&ellipsoid)
        } else {
            Objective::Linear(&weights)
        };
        let got = scan(&set, Some(&spec), objective)?;

        // Reference pass with its own inverse and its own maximization.
        let v_inv = gauss_jordan_inverse(gram.v())?;
        let mut want_index: Option<usize> = None;
        let mut want_value = f64::NEG_INFINITY;
        let mut want_count = 0usize;
        for (i, x) in actions.iter().enumerate() {
            let pess = dot(x, &center) - radius * quadform_rows(&v_inv, x).max(0.0).sqrt();
            if pess < (1.0 - alpha) * baseline_value {
                continue;
            }
            want_count += 1;
            let value = if use_ucb {
                dot(x, &center) + radius * quadform_rows(&v_inv, x).max(0.0).sqrt()
            } else {
                dot(x, &weights)
            };
            if value > want_value {
                want_value = value;
                want_index = Some(i);
            }
        }
        let value_ok = match (got.best_index, want_index) {
            (None, None) => true,
            (Some(_), Some(_)) => (got.best_value - want_value).abs() <= 1e-9,
            _ => false,
        };
        if got.best_index != want_index || got.safe_count != want_count || !value_ok {
            mismatches += 1;
            if worst.is_empty() {
                worst = format!(
                    " first mismatch at trial {trial}: scan ({:?}, {:.6}, {}) vs reference ({:?}, {:.6}, {})",
                    got.best_index, got.best_value, got.safe_count, want_index, want_value, want_count
                );
            }
        }
    }
    Ok(CheckResult::new(
        "safe_argmax_brute",
        mismatches == 0,
        format!("{trials} random finite instances, {mismatches} mismatches{worst}"),
    ))
}

/// Rank-one inverse maintenance against a fresh Gauss-Jordan inverse after
/// thousands of updates.
fn sherman_morrison_drift() -> Result<CheckResult> {
    let mut rng = ChaCha12Rng::seed_from_u64(4242);
    let d = 4;
    let mut gram = GramState::new(d, 0.7, false)?;
    for _ in 0..3000 {
        let x = ball_point(&mut rng, d, 1.0);
        gram.update(&x, rng.gen_range(-1.0..1.0), None)?;
    }
    let reference = gauss_jordan_inverse(gram.v())?;
    let mut max_err = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            max_err = max_err.max((gram.v_inv().at(i, j) - reference[i][j]).abs());
        }
    }
    Ok(CheckResult::new(
        "sherman_morrison_drift",
        max_err <= 1e-8,
        format!("max inverse drift {max_err:.3e} after 3000 rank-one updates (tolerance 1e-8)"),
    ))
}

/// Unconditional safety of the conservative mixtures: the baseline blend
/// under the reward floor and the origin retreat under the cap, over many
/// perturbation draws, checked against the true parameter.
fn mixing_safety() -> Result<CheckResult> {
    let instance = shared_instance()?;
    let cfg = &instance.cfg;
    let theta = &instance.model.theta_star;
    let x_b = instance.baseline.action_at(1);
    let r_b = instance.r_b(1);
    let rho = max_rho(ConstraintVariant::KnownReward, cfg)?;

    let mut rng = ChaCha12Rng::seed_from_u64(99);
    let mut min_margin = f64::INFINITY;
    for _ in 0..10_000 {
        let zeta = sample_unit_sphere(&mut rng, cfg.d);
        let blend = conservative_action(x_b, rho, rho, &zeta)?;
        let margin = dot(&blend, theta) - (1.0 - cfg.alpha) * r_b;
        min_margin = min_margin.min(margin);
    }

    // Capped variant: pure retreat rho * zeta with rho = C / (norm(B) S).
    let capped = capped_instance()?;
    let ccfg = capped.policy_config(PolicyVariant::Sclucb2)?;
    let crho = max_rho(ConstraintVariant::UpperBound, &ccfg)?;
    let mut min_cap_margin = f64::INFINITY;
    for _ in 0..10_000 {
        let zeta = sample_unit_sphere(&mut rng, ccfg.d);
        let retreat: Vec<f64> = zeta.iter().map(|z| crho * z).collect();
        let (_, margin) = capped.audit(ConstraintKind::UpperCap, &retreat, 1)?;
        min_cap_margin = min_cap_margin.min(margin);
    }

    let passed = min_margin >= -1e-12 && min_cap_margin >= -1e-12;
    Ok(CheckResult::new(
        "mixing_safety",
        passed,
        format!(
            "worst blend margin {min_margin:.6e}, worst retreat margin {min_cap_margin:.6e} over 10000 draws each"
        ),
    ))
}

fn capped_instance() -> Result<Instance> {
    let file: InstanceFile = toml::from_str(
        r#"
        d = 2
        theta_star = [0.5, 0.4]
        R = 0.1
        S = 1.0
        L = 1.0
        lambda = 1.0
        delta = 0.1
        alpha = 0.2
        gate_scale = 0.0
        B = [[1.0, 0.0], [0.0, 1.0]]
        C = 0.4

        [baseline]
        actions = [[0.0, 0.0]]

        [action_set]
        kind = "ball-grid"
        n_grid = 32
        n_shell = 4
        "#,
    )
    .expect("embedded instance parses");
    Instance::from_file(file)
}

/// The closed-form root of `a x - sqrt(b x) = c` against direct numeric
/// evaluation of the inequality on random triples.
fn quadratic_boundary() -> Result<CheckResult> {
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    let mut worst_residual = 0.0f64;
    let mut grid_failures = 0usize;
    for _ in 0..100 {
        let a = rng.gen_range(0.05..4.0);
        let b = rng.gen_range(0.0..5.0);
        let c = rng.gen_range(0.05..4.0);
        let x = solve_quadratic_bound(a, b, c)?;
        let f = |v: f64| a * v - (b * v).sqrt();
        worst_residual = worst_residual.max((f(x) - c).abs() / (1.0 + c));
        for k in 0..50 {
            let v = x * k as f64 / 50.0;
            if f(v) >= c + 1e-9 {
                grid_failures += 1;
            }
        }
        if f(x * 1.001) <= c {
            grid_failures += 1;
        }
    }
    let passed = worst_residual <= 1e-7 && grid_failures == 0;
    Ok(CheckResult::new(
        "quadratic_boundary",
        passed,
        format!(
            "100 random triples: worst boundary residual {worst_residual:.3e}, {grid_failures} interior/exterior misclassifications"
        ),
    ))
}

/// Fraction of runs whose confidence set ever missed the true parameter,
/// against the configured risk plus binomial slack.
fn confidence_coverage(instance: &Instance, logs: &[RunLog]) -> CheckResult {
    let n = logs.len();
    let failures = logs.iter().filter(|l| l.summary.ellipsoid_ever_violated).count();
    let fraction = failures as f64 / n as f64;
    let delta = instance.cfg.risk;
    let threshold = delta + 3.0 * (delta * (1.0 - delta) / n as f64).sqrt();
    CheckResult::new(
        "confidence_coverage",
        fraction <= threshold,
        format!("{failures}/{n} runs ever uncovered ({fraction:.4}); allowed {threshold:.4}"),
    )
}

/// Gram-matrix growth from conservative rounds: the final smallest
/// eigenvalue against the high-probability floor
/// `rho^2 sigma^2 m - sqrt(8 m h^2 log(d/delta))`.
fn gram_growth_tail(instance: &Instance, logs: &[RunLog]) -> Result<CheckResult> {
    let cfg = &instance.cfg;
    let rho = max_rho(ConstraintVariant::KnownReward, cfg)?;
    let h = azuma_envelope(PolicyVariant::Sclts, cfg)?;
    let sig = sigma_zeta(cfg.d);
    let delta = cfg.risk;
    let log_term = (cfg.d as f64 / delta).ln();

    let mut failures = 0usize;
    let mut floors = Vec::with_capacity(logs.len());
    for log in logs {
        let mut gram = GramState::new(cfg.d, cfg.regularizer, false)?;
        for r in &log.records {
            gram.update(&r.action, 0.0, None)?;
        }
        let lambda_min = crate::linalg::min_eigenvalue(gram.v())?;
        let m = log.summary.n_conservative as f64;
        let floor = rho * rho * sig * sig * m - (8.0 * m * h * h * log_term).sqrt();
        floors.push(floor);
        if lambda_min < floor {
            failures += 1;
        }
    }
    let n = logs.len();
    let fraction = failures as f64 / n as f64;
    let threshold = delta + 3.0 * (delta * (1.0 - delta) / n as f64).sqrt();
    let max_floor = floors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(CheckResult::new(
        "gram_growth_tail",
        fraction <= threshold,
        format!(
            "{failures}/{n} runs below the eigenvalue floor ({fraction:.4}); allowed {threshold:.4}; largest floor {max_floor:.4}"
        ),
    ))
}

/// The two-term regret split holds on every run: realized total regret
/// never exceeds realized optimistic regret plus the counted conservative
/// allowance.
fn regret_split(instance: &Instance, logs: &[RunLog]) -> Result<CheckResult> {
    let mut worst_slack = f64::INFINITY;
    for log in logs {
        let (term1, term2) = regret_decomposition(log, instance)?;
        worst_slack = worst_slack.min(term1 + term2 - log.summary.final_regret);
    }
    Ok(CheckResult::new(
        "regret_split",
        worst_slack >= -1e-9,
        format!(
            "decomposition covered every run; smallest slack {worst_slack:.6} over {} runs",
            logs.len()
        ),
    ))
}

/// Tail of the centered conservative-round matrix sum against
/// `d exp(-tau^2 / (8 m h^2))`, with the perturbations recovered from the
/// logged actions.
fn conservative_matrix_tail(instance: &Instance, logs: &[RunLog]) -> Result<CheckResult> {
    let cfg = &instance.cfg;
    let d = cfg.d;
    let rho = max_rho(ConstraintVariant::KnownReward, cfg)?;
    let h = azuma_envelope(PolicyVariant::Sclts, cfg)?;
    let x_b = instance.baseline.action_at(1);

    let m = logs
        .iter()
        .map(|l| l.summary.n_conservative)
        .min()
        .expect("nonempty batch");
    if m == 0 {
        return Ok(CheckResult::new(
            "conservative_matrix_tail",
            true,
            "no conservative rounds in some run; nothing to test".into(),
        ));
    }

    let mut maxima = Vec::with_capacity(logs.len());
    for log in logs {
        let mut sum = vec![vec![0.0; d]; d];
        let mut taken = 0usize;
        for r in &log.records {
            if r.tag != Tag::Conservative {
                continue;
            }
            // Invert the mixture to recover the unit perturbation.
            let zeta: Vec<f64> = r
                .action
                .iter()
                .zip(x_b)
                .map(|(a, b)| (a - (1.0 - rho) * b) / rho)
                .collect();
            let len = norm2(&zeta);
            if (len - 1.0).abs() > 1e-6 {
                return Err(Error::Contract(format!(
                    "recovered perturbation has norm {len}, expected 1"
                )));
            }
            for i in 0..d {
                for j in 0..d {
                    let centered = zeta[i] * zeta[j] - f64::from(u8::from(i == j)) / d as f64;
                    sum[i][j] += -rho * (1.0 - rho) * (x_b[i] * zeta[j] + zeta[i] * x_b[j])
                        + rho * rho * centered;
                }
            }
            taken += 1;
            if taken == m {
                break;
            }
        }
        let sym = SpdMatrix::from_rows(&sum)?;
        let (eigs, _) = sym.eigen()?;
        maxima.push(*eigs.last().expect("d >= 1"));
    }

    let n = logs.len() as f64;
    let base = (8.0 * m as f64 * h * h).sqrt();
    let mut failures = Vec::new();
    let mut reported = Vec::new();
    for k in 1..=6 {
        let tau = 0.5 * k as f64 * base;
        let bound = (d as f64 * (-tau * tau / (8.0 * m as f64 * h * h)).exp()).min(1.0);
        let p_hat = maxima.iter().filter(|&&v| v >= tau).count() as f64 / n;
        let allowed = bound + 3.0 * (bound / n).sqrt() + 1e-12;
        reported.push(format!("tau={tau:.3}: {p_hat:.4} <= {allowed:.4}"));
        if p_hat > allowed {
            failures.push(tau);
        }
    }
    Ok(CheckResult::new(
        "conservative_matrix_tail",
        failures.is_empty(),
        format!(
            "m={m} conservative rounds per run; {}{}",
            reported.join(", "),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; exceeded at tau {failures:?}")
            }
        ),
    ))
}

/// How often the sampled parameter is optimistic about the true optimum
/// when the true optimum is certified safe. The sampler is built to make
/// this frequent; anything below one in ten would starve the optimistic
/// rounds and break the regret argument.
fn optimism_frequency() -> Result<CheckResult> {
    let file: InstanceFile = toml::from_str(
        r#"
        d = 2
        theta_star = [0.5, 0.4]
        R = 0.01
        S = 1.0
        L = 1.0
        lambda = 1.0
        delta = 0.1
        alpha = 0.2
        gate_scale = 0.0

        [baseline]
        actions = [[0.6, 0.5]]

        [bounds]
        r_l = 0.5
        r_h = 1.0
        kappa_l = 0.0
        kappa_h = 0.2

        [action_set]
        kind = "ball-grid"
        n_grid = 32
        n_shell = 4
        "#,
    )
    .expect("embedded instance parses");
    let instance = Instance::from_file(file)?;
    let horizon = 400usize;

    // True optimum over the grid, certified per round against the same
    // safety rule the policy uses.
    let mut x_star: &[f64] = instance.actions.action(0);
    let mut best = f64::NEG_INFINITY;
    for x in instance.actions.iter() {
        let r = instance.model.expected_reward(x);
        if r > best {
            best = r;
            x_star = x;
        }
    }
    let star_value = best;

    let mut qualifying = 0usize;
    let mut optimistic = 0usize;
    for seed in 0..3u64 {
        let cfg = instance.policy_config(PolicyVariant::Sclts)?;
        let mut policy = PolicyState::new(PolicyVariant::Sclts, cfg, horizon, seed)?;
        let mut noise_rng = ChaCha12Rng::seed_from_u64(seed);
        noise_rng.set_stream(1);
        let mut zeta_rng = ChaCha12Rng::seed_from_u64(seed);
        zeta_rng.set_stream(3);
        for t in 1..=horizon {
            let zeta = sample_unit_sphere(&mut zeta_rng, instance.cfg.d);
            let ctx = RoundContext {
                baseline_action: instance.baseline.action_at(t),
                baseline_reward: Some(instance.r_b(t)),
                baseline_constraint: None,
                zeta: &zeta,
            };
            let decision = policy.decide(&instance.actions, &ctx)?;
            if decision.tag == Tag::SafeOptimistic {
                let ellipsoid = policy.ellipsoid(Channel::Reward)?;
                let spec = SafeSetSpec {
                    variant: ConstraintVariant::KnownReward,
                    ellipsoid: &ellipsoid,
                    baseline_action: ctx.baseline_action,
                    baseline_value: Some(instance.r_b(t)),
                    alpha: instance.cfg.alpha,
                    matrix_b: None,
                    cap_c: None,
                };
                if spec.is_safe(x_star)? {
                    qualifying += 1;
                    let tilde = decision
                        .diagnostics
                        .theta_tilde
                        .as_ref()
                        .expect("sampling policy exposes its draw");
                    if dot(&decision.action, tilde) >= star_value - 1e-12 {
                        optimistic += 1;
                    }
                }
            }
            let (y, w) = instance.model.emit_feedback(&decision.action, &mut noise_rng);
            policy.observe(&decision.action, y, w)?;
        }
    }

    if qualifying < 50 {
        return Ok(CheckResult::new(
            "optimism_frequency",
            false,
            format!("only {qualifying} rounds had the optimum certified; too few to measure"),
        ));
    }
    let fraction = optimistic as f64 / qualifying as f64;
    Ok(CheckResult::new(
        "optimism_frequency",
        fraction >= 0.10,
        format!(
            "{optimistic}/{qualifying} certified rounds were optimistic about the optimum ({fraction:.3}); requires 0.10"
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_and_zero_seeds_are_config_errors() {
        assert!(matches!(run_suite("nope", 10), Err(Error::Config(_))));
        assert!(matches!(run_suite("lemmas", 0), Err(Error::Config(_))));
    }

    #[test]
    fn lemma_suite_passes_on_a_small_batch() {
        let results = run_suite("lemmas", 40).unwrap();
        assert_eq!(results.len(), 9);
        let names: Vec<&str> = results.iter().map(|r| r.name).collect();
        assert_eq!(
            names,
            vec![
                "safe_argmax_brute",
                "sherman_morrison_drift",
                "mixing_safety",
                "quadratic_boundary",
                "confidence_coverage",
                "gram_growth_tail",
                "regret_split",
                "conservative_matrix_tail",
                "optimism_frequency",
            ]
        );
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.details);
            assert!(!r.details.is_empty());
        }
    }
}
