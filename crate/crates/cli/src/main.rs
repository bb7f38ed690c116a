//! Command-line driver: seeded experiment batches, parameter sweeps,
//! policy comparisons, closed-form bound reports, and the self-check suite.
//!
//! Exit codes: 0 on success, 2 for configuration problems (bad flags,
//! unreadable or invalid instance files, unsupported policy/parameter
//! combinations), 3 for numerical failures during a run, 4 when the
//! verification suite ran but at least one check failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use stagewise_core::environment::Instance;
use stagewise_core::harness::{
    aggregate, bound_report, run_many, run_suite, seed_range, write_rounds_csv,
    write_summary_json, RunLog, Summary,
};
use stagewise_core::policies::PolicyVariant;
use stagewise_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "stagewise",
    version,
    about = "Simulator for stage-wise conservative linear bandits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy over a batch of seeds and write logs and a summary.
    Run {
        /// Instance description (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Policy name: sclts, sclucb, sclts-bf, sclts2, sclucb2, lts, lucb.
        #[arg(long)]
        policy: String,
        /// Horizon in rounds; falls back to the instance's `horizon` field.
        #[arg(long = "T")]
        horizon: Option<usize>,
        /// Number of seeds (0, 1, ..., n-1).
        #[arg(long)]
        seeds: usize,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Write only this format; both when omitted.
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Re-run one policy across several values of a scalar parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: String,
        /// Swept parameter; `alpha` is the one that exists.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 0.05,0.1,0.2,0.3.
        #[arg(long)]
        values: String,
        #[arg(long = "T")]
        horizon: Option<usize>,
        #[arg(long)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several policies on the same instance and matched seeds.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated policy names, e.g. sclts,sclucb.
        #[arg(long)]
        policies: String,
        #[arg(long = "T")]
        horizon: Option<usize>,
        #[arg(long)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the closed-form bound report for a policy on an instance.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: String,
        #[arg(long = "T")]
        horizon: Option<usize>,
    },
    /// Run the self-check suite; exits 4 if any check fails.
    Verify {
        #[arg(long, default_value = "lemmas")]
        suite: String,
        /// Size of the simulation batch behind the statistical checks.
        #[arg(long, default_value_t = 200)]
        seeds: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { config, policy, horizon, seeds, out, format } => {
            run_command(&config, &policy, horizon, seeds, &out, format)
        }
        Command::Sweep { config, policy, param, values, horizon, seeds, out } => {
            sweep_command(&config, &policy, &param, &values, horizon, seeds, &out)
        }
        Command::Compare { config, policies, horizon, seeds, out } => {
            compare_command(&config, &policies, horizon, seeds, &out)
        }
        Command::Bounds { config, policy, horizon } => bounds_command(&config, &policy, horizon),
        Command::Verify { suite, seeds } => verify_command(&suite, seeds),
    }
}

fn resolve_horizon(flag: Option<usize>, instance: &Instance) -> Result<usize> {
    flag.or(instance.horizon).ok_or_else(|| {
        Error::Config("no horizon: pass --T or set `horizon` in the instance file".into())
    })
}

fn require_seeds(seeds: usize) -> Result<Vec<u64>> {
    if seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    Ok(seed_range(0, seeds))
}

fn ensure_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.to_path_buf(), source: e })
}

fn one_line(summary: &Summary) -> String {
    format!(
        "{}: {} runs x {} rounds, mean final regret {:.4}, mean conservative rounds {:.2}, violating runs {:.4}, uncovered runs {:.4}",
        summary.policy,
        summary.n_runs,
        summary.horizon,
        summary.final_mean_regret(),
        summary.final_mean_ntc(),
        summary.violation_run_fraction,
        summary.ellipsoid_failure_fraction,
    )
}

/// Bound report when the policy admits one; unconstrained baselines do not.
fn optional_bounds(
    variant: PolicyVariant,
    instance: &Instance,
    horizon: usize,
) -> Result<Option<stagewise_core::BoundReport>> {
    if !variant.is_constrained() {
        return Ok(None);
    }
    let cfg = instance.policy_config(variant)?;
    bound_report(variant, &cfg, horizon).map(Some)
}

fn write_outputs(
    out: &Path,
    stem: &str,
    logs: &[RunLog],
    summary: &Summary,
    instance: &Instance,
    bounds: Option<&stagewise_core::BoundReport>,
    format: Option<OutputFormat>,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if format != Some(OutputFormat::Json) {
        let path = out.join(format!("{stem}.csv"));
        write_rounds_csv(&path, logs)?;
        written.push(path);
    }
    if format != Some(OutputFormat::Csv) {
        let path = out.join(format!("{stem}_summary.json"));
        write_summary_json(&path, summary, &instance.echo, bounds)?;
        written.push(path);
    }
    Ok(written)
}

fn run_command(
    config: &Path,
    policy: &str,
    horizon: Option<usize>,
    seeds: usize,
    out: &Path,
    format: Option<OutputFormat>,
) -> Result<ExitCode> {
    let variant = PolicyVariant::parse(policy)?;
    let instance = Instance::from_toml_path(config)?;
    let horizon = resolve_horizon(horizon, &instance)?;
    let seed_list = require_seeds(seeds)?;
    ensure_dir(out)?;

    let logs = run_many(&instance, variant, horizon, &seed_list)?;
    let summary = aggregate(&logs)?;
    let bounds = optional_bounds(variant, &instance, horizon)?;
    let written = write_outputs(out, "rounds", &logs, &summary, &instance, bounds.as_ref(), format)?;

    println!("{}", one_line(&summary));
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep_command(
    config: &Path,
    policy: &str,
    param: &str,
    values: &str,
    horizon: Option<usize>,
    seeds: usize,
    out: &Path,
) -> Result<ExitCode> {
    if param != "alpha" {
        return Err(Error::Config(format!(
            "unsupported sweep parameter {param:?}; `alpha` is the one that exists"
        )));
    }
    let variant = PolicyVariant::parse(policy)?;
    let parsed: Result<Vec<f64>> = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad sweep value {v:?}")))
        })
        .collect();
    let parsed = parsed?;
    if parsed.is_empty() {
        return Err(Error::Config("--values must list at least one number".into()));
    }
    let seed_list = require_seeds(seeds)?;
    ensure_dir(out)?;

    for value in parsed {
        let mut file = Instance::load_file(config)?;
        file.alpha = value;
        let instance = Instance::from_file(file)?;
        let horizon = resolve_horizon(horizon, &instance)?;
        let logs = run_many(&instance, variant, horizon, &seed_list)?;
        let summary = aggregate(&logs)?;
        let bounds = optional_bounds(variant, &instance, horizon)?;
        let path = out.join(format!("sweep_alpha_{value}_summary.json"));
        write_summary_json(&path, &summary, &instance.echo, bounds.as_ref())?;
        println!("alpha={value} {}", one_line(&summary));
        println!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn compare_command(
    config: &Path,
    policies: &str,
    horizon: Option<usize>,
    seeds: usize,
    out: &Path,
) -> Result<ExitCode> {
    let variants: Result<Vec<PolicyVariant>> =
        policies.split(',').map(|p| PolicyVariant::parse(p.trim())).collect();
    let variants = variants?;
    if variants.is_empty() {
        return Err(Error::Config("--policies must list at least one policy".into()));
    }
    let instance = Instance::from_toml_path(config)?;
    let horizon = resolve_horizon(horizon, &instance)?;
    let seed_list = require_seeds(seeds)?;
    ensure_dir(out)?;

    let mut combined: Vec<RunLog> = Vec::new();
    for &variant in &variants {
        let logs = run_many(&instance, variant, horizon, &seed_list)?;
        let summary = aggregate(&logs)?;
        let bounds = optional_bounds(variant, &instance, horizon)?;
        let path = out.join(format!("{variant}_summary.json"));
        write_summary_json(&path, &summary, &instance.echo, bounds.as_ref())?;
        println!("{}", one_line(&summary));
        println!("wrote {}", path.display());
        combined.extend(logs);
    }
    let path = out.join("rounds.csv");
    write_rounds_csv(&path, &combined)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn bounds_command(config: &Path, policy: &str, horizon: Option<usize>) -> Result<ExitCode> {
    let variant = PolicyVariant::parse(policy)?;
    let instance = Instance::from_toml_path(config)?;
    let horizon = resolve_horizon(horizon, &instance)?;
    let cfg = instance.policy_config(variant)?;
    let report = bound_report(variant, &cfg, horizon)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{text}");
    Ok(ExitCode::SUCCESS)
}

fn verify_command(suite: &str, seeds: usize) -> Result<ExitCode> {
    let results = run_suite(suite, seeds)?;
    let mut failed = 0usize;
    for r in &results {
        let mark = if r.passed { "PASS" } else { "FAIL" };
        println!("[{mark}] {}: {}", r.name, r.details);
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        eprintln!("{failed} of {} checks failed", results.len());
        return Ok(ExitCode::from(4));
    }
    println!("all {} checks passed", results.len());
    Ok(ExitCode::SUCCESS)
}
