//! Flat-file output: one CSV row per round across a batch of runs, and a
//! JSON summary per batch.
//!
//! The CSV schema is stable, one `action_i` column per coordinate:
//!
//! ```text
//! run_id,t,policy,action_0..action_{d-1},y,expected_reward,tag,beta_t,
//! lambda_min,gate_k,safe_set_size,violation,margin,cum_regret,n_conservative
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! read-back reproduces the run records bit for bit. The one lossy field is
//! the run-level ellipsoid flag, which has no per-round column; reading a
//! CSV back yields logs with that flag cleared.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::harness::aggregate::Summary;
use crate::harness::bounds::BoundReport;
use crate::harness::runner::{RoundRecord, RunLog, RunSummary};
use crate::policies::{PolicyVariant, Tag};

/// Column names for dimension `d`.
pub fn csv_header(d: usize) -> String {
    let mut h = String::from("run_id,t,policy");
    for i in 0..d {
        write!(h, ",action_{i}").unwrap();
    }
    h.push_str(
        ",y,expected_reward,tag,beta_t,lambda_min,gate_k,safe_set_size,violation,margin,cum_regret,n_conservative",
    );
    h
}

/// Serialize a batch of runs to one CSV file.
pub fn write_rounds_csv(path: &Path, logs: &[RunLog]) -> Result<()> {
    let first = logs
        .first()
        .ok_or_else(|| Error::Aggregation("no runs to export".into()))?;
    let d = first
        .records
        .first()
        .map(|r| r.action.len())
        .ok_or_else(|| Error::Aggregation("runs have zero rounds".into()))?;
    let mut out = csv_header(d);
    out.push('\n');
    for log in logs {
        for r in &log.records {
            write!(out, "{},{},{}", log.run_id, r.t, log.policy).unwrap();
            for a in &r.action {
                write!(out, ",{a}").unwrap();
            }
            writeln!(
                out,
                ",{},{},{},{},{},{},{},{},{},{},{}",
                r.y,
                r.expected_reward,
                r.tag.as_str(),
                r.beta,
                r.lambda_min,
                r.gate,
                r.safe_set_size,
                r.violation,
                r.margin,
                r.cum_regret,
                r.n_conservative
            )
            .unwrap();
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a rounds CSV back into per-run logs, grouped by `(policy, run_id)`
/// in order of first appearance. The run-level ellipsoid flag is not
/// representable per round and comes back cleared.
pub fn read_rounds_csv(path: &Path) -> Result<Vec<RunLog>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let d = header.split(',').filter(|c| c.starts_with("action_")).count();
    if d == 0 || header != csv_header(d) {
        return Err(parse_err(path, 1, "unrecognized header"));
    }

    let mut logs: Vec<RunLog> = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 + d {
            return Err(parse_err(
                path,
                lineno,
                &format!("expected {} fields, found {}", 14 + d, fields.len()),
            ));
        }
        let mut k = 0usize;
        let mut next = || {
            let f = fields[k];
            k += 1;
            f
        };
        let run_id: u64 = num(path, lineno, next())?;
        let t: usize = num(path, lineno, next())?;
        let policy = PolicyVariant::parse(next())
            .map_err(|e| parse_err(path, lineno, &e.to_string()))?;
        let mut action = Vec::with_capacity(d);
        for _ in 0..d {
            action.push(num::<f64>(path, lineno, next())?);
        }
        let record = RoundRecord {
            t,
            action,
            y: num(path, lineno, next())?,
            expected_reward: num(path, lineno, next())?,
            tag: Tag::parse(next()).map_err(|e| parse_err(path, lineno, &e.to_string()))?,
            beta: num(path, lineno, next())?,
            lambda_min: num(path, lineno, next())?,
            gate: num(path, lineno, next())?,
            safe_set_size: num(path, lineno, next())?,
            violation: parse_bool(path, lineno, next())?,
            margin: num(path, lineno, next())?,
            cum_regret: num(path, lineno, next())?,
            n_conservative: num(path, lineno, next())?,
        };

        // A run is keyed by (policy, run_id): comparison files interleave
        // several policies over the same seed list.
        match logs.last_mut() {
            Some(last) if last.run_id == run_id && last.policy == policy => {
                last.records.push(record);
            }
            _ => {
                if logs.iter().any(|l| l.run_id == run_id && l.policy == policy) {
                    return Err(parse_err(path, lineno, "run rows are not contiguous"));
                }
                logs.push(RunLog {
                    run_id,
                    policy,
                    records: vec![record],
                    summary: RunSummary {
                        final_regret: 0.0,
                        n_optimistic: 0,
                        n_conservative: 0,
                        any_violation: false,
                        ellipsoid_ever_violated: false,
                    },
                });
            }
        }
    }
    if logs.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    for log in &mut logs {
        let last = log.records.last().expect("grouped rows are nonempty");
        log.summary = RunSummary {
            final_regret: last.cum_regret,
            n_optimistic: log.records.len() - last.n_conservative,
            n_conservative: last.n_conservative,
            any_violation: log.records.iter().any(|r| r.violation),
            ellipsoid_ever_violated: false,
        };
    }
    Ok(logs)
}

/// The batch summary as a JSON value with a fixed key set.
pub fn summary_json_value(
    summary: &Summary,
    config_echo: &Value,
    bounds: Option<&BoundReport>,
) -> Value {
    json!({
        "config_echo": config_echo,
        "n_runs": summary.n_runs,
        "T": summary.horizon,
        "mean_regret": summary.mean_regret,
        "std_regret": summary.std_regret,
        "mean_ntc": summary.mean_ntc,
        "violation_run_fraction": summary.violation_run_fraction,
        "ellipsoid_failure_fraction": summary.ellipsoid_failure_fraction,
        "bounds": match bounds {
            Some(b) => serde_json::to_value(b).expect("report serializes"),
            None => json!({}),
        },
    })
}

/// Write the batch summary JSON (pretty-printed, trailing newline).
pub fn write_summary_json(
    path: &Path,
    summary: &Summary,
    config_echo: &Value,
    bounds: Option<&BoundReport>,
) -> Result<()> {
    let value = summary_json_value(summary, config_echo, bounds);
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn num<T: std::str::FromStr>(path: &Path, lineno: usize, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| parse_err(path, lineno, &format!("bad numeric field {field:?}")))
}

fn parse_bool(path: &Path, lineno: usize, field: &str) -> Result<bool> {
    match field {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(parse_err(path, lineno, &format!("bad boolean field {field:?}"))),
    }
}

fn parse_err(path: &Path, lineno: usize, message: &str) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: format!("line {lineno}: {message}"),
    }
}
