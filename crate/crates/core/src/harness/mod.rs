//! Monte Carlo harness: seeded runs, cross-run aggregation, closed-form
//! bounds, flat-file export, and the self-check suite.

pub mod aggregate;
pub mod bounds;
pub mod export;
pub mod runner;
pub mod verify;

pub use aggregate::{aggregate, Summary};
pub use bounds::{
    bound_report, gamma, ntc_theoretical_bound, regret_decomposition, solve_quadratic_bound,
    term1_theoretical_bound, BoundReport, NtcBound,
};
pub use export::{csv_header, read_rounds_csv, write_rounds_csv, write_summary_json};
pub use runner::{run_experiment, run_many, seed_range, RoundRecord, RunLog, RunSummary};
pub use verify::{run_suite, CheckResult};
