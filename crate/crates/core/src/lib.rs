//! Stage-wise conservative linear stochastic bandits: policies that must
//! keep every single round's expected performance above a baseline-derived
//! floor (or below a cap) while they learn, a ground-truth environment that
//! audits them, and a seeded Monte Carlo harness with closed-form bound
//! reports and a self-check suite.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: dense symmetric linear algebra and the regularized
//!   least-squares gram state shared by every policy.
//! - [`config`]: problem parameters and validation.
//! - [`estimation`]: least-squares centers and confidence ellipsoids.
//! - [`action_space`]: action sets, certified safe sets, and the
//!   conservative mixtures.
//! - [`policies`]: the decision rules themselves.
//! - [`environment`]: the true model, baselines, audits, and instance
//!   loading.
//! - [`harness`]: seeded experiment loops, aggregation, bounds, export,
//!   and the verification suite.

#![forbid(unsafe_code)]

pub mod action_space;
pub mod config;
pub mod environment;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod policies;

pub use action_space::{ActionSet, ConstraintVariant, SafeSetSpec};
pub use config::{BaselineBounds, BoundConstants, ProblemConfig, RegretDefinition};
pub use environment::{BaselineMode, BaselineStream, ConstraintKind, Instance, InstanceFile, TrueModel};
pub use error::{Error, Result};
pub use estimation::ConfidenceEllipsoid;
pub use harness::{
    aggregate, bound_report, regret_decomposition, run_experiment, run_many, run_suite,
    BoundReport, CheckResult, RunLog, Summary,
};
pub use policies::{Decision, PolicyState, PolicyVariant, RoundContext, Tag};
