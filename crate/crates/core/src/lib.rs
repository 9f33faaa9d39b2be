//! Matrix-free solvers for bound-constrained, possibly nonconvex, minimization
//!
//! ```text
//! min f(x)   subject to   0 <= x[i] <= u[i],  i in I
//! ```
//!
//! Two outer solvers are provided:
//!
//! * [`two_metric::solve`]: scaled two-metric gradient projection, which
//!   finds approximate first-order points in `O(eps^-2)` iterations.
//! * [`pncg::solve`]: projected Newton-CG, combining gradient projection
//!   steps on near-active variables, Capped-CG steps on the free variables,
//!   and a randomized Lanczos minimum-eigenvalue oracle that certifies
//!   approximate second-order stationarity.
//!
//! Objectives only need to supply values, gradients and Hessian-vector
//! products through the [`Objective`] trait. The [`nmf`] module instantiates
//! the interface for nonnegative matrix factorization and also contains a
//! plain projected-gradient baseline ([`pgrad`]).

pub mod capped_cg;
pub mod config;
pub mod geometry;
pub mod linalg;
pub mod meo;
pub mod nmf;
pub mod pgrad;
pub mod pncg;
pub mod problem;
pub mod quadratic;
pub mod report;
pub mod two_metric;

pub use config::{validate_config, ConfigError, SolverConfig};
pub use geometry::{BoundSpec, BoundsError, DiagScaling, GeometryError, IndexPartition};
pub use problem::{finite_diff_check, FnObjective, Objective, OracleCounts, OracleCounter};
pub use report::{IterationRecord, SolveError, SolverReport, Status, StepCounts, StepKind};
