use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capped_cg::CappedCgError;
use crate::config::ConfigError;
use crate::geometry::GeometryError;
use crate::problem::OracleCounts;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    ConvergedEps1o,
    ConvergedEps2o,
    IterLimit,
    TimeLimit,
    LineSearchFailure,
}

impl Status {
    pub fn is_converged(self) -> bool {
        matches!(self, Status::ConvergedEps1o | Status::ConvergedEps2o)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::ConvergedEps1o => "converged_eps1o",
            Status::ConvergedEps2o => "converged_eps2o",
            Status::IterLimit => "iter_limit",
            Status::TimeLimit => "time_limit",
            Status::LineSearchFailure => "line_search_failure",
        }
    }
}

/// The kind of step accepted at an outer iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepKind {
    /// Projected steepest-descent step (PNCG branch (a) and the pgrad baseline).
    GradProj,
    NewtonCgSol,
    NewtonCgNc,
    MeoNc,
    /// Scaled two-metric projection step.
    TwoMetric,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::GradProj => "grad_proj",
            StepKind::NewtonCgSol => "newton_cg_sol",
            StepKind::NewtonCgNc => "newton_cg_nc",
            StepKind::MeoNc => "meo_nc",
            StepKind::TwoMetric => "two_metric",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounts {
    pub grad_proj: usize,
    pub newton_cg_sol: usize,
    pub newton_cg_nc: usize,
    pub meo_nc: usize,
    pub two_metric: usize,
}

impl StepCounts {
    pub fn record(&mut self, kind: StepKind) {
        match kind {
            StepKind::GradProj => self.grad_proj += 1,
            StepKind::NewtonCgSol => self.newton_cg_sol += 1,
            StepKind::NewtonCgNc => self.newton_cg_nc += 1,
            StepKind::MeoNc => self.meo_nc += 1,
            StepKind::TwoMetric => self.two_metric += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.grad_proj + self.newton_cg_sol + self.newton_cg_nc + self.meo_nc + self.two_metric
    }
}

/// One accepted step. `f`, `residual` and `projnorm` describe the iterate
/// the step produced; `elapsed` is wall time since the solve started.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub f: f64,
    pub step_type: StepKind,
    pub alpha: f64,
    pub dir_norm: f64,
    pub elapsed: f64,
    pub residual: f64,
    pub projnorm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub status: Status,
    pub x_final: Vec<f64>,
    pub f_initial: f64,
    pub f_final: f64,
    pub residual: f64,
    pub projnorm: f64,
    pub outer_iters: usize,
    pub step_counts: StepCounts,
    pub oracle_counts: OracleCounts,
    pub meo_calls: usize,
    pub elapsed: f64,
    pub trace: Vec<IterationRecord>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("oracle returned a non-finite {what} at iteration {k}")]
    NonFinite { what: &'static str, k: usize },
    #[error("capped CG failed at iteration {k}: {source}")]
    CappedCg {
        k: usize,
        #[source]
        source: CappedCgError,
    },
}

/// Bookkeeping shared by the outer loops: timing, trace and step counts.
pub(crate) struct RunLog {
    start: std::time::Instant,
    pub trace: Vec<IterationRecord>,
    pub counts: StepCounts,
    pub warnings: Vec<String>,
}

impl RunLog {
    pub fn start() -> Self {
        Self {
            start: std::time::Instant::now(),
            trace: Vec::new(),
            counts: StepCounts::default(),
            warnings: Vec::new(),
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub fn push(&mut self, k: usize, f: f64, step_type: StepKind, alpha: f64, dir_norm: f64) {
        self.counts.record(step_type);
        let elapsed = self.elapsed();
        self.trace.push(IterationRecord {
            k,
            f,
            step_type,
            alpha,
            dir_norm,
            elapsed,
            residual: f64::NAN,
            projnorm: f64::NAN,
        });
    }

    /// Stationarity measures of the latest iterate, known once its gradient
    /// has been evaluated.
    pub fn fill_last(&mut self, residual: f64, projnorm: f64) {
        if let Some(rec) = self.trace.last_mut() {
            if rec.residual.is_nan() {
                rec.residual = residual;
                rec.projnorm = projnorm;
            }
        }
    }

    /// Returns the limit status that applies at iteration `k`, if any.
    pub fn limit_hit(&self, k: usize, max_iters: usize, max_seconds: f64) -> Option<Status> {
        if k >= max_iters {
            Some(Status::IterLimit)
        } else if self.elapsed() > max_seconds {
            Some(Status::TimeLimit)
        } else {
            None
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn finish(
        self,
        status: Status,
        x_final: Vec<f64>,
        f_initial: f64,
        f_final: f64,
        residual: f64,
        projnorm: f64,
        oracle_counts: OracleCounts,
        meo_calls: usize,
    ) -> SolverReport {
        SolverReport {
            status,
            outer_iters: self.trace.len(),
            elapsed: self.elapsed(),
            x_final,
            f_initial,
            f_final,
            residual,
            projnorm,
            step_counts: self.counts,
            oracle_counts,
            meo_calls,
            trace: self.trace,
            warnings: self.warnings,
        }
    }
}

/// Checks dimensions and returns a feasible starting point, projecting `x0`
/// (with a warning) when it violates the bounds.
pub(crate) fn feasible_start(
    x0: &[f64],
    dim: usize,
    bounds: &crate::geometry::BoundSpec,
    log: &mut RunLog,
) -> Result<Vec<f64>, SolveError> {
    if x0.len() != dim {
        return Err(SolveError::DimensionMismatch {
            expected: dim,
            got: x0.len(),
        });
    }
    if bounds.dim() != dim {
        return Err(SolveError::DimensionMismatch {
            expected: dim,
            got: bounds.dim(),
        });
    }
    if !crate::linalg::all_finite(x0) {
        return Err(SolveError::NonFinite {
            what: "starting point",
            k: 0,
        });
    }
    if bounds.is_feasible(x0) {
        Ok(x0.to_vec())
    } else {
        log.warnings
            .push("initial point was infeasible and has been projected".to_string());
        Ok(crate::geometry::project(x0, bounds))
    }
}
