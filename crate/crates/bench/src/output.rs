use std::fs::{self, File};
use std::path::Path;

use boundopt::nmf::write_matrix_csv;
use boundopt::{IterationRecord, OracleCounts, SolverReport, StepCounts};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::CliError;

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(CliError::io(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(CliError::io(path))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = toml::to_string(value).map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_text(path, &text)
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<(), CliError> {
    let file = File::create(path).map_err(CliError::io(path))?;
    write_matrix_csv(m, file).map_err(|source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `x` as a single-column matrix CSV.
pub fn write_vector(path: &Path, x: &[f64]) -> Result<(), CliError> {
    write_matrix(path, &DMatrix::from_column_slice(x.len(), 1, x))
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    let file = File::create(path).map_err(CliError::io(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_failure(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row).map_err(csv_failure(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

#[derive(Serialize)]
struct TraceRow {
    k: usize,
    f: f64,
    residual: f64,
    projnorm: f64,
    step_type: &'static str,
    alpha: f64,
    dir_norm: f64,
    elapsed: f64,
}

/// Iteration trace with the starting point as row `k = 0` and accepted
/// step `j` as row `k = j + 1`.
pub fn write_trace(path: &Path, report: &SolverReport, initial: (f64, f64)) -> Result<(), CliError> {
    let start = TraceRow {
        k: 0,
        f: report.f_initial,
        residual: initial.0,
        projnorm: initial.1,
        step_type: "start",
        alpha: 0.0,
        dir_norm: 0.0,
        elapsed: 0.0,
    };
    let rows: Vec<TraceRow> = std::iter::once(start)
        .chain(report.trace.iter().map(|r: &IterationRecord| TraceRow {
            k: r.k + 1,
            f: r.f,
            residual: r.residual,
            projnorm: r.projnorm,
            step_type: r.step_type.as_str(),
            alpha: r.alpha,
            dir_norm: r.dir_norm,
            elapsed: r.elapsed,
        }))
        .collect();
    write_rows(path, &rows)
}

/// Report fields worth keeping next to a run's trace.
#[derive(Serialize)]
pub struct ReportSummary<'a> {
    pub solver: &'a str,
    pub status: &'static str,
    pub outer_iters: usize,
    pub f_initial: f64,
    pub f_final: f64,
    pub residual: f64,
    pub projnorm: f64,
    pub elapsed: f64,
    pub meo_calls: usize,
    pub first_meo_step: Option<usize>,
    pub warnings: &'a [String],
    pub step_counts: StepCounts,
    pub oracle_counts: OracleCounts,
}

impl<'a> ReportSummary<'a> {
    pub fn new(solver: &'a str, r: &'a SolverReport) -> Self {
        Self {
            solver,
            status: r.status.as_str(),
            outer_iters: r.outer_iters,
            f_initial: r.f_initial,
            f_final: r.f_final,
            residual: r.residual,
            projnorm: r.projnorm,
            elapsed: r.elapsed,
            meo_calls: r.meo_calls,
            first_meo_step: r
                .trace
                .iter()
                .position(|t| t.step_type == boundopt::StepKind::MeoNc),
            warnings: &r.warnings,
            step_counts: r.step_counts,
            oracle_counts: r.oracle_counts,
        }
    }
}
