//! Nonnegative matrix factorization `min ½||WY - V||²  s.t. W, Y >= 0`.
//!
//! The variable vector packs `vec(W)` (column-major, `m x r`) followed by
//! `vec(Y)` (column-major, `r x n`), and every entry is constrained to be
//! nonnegative.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal};
use thiserror::Error;

use crate::geometry::{projected_gradient_norm, BoundSpec};
use crate::problem::Objective;

#[derive(Debug, Error)]
pub enum NmfError {
    #[error("dimensions must be positive (m={m}, n={n}, r={r})")]
    InvalidDimensions { m: usize, n: usize, r: usize },
    #[error("packed vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("rank-1 solve stopped at projected-gradient norm {projnorm:e} (target {target:e})")]
    Rank1SolveFailed { projnorm: f64, target: f64 },
    #[error("saddle check failed: projected-gradient norm {saddle:e} exceeds 10 x {rank1:e}")]
    SaddleCheckFailed { saddle: f64, rank1: f64 },
}

/// An NMF instance: data matrix `V` and inner rank `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct NmfProblem {
    pub v: DMatrix<f64>,
    pub r: usize,
}

impl NmfProblem {
    pub fn new(v: DMatrix<f64>, r: usize) -> Result<Self, NmfError> {
        if v.nrows() == 0 || v.ncols() == 0 || r == 0 {
            return Err(NmfError::InvalidDimensions {
                m: v.nrows(),
                n: v.ncols(),
                r,
            });
        }
        Ok(Self { v, r })
    }

    pub fn m(&self) -> usize {
        self.v.nrows()
    }

    pub fn n(&self) -> usize {
        self.v.ncols()
    }

    pub fn bounds(&self) -> BoundSpec {
        BoundSpec::nonnegative(self.dim())
    }

    pub fn pack(&self, w: &DMatrix<f64>, y: &DMatrix<f64>) -> Vec<f64> {
        assert_eq!(w.shape(), (self.m(), self.r));
        assert_eq!(y.shape(), (self.r, self.n()));
        let mut x = Vec::with_capacity(self.dim());
        x.extend_from_slice(w.as_slice());
        x.extend_from_slice(y.as_slice());
        x
    }

    pub fn unpack(&self, x: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>), NmfError> {
        if x.len() != self.dim() {
            return Err(NmfError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.split(x))
    }

    fn split(&self, x: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let mr = self.m() * self.r;
        (
            DMatrix::from_column_slice(self.m(), self.r, &x[..mr]),
            DMatrix::from_column_slice(self.r, self.n(), &x[mr..]),
        )
    }

    fn residual_matrix(&self, w: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
        w * y - &self.v
    }
}

impl Objective for NmfProblem {
    fn dim(&self) -> usize {
        self.r * (self.m() + self.n())
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (w, y) = self.split(x);
        0.5 * self.residual_matrix(&w, &y).norm_squared()
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let (w, y) = self.split(x);
        let r = self.residual_matrix(&w, &y);
        let gw = &r * y.transpose();
        let gy = w.transpose() * &r;
        let mr = gw.len();
        grad[..mr].copy_from_slice(gw.as_slice());
        grad[mr..].copy_from_slice(gy.as_slice());
    }

    fn hessian_vec(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let (w, y) = self.split(x);
        let (dw, dy) = self.split(v);
        let r = self.residual_matrix(&w, &y);
        let a = &dw * &y + &w * &dy;
        let hw = &a * y.transpose() + &r * dy.transpose();
        let hy = w.transpose() * &a + dw.transpose() * &r;
        let mr = hw.len();
        out[..mr].copy_from_slice(hw.as_slice());
        out[mr..].copy_from_slice(hy.as_slice());
    }
}

/// Synthetic instance together with its planted factors.
#[derive(Clone, Debug)]
pub struct SyntheticNmf {
    pub problem: NmfProblem,
    pub w_true: DMatrix<f64>,
    pub y_true: DMatrix<f64>,
    pub zero_fraction_w: f64,
    pub zero_fraction_y: f64,
}

fn half_normal_sparse<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let drop = Bernoulli::new(0.6).expect("valid probability");
    DMatrix::from_fn(rows, cols, |_, _| {
        let value: f64 = StandardNormal.sample(rng);
        if drop.sample(rng) {
            0.0
        } else {
            value.abs()
        }
    })
}

fn zero_fraction(m: &DMatrix<f64>) -> f64 {
    m.iter().filter(|v| **v == 0.0).count() as f64 / m.len() as f64
}

fn mean_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).sum::<f64>() / m.len() as f64
}

/// Generates `V = W̄Ȳ + E` with half-normal factors of which about 60% of
/// the entries are zeroed, Gaussian noise at 5% of the mean magnitude of
/// `W̄Ȳ`, and `V` rescaled to mean absolute value 1.
pub fn gen_synthetic(m: usize, n: usize, r: usize, seed: u64) -> Result<SyntheticNmf, NmfError> {
    if m == 0 || n == 0 || r == 0 {
        return Err(NmfError::InvalidDimensions { m, n, r });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_true = half_normal_sparse(m, r, &mut rng);
    let y_true = half_normal_sparse(r, n, &mut rng);
    let clean = &w_true * &y_true;
    let sd = 0.05 * mean_abs(&clean);
    let mut v = clean;
    if sd > 0.0 {
        let noise = Normal::new(0.0, sd).expect("positive standard deviation");
        for e in v.iter_mut() {
            *e += noise.sample(&mut rng);
        }
    }
    let scale = mean_abs(&v);
    if scale > 0.0 {
        v /= scale;
    }
    Ok(SyntheticNmf {
        zero_fraction_w: zero_fraction(&w_true),
        zero_fraction_y: zero_fraction(&y_true),
        problem: NmfProblem::new(v, r)?,
        w_true,
        y_true,
    })
}

/// Half-normal starting factors, each block rescaled separately to mean
/// absolute value 1, packed into a single vector.
pub fn initial_point(problem: &NmfProblem, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut block = |rows: usize, cols: usize| {
        let mut b = DMatrix::from_fn(rows, cols, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v.abs()
        });
        let s = mean_abs(&b);
        if s > 0.0 {
            b /= s;
        }
        b
    };
    let w = block(problem.m(), problem.r);
    let y = block(problem.r, problem.n());
    problem.pack(&w, &y)
}

/// Rank-`r` first-order stationary point built from a rank-1 one.
#[derive(Clone, Debug)]
pub struct SaddlePoint {
    pub x0: Vec<f64>,
    pub w_rank1: Vec<f64>,
    pub y_rank1: Vec<f64>,
    pub rank1_projnorm: f64,
    pub saddle_projnorm: f64,
    pub rank1_iters: usize,
}

const RANK1_MAX_SWEEPS: usize = 100_000;

/// Rank-1 NMF by exact alternating minimization: each half-sweep solves
/// its separable nonnegative least-squares subproblem in closed form.
/// Returns `(w, y, projnorm, sweeps)`.
fn rank1_alternating(v: &DMatrix<f64>, start: &[f64], tol: f64) -> (DMatrix<f64>, DMatrix<f64>, f64, usize) {
    let (m, n) = v.shape();
    let problem = NmfProblem {
        v: v.clone(),
        r: 1,
    };
    let bounds = problem.bounds();
    let mut w = DMatrix::from_column_slice(m, 1, &start[..m]);
    let mut y = DMatrix::from_column_slice(1, n, &start[m..]);
    let mut x = start.to_vec();
    let mut g = vec![0.0; m + n];
    let mut pn = f64::INFINITY;
    for sweep in 0..RANK1_MAX_SWEEPS {
        problem.gradient(&x, &mut g);
        pn = projected_gradient_norm(&x, &g, &bounds);
        if pn <= tol {
            return (w, y, pn, sweep);
        }
        let wn = w.norm_squared();
        if wn > 0.0 {
            y = (w.transpose() * v).map(|e| e.max(0.0) / wn);
        }
        let yn = y.norm_squared();
        if yn > 0.0 {
            w = (v * y.transpose()).map(|e| e.max(0.0) / yn);
        }
        // Balance the factors; the product and stationarity are unchanged.
        let (nw, ny) = (w.norm(), y.norm());
        if nw > 0.0 && ny > 0.0 {
            let c = (ny / nw).sqrt();
            w *= c;
            y /= c;
        }
        x[..m].copy_from_slice(w.as_slice());
        x[m..].copy_from_slice(y.as_slice());
    }
    (w, y, pn, RANK1_MAX_SWEEPS)
}

/// Solves the rank-1 problem on `v` to `||∇ᴾF|| <= rank1_tol`, then
/// replicates the factors into `W = (2/r) w 1ᵀ`, `Y = ½ 1 y`, which keeps
/// `WY = wy` and is stationary for rank `r`.
pub fn build_saddle(
    v: &DMatrix<f64>,
    r_target: usize,
    seed: u64,
    rank1_tol: f64,
) -> Result<SaddlePoint, NmfError> {
    let rank1 = NmfProblem::new(v.clone(), 1)?;
    let start = initial_point(&rank1, seed);
    let (w, y, rank1_projnorm, rank1_iters) = rank1_alternating(v, &start, rank1_tol);
    if !(rank1_projnorm <= rank1_tol) {
        return Err(NmfError::Rank1SolveFailed {
            projnorm: rank1_projnorm,
            target: rank1_tol,
        });
    }
    let target = NmfProblem::new(v.clone(), r_target)?;
    let a = 2.0 / r_target as f64;
    let w0 = DMatrix::from_fn(target.m(), r_target, |i, _| a * w[(i, 0)]);
    let y0 = DMatrix::from_fn(r_target, target.n(), |_, j| 0.5 * y[(0, j)]);
    let x0 = target.pack(&w0, &y0);

    let mut g = vec![0.0; x0.len()];
    target.gradient(&x0, &mut g);
    let saddle_projnorm = projected_gradient_norm(&x0, &g, &target.bounds());
    if saddle_projnorm > 10.0 * rank1_projnorm {
        return Err(NmfError::SaddleCheckFailed {
            saddle: saddle_projnorm,
            rank1: rank1_projnorm,
        });
    }
    Ok(SaddlePoint {
        x0,
        w_rank1: w.as_slice().to_vec(),
        y_rank1: y.as_slice().to_vec(),
        rank1_projnorm,
        saddle_projnorm,
        rank1_iters,
    })
}

#[derive(Debug, Error)]
pub enum MatrixCsvError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
}

/// Writes a matrix as CSV: a `rows=R,cols=C` header followed by one line per
/// row. Values use the shortest decimal form that round-trips.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, out: W) -> Result<(), MatrixCsvError> {
    let mut wtr = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let map = |e: csv::Error| MatrixCsvError::Io(std::io::Error::other(e));
    wtr.write_record([format!("rows={}", m.nrows()), format!("cols={}", m.ncols())])
        .map_err(map)?;
    for i in 0..m.nrows() {
        wtr.write_record(m.row(i).iter().map(|v| v.to_string()))
            .map_err(map)?;
    }
    wtr.flush()?;
    Ok(())
}

fn parse_header_field(field: Option<&str>, key: &str, line: u64) -> Result<usize, MatrixCsvError> {
    field
        .and_then(|f| f.trim().strip_prefix(key))
        .and_then(|f| f.strip_prefix('='))
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| MatrixCsvError::Parse {
            line,
            message: format!("expected `{key}=<count>` in header"),
        })
}

/// Reads a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv<R: Read>(input: R) -> Result<DMatrix<f64>, MatrixCsvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = rdr.records();
    let to_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => MatrixCsvError::Io(io),
            other => MatrixCsvError::Parse {
                line,
                message: format!("{other:?}"),
            },
        }
    };
    let header = records
        .next()
        .ok_or(MatrixCsvError::Parse {
            line: 1,
            message: "empty file".into(),
        })?
        .map_err(to_err)?;
    let rows = parse_header_field(header.get(0), "rows", 1)?;
    let cols = parse_header_field(header.get(1), "cols", 1)?;
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0usize;
    for rec in records {
        let rec = rec.map_err(to_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if seen == rows {
            return Err(MatrixCsvError::Parse {
                line,
                message: format!("more than {rows} data rows"),
            });
        }
        if rec.len() != cols {
            return Err(MatrixCsvError::Parse {
                line,
                message: format!("expected {cols} values, found {}", rec.len()),
            });
        }
        for field in rec.iter() {
            let v: f64 = field.trim().parse().map_err(|_| MatrixCsvError::Parse {
                line,
                message: format!("invalid number `{field}`"),
            })?;
            data.push(v);
        }
        seen += 1;
    }
    if seen != rows {
        return Err(MatrixCsvError::Parse {
            line: seen as u64 + 1,
            message: format!("expected {rows} data rows, found {seen}"),
        });
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::finite_diff_check;

    #[test]
    fn exact_factorization_has_zero_gradient() {
        let w = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let y = DMatrix::from_row_slice(1, 3, &[0.5, 1.0, 3.0]);
        let prob = NmfProblem::new(&w * &y, 1).unwrap();
        let x = prob.pack(&w, &y);
        assert_eq!(prob.value(&x), 0.0);
        let mut g = vec![1.0; prob.dim()];
        prob.gradient(&x, &mut g);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_case_matches_calculus() {
        let prob = NmfProblem::new(DMatrix::from_element(1, 1, 3.0), 1).unwrap();
        let (w, y) = (2.0, 0.5);
        let x = [w, y];
        assert_eq!(prob.value(&x), 0.5 * (w * y - 3.0_f64).powi(2));
        let mut g = [0.0; 2];
        prob.gradient(&x, &mut g);
        assert_eq!(g, [(w * y - 3.0) * y, (w * y - 3.0) * w]);
        let (dw, dy) = (0.7, -1.3);
        let mut h = [0.0; 2];
        prob.hessian_vec(&x, &[dw, dy], &mut h);
        let expect_w = (dw * y + w * dy) * y + (w * y - 3.0) * dy;
        assert!((h[0] - expect_w).abs() < 1e-15);
    }

    #[test]
    fn oracle_passes_finite_differences() {
        let data = gen_synthetic(12, 9, 3, 11).unwrap();
        let x = initial_point(&data.problem, 5);
        let err = finite_diff_check(&data.problem, &x, 10, 1e-5, 3);
        assert!(err <= 1e-6, "err = {err}");
    }

    #[test]
    fn hvp_is_symmetric() {
        let data = gen_synthetic(7, 5, 2, 2).unwrap();
        let p = &data.problem;
        let x = initial_point(p, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut ha = vec![0.0; p.dim()];
        let mut hb = vec![0.0; p.dim()];
        p.hessian_vec(&x, &a, &mut ha);
        p.hessian_vec(&x, &b, &mut hb);
        let l: f64 = b.iter().zip(&ha).map(|(u, v)| u * v).sum();
        let r: f64 = a.iter().zip(&hb).map(|(u, v)| u * v).sum();
        assert!((l - r).abs() <= 1e-10 * l.abs().max(r.abs()));
    }

    #[test]
    fn synthetic_data_statistics() {
        let d = gen_synthetic(150, 100, 15, 1).unwrap();
        assert!((mean_abs(&d.problem.v) - 1.0).abs() < 1e-12);
        let big = gen_synthetic(1000, 10, 10, 4).unwrap();
        assert!((0.55..=0.65).contains(&big.zero_fraction_w));
        let again = gen_synthetic(150, 100, 15, 1).unwrap();
        assert_eq!(d.problem.v, again.problem.v);
        assert!(matches!(
            gen_synthetic(0, 3, 1, 0),
            Err(NmfError::InvalidDimensions { .. })
        ));
    }

    #[test]
    fn initial_blocks_have_unit_mean() {
        let d = gen_synthetic(20, 10, 4, 3).unwrap();
        let x = initial_point(&d.problem, 8);
        let (w, y) = d.problem.unpack(&x).unwrap();
        assert!((mean_abs(&w) - 1.0).abs() < 1e-12);
        assert!((mean_abs(&y) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn saddle_construction_is_stationary() {
        let d = gen_synthetic(30, 20, 4, 6).unwrap();
        let s = build_saddle(&d.problem.v, 10, 1, 1e-10).unwrap();
        assert!(s.saddle_projnorm <= 10.0 * s.rank1_projnorm);
        let target = NmfProblem::new(d.problem.v.clone(), 10).unwrap();
        let rank1 = NmfProblem::new(d.problem.v.clone(), 1).unwrap();
        let mut x1 = s.w_rank1.clone();
        x1.extend_from_slice(&s.y_rank1);
        assert!((target.value(&s.x0) - rank1.value(&x1)).abs() < 1e-10 * rank1.value(&x1));
        let again = build_saddle(&d.problem.v, 10, 1, 1e-10).unwrap();
        assert_eq!(s.x0, again.x0);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -2.5, 0.1, 1e-300, 3.0, 7.0 / 3.0]);
        let mut buf = Vec::new();
        write_matrix_csv(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("rows=2,cols=3\n"));
        assert_eq!(read_matrix_csv(&buf[..]).unwrap(), m);

        let bad = "rows=2,cols=2\n1,2\n3,x\n";
        match read_matrix_csv(bad.as_bytes()) {
            Err(MatrixCsvError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let short = "rows=2,cols=2\n1,2\n3\n";
        match read_matrix_csv(short.as_bytes()) {
            Err(MatrixCsvError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_matrix_csv("cols=2\n".as_bytes()).is_err());
    }
}
