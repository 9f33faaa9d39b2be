//! Small dense-vector helpers and the linear-operator abstraction used by the
//! inner solvers.

use nalgebra::{DMatrix, SymmetricEigen};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// A symmetric linear map applied matrix-free.
///
/// `apply` takes `&mut self` so implementations can keep scratch buffers.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&mut self, v: &[f64], out: &mut [f64]);
}

/// Dense symmetric matrix wrapped as an operator. Mostly for tests and
/// small quadratic problems.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    pub matrix: DMatrix<f64>,
    pub applications: usize,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "operator must be square");
        Self {
            matrix,
            applications: 0,
        }
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&mut self, v: &[f64], out: &mut [f64]) {
        self.applications += 1;
        let n = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let mut acc = 0.0;
            for (j, vj) in v.iter().enumerate() {
                acc += self.matrix[(i, j)] * vj;
            }
            *o = acc;
        }
    }
}

impl<F> LinearOperator for (usize, F)
where
    F: FnMut(&[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&mut self, v: &[f64], out: &mut [f64]) {
        (self.1)(v, out)
    }
}

/// Smallest eigenvalue of the symmetric part of a dense matrix.
pub fn symmetric_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Spectral norm of a dense symmetric matrix.
pub fn symmetric_norm(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_operator_matches_matrix_product() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let mut op = DenseOperator::new(m);
        let mut out = [0.0; 2];
        op.apply(&[1.0, -1.0], &mut out);
        assert_eq!(out, [1.0, -2.0]);
        assert_eq!(op.applications, 1);
    }

    #[test]
    fn min_eigenvalue_of_diag() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -1.5, 2.0]));
        assert!((symmetric_min_eigenvalue(&m) + 1.5).abs() < 1e-14);
        assert!((symmetric_norm(&m) - 3.0).abs() < 1e-14);
    }
}
