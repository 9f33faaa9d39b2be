//! Minimum eigenvalue oracle via randomized Lanczos.
//!
//! Starting from a uniformly random unit vector, Lanczos with full
//! reorthogonalization builds a Krylov basis one product at a time. As soon
//! as the tridiagonal projection has an eigenvalue at or below `-eps/2` the
//! matching Ritz vector is returned; if the iteration budget runs out first,
//! `λ_min(H) >= -eps` is certified with failure probability at most `delta`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{axpy, dot, norm, scale, LinearOperator};

#[derive(Clone, Debug, PartialEq)]
pub enum MeoOutcome {
    Certificate,
    NegativeCurvature { lambda: f64, v: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeoResult {
    pub outcome: MeoOutcome,
    pub lanczos_iters: usize,
    /// Iteration budget that was in force.
    pub budget: usize,
    /// Norm bound used in the budget formula.
    pub norm_bound: f64,
    /// Total operator applications, including norm estimation and the final
    /// validation product.
    pub hvps: usize,
    /// `max |q_iᵀ q_j|` over distinct basis vectors, computed for small bases.
    pub orthogonality_loss: Option<f64>,
}

impl MeoResult {
    pub fn is_certificate(&self) -> bool {
        matches!(self.outcome, MeoOutcome::Certificate)
    }
}

/// Lanczos iteration budget `min{n, 1 + ceil(C eps^{-1/2})}` with
/// `C = ln(2.75 n / delta²) sqrt(U_H max{1, eps²}) / 2`. `delta = 0` means
/// the full dimension.
pub fn meo_budget(n: usize, eps: f64, delta: f64, norm_bound: f64) -> usize {
    if delta <= 0.0 || n == 0 {
        return n;
    }
    let c = (2.75 * n as f64 / (delta * delta)).ln() * (norm_bound * 1f64.max(eps * eps)).sqrt() / 2.0;
    let extra = (c / eps.sqrt()).ceil();
    if !extra.is_finite() {
        return n;
    }
    n.min(1 + extra.max(0.0) as usize)
}

fn random_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let nv = norm(&v);
        if nv > 0.0 {
            scale(1.0 / nv, &mut v);
            return v;
        }
    }
}

/// Power-iteration estimate of `||H||`, inflated by 10%.
pub fn estimate_norm<H: LinearOperator + ?Sized, R: Rng + ?Sized>(
    h: &mut H,
    rng: &mut R,
    iters: usize,
) -> f64 {
    let n = h.dim();
    if n == 0 {
        return 0.0;
    }
    let mut v = random_unit(n, rng);
    let mut hv = vec![0.0; n];
    let mut est: f64 = 0.0;
    for _ in 0..iters.max(1) {
        h.apply(&v, &mut hv);
        let nh = norm(&hv);
        est = est.max(nh);
        if nh == 0.0 || !nh.is_finite() {
            break;
        }
        for (vi, hi) in v.iter_mut().zip(&hv) {
            *vi = hi / nh;
        }
    }
    1.1 * est
}

/// Number of eigenvalues of the symmetric tridiagonal `(a, b)` strictly
/// below `x`.
fn sturm_count(a: &[f64], b: &[f64], x: f64) -> usize {
    let scale = a.iter().chain(b).fold(1.0f64, |m, v| m.max(v.abs()));
    let tiny = f64::EPSILON * scale * 1e-3;
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..a.len() {
        let off = if i == 0 { 0.0 } else { b[i - 1] * b[i - 1] / q };
        q = a[i] - x - off;
        if q == 0.0 {
            q = -tiny;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix by bisection.
fn tridiag_min_eig(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { b[i - 1].abs() } else { 0.0 } + if i + 1 < n { b[i].abs() } else { 0.0 };
        lo = lo.min(a[i] - r);
        hi = hi.max(a[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(a, b, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Eigenvector of the tridiagonal for the eigenvalue `lambda` by inverse
/// iteration with a partially pivoted banded LU.
fn tridiag_eigvec(a: &[f64], b: &[f64], lambda: f64) -> Vec<f64> {
    let n = a.len();
    if n == 1 {
        return vec![1.0];
    }
    let mag = a.iter().chain(b).fold(1.0f64, |m, v| m.max(v.abs()));
    let tiny = f64::EPSILON * mag;
    // Rows store (diag, super1, super2) after elimination; `l` holds multipliers.
    let mut d = vec![0.0; n];
    let mut u1 = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    let mut l = vec![0.0; n];
    let mut swapped = vec![false; n];
    let mut cur_d = a[0] - lambda;
    let mut cur_u1 = b[0];
    let mut cur_u2 = 0.0;
    for i in 0..n - 1 {
        let sub = b[i];
        let next_d = a[i + 1] - lambda;
        let next_u1 = if i + 2 < n { b[i + 1] } else { 0.0 };
        if sub.abs() > cur_d.abs() {
            // Swap row i with row i+1.
            swapped[i] = true;
            d[i] = sub;
            u1[i] = next_d;
            u2[i] = next_u1;
            let m = cur_d / sub;
            l[i] = m;
            cur_d = cur_u1 - m * next_d;
            cur_u1 = cur_u2 - m * next_u1;
        } else {
            let piv = if cur_d == 0.0 { tiny } else { cur_d };
            d[i] = piv;
            u1[i] = cur_u1;
            u2[i] = cur_u2;
            let m = sub / piv;
            l[i] = m;
            cur_d = next_d - m * cur_u1;
            cur_u1 = next_u1;
        }
        cur_u2 = 0.0;
    }
    d[n - 1] = if cur_d.abs() < tiny { tiny } else { cur_d };

    let mut z = vec![1.0 / (n as f64).sqrt(); n];
    for _ in 0..3 {
        // Forward elimination on the right-hand side.
        let mut rhs = z.clone();
        for i in 0..n - 1 {
            if swapped[i] {
                rhs.swap(i, i + 1);
            }
            rhs[i + 1] -= l[i] * rhs[i];
        }
        // Back substitution.
        for i in (0..n).rev() {
            let mut s = rhs[i];
            if i + 1 < n {
                s -= u1[i] * rhs[i + 1];
            }
            if i + 2 < n {
                s -= u2[i] * rhs[i + 2];
            }
            rhs[i] = s / d[i];
        }
        let nz = norm(&rhs);
        if !(nz.is_finite() && nz > 0.0) {
            break;
        }
        z = rhs;
        scale(1.0 / nz, &mut z);
    }
    z
}

/// Runs the minimum eigenvalue oracle on the symmetric operator `h`.
///
/// `norm_bound` is an upper bound on `||H||`; when absent it is estimated
/// by 20 power iterations.
pub fn meo<H: LinearOperator + ?Sized, R: Rng + ?Sized>(
    h: &mut H,
    eps: f64,
    delta: f64,
    norm_bound: Option<f64>,
    rng: &mut R,
) -> MeoResult {
    let n = h.dim();
    let mut hvps = 0;
    let u_h = match norm_bound {
        Some(m) => m,
        None => {
            hvps += 20;
            estimate_norm(h, rng, 20)
        }
    };
    let budget = meo_budget(n, eps, delta, u_h);
    let threshold = -eps / 2.0;

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(budget.min(n));
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut q = random_unit(n, rng);
    let mut w = vec![0.0; n];
    let mut outcome = MeoOutcome::Certificate;
    let mut iters = 0;

    while iters < budget {
        h.apply(&q, &mut w);
        hvps += 1;
        iters += 1;
        let alpha = dot(&q, &w);
        axpy(-alpha, &q, &mut w);
        if let Some(prev) = basis.last() {
            axpy(-betas[betas.len() - 1], prev, &mut w);
        }
        basis.push(std::mem::take(&mut q));
        alphas.push(alpha);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                axpy(-c, b, &mut w);
            }
        }

        if sturm_count(&alphas, &betas, threshold) > 0 {
            let lam = tridiag_min_eig(&alphas, &betas);
            let s = tridiag_eigvec(&alphas, &betas, lam);
            let mut v = vec![0.0; n];
            for (si, b) in s.iter().zip(&basis) {
                axpy(*si, b, &mut v);
            }
            let nv = norm(&v);
            scale(1.0 / nv, &mut v);
            let mut hv = vec![0.0; n];
            h.apply(&v, &mut hv);
            hvps += 1;
            let lambda = dot(&v, &hv);
            if lambda <= threshold {
                outcome = MeoOutcome::NegativeCurvature { lambda, v };
                break;
            }
        }

        let beta = norm(&w);
        let scale_ref = alphas.iter().chain(&betas).fold(0.0f64, |m, v| m.max(v.abs()));
        if beta <= 1e-12 * scale_ref.max(f64::MIN_POSITIVE) || beta == 0.0 {
            break;
        }
        betas.push(beta);
        q = w.iter().map(|v| v / beta).collect();
    }

    let orthogonality_loss = if basis.len() * basis.len() * n <= 4_000_000 {
        let mut worst: f64 = 0.0;
        for i in 0..basis.len() {
            for j in 0..i {
                worst = worst.max(dot(&basis[i], &basis[j]).abs());
            }
        }
        Some(worst)
    } else {
        None
    };

    MeoResult {
        outcome,
        lanczos_iters: iters,
        budget,
        norm_bound: u_h,
        hvps,
        orthogonality_loss,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{symmetric_min_eigenvalue, DenseOperator};
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> DenseOperator {
        DenseOperator::new(DMatrix::from_diagonal(&DVector::from_row_slice(v)))
    }

    #[test]
    fn psd_gets_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut h = diag(&[1.0, 2.0, 3.0, 0.5]);
        let r = meo(&mut h, 0.5, 0.01, None, &mut rng);
        assert!(r.is_certificate());
        assert!(r.lanczos_iters <= r.budget);
    }

    #[test]
    fn zero_matrix_gets_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut h = diag(&[0.0, 0.0, 0.0]);
        assert!(meo(&mut h, 0.5, 0.01, None, &mut rng).is_certificate());
    }

    #[test]
    fn indefinite_diagonal_finds_second_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut h = diag(&[1.0, -1.0]);
        let r = meo(&mut h, 0.5, 0.01, None, &mut rng);
        match r.outcome {
            MeoOutcome::NegativeCurvature { lambda, v } => {
                assert!(lambda <= -0.5);
                assert!((lambda + 1.0).abs() < 1e-10);
                assert!((norm(&v) - 1.0).abs() < 1e-12);
                assert!(v[0].abs() < 1e-6 && (v[1].abs() - 1.0).abs() < 1e-6);
            }
            MeoOutcome::Certificate => panic!("expected negative curvature"),
        }
    }

    #[test]
    fn norm_estimates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut h = diag(&[3.0, 3.0, 3.0]);
        assert!((estimate_norm(&mut h, &mut rng, 5) - 3.3).abs() < 1e-12);
        let mut h = diag(&[1.0, 1.0, 1.0, 1.0, 10.0]);
        assert!(estimate_norm(&mut h, &mut rng, 200) >= 10.0);
        let mut h = diag(&[0.0, 0.0]);
        assert_eq!(estimate_norm(&mut h, &mut rng, 5), 0.0);
    }

    #[test]
    fn budget_formula() {
        assert_eq!(meo_budget(30, 0.1, 0.0, 5.0), 30);
        let c = (2.75f64 * 10_000.0 / 1e-4).ln() * 4.0f64.sqrt() / 2.0;
        let expect = 1 + (c / 1e-4f64.sqrt()).ceil() as usize;
        assert_eq!(expect, 1945);
        assert_eq!(meo_budget(10_000, 1e-4, 0.01, 4.0), expect);
        assert_eq!(meo_budget(1000, 1e-4, 0.01, 4.0), 1000);
        assert_eq!(meo_budget(1000, 0.1, 0.01, 0.0), 1);
    }

    #[test]
    fn tridiagonal_helpers_match_dense() {
        let a = [2.0, -1.0, 0.5, 3.0, -2.5];
        let b = [1.0, 0.3, -0.7, 1.2];
        let mut m = DMatrix::zeros(5, 5);
        for i in 0..5 {
            m[(i, i)] = a[i];
        }
        for i in 0..4 {
            m[(i, i + 1)] = b[i];
            m[(i + 1, i)] = b[i];
        }
        let lam = tridiag_min_eig(&a, &b);
        assert!((lam - symmetric_min_eigenvalue(&m)).abs() < 1e-12);
        let z = tridiag_eigvec(&a, &b, lam);
        let mz = &m * DVector::from_row_slice(&z);
        let resid = (mz - DVector::from_row_slice(&z) * lam).norm();
        assert!(resid < 1e-10, "resid = {resid}");
        assert_eq!(sturm_count(&a, &b, 0.0), 2);
    }

    #[test]
    fn random_indefinite_matrices_are_sound_and_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = 20;
            let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let m = (&a + a.transpose()) * 0.5;
            let mut op = DenseOperator::new(m.clone());
            let r = meo(&mut op, 0.1, 0.05, None, &mut rng);
            assert!(r.lanczos_iters <= r.budget);
            assert!(r.orthogonality_loss.unwrap() <= 1e-8);
            if let MeoOutcome::NegativeCurvature { lambda, v } = r.outcome {
                assert!((norm(&v) - 1.0).abs() < 1e-12);
                let hv = &m * DVector::from_row_slice(&v);
                let q = hv.dot(&DVector::from_row_slice(&v));
                assert!((q - lambda).abs() < 1e-10 && lambda <= -0.05);
            }
        }
    }
}
