//! Dense quadratic test problems
//! `f(x) = ½ (x - a)ᵀH(x - a) + cᵀ(x - a) + offset` with computable
//! smoothness constants, used by the benchmarks and the test suites.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::BoundSpec;
use crate::problem::Objective;

#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    /// Expansion point `a`.
    pub center: DVector<f64>,
    pub offset: f64,
    pub bounds: BoundSpec,
}

/// Constants entering the iteration budgets, valid on the level set of `x0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticConstants {
    pub f0: f64,
    /// Lower bound on `f` over the feasible set.
    pub f_low: f64,
    /// Gradient Lipschitz constant `||H||`.
    pub l_g: f64,
    /// Hessian Lipschitz constant (zero for quadratics).
    pub l_h: f64,
    /// Bound on `||∇f||` over the feasible part of the level set.
    pub u_g: f64,
}

fn random_orthogonal<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    a.qr().q()
}

impl Quadratic {
    pub fn new(h: DMatrix<f64>, c: DVector<f64>, bounds: BoundSpec) -> Self {
        assert_eq!(h.nrows(), h.ncols());
        assert_eq!(h.nrows(), c.len());
        assert_eq!(h.nrows(), bounds.dim());
        let h = (&h + h.transpose()) * 0.5;
        let n = c.len();
        Self {
            h,
            c,
            center: DVector::zeros(n),
            offset: 0.0,
            bounds,
        }
    }

    /// Strictly convex, nonnegativity constraints on every index.
    pub fn random_convex(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_orthogonal(n, &mut rng);
        let eig = DVector::from_fn(n, |_, _| rng.random_range(0.5..5.0));
        let h = &q * DMatrix::from_diagonal(&eig) * q.transpose();
        let c = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        Self::new(h, c, BoundSpec::nonnegative(n))
    }

    /// Indefinite Hessian on a finite box `[0, u]`.
    pub fn random_nonconvex_box(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_orthogonal(n, &mut rng);
        let eig = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let h = &q * DMatrix::from_diagonal(&eig) * q.transpose();
        let c = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let upper = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        Self::new(h, c, BoundSpec::boxed(upper).expect("positive uppers"))
    }

    /// Strictly convex on a finite box `[0, u]`.
    pub fn random_convex_box(n: usize, seed: u64) -> Self {
        let mut q = Self::random_convex(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let upper = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        q.bounds = BoundSpec::boxed(upper).expect("positive uppers");
        q
    }

    /// The problem in the reflected variables `y = u - x`, so that
    /// `mirrored().value(u - x) == value(x)`; requires every index to carry
    /// a finite upper bound.
    pub fn mirrored(&self) -> Self {
        let n = self.c.len();
        let u = DVector::from_fn(n, |i, _| self.bounds.upper(i));
        assert!(u.iter().all(|v| v.is_finite()), "mirroring needs finite bounds");
        Self {
            h: self.h.clone(),
            c: -&self.c,
            center: &u - &self.center,
            offset: self.offset,
            bounds: self.bounds.clone(),
        }
    }

    pub fn eigenvalue_range(&self) -> (f64, f64) {
        let e = SymmetricEigen::new(self.h.clone()).eigenvalues;
        (e.min(), e.max())
    }

    /// Budget constants for a run started at `x0`.
    pub fn constants(&self, x0: &[f64]) -> QuadraticConstants {
        let (lmin, lmax) = self.eigenvalue_range();
        let l_g = lmin.abs().max(lmax.abs());
        let f0 = self.value(x0);
        let cn = self.c.norm();
        let all_boxed = (0..self.c.len()).all(|i| self.bounds.is_constrained(i) && self.bounds.upper(i).is_finite());
        if all_boxed {
            let radius: f64 = (0..self.c.len())
                .map(|i| self.center[i].abs().max((self.bounds.upper(i) - self.center[i]).abs()).powi(2))
                .sum::<f64>()
                .sqrt();
            QuadraticConstants {
                f0,
                f_low: 0.5 * lmin.min(0.0) * radius * radius - cn * radius + self.offset,
                l_g,
                l_h: 0.0,
                u_g: l_g * radius + cn,
            }
        } else {
            assert!(lmin > 0.0, "unbounded feasible set needs a strictly convex quadratic");
            let step = self
                .h
                .clone()
                .cholesky()
                .expect("positive definite")
                .solve(&self.c);
            let fstar = self.offset - 0.5 * self.c.dot(&step);
            let radius = (2.0 * (f0 - fstar).max(0.0) / lmin).sqrt();
            QuadraticConstants {
                f0,
                f_low: fstar,
                l_g,
                l_h: 0.0,
                u_g: l_g * radius,
            }
        }
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let d: Vec<f64> = (0..n).map(|i| x[i] - self.center[i]).collect();
        let mut acc = 0.0;
        for i in 0..n {
            let mut hd = 0.0;
            for j in 0..n {
                hd += self.h[(i, j)] * d[j];
            }
            acc += d[i] * (0.5 * hd + self.c[i]);
        }
        acc + self.offset
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let d: Vec<f64> = x.iter().zip(self.center.iter()).map(|(a, b)| a - b).collect();
        self.hessian_vec(x, &d, grad);
        for (g, c) in grad.iter_mut().zip(self.c.iter()) {
            *g += c;
        }
    }

    fn hessian_vec(&self, _x: &[f64], v: &[f64], out: &mut [f64]) {
        let n = v.len();
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.h[(i, j)] * v[j];
            }
            *o = acc;
        }
    }
}

/// Global minimizer of a strictly convex quadratic over a finite box, by
/// enumerating all `3ⁿ` lower/free/upper assignments and keeping the one
/// satisfying the KKT conditions. Only practical for small `n`.
pub fn brute_force_box_minimizer(q: &Quadratic, tol: f64) -> Option<Vec<f64>> {
    let n = q.c.len();
    let u: Vec<f64> = (0..n).map(|i| q.bounds.upper(i)).collect();
    let lin = &q.c - &q.h * &q.center;
    let total = 3usize.pow(n as u32);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for code in 0..total {
        let mut state = vec![0u8; n];
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 1).collect();
        let mut x: Vec<f64> = (0..n).map(|i| if state[i] == 2 { u[i] } else { 0.0 }).collect();
        if !free.is_empty() {
            let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| q.h[(free[a], free[b])]);
            let rhs = DVector::from_fn(free.len(), |a, _| {
                let i = free[a];
                -(lin[i] + (0..n).filter(|&j| state[j] == 2).map(|j| q.h[(i, j)] * u[j]).sum::<f64>())
            });
            let Some(sol) = hff.cholesky().map(|ch| ch.solve(&rhs)) else {
                continue;
            };
            for (a, &i) in free.iter().enumerate() {
                x[i] = sol[a];
            }
        }
        let mut g = vec![0.0; n];
        q.gradient(&x, &mut g);
        let ok = (0..n).all(|i| match state[i] {
            0 => g[i] >= -tol,
            2 => g[i] <= tol,
            _ => x[i] >= -tol && x[i] <= u[i] + tol,
        });
        if ok {
            let f = q.value(&x);
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, x));
            }
        }
    }
    best.map(|(_, x)| x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::finite_diff_check;

    #[test]
    fn oracles_are_consistent() {
        let q = Quadratic::random_nonconvex_box(6, 3);
        let x = vec![0.3; 6];
        assert!(finite_diff_check(&q, &x, 6, 1e-4, 1) <= 1e-8);
    }

    #[test]
    fn mirrored_values_agree() {
        let q = Quadratic::random_convex_box(4, 2);
        let m = q.mirrored();
        for x in [[0.1, 0.4, 0.2, 0.3], [0.2, 0.1, 0.0, 0.5]] {
            let y: Vec<f64> = (0..4).map(|i| q.bounds.upper(i) - x[i]).collect();
            assert!((q.value(&x) - m.value(&y)).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_force_finds_unconstrained_minimizer_inside_box() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let c = DVector::from_row_slice(&[-1.0, -0.5]);
        let q = Quadratic::new(h, c, BoundSpec::boxed(vec![3.0, 3.0]).unwrap());
        let x = brute_force_box_minimizer(&q, 1e-12).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-14 && (x[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn brute_force_commutes_with_mirroring() {
        let q = Quadratic::random_convex_box(4, 11);
        let x = brute_force_box_minimizer(&q, 1e-12).unwrap();
        let y = brute_force_box_minimizer(&q.mirrored(), 1e-12).unwrap();
        for i in 0..4 {
            assert!((x[i] - (q.bounds.upper(i) - y[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_bound_the_gradient() {
        let q = Quadratic::random_convex(5, 8);
        let x0 = vec![1.0; 5];
        let k = q.constants(&x0);
        let mut g = vec![0.0; 5];
        q.gradient(&x0, &mut g);
        assert!(crate::linalg::norm(&g) <= k.u_g * (1.0 + 1e-12));
        assert!(k.f_low <= k.f0);
    }
}
