//! The objective abstraction: values, gradients and Hessian-vector products.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, norm};

/// A twice continuously differentiable objective accessed through oracles.
///
/// Implementations must be deterministic in their inputs and must not carry
/// hidden mutable state; solvers call them from a single thread but distinct
/// solves may share an objective across threads.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    /// `out = ∇²f(x) v`
    fn hessian_vec(&self, x: &[f64], v: &[f64], out: &mut [f64]);
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        (**self).gradient(x, grad)
    }
    fn hessian_vec(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        (**self).hessian_vec(x, v, out)
    }
}

/// Objective assembled from three closures.
pub struct FnObjective<F, G, H> {
    dim: usize,
    f: F,
    g: G,
    h: H,
}

impl<F, G, H> FnObjective<F, G, H>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
    H: Fn(&[f64], &[f64], &mut [f64]),
{
    pub fn new(dim: usize, f: F, g: G, h: H) -> Self {
        Self { dim, f, g, h }
    }
}

impl<F, G, H> Objective for FnObjective<F, G, H>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
    H: Fn(&[f64], &[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        (self.g)(x, grad)
    }
    fn hessian_vec(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        (self.h)(x, v, out)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCounts {
    pub f: u64,
    pub grad: u64,
    pub hvp: u64,
}

/// Wraps an objective and counts every oracle call.
///
/// Counters are atomic so the wrapper stays `Sync` whenever the inner
/// objective is.
#[derive(Debug, Default)]
pub struct OracleCounter<O> {
    inner: O,
    f: AtomicU64,
    grad: AtomicU64,
    hvp: AtomicU64,
}

impl<O: Objective> OracleCounter<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            f: AtomicU64::new(0),
            grad: AtomicU64::new(0),
            hvp: AtomicU64::new(0),
        }
    }

    pub fn counts(&self) -> OracleCounts {
        OracleCounts {
            f: self.f.load(Ordering::Relaxed),
            grad: self.grad.load(Ordering::Relaxed),
            hvp: self.hvp.load(Ordering::Relaxed),
        }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: Objective> Objective for OracleCounter<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.f.fetch_add(1, Ordering::Relaxed);
        self.inner.value(x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        self.grad.fetch_add(1, Ordering::Relaxed);
        self.inner.gradient(x, grad)
    }
    fn hessian_vec(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        self.hvp.fetch_add(1, Ordering::Relaxed);
        self.inner.hessian_vec(x, v, out)
    }
}

fn relative_error(approx: f64, exact: f64) -> f64 {
    let scale = approx.abs().max(exact.abs());
    if scale == 0.0 {
        0.0
    } else {
        (approx - exact).abs() / scale
    }
}

/// Checks `gradient` and `hessian_vec` against central differences of
/// `value` and `gradient` along `n_dirs` random unit directions.
///
/// Returns the largest relative error observed. Vector comparisons use the
/// Euclidean norm of the difference relative to the larger of the two norms.
pub fn finite_diff_check<O: Objective + ?Sized>(
    oracle: &O,
    x: &[f64],
    n_dirs: usize,
    h: f64,
    seed: u64,
) -> f64 {
    assert!(h > 0.0, "finite-difference step must be positive");
    let n = oracle.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut g = vec![0.0; n];
    oracle.gradient(x, &mut g);

    let mut xp = vec![0.0; n];
    let mut xm = vec![0.0; n];
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    let mut hv = vec![0.0; n];
    let mut fd = vec![0.0; n];
    let mut worst: f64 = 0.0;

    for _ in 0..n_dirs {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let nv = norm(&v);
        if nv == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|vi| *vi /= nv);

        for i in 0..n {
            xp[i] = x[i] + h * v[i];
            xm[i] = x[i] - h * v[i];
        }

        let fd_dir = (oracle.value(&xp) - oracle.value(&xm)) / (2.0 * h);
        worst = worst.max(relative_error(fd_dir, dot(&g, &v)));

        oracle.gradient(&xp, &mut gp);
        oracle.gradient(&xm, &mut gm);
        oracle.hessian_vec(x, &v, &mut hv);
        for i in 0..n {
            fd[i] = (gp[i] - gm[i]) / (2.0 * h);
        }
        let diff: f64 = fd
            .iter()
            .zip(&hv)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = norm(&fd).max(norm(&hv));
        if scale > 0.0 {
            worst = worst.max(diff / scale);
        }
    }
    worst
}
