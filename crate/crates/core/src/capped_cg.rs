//! Capped conjugate gradient on the damped system `(H + 2 eps I) y = -g`.
//!
//! CG runs until it either reaches the requested relative residual, in
//! which case the iterate is an approximate damped Newton step (`Sol`), or
//! it detects curvature of `H + 2 eps I` below `eps` along some vector, in
//! which case that vector is returned as a negative-curvature direction
//! (`Nc`). A residual-growth test bounds the work when the running estimate
//! `M` of `||H||` is accurate.

use thiserror::Error;

use crate::linalg::{axpy, dot, norm, LinearOperator};
use crate::problem::Objective;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    Sol,
    Nc,
}

/// How the CG stopping accuracy `zeta_hat` is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CgAccuracy {
    /// Constant `zeta_hat`, as in the practical variant with adaptive shrinking.
    Fixed(f64),
    /// `zeta_hat = zeta / (3 kappa)`, recomputed whenever `kappa` changes.
    Relative(f64),
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum CappedCgError {
    #[error("right-hand side is zero")]
    ZeroGradient,
    #[error("damping parameter {0} must lie in (0, 1)")]
    InvalidEps(f64),
    #[error("accuracy {0} must lie in (0, 1)")]
    InvalidAccuracy(f64),
    #[error("no exit after {iters} iterations")]
    IterCapExceeded { iters: usize },
    #[error("residual-growth exit found no weak-curvature difference after {iters} iterations")]
    WeakCurvatureNotFound { iters: usize },
    #[error("non-finite value encountered after {iters} iterations")]
    NonFinite { iters: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CappedCgOutcome {
    pub d_type: DType,
    pub d: Vec<f64>,
    pub iters: usize,
    pub m_final: f64,
    pub kappa: f64,
    pub zeta_hat: f64,
    pub tau: f64,
    pub t: f64,
    /// Norm of the recursively updated residual at exit.
    pub residual_norm: f64,
    /// `dᵀHd / ||d||²` from a fresh product, present for `Nc` outcomes.
    pub nc_curvature: Option<f64>,
    pub hvps: usize,
}

#[derive(Clone, Copy, Debug)]
struct Params {
    m: f64,
    kappa: f64,
    zeta_hat: f64,
    tau: f64,
    t: f64,
}

impl Params {
    fn new(m: f64, eps: f64, accuracy: CgAccuracy) -> Self {
        let kappa = (m + 2.0 * eps) / eps;
        let zeta_hat = match accuracy {
            CgAccuracy::Fixed(z) => z,
            CgAccuracy::Relative(zeta) => zeta / (3.0 * kappa),
        };
        let sk = kappa.sqrt();
        let tau = sk / (sk + 1.0);
        let t = 4.0 * kappa.powi(4) / (1.0 - tau.sqrt()).powi(2);
        Self {
            m,
            kappa,
            zeta_hat,
            tau,
            t,
        }
    }
}

/// Iteration cap used when none is given: twice the larger of `n` and the
/// complexity bound `sqrt(kappa) ln(144 sqrt(kappa) / zeta_hat^2)`, plus slack.
pub fn default_iter_cap(n: usize, kappa: f64, zeta_hat: f64) -> usize {
    let sk = kappa.sqrt();
    let bound = (sk * (144.0 * sk / (zeta_hat * zeta_hat)).ln()).ceil();
    let bound = if bound.is_finite() && bound > 0.0 {
        bound as usize
    } else {
        0
    };
    2 * n.max(bound) + 10
}

/// Restriction of `∇²f(x)` to the rows and columns in `mask`.
///
/// Vectors passed to `apply` have length `mask.len()`; they are scattered
/// into a full-length buffer, multiplied, and gathered back.
pub struct MaskedHvp<'a, O: Objective + ?Sized> {
    oracle: &'a O,
    x: &'a [f64],
    mask: &'a [usize],
    full_in: Vec<f64>,
    full_out: Vec<f64>,
    identity_mask: bool,
}

impl<'a, O: Objective + ?Sized> MaskedHvp<'a, O> {
    pub fn new(oracle: &'a O, x: &'a [f64], mask: &'a [usize]) -> Self {
        let n = x.len();
        let identity_mask = mask.len() == n && mask.iter().enumerate().all(|(i, &m)| i == m);
        Self {
            oracle,
            x,
            mask,
            full_in: vec![0.0; n],
            full_out: vec![0.0; n],
            identity_mask,
        }
    }
}

impl<O: Objective + ?Sized> LinearOperator for MaskedHvp<'_, O> {
    fn dim(&self) -> usize {
        self.mask.len()
    }

    fn apply(&mut self, v: &[f64], out: &mut [f64]) {
        if self.identity_mask {
            self.oracle.hessian_vec(self.x, v, out);
            return;
        }
        self.full_in.fill(0.0);
        for (vi, &idx) in v.iter().zip(self.mask) {
            self.full_in[idx] = *vi;
        }
        self.oracle
            .hessian_vec(self.x, &self.full_in, &mut self.full_out);
        for (o, &idx) in out.iter_mut().zip(self.mask) {
            *o = self.full_out[idx];
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Runs Capped CG on `(H + 2 eps I) y = -g`.
///
/// `m_hint` seeds the running estimate of `||H||` (0 when absent).
/// `iter_cap` defaults to [`default_iter_cap`] evaluated with the current
/// `kappa`, which grows as `M` is updated.
pub fn capped_cg<H: LinearOperator + ?Sized>(
    h: &mut H,
    g: &[f64],
    eps: f64,
    accuracy: CgAccuracy,
    m_hint: Option<f64>,
    iter_cap: Option<usize>,
) -> Result<CappedCgOutcome, CappedCgError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(CappedCgError::InvalidEps(eps));
    }
    let acc_value = match accuracy {
        CgAccuracy::Fixed(z) | CgAccuracy::Relative(z) => z,
    };
    if !(acc_value > 0.0 && acc_value < 1.0) {
        return Err(CappedCgError::InvalidAccuracy(acc_value));
    }
    let n = g.len();
    let r0_norm = norm(g);
    if r0_norm == 0.0 {
        return Err(CappedCgError::ZeroGradient);
    }
    if !r0_norm.is_finite() {
        return Err(CappedCgError::NonFinite { iters: 0 });
    }

    let mut params = Params::new(m_hint.unwrap_or(0.0).max(0.0), eps, accuracy);
    let mut hvps = 0usize;

    let mut y = vec![0.0; n];
    let mut hy = vec![0.0; n];
    let mut r = g.to_vec();
    let mut p: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut hp = vec![0.0; n];
    h.apply(&p, &mut hp);
    hvps += 1;
    let mut hr: Vec<f64> = hp.iter().map(|v| -v).collect();

    let finish = |h: &mut H,
                  d_type: DType,
                  d: Vec<f64>,
                  iters: usize,
                  params: &Params,
                  residual_norm: f64,
                  mut hvps: usize| {
        let nc_curvature = if d_type == DType::Nc {
            let mut hd = vec![0.0; d.len()];
            h.apply(&d, &mut hd);
            hvps += 1;
            Some(dot(&d, &hd) / dot(&d, &d))
        } else {
            None
        };
        CappedCgOutcome {
            d_type,
            d,
            iters,
            m_final: params.m,
            kappa: params.kappa,
            zeta_hat: params.zeta_hat,
            tau: params.tau,
            t: params.t,
            residual_norm,
            nc_curvature,
            hvps,
        }
    };

    let mut pp = dot(&p, &p);
    let mut p_hbar_p = dot(&p, &hp) + 2.0 * eps * pp;
    if !p_hbar_p.is_finite() {
        return Err(CappedCgError::NonFinite { iters: 0 });
    }
    if p_hbar_p < eps * pp {
        return Ok(finish(h, DType::Nc, p, 0, &params, r0_norm, hvps));
    }
    let hp_norm = norm(&hp);
    if hp_norm > params.m * pp.sqrt() {
        params = Params::new(hp_norm / pp.sqrt(), eps, accuracy);
    }

    let mut ys: Vec<Vec<f64>> = vec![y.clone()];
    let mut hys: Vec<Vec<f64>> = vec![hy.clone()];
    let mut rr = dot(&r, &r);
    let mut hp_prev = vec![0.0; n];
    let mut j = 0usize;

    loop {
        let alpha = rr / p_hbar_p;
        axpy(alpha, &p, &mut y);
        axpy(alpha, &hp, &mut hy);
        axpy(alpha, &hp, &mut r);
        axpy(alpha * 2.0 * eps, &p, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = -ri + beta * *pi;
        }
        std::mem::swap(&mut hp, &mut hp_prev);
        h.apply(&p, &mut hp);
        hvps += 1;
        for ((hri, hpi), hpo) in hr.iter_mut().zip(&hp).zip(&hp_prev) {
            *hri = -hpi + beta * hpo;
        }
        j += 1;
        ys.push(y.clone());
        hys.push(hy.clone());

        pp = dot(&p, &p);
        let yy = dot(&y, &y);
        let r_norm = rr.sqrt();
        if !(rr.is_finite() && pp.is_finite() && yy.is_finite()) {
            return Err(CappedCgError::NonFinite { iters: j });
        }

        let growth = ratio(norm(&hp), pp.sqrt())
            .max(ratio(norm(&hy), yy.sqrt()))
            .max(ratio(norm(&hr), r_norm));
        if params.m < growth {
            params = Params::new(growth, eps, accuracy);
        }

        p_hbar_p = dot(&p, &hp) + 2.0 * eps * pp;
        let y_hbar_y = dot(&y, &hy) + 2.0 * eps * yy;

        if y_hbar_y < eps * yy {
            return Ok(finish(h, DType::Nc, y, j, &params, r_norm, hvps));
        } else if r_norm <= params.zeta_hat * r0_norm {
            return Ok(finish(h, DType::Sol, y, j, &params, r_norm, hvps));
        } else if p_hbar_p < eps * pp {
            return Ok(finish(h, DType::Nc, p, j, &params, r_norm, hvps));
        } else if r_norm > params.t.sqrt() * params.tau.powf(j as f64 / 2.0) * r0_norm {
            let alpha = rr / p_hbar_p;
            let mut y_next = y.clone();
            axpy(alpha, &p, &mut y_next);
            let mut hy_next = hy.clone();
            axpy(alpha, &hp, &mut hy_next);
            let mut diff = vec![0.0; n];
            for i in 0..j {
                for l in 0..n {
                    diff[l] = y_next[l] - ys[i][l];
                }
                let dd = dot(&diff, &diff);
                let curv: f64 = (0..n)
                    .map(|l| diff[l] * (hy_next[l] - hys[i][l] + 2.0 * eps * diff[l]))
                    .sum();
                if dd > 0.0 && curv < eps * dd {
                    return Ok(finish(h, DType::Nc, diff, j, &params, r_norm, hvps));
                }
            }
            return Err(CappedCgError::WeakCurvatureNotFound { iters: j });
        }

        let cap = iter_cap.unwrap_or_else(|| default_iter_cap(n, params.kappa, params.zeta_hat));
        if j >= cap {
            return Err(CappedCgError::IterCapExceeded { iters: j });
        }
    }
}
