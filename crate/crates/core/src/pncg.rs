//! Projected Newton-CG.
//!
//! Every iteration splits the variables into those within `eps_h` of a bound
//! (`J⁺`) and the rest (`J⁻`), then takes one of three steps:
//!
//! 1. a projected gradient step when the near-bound variables still show a
//!    significant gradient;
//! 2. otherwise a Capped-CG step on the free variables, either an inexact
//!    damped Newton step or a negative-curvature step;
//! 3. otherwise a call to the minimum eigenvalue oracle on the scaled Hessian
//!    `S H S`, which either certifies approximate second-order stationarity
//!    or yields a negative-curvature direction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::capped_cg::{capped_cg, CgAccuracy, DType, MaskedHvp};
use crate::config::{validate_config, SolverConfig};
use crate::geometry::{
    pncg_partition, project_in_place, projected_gradient_norm, residual, s_scaling, BoundSpec,
    IndexPartition,
};
use crate::linalg::{all_finite, dot, norm, LinearOperator};
use crate::meo::{estimate_norm, meo, MeoOutcome};
use crate::problem::{Objective, OracleCounter};
use crate::report::{feasible_start, RunLog, SolveError, SolverReport, Status, StepKind};

/// `v -> S ∇²f(x) S v` for a diagonal `S`.
pub struct ScaledHvp<'a, O: Objective + ?Sized> {
    oracle: &'a O,
    x: &'a [f64],
    s: &'a [f64],
    buf: Vec<f64>,
}

impl<'a, O: Objective + ?Sized> ScaledHvp<'a, O> {
    pub fn new(oracle: &'a O, x: &'a [f64], s: &'a [f64]) -> Self {
        Self {
            oracle,
            x,
            s,
            buf: vec![0.0; x.len()],
        }
    }
}

impl<O: Objective + ?Sized> LinearOperator for ScaledHvp<'_, O> {
    fn dim(&self) -> usize {
        self.x.len()
    }

    fn apply(&mut self, v: &[f64], out: &mut [f64]) {
        for ((b, si), vi) in self.buf.iter_mut().zip(self.s).zip(v) {
            *b = si * vi;
        }
        self.oracle.hessian_vec(self.x, &self.buf, out);
        for (o, si) in out.iter_mut().zip(self.s) {
            *o *= si;
        }
    }
}

#[inline]
fn sgn(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Rescales a Capped-CG negative-curvature output `t` with curvature
/// `c = tᵀHt / ||t||²` to `-sgn(tᵀg) |c| t / ||t||`, so that the result has
/// length `|c|` and points downhill.
pub fn nc_rescale(t: &[f64], g: &[f64], curvature: f64) -> Vec<f64> {
    let factor = -sgn(dot(t, g)) * curvature.abs() / norm(t);
    t.iter().map(|v| factor * v).collect()
}

/// Shrinks the Capped-CG accuracy after a failed Newton-CG line search,
/// never going below `zeta / (3 kappa)`.
pub fn adapt_zeta_hat(current: f64, shrink: f64, zeta: f64, kappa: f64) -> f64 {
    let floor = zeta / (3.0 * kappa);
    if current <= floor {
        current
    } else {
        (current / shrink).max(floor)
    }
}

/// Decrease constant of negative-curvature Newton-CG steps.
pub fn c_nc(eta: f64, theta: f64, l_h: f64) -> f64 {
    let first = if l_h > 0.0 {
        (3.0 - 6.0 * eta).powi(2) * theta * theta / (l_h * l_h)
    } else {
        f64::INFINITY
    };
    eta * first.min(theta * theta)
}

/// Decrease constant of approximate-solution Newton-CG steps.
pub fn c_sol(eta: f64, theta: f64, zeta: f64, l_h: f64) -> f64 {
    let a = (4.0 / (4.0 + zeta + ((4.0 + zeta).powi(2) + 8.0 * l_h).sqrt())).powi(2);
    let c = if l_h > 0.0 {
        9.0 * (1.0 - zeta - 2.0 * eta).powi(2) * theta * theta / (l_h * l_h)
    } else {
        f64::INFINITY
    };
    let d = (1.0 - zeta).powi(2) * theta * theta / (l_h / 3.0 + 2.0 * eta).powi(2);
    eta * a.min(theta * theta).min(c).min(d)
}

/// Iteration bound
/// `floor(16 (f0 - f_low) / min{c_nc, 8 c_sol, 2θ/L_g, η} · max{ε_g⁻² ε_H, ε_H⁻³}) + 2`.
#[allow(clippy::too_many_arguments)]
pub fn kpncg_budget(
    f0: f64,
    f_low: f64,
    l_g: f64,
    l_h: f64,
    theta: f64,
    zeta: f64,
    eta: f64,
    eps_g: f64,
    eps_h: f64,
) -> u64 {
    let denom = c_nc(eta, theta, l_h)
        .min(8.0 * c_sol(eta, theta, zeta, l_h))
        .min(2.0 * theta / l_g)
        .min(eta);
    let growth = (eps_h / (eps_g * eps_g)).max(eps_h.powi(-3));
    (16.0 * (f0 - f_low) / denom * growth).floor() as u64 + 2
}

enum Branch {
    GradProj,
    NewtonCg,
    Meo,
    Stop,
}

fn choose_branch(
    x: &[f64],
    g: &[f64],
    part: &IndexPartition,
    s: &[f64],
    bounds: &BoundSpec,
    cfg: &SolverConfig,
) -> Branch {
    let eps = cfg.eps_h;
    if !part.plus.is_empty() {
        let floor = eps.powf(1.5);
        let mut sg_sq = 0.0;
        let mut violated = false;
        for &i in &part.plus {
            sg_sq += (s[i] * g[i]).powi(2);
            if x[i] <= eps && g[i] < -floor {
                violated = true;
            }
            if x[i] >= bounds.upper(i) - eps && g[i] > floor {
                violated = true;
            }
        }
        if violated || sg_sq.sqrt() > eps * eps {
            return Branch::GradProj;
        }
    }
    if !part.minus.is_empty() {
        let gm: f64 = part.minus.iter().map(|&i| g[i] * g[i]).sum::<f64>().sqrt();
        if gm > cfg.eps_g {
            return Branch::NewtonCg;
        }
    }
    if cfg.meo_enabled {
        Branch::Meo
    } else {
        Branch::Stop
    }
}

/// Runs projected Newton-CG from `x0` with `ε_k ≡ cfg.eps_h`.
pub fn solve<O: Objective + ?Sized>(
    oracle: &O,
    x0: &[f64],
    bounds: &BoundSpec,
    cfg: &SolverConfig,
) -> Result<SolverReport, SolveError> {
    validate_config(cfg, bounds)?;
    let oracle = OracleCounter::new(oracle);
    let n = oracle.dim();
    let mut log = RunLog::start();
    let mut x = feasible_start(x0, n, bounds, &mut log)?;
    let eps = cfg.eps_h;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let mut f = oracle.value(&x);
    if !f.is_finite() {
        return Err(SolveError::NonFinite { what: "objective", k: 0 });
    }
    let f_initial = f;
    let mut g = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut zeta_hat = cfg.zeta_hat_init;
    let mut m_est = cfg.m_hint;
    let mut meo_calls = 0usize;
    let mut k = 0usize;

    let status = 'outer: loop {
        oracle.gradient(&x, &mut g);
        if !all_finite(&g) {
            return Err(SolveError::NonFinite { what: "gradient", k });
        }
        log.fill_last(
            residual(&x, &g, bounds, cfg.eps_r),
            projected_gradient_norm(&x, &g, bounds),
        );

        let part = pncg_partition(&x, bounds, eps)?;
        let s = s_scaling(&x, &part, bounds).diag;
        let branch = choose_branch(&x, &g, &part, &s, bounds, cfg);
        if let Branch::Stop = branch {
            break Status::ConvergedEps1o;
        }
        if let Some(st) = log.limit_hit(k, cfg.max_outer_iters, cfg.max_wall_seconds) {
            break st;
        }

        let mut fell_through = false;
        match branch {
            Branch::GradProj => {
                let mut accepted = None;
                for m in 0..cfg.max_backtracks {
                    let alpha = cfg.theta.powi(m as i32);
                    for i in 0..n {
                        trial[i] = x[i] - alpha * g[i];
                    }
                    project_in_place(&mut trial, bounds);
                    let model: f64 = (0..n).map(|i| (x[i] - trial[i]) * g[i]).sum();
                    let ft = oracle.value(&trial);
                    if !ft.is_finite() {
                        return Err(SolveError::NonFinite {
                            what: "trial objective",
                            k,
                        });
                    }
                    if ft < f - 0.5 * model {
                        accepted = Some((alpha, ft));
                        break;
                    }
                }
                let Some((alpha, ft)) = accepted else {
                    break Status::LineSearchFailure;
                };
                std::mem::swap(&mut x, &mut trial);
                f = ft;
                log.push(k, f, StepKind::GradProj, alpha, norm(&g));
                k += 1;
                continue;
            }
            Branch::NewtonCg => {
                let mask = &part.minus;
                let g_minus: Vec<f64> = mask.iter().map(|&i| g[i]).collect();
                loop {
                    let accuracy = match zeta_hat {
                        Some(z) => CgAccuracy::Fixed(z),
                        None => CgAccuracy::Relative(cfg.zeta),
                    };
                    let mut op = MaskedHvp::new(&oracle, &x, mask);
                    let out = capped_cg(&mut op, &g_minus, eps, accuracy, m_est, None)
                        .map_err(|source| SolveError::CappedCg { k, source })?;
                    m_est = Some(m_est.unwrap_or(0.0).max(out.m_final));
                    let (d_minus, kind) = match out.d_type {
                        DType::Nc => (
                            nc_rescale(&out.d, &g_minus, out.nc_curvature.unwrap_or(0.0)),
                            StepKind::NewtonCgNc,
                        ),
                        DType::Sol => (out.d.clone(), StepKind::NewtonCgSol),
                    };
                    let mut d = vec![0.0; n];
                    for (di, &idx) in d_minus.iter().zip(mask) {
                        d[idx] = *di;
                    }
                    let dd = dot(&d, &d);

                    let mut accepted = None;
                    for m in 0..cfg.max_backtracks {
                        let alpha = cfg.theta.powi(m as i32);
                        for i in 0..n {
                            trial[i] = x[i] + alpha * d[i];
                        }
                        project_in_place(&mut trial, bounds);
                        let ft = oracle.value(&trial);
                        if !ft.is_finite() {
                            return Err(SolveError::NonFinite {
                                what: "trial objective",
                                k,
                            });
                        }
                        if ft < f - cfg.eta * alpha * alpha * eps * dd {
                            accepted = Some((alpha, ft));
                            break;
                        }
                    }
                    if let Some((alpha, ft)) = accepted {
                        std::mem::swap(&mut x, &mut trial);
                        f = ft;
                        log.push(k, f, kind, alpha, dd.sqrt());
                        k += 1;
                        continue 'outer;
                    }
                    if let Some(z) = zeta_hat {
                        let next = adapt_zeta_hat(z, cfg.zeta_hat_shrink, cfg.zeta, out.kappa);
                        if next < z {
                            zeta_hat = Some(next);
                            continue;
                        }
                    }
                    break;
                }
                if !cfg.meo_enabled {
                    break Status::LineSearchFailure;
                }
                fell_through = true;
            }
            Branch::Meo | Branch::Stop => {}
        }

        meo_calls += 1;
        let mut op = ScaledHvp::new(&oracle, &x, &s);
        let norm_bound = match cfg.m_hint {
            Some(m) => m,
            None => m_est.unwrap_or(0.0).max(estimate_norm(&mut op, &mut rng, 20)),
        };
        let res = meo(&mut op, eps, cfg.delta, Some(norm_bound), &mut rng);
        let (lambda, v) = match res.outcome {
            MeoOutcome::Certificate => {
                if fell_through {
                    break Status::LineSearchFailure;
                }
                break Status::ConvergedEps2o;
            }
            MeoOutcome::NegativeCurvature { lambda, v } => (lambda, v),
        };
        let sv: Vec<f64> = (0..n).map(|i| s[i] * v[i]).collect();
        let factor = -sgn(dot(&g, &sv)) * lambda.abs();
        let dk_norm = factor.abs();
        let mut accepted = None;
        for m in 0..cfg.max_backtracks {
            let alpha = cfg.theta.powi(m as i32);
            for i in 0..n {
                trial[i] = x[i] + alpha * factor * sv[i];
            }
            project_in_place(&mut trial, bounds);
            let ft = oracle.value(&trial);
            if !ft.is_finite() {
                return Err(SolveError::NonFinite {
                    what: "trial objective",
                    k,
                });
            }
            if ft < f - cfg.eta * alpha * alpha * dk_norm.powi(3) {
                accepted = Some((alpha, ft));
                break;
            }
        }
        let Some((alpha, ft)) = accepted else {
            break Status::LineSearchFailure;
        };
        std::mem::swap(&mut x, &mut trial);
        f = ft;
        log.push(k, f, StepKind::MeoNc, alpha, dk_norm);
        k += 1;
    };

    let res = residual(&x, &g, bounds, cfg.eps_r);
    let pn = projected_gradient_norm(&x, &g, bounds);
    let counts = oracle.counts();
    let mut report = log.finish(status, x, f_initial, f, res, pn, counts, meo_calls);
    if let Some(z) = zeta_hat {
        if cfg.zeta_hat_init.is_some_and(|z0| z < z0) {
            report
                .warnings
                .push(format!("capped CG accuracy reduced to {z:e}"));
        }
    }
    Ok(report)
}
