//! Scaled two-metric gradient projection.
//!
//! Each iteration moves along `-Z D Z g`, projects back onto the box, and
//! backtracks until the decrease measured on the free indices is large
//! enough. `Z` shrinks steps on coordinates that are close to the bound they
//! are moving towards; `D` is a positive-definite diagonal scaling.

use crate::config::{validate_config, SolverConfig};
use crate::geometry::{
    project_in_place, projected_gradient_norm, residual, two_metric_partition, z_scaling,
    BoundSpec,
};
use crate::linalg::{all_finite, norm};
use crate::problem::{Objective, OracleCounter};
use crate::report::{feasible_start, RunLog, SolveError, SolverReport, Status, StepKind};

/// Choice of the diagonal scaling `D_k`.
#[derive(Clone, Debug, PartialEq)]
pub enum ScalingStrategy {
    Identity,
    /// `D[i,i] = clamp(1 / max(H[i,i], 1e-8), lambda_min, lambda_max)` where
    /// the Hessian diagonal is probed on at most `max_probes` evenly spaced
    /// indices; unprobed indices use `clamp(1, lambda_min, lambda_max)`.
    ClippedDiagonalHessian {
        lambda_min: f64,
        lambda_max: f64,
        max_probes: usize,
    },
}

impl ScalingStrategy {
    /// Spectral bounds `(lambda_min, lambda_max)` of every `D_k` produced.
    pub fn spectrum_bounds(&self) -> (f64, f64) {
        match *self {
            ScalingStrategy::Identity => (1.0, 1.0),
            ScalingStrategy::ClippedDiagonalHessian {
                lambda_min,
                lambda_max,
                ..
            } => (lambda_min, lambda_max),
        }
    }

    fn diagonal<O: Objective + ?Sized>(&self, oracle: &O, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        match *self {
            ScalingStrategy::Identity => vec![1.0; n],
            ScalingStrategy::ClippedDiagonalHessian {
                lambda_min,
                lambda_max,
                max_probes,
            } => {
                let mut d = vec![1.0f64.clamp(lambda_min, lambda_max); n];
                if max_probes == 0 || n == 0 {
                    return d;
                }
                let stride = n.div_ceil(max_probes.min(n));
                let mut e = vec![0.0; n];
                let mut he = vec![0.0; n];
                for i in (0..n).step_by(stride) {
                    e[i] = 1.0;
                    oracle.hessian_vec(x, &e, &mut he);
                    e[i] = 0.0;
                    d[i] = (1.0 / he[i].max(1e-8)).clamp(lambda_min, lambda_max);
                }
                d
            }
        }
    }
}

/// Upper bound on the number of iterations before `||Z⁻g⁻|| <= eps`:
/// `ceil((f0 - f_low) λ_max max{U_g, L_g / (2(1-σ)), 1/λ_max} / (σ β λ_min ε²))`.
/// With upper bounds present, `U_g` is divided by `min_i{1, u_i/2}`.
#[allow(clippy::too_many_arguments)]
pub fn iteration_budget(
    f0: f64,
    f_low: f64,
    l_g: f64,
    u_g: f64,
    lambda_min: f64,
    lambda_max: f64,
    sigma: f64,
    beta: f64,
    eps: f64,
    bounds: &BoundSpec,
) -> u64 {
    let half_u = (bounds.min_upper() / 2.0).min(1.0);
    let u_g = if bounds.has_upper_bounds() {
        u_g / half_u
    } else {
        u_g
    };
    let inner = u_g.max(l_g / (2.0 * (1.0 - sigma))).max(1.0 / lambda_max);
    let k = (f0 - f_low) * lambda_max * inner / (sigma * beta * lambda_min * eps * eps);
    k.ceil() as u64
}

/// Runs the scaled two-metric projection method from `x0` with tolerance
/// `cfg.eps_g`.
pub fn solve<O: Objective + ?Sized>(
    oracle: &O,
    x0: &[f64],
    bounds: &BoundSpec,
    cfg: &SolverConfig,
    scaling: &ScalingStrategy,
) -> Result<SolverReport, SolveError> {
    validate_config(cfg, bounds)?;
    let oracle = OracleCounter::new(oracle);
    let n = oracle.dim();
    let mut log = RunLog::start();
    let mut x = feasible_start(x0, n, bounds, &mut log)?;
    let eps = cfg.eps_g;

    let mut f = oracle.value(&x);
    if !f.is_finite() {
        return Err(SolveError::NonFinite { what: "objective", k: 0 });
    }
    let f_initial = f;
    let mut g = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut k = 0usize;

    let status = loop {
        oracle.gradient(&x, &mut g);
        if !all_finite(&g) {
            return Err(SolveError::NonFinite { what: "gradient", k });
        }
        log.fill_last(
            residual(&x, &g, bounds, cfg.eps_r),
            projected_gradient_norm(&x, &g, bounds),
        );

        let part = two_metric_partition(&x, &g, bounds)?;
        let z = z_scaling(&x, &g, bounds)?;
        let zg_minus: f64 = part
            .minus
            .iter()
            .map(|&i| (z.diag[i] * g[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        if zg_minus <= eps {
            break Status::ConvergedEps1o;
        }
        if let Some(s) = log.limit_hit(k, cfg.max_outer_iters, cfg.max_wall_seconds) {
            break s;
        }

        let d = scaling.diagonal(&oracle, &x);
        // Step direction Z D Z g and the model decrease (g⁻)ᵀ Z⁻ p⁻.
        let step: Vec<f64> = (0..n).map(|i| z.diag[i] * d[i] * z.diag[i] * g[i]).collect();
        let model: f64 = part
            .minus
            .iter()
            .map(|&i| g[i] * z.diag[i] * d[i] * z.diag[i] * g[i])
            .sum();

        let mut accepted = None;
        for m in 0..cfg.max_backtracks {
            let alpha = cfg.beta.powi(m as i32);
            for i in 0..n {
                trial[i] = x[i] - alpha * step[i];
            }
            project_in_place(&mut trial, bounds);
            let f_trial = oracle.value(&trial);
            if !f_trial.is_finite() {
                return Err(SolveError::NonFinite {
                    what: "trial objective",
                    k,
                });
            }
            if f - f_trial >= cfg.sigma * alpha * model {
                accepted = Some((alpha, f_trial));
                break;
            }
        }
        let Some((alpha, f_trial)) = accepted else {
            break Status::LineSearchFailure;
        };
        std::mem::swap(&mut x, &mut trial);
        f = f_trial;
        log.push(k, f, StepKind::TwoMetric, alpha, norm(&step));
        k += 1;
    };

    let res = residual(&x, &g, bounds, cfg.eps_r);
    let pn = projected_gradient_norm(&x, &g, bounds);
    let counts = oracle.counts();
    Ok(log.finish(status, x, f_initial, f, res, pn, counts, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::check_eps1o;
    use crate::problem::FnObjective;

    fn half_norm_sq(n: usize) -> impl Objective {
        FnObjective::new(
            n,
            |x: &[f64]| 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            |x: &[f64], g: &mut [f64]| g.copy_from_slice(x),
            |_x: &[f64], v: &[f64], out: &mut [f64]| out.copy_from_slice(v),
        )
    }

    #[test]
    fn budget_examples() {
        let b = BoundSpec::nonnegative(1);
        assert_eq!(iteration_budget(1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 1.0, &b), 4);
        assert_eq!(iteration_budget(1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5, &b), 16);
        let two = BoundSpec::boxed(vec![1.0]).unwrap();
        // U_g doubles; dominant term becomes 2.
        assert_eq!(iteration_budget(1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 1.0, &two), 8);
    }

    #[test]
    fn lands_on_origin_in_one_step() {
        let obj = half_norm_sq(2);
        let cfg = SolverConfig {
            eps_g: 1e-8,
            ..SolverConfig::default()
        };
        let rep = solve(&obj, &[1.0, 1.0], &BoundSpec::nonnegative(2), &cfg, &ScalingStrategy::Identity)
            .unwrap();
        assert_eq!(rep.status, Status::ConvergedEps1o);
        assert_eq!(rep.outer_iters, 1);
        assert_eq!(rep.trace[0].alpha, 1.0);
        assert_eq!(rep.x_final, vec![0.0, 0.0]);
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let obj = half_norm_sq(2);
        let rep = solve(
            &obj,
            &[0.0, 0.0],
            &BoundSpec::nonnegative(2),
            &SolverConfig::default(),
            &ScalingStrategy::Identity,
        )
        .unwrap();
        assert_eq!(rep.status, Status::ConvergedEps1o);
        assert_eq!(rep.outer_iters, 0);
        assert_eq!(rep.oracle_counts.grad, 1);
    }

    #[test]
    fn upper_bound_becomes_active() {
        let obj = FnObjective::new(
            1,
            |x: &[f64]| 0.5 * (x[0] - 2.0).powi(2),
            |x: &[f64], g: &mut [f64]| g[0] = x[0] - 2.0,
            |_x: &[f64], v: &[f64], out: &mut [f64]| out[0] = v[0],
        );
        let bounds = BoundSpec::boxed(vec![1.0]).unwrap();
        let cfg = SolverConfig::default();
        let rep = solve(&obj, &[0.0], &bounds, &cfg, &ScalingStrategy::Identity).unwrap();
        assert_eq!(rep.status, Status::ConvergedEps1o);
        assert_eq!(rep.x_final, vec![1.0]);
        assert!(check_eps1o(&rep.x_final, &[-1.0], &bounds, cfg.eps_g).satisfied);
    }

    #[test]
    fn clipped_diagonal_scaling_converges() {
        let obj = FnObjective::new(
            3,
            |x: &[f64]| 0.5 * (4.0 * x[0] * x[0] + (x[1] - 1.0).powi(2) + 0.25 * (x[2] + 1.0).powi(2)),
            |x: &[f64], g: &mut [f64]| {
                g[0] = 4.0 * x[0];
                g[1] = x[1] - 1.0;
                g[2] = 0.25 * (x[2] + 1.0);
            },
            |_x: &[f64], v: &[f64], out: &mut [f64]| {
                out[0] = 4.0 * v[0];
                out[1] = v[1];
                out[2] = 0.25 * v[2];
            },
        );
        let scaling = ScalingStrategy::ClippedDiagonalHessian {
            lambda_min: 0.1,
            lambda_max: 10.0,
            max_probes: 3,
        };
        let bounds = BoundSpec::nonnegative(3);
        let cfg = SolverConfig {
            eps_g: 1e-8,
            ..SolverConfig::default()
        };
        let rep = solve(&obj, &[2.0, 3.0, 1.0], &bounds, &cfg, &scaling).unwrap();
        assert_eq!(rep.status, Status::ConvergedEps1o);
        assert!(rep.x_final[0].abs() < 1e-8);
        assert!((rep.x_final[1] - 1.0).abs() < 1e-8);
        assert_eq!(rep.x_final[2], 0.0);
        // Newton-like scaling solves each separable coordinate in one step.
        assert!(rep.outer_iters <= 3, "iters = {}", rep.outer_iters);
    }
}
