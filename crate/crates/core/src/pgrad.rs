//! Projected gradient with the Armijo rule along the projection arc.
//!
//! Used as the first-order baseline in the NMF benchmarks. Every iteration
//! tries `alpha = beta^m` for `m = 0, 1, ...` and accepts the first trial
//! point `P(x - alpha g)` whose decrease exceeds `sigma <x - x(alpha), g>`.

use serde::{Deserialize, Serialize};

use crate::geometry::{project_in_place, projected_gradient_norm, residual, BoundSpec};
use crate::linalg::{all_finite, norm};
use crate::problem::{Objective, OracleCounter};
use crate::report::{feasible_start, RunLog, SolveError, SolverReport, Status, StepKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PgradParams {
    pub beta: f64,
    pub sigma: f64,
    /// Stop once `||∇ᴾf(x)|| <= tol`.
    pub tol: f64,
    pub max_outer_iters: usize,
    pub max_wall_seconds: f64,
    pub max_backtracks: usize,
    pub eps_r: f64,
}

impl Default for PgradParams {
    fn default() -> Self {
        Self {
            beta: 0.5,
            sigma: 0.5,
            tol: 1e-4,
            max_outer_iters: 5000,
            max_wall_seconds: 100.0,
            max_backtracks: 100,
            eps_r: 1e-6,
        }
    }
}

pub fn solve<O: Objective + ?Sized>(
    oracle: &O,
    x0: &[f64],
    bounds: &BoundSpec,
    params: &PgradParams,
) -> Result<SolverReport, SolveError> {
    let oracle = OracleCounter::new(oracle);
    let n = oracle.dim();
    let mut log = RunLog::start();
    let mut x = feasible_start(x0, n, bounds, &mut log)?;

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
        let pn = projected_gradient_norm(&x, &g, bounds);
        log.fill_last(residual(&x, &g, bounds, params.eps_r), pn);
        if pn <= params.tol {
            break Status::ConvergedEps1o;
        }
        if let Some(s) = log.limit_hit(k, params.max_outer_iters, params.max_wall_seconds) {
            break s;
        }

        let mut accepted = None;
        for m in 0..params.max_backtracks {
            let alpha = params.beta.powi(m as i32);
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
            if f - ft > params.sigma * model {
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
    };

    let res = residual(&x, &g, bounds, params.eps_r);
    let pn = projected_gradient_norm(&x, &g, bounds);
    let counts = oracle.counts();
    Ok(log.finish(status, x, f_initial, f, res, pn, counts, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::FnObjective;

    #[test]
    fn converges_on_box_quadratic() {
        let obj = FnObjective::new(
            2,
            |x: &[f64]| 0.5 * ((x[0] + 1.0).powi(2) + 2.0 * (x[1] - 3.0).powi(2)),
            |x: &[f64], g: &mut [f64]| {
                g[0] = x[0] + 1.0;
                g[1] = 2.0 * (x[1] - 3.0);
            },
            |_x: &[f64], v: &[f64], out: &mut [f64]| {
                out[0] = v[0];
                out[1] = 2.0 * v[1];
            },
        );
        let bounds = BoundSpec::boxed(vec![f64::INFINITY, 2.0]).unwrap();
        let params = PgradParams {
            tol: 1e-10,
            ..PgradParams::default()
        };
        let rep = solve(&obj, &[1.0, 1.0], &bounds, &params).unwrap();
        assert_eq!(rep.status, Status::ConvergedEps1o);
        assert_eq!(rep.x_final, vec![0.0, 2.0]);
        for w in rep.trace.windows(2) {
            assert!(w[1].f < w[0].f);
        }
    }

    #[test]
    fn stationary_start_takes_no_step() {
        let obj = FnObjective::new(
            1,
            |x: &[f64]| x[0],
            |_x: &[f64], g: &mut [f64]| g[0] = 1.0,
            |_x: &[f64], _v: &[f64], out: &mut [f64]| out[0] = 0.0,
        );
        let rep = solve(&obj, &[0.0], &BoundSpec::nonnegative(1), &PgradParams::default()).unwrap();
        assert_eq!(rep.outer_iters, 0);
        assert_eq!(rep.projnorm, 0.0);
    }
}
