use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BoundSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parameter `{name}` is out of range (value {value})")]
    ParameterOutOfRange { name: &'static str, value: f64 },
}

/// Parameters shared by the solvers.
///
/// The defaults are the settings used for the NMF experiments:
/// `eps_g = 1e-6`, `eps_h = sqrt(eps_g)`, `theta = zeta = 1/2`, `eta = 0.2`,
/// Capped-CG accuracy starting at 0.1 and shrinking by 10 on line-search
/// failure, and MEO failure probability 0.01.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Gradient tolerance (PNCG) and stopping tolerance (two-metric).
    pub eps_g: f64,
    /// Curvature tolerance; also the near-bound threshold of PNCG.
    pub eps_h: f64,
    /// PNCG backtracking factor.
    pub theta: f64,
    /// Capped-CG accuracy.
    pub zeta: f64,
    /// PNCG sufficient-decrease constant, must lie in `(0, (1 - zeta)/2)`.
    pub eta: f64,
    /// Two-metric sufficient-decrease constant.
    pub sigma: f64,
    /// Two-metric backtracking factor.
    pub beta: f64,
    /// MEO failure probability.
    pub delta: f64,
    /// Known upper bound on the Hessian norm, if any.
    pub m_hint: Option<f64>,
    pub max_outer_iters: usize,
    pub max_wall_seconds: f64,
    pub rng_seed: u64,
    /// When false PNCG stops as soon as neither the gradient-projection nor
    /// the Newton-CG branch fires, without calling MEO.
    pub meo_enabled: bool,
    /// Initial Capped-CG relative accuracy. `None` uses `zeta / (3 kappa)`,
    /// updated as the curvature estimate grows.
    pub zeta_hat_init: Option<f64>,
    pub zeta_hat_shrink: f64,
    /// Threshold parameter of the reported stationarity residual.
    pub eps_r: f64,
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_g: 1e-6,
            eps_h: 1e-3,
            theta: 0.5,
            zeta: 0.5,
            eta: 0.2,
            sigma: 0.5,
            beta: 0.5,
            delta: 0.01,
            m_hint: None,
            max_outer_iters: 5000,
            max_wall_seconds: 100.0,
            rng_seed: 0,
            meo_enabled: true,
            zeta_hat_init: Some(0.1),
            zeta_hat_shrink: 10.0,
            eps_r: 1e-6,
            max_backtracks: 100,
        }
    }
}

impl SolverConfig {
    /// Config with `eps_g = eps` and `eps_h = sqrt(eps)`.
    pub fn with_eps(eps: f64) -> Self {
        Self {
            eps_g: eps,
            eps_h: eps.sqrt(),
            ..Self::default()
        }
    }
}

fn open_unit(name: &'static str, value: f64) -> Result<(), ConfigError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(ConfigError::ParameterOutOfRange { name, value })
    }
}

/// Checks parameter ranges and the two-sided compatibility condition
/// `2 eps_h <= min u`.
pub fn validate_config(cfg: &SolverConfig, bounds: &BoundSpec) -> Result<(), ConfigError> {
    open_unit("eps_g", cfg.eps_g)?;
    open_unit("eps_h", cfg.eps_h)?;
    open_unit("theta", cfg.theta)?;
    open_unit("zeta", cfg.zeta)?;
    open_unit("sigma", cfg.sigma)?;
    open_unit("beta", cfg.beta)?;
    if !(cfg.eta > 0.0 && cfg.eta < (1.0 - cfg.zeta) / 2.0) {
        return Err(ConfigError::ParameterOutOfRange {
            name: "eta",
            value: cfg.eta,
        });
    }
    if !(0.0..1.0).contains(&cfg.delta) {
        return Err(ConfigError::ParameterOutOfRange {
            name: "delta",
            value: cfg.delta,
        });
    }
    if let Some(m) = cfg.m_hint {
        if !(m >= 0.0 && m.is_finite()) {
            return Err(ConfigError::ParameterOutOfRange {
                name: "m_hint",
                value: m,
            });
        }
    }
    if let Some(z) = cfg.zeta_hat_init {
        open_unit("zeta_hat_init", z)?;
    }
    if !(cfg.zeta_hat_shrink > 1.0 && cfg.zeta_hat_shrink.is_finite()) {
        return Err(ConfigError::ParameterOutOfRange {
            name: "zeta_hat_shrink",
            value: cfg.zeta_hat_shrink,
        });
    }
    if !(cfg.max_wall_seconds >= 0.0) {
        return Err(ConfigError::ParameterOutOfRange {
            name: "max_wall_seconds",
            value: cfg.max_wall_seconds,
        });
    }
    open_unit("eps_r", cfg.eps_r)?;
    if cfg.max_backtracks == 0 {
        return Err(ConfigError::ParameterOutOfRange {
            name: "max_backtracks",
            value: 0.0,
        });
    }
    let min_upper = bounds.min_upper();
    if 2.0 * cfg.eps_h > min_upper {
        return Err(ConfigError::ParameterOutOfRange {
            name: "eps_h",
            value: cfg.eps_h,
        });
    }
    Ok(())
}
