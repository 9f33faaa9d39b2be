//! Feasible-set geometry: projection onto the box, active-index partitions,
//! diagonal scalings and approximate-stationarity checkers.
//!
//! Every routine handles both one-sided bounds (`x[i] >= 0`) and two-sided
//! bounds (`0 <= x[i] <= u[i]`). A missing upper bound is stored as
//! `f64::INFINITY`, and the formulas are written so that an infinite upper
//! bound reproduces the one-sided result bit for bit.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::symmetric_min_eigenvalue;
use crate::problem::Objective;

/// Largest dimension [`check_eps2o`] will densify by default.
pub const DEFAULT_EPS2O_MAX_DIM: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("index {index} is out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("upper bound {value} at index {index} must be positive")]
    NonPositiveUpper { index: usize, value: f64 },
    #[error("index {index} has an upper bound but is not constrained")]
    UpperOnUnconstrained { index: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point is infeasible at index {index} (value {value})")]
    InfeasiblePoint { index: usize, value: f64 },
    #[error("dimension {dim} exceeds the dense-check cap {cap}")]
    DimensionTooLarge { dim: usize, cap: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// The constrained index set and optional per-index upper bounds.
///
/// Constrained indices have the implicit lower bound 0; all other indices
/// are free.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundSpec {
    constrained: Vec<bool>,
    upper: Vec<f64>,
}

impl BoundSpec {
    /// No index is constrained.
    pub fn unconstrained(dim: usize) -> Self {
        Self {
            constrained: vec![false; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    /// Every index is constrained to be nonnegative.
    pub fn nonnegative(dim: usize) -> Self {
        Self {
            constrained: vec![true; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    /// Nonnegativity on the listed (0-based) indices only.
    pub fn nonnegative_on(dim: usize, indices: &[usize]) -> Result<Self, BoundsError> {
        let mut spec = Self::unconstrained(dim);
        for &index in indices {
            if index >= dim {
                return Err(BoundsError::IndexOutOfRange { index, dim });
            }
            spec.constrained[index] = true;
        }
        Ok(spec)
    }

    /// Every index constrained to `[0, upper[i]]`; entries may be infinite.
    pub fn boxed(upper: Vec<f64>) -> Result<Self, BoundsError> {
        let mut spec = Self::nonnegative(upper.len());
        for (index, &value) in upper.iter().enumerate() {
            spec = spec.with_upper(index, value)?;
        }
        Ok(spec)
    }

    pub fn with_upper(mut self, index: usize, value: f64) -> Result<Self, BoundsError> {
        let dim = self.dim();
        if index >= dim {
            return Err(BoundsError::IndexOutOfRange { index, dim });
        }
        if !self.constrained[index] {
            return Err(BoundsError::UpperOnUnconstrained { index });
        }
        if value.is_nan() || value <= 0.0 {
            return Err(BoundsError::NonPositiveUpper { index, value });
        }
        self.upper[index] = value;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.constrained.len()
    }

    #[inline]
    pub fn is_constrained(&self, i: usize) -> bool {
        self.constrained[i]
    }

    /// Upper bound at `i`, `+inf` when absent.
    #[inline]
    pub fn upper(&self, i: usize) -> f64 {
        self.upper[i]
    }

    pub fn has_upper_bounds(&self) -> bool {
        self.upper.iter().any(|u| u.is_finite())
    }

    /// `min_{i in I} u[i]`, or `+inf` when no index carries an upper bound.
    pub fn min_upper(&self) -> f64 {
        self.upper
            .iter()
            .zip(&self.constrained)
            .filter(|(_, &c)| c)
            .map(|(&u, _)| u)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn constrained_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.constrained
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(i, _)| i)
    }

    /// First index violating the bounds, if any.
    pub fn first_violation(&self, x: &[f64]) -> Option<(usize, f64)> {
        x.iter().enumerate().find_map(|(i, &xi)| {
            let bad = xi.is_nan() || (self.constrained[i] && (xi < 0.0 || xi > self.upper[i]));
            bad.then_some((i, xi))
        })
    }

    pub fn is_feasible(&self, x: &[f64]) -> bool {
        self.first_violation(x).is_none()
    }

    pub fn check_feasible(&self, x: &[f64]) -> Result<(), GeometryError> {
        if x.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        match self.first_violation(x) {
            Some((index, value)) => Err(GeometryError::InfeasiblePoint { index, value }),
            None => Ok(()),
        }
    }

    /// True when every constrained index also has a finite upper bound.
    pub fn is_fully_boxed(&self) -> bool {
        self.constrained_indices().all(|i| self.upper[i].is_finite())
    }
}

/// Split of `{0..n}` into "plus" (near-active) and "minus" (free) indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexPartition {
    pub plus: Vec<usize>,
    pub minus: Vec<usize>,
    in_plus: Vec<bool>,
}

impl IndexPartition {
    pub fn from_mask(in_plus: Vec<bool>) -> Self {
        let mut plus = Vec::new();
        let mut minus = Vec::new();
        for (i, &p) in in_plus.iter().enumerate() {
            if p {
                plus.push(i);
            } else {
                minus.push(i);
            }
        }
        Self {
            plus,
            minus,
            in_plus,
        }
    }

    #[inline]
    pub fn is_plus(&self, i: usize) -> bool {
        self.in_plus[i]
    }

    pub fn dim(&self) -> usize {
        self.in_plus.len()
    }
}

/// A diagonal scaling matrix stored as its diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagScaling {
    pub diag: Vec<f64>,
}

impl DiagScaling {
    pub fn identity(n: usize) -> Self {
        Self {
            diag: vec![1.0; n],
        }
    }

    /// `out[i] = diag[i] * v[i]`
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for ((o, d), vi) in out.iter_mut().zip(&self.diag).zip(v) {
            *o = d * vi;
        }
    }

    pub fn scaled_norm(&self, v: &[f64]) -> f64 {
        self.diag
            .iter()
            .zip(v)
            .map(|(d, vi)| (d * vi) * (d * vi))
            .sum::<f64>()
            .sqrt()
    }
}

#[inline]
fn clamp_to_box(xi: f64, upper: f64) -> f64 {
    xi.max(0.0).min(upper)
}

/// Euclidean projection onto the feasible box, in place.
pub fn project_in_place(x: &mut [f64], bounds: &BoundSpec) {
    for (i, xi) in x.iter_mut().enumerate() {
        if bounds.is_constrained(i) {
            *xi = clamp_to_box(*xi, bounds.upper(i));
        }
    }
}

/// Euclidean projection onto the feasible box.
pub fn project(x: &[f64], bounds: &BoundSpec) -> Vec<f64> {
    let mut out = x.to_vec();
    project_in_place(&mut out, bounds);
    out
}

/// Projected gradient: components pointing out of an active bound are
/// zeroed.
pub fn projected_gradient(
    x: &[f64],
    g: &[f64],
    bounds: &BoundSpec,
) -> Result<Vec<f64>, GeometryError> {
    bounds.check_feasible(x)?;
    Ok(projected_gradient_unchecked(x, g, bounds))
}

pub(crate) fn projected_gradient_unchecked(x: &[f64], g: &[f64], bounds: &BoundSpec) -> Vec<f64> {
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (&xi, &gi))| {
            if !bounds.is_constrained(i) {
                gi
            } else if xi == 0.0 {
                gi.min(0.0)
            } else if xi == bounds.upper(i) {
                gi.max(0.0)
            } else {
                gi
            }
        })
        .collect()
}

/// `||∇ᴾf(x)||` without the feasibility check.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], bounds: &BoundSpec) -> f64 {
    crate::linalg::norm(&projected_gradient_unchecked(x, g, bounds))
}

/// Active set of the two-metric method: indices sitting exactly on a bound
/// with the gradient pushing into it.
pub fn two_metric_partition(
    x: &[f64],
    g: &[f64],
    bounds: &BoundSpec,
) -> Result<IndexPartition, GeometryError> {
    bounds.check_feasible(x)?;
    let mask = (0..x.len())
        .map(|i| {
            bounds.is_constrained(i)
                && ((x[i] == 0.0 && g[i] > 0.0) || (x[i] == bounds.upper(i) && g[i] < 0.0))
        })
        .collect();
    Ok(IndexPartition::from_mask(mask))
}

/// The `Z` scaling of the two-metric method.
pub fn z_scaling(x: &[f64], g: &[f64], bounds: &BoundSpec) -> Result<DiagScaling, GeometryError> {
    bounds.check_feasible(x)?;
    let diag = (0..x.len())
        .map(|i| {
            if !bounds.is_constrained(i) {
                return 1.0;
            }
            let (xi, gi, ui) = (x[i], g[i], bounds.upper(i));
            let half = ui / 2.0;
            let shrink = (xi > 0.0 && xi <= half && gi > 0.0) || (xi > half && xi < ui && gi < 0.0);
            if shrink {
                xi.min(ui - xi).min(1.0)
            } else {
                1.0
            }
        })
        .collect();
    Ok(DiagScaling { diag })
}

pub(crate) fn threshold_mask(x: &[f64], bounds: &BoundSpec, eps: f64) -> Vec<bool> {
    (0..x.len())
        .map(|i| bounds.is_constrained(i) && (x[i] <= eps || x[i] >= bounds.upper(i) - eps))
        .collect()
}

/// Near-active set of projected Newton-CG: constrained indices within
/// `eps_k` of a bound (closed inequalities).
pub fn pncg_partition(
    x: &[f64],
    bounds: &BoundSpec,
    eps_k: f64,
) -> Result<IndexPartition, GeometryError> {
    bounds.check_feasible(x)?;
    Ok(IndexPartition::from_mask(threshold_mask(x, bounds, eps_k)))
}

/// The `S` scaling: distance to the nearer bound on the plus set, 1 elsewhere.
pub fn s_scaling(x: &[f64], partition: &IndexPartition, bounds: &BoundSpec) -> DiagScaling {
    let diag = (0..x.len())
        .map(|i| {
            if partition.is_plus(i) {
                x[i].min(bounds.upper(i) - x[i])
            } else {
                1.0
            }
        })
        .collect();
    DiagScaling { diag }
}

/// Stationarity residual `max{ ||S g||, -min_{J+} g }` with threshold
/// `sqrt(eps_r)`. Near an upper bound the sign of the second term flips.
pub fn residual(x: &[f64], g: &[f64], bounds: &BoundSpec, eps_r: f64) -> f64 {
    let threshold = eps_r.sqrt();
    let partition = IndexPartition::from_mask(threshold_mask(x, bounds, threshold));
    let s = s_scaling(x, &partition, bounds);
    let mut worst = f64::NEG_INFINITY;
    for &i in &partition.plus {
        if x[i] <= threshold {
            worst = worst.max(-g[i]);
        }
        if x[i] >= bounds.upper(i) - threshold {
            worst = worst.max(g[i]);
        }
    }
    s.scaled_norm(g).max(worst)
}

/// Outcome of an approximate first-order stationarity check.
#[derive(Clone, Debug, PartialEq)]
pub struct Eps1oReport {
    pub satisfied: bool,
    pub infeasible: Vec<usize>,
    pub scaled_grad_norm: f64,
    pub sign_violations: Vec<usize>,
}

/// Approximate first-order stationarity: feasibility, `||Z g|| <= eps` with
/// `z[i] = min{x[i], u[i]-x[i], 1}` on constrained indices, and the gradient
/// sign conditions on each half of every constrained interval.
pub fn check_eps1o(x: &[f64], g: &[f64], bounds: &BoundSpec, eps: f64) -> Eps1oReport {
    let mut infeasible = Vec::new();
    let mut sign_violations = Vec::new();
    let mut sq = 0.0;
    for i in 0..x.len() {
        let (xi, gi) = (x[i], g[i]);
        if !bounds.is_constrained(i) {
            sq += gi * gi;
            continue;
        }
        let ui = bounds.upper(i);
        if !(0.0..=ui).contains(&xi) {
            infeasible.push(i);
        }
        let zi = xi.min(ui - xi).min(1.0);
        sq += (zi * gi) * (zi * gi);
        let lower_half = xi <= ui / 2.0;
        if (lower_half && gi < -eps) || (!lower_half && gi > eps) {
            sign_violations.push(i);
        }
    }
    let scaled_grad_norm = sq.sqrt();
    Eps1oReport {
        satisfied: infeasible.is_empty() && sign_violations.is_empty() && scaled_grad_norm <= eps,
        infeasible,
        scaled_grad_norm,
        sign_violations,
    }
}

/// Outcome of an approximate second-order stationarity check.
#[derive(Clone, Debug, PartialEq)]
pub struct Eps2oReport {
    pub satisfied: bool,
    pub feasible: bool,
    /// `||S ∇f||`, required `<= 2 eps`.
    pub scaled_grad_norm: f64,
    /// Near-bound indices whose gradient violates the `eps^{3/4}` floor.
    pub gradient_floor_violations: Vec<usize>,
    /// `λ_min(S ∇²f S)`, required `>= -sqrt(eps)`.
    pub min_curvature: f64,
}

/// Approximate second-order stationarity, checked densely.
///
/// Builds `S ∇²f(x) S` column by column from Hessian-vector products and
/// takes its smallest eigenvalue, so it is a verification utility for
/// moderate `n`, not a solver component.
pub fn check_eps2o<O: Objective + ?Sized>(
    x: &[f64],
    oracle: &O,
    bounds: &BoundSpec,
    eps: f64,
    max_dim: usize,
) -> Result<Eps2oReport, GeometryError> {
    let n = x.len();
    if n > max_dim {
        return Err(GeometryError::DimensionTooLarge { dim: n, cap: max_dim });
    }
    if oracle.dim() != n || bounds.dim() != n {
        return Err(GeometryError::DimensionMismatch {
            expected: oracle.dim(),
            got: n,
        });
    }
    let feasible = bounds.is_feasible(x);
    let threshold = eps.sqrt();
    let floor = eps.powf(0.75);

    let mut g = vec![0.0; n];
    oracle.gradient(x, &mut g);

    let partition = IndexPartition::from_mask(threshold_mask(x, bounds, threshold));
    let s = s_scaling(x, &partition, bounds);
    let scaled_grad_norm = s.scaled_norm(&g);

    let mut gradient_floor_violations = Vec::new();
    for &i in &partition.plus {
        let low = x[i] <= threshold && g[i] < -floor;
        let high = x[i] >= bounds.upper(i) - threshold && g[i] > floor;
        if low || high {
            gradient_floor_violations.push(i);
        }
    }

    let mut shs = DMatrix::<f64>::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        if s.diag[j] == 0.0 {
            continue;
        }
        e[j] = s.diag[j];
        oracle.hessian_vec(x, &e, &mut col);
        e[j] = 0.0;
        for i in 0..n {
            shs[(i, j)] = s.diag[i] * col[i];
        }
    }
    let min_curvature = if n == 0 {
        0.0
    } else {
        symmetric_min_eigenvalue(&shs)
    };

    let satisfied = feasible
        && scaled_grad_norm <= 2.0 * eps
        && gradient_floor_violations.is_empty()
        && min_curvature >= -threshold;
    Ok(Eps2oReport {
        satisfied,
        feasible,
        scaled_grad_norm,
        gradient_floor_violations,
        min_curvature,
    })
}
