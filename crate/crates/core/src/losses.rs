//! Local Variation Loss (LVL) and Local-Global Consistency Loss (LGCL).
//!
//! Both are mean quadratic forms under a [`LossKernel`] `M` (normally `L†`):
//!
//! ```text
//! LVL  = (1/N) Σ_{i=2..N} (ŷ_i − ŷ_{i−1})ᵀ M (ŷ_i − ŷ_{i−1})
//! LGCL = (1/N) Σ_{i=1..N} (ŷ_i − ȳ)ᵀ M (ŷ_i − ȳ),    ȳ = (1/N) Σ ŷ_i
//! ```
//!
//! The `*_matrix` functions accept any `N×K` matrix (finite-difference checks
//! perturb rows off the simplex); the plain versions take a validated
//! [`TrajectoryPrediction`].

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::LossKernel;

const ROW_SUM_TOL: f64 = 1e-6;

/// Per-segment class confidences, one row-stochastic row per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPrediction {
    probs: Array2<f64>,
}

impl TrajectoryPrediction {
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        let (n, k) = probs.dim();
        if n == 0 {
            return Err(Error::InvalidTrajectory("trajectory has no segments".into()));
        }
        if k == 0 {
            return Err(Error::InvalidTrajectory("trajectory has no classes".into()));
        }
        for (i, row) in probs.outer_iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidTrajectory(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidTrajectory(format!("row {i} sums to {s}, not 1")));
            }
        }
        Ok(TrajectoryPrediction { probs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidTrajectory("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let probs = Array2::from_shape_vec((rows.len(), k), flat)
            .map_err(|e| Error::InvalidTrajectory(e.to_string()))?;
        Self::new(probs)
    }

    /// One-hot rows for the given labels.
    pub fn one_hot(labels: &[usize], num_levels: usize) -> Result<Self> {
        let mut probs = Array2::zeros((labels.len(), num_levels));
        for (i, &l) in labels.iter().enumerate() {
            if l >= num_levels {
                return Err(Error::InvalidIndex { index: l, num_levels });
            }
            probs[[i, l]] = 1.0;
        }
        Self::new(probs)
    }

    pub fn probs(&self) -> ArrayView2<'_, f64> {
        self.probs.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.nrows() == 0
    }

    pub fn num_levels(&self) -> usize {
        self.probs.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.probs.row(i)
    }
}

fn check_dims(kernel: &LossKernel, probs: &ArrayView2<f64>) -> Result<()> {
    if probs.ncols() != kernel.num_levels() {
        return Err(Error::InvalidDimension(format!(
            "trajectory has {} classes, kernel has {}",
            probs.ncols(),
            kernel.num_levels()
        )));
    }
    Ok(())
}

pub fn lvl_matrix(kernel: &LossKernel, probs: ArrayView2<f64>) -> Result<f64> {
    check_dims(kernel, &probs)?;
    let n = probs.nrows();
    if n < 2 {
        return Ok(0.0);
    }
    let total: f64 = (1..n)
        .map(|i| {
            let d = &probs.row(i) - &probs.row(i - 1);
            kernel.quadratic_form(d.view())
        })
        .sum();
    Ok(total / n as f64)
}

pub fn lgcl_matrix(kernel: &LossKernel, probs: ArrayView2<f64>) -> Result<f64> {
    check_dims(kernel, &probs)?;
    let n = probs.nrows();
    if n < 2 {
        return Ok(0.0);
    }
    let mean = probs.mean_axis(Axis(0)).expect("nonempty");
    let total: f64 = probs
        .outer_iter()
        .map(|row| kernel.quadratic_form((&row - &mean).view()))
        .sum();
    Ok(total / n as f64)
}

/// `∂LVL/∂ŷ_i = (2/N)[M(ŷ_i − ŷ_{i−1}) − M(ŷ_{i+1} − ŷ_i)]`, boundary terms dropped.
pub fn lvl_gradient_matrix(kernel: &LossKernel, probs: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_dims(kernel, &probs)?;
    let n = probs.nrows();
    let mut grad = Array2::zeros(probs.raw_dim());
    if n < 2 {
        return Ok(grad);
    }
    let scale = 2.0 / n as f64;
    for i in 1..n {
        let d = &probs.row(i) - &probs.row(i - 1);
        let md = kernel.apply(d.view()) * scale;
        let mut gi = grad.row_mut(i);
        gi += &md;
        let mut gp = grad.row_mut(i - 1);
        gp -= &md;
    }
    Ok(grad)
}

/// `∂LGCL/∂ŷ_i = (2/N) M(ŷ_i − ȳ)`; the terms through ȳ sum to zero.
pub fn lgcl_gradient_matrix(kernel: &LossKernel, probs: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_dims(kernel, &probs)?;
    let n = probs.nrows();
    let mut grad = Array2::zeros(probs.raw_dim());
    if n < 2 {
        return Ok(grad);
    }
    let mean = probs.mean_axis(Axis(0)).expect("nonempty");
    let scale = 2.0 / n as f64;
    for (i, row) in probs.outer_iter().enumerate() {
        let dev = &row - &mean;
        grad.row_mut(i).assign(&(kernel.apply(dev.view()) * scale));
    }
    Ok(grad)
}

pub fn lvl(kernel: &LossKernel, traj: &TrajectoryPrediction) -> Result<f64> {
    lvl_matrix(kernel, traj.probs())
}

pub fn lgcl(kernel: &LossKernel, traj: &TrajectoryPrediction) -> Result<f64> {
    lgcl_matrix(kernel, traj.probs())
}

pub fn lvl_gradient(kernel: &LossKernel, traj: &TrajectoryPrediction) -> Result<Array2<f64>> {
    lvl_gradient_matrix(kernel, traj.probs())
}

pub fn lgcl_gradient(kernel: &LossKernel, traj: &TrajectoryPrediction) -> Result<Array2<f64>> {
    lgcl_gradient_matrix(kernel, traj.probs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub lvl: f64,
    pub lgcl: f64,
    pub combined: f64,
    pub alpha: f64,
    pub beta: f64,
}

fn check_coefficients(alpha: f64, beta: f64) -> Result<()> {
    for (name, c) in [("alpha", alpha), ("beta", beta)] {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidCoefficient(format!("{name} must be ≥ 0, got {c}")));
        }
    }
    Ok(())
}

/// `alpha · LVL + beta · LGCL`.
pub fn combined_loss(
    kernel: &LossKernel,
    traj: &TrajectoryPrediction,
    alpha: f64,
    beta: f64,
) -> Result<LossBreakdown> {
    check_coefficients(alpha, beta)?;
    let lvl = lvl(kernel, traj)?;
    let lgcl = lgcl(kernel, traj)?;
    Ok(LossBreakdown {
        lvl,
        lgcl,
        combined: alpha * lvl + beta * lgcl,
        alpha,
        beta,
    })
}

pub fn combined_gradient_matrix(
    kernel: &LossKernel,
    probs: ArrayView2<f64>,
    alpha: f64,
    beta: f64,
) -> Result<Array2<f64>> {
    check_coefficients(alpha, beta)?;
    check_dims(kernel, &probs)?;
    let mut grad = Array2::zeros(probs.raw_dim());
    if alpha > 0.0 {
        grad.scaled_add(alpha, &lvl_gradient_matrix(kernel, probs)?);
    }
    if beta > 0.0 {
        grad.scaled_add(beta, &lgcl_gradient_matrix(kernel, probs)?);
    }
    Ok(grad)
}

pub fn combined_gradient(
    kernel: &LossKernel,
    traj: &TrajectoryPrediction,
    alpha: f64,
    beta: f64,
) -> Result<Array2<f64>> {
    combined_gradient_matrix(kernel, traj.probs(), alpha, beta)
}

/// Both sides of the LVL/LGCL equivalence: `L1 ≤ 4·L2` and
/// `L2 ≤ ((N−1)²/N)·L1`. Slacks are `rhs − lhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalenceCheck {
    pub l1: f64,
    pub l2: f64,
    pub bound1_slack: f64,
    pub bound2_slack: f64,
}

impl EquivalenceCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.bound1_slack >= -tol && self.bound2_slack >= -tol
    }
}

pub fn equivalence_check(kernel: &LossKernel, traj: &TrajectoryPrediction) -> Result<EquivalenceCheck> {
    equivalence_check_matrix(kernel, traj.probs())
}

pub fn equivalence_check_matrix(kernel: &LossKernel, probs: ArrayView2<f64>) -> Result<EquivalenceCheck> {
    let n = probs.nrows();
    if n < 2 {
        return Err(Error::InvalidLength(format!(
            "equivalence bounds need at least 2 segments, got {n}"
        )));
    }
    let l1 = lvl_matrix(kernel, probs)?;
    let l2 = lgcl_matrix(kernel, probs)?;
    let nf = n as f64;
    let c_star = (nf - 1.0) * (nf - 1.0) / nf;
    Ok(EquivalenceCheck {
        l1,
        l2,
        bound1_slack: 4.0 * l2 - l1,
        bound2_slack: c_star * l1 - l2,
    })
}

/// Squared-Euclidean reference for LVL with an identity kernel: the mean
/// squared consecutive difference, written without any kernel machinery.
pub fn mean_squared_variation(probs: ArrayView2<f64>) -> f64 {
    let n = probs.nrows();
    let mut total = 0.0;
    for i in 1..n {
        for (a, b) in probs.row(i).iter().zip(probs.row(i - 1).iter()) {
            total += (a - b) * (a - b);
        }
    }
    total / n as f64
}

/// Column means of a trajectory (the estimate of the global label).
pub fn mean_prediction(traj: &TrajectoryPrediction) -> Array1<f64> {
    traj.probs.mean_axis(Axis(0)).expect("nonempty")
}
