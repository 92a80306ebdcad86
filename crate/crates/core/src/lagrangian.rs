//! Augmented Lagrangian and ordinary Lagrangian evaluation, the KKT residual,
//! and the dual update.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::ProblemInstance;

/// Value and gradients of the augmented Lagrangian at `(x, lam, c)`, with the
/// shifted constraint image and its projection exposed for reuse.
#[derive(Clone, Debug)]
pub struct AugLagEval {
    pub value: f64,
    pub grad_x: DVector<f64>,
    /// Equals `g(x) - projected_point`.
    pub grad_lambda: DVector<f64>,
    /// `g(x) + lam / c`.
    pub shifted_point: DVector<f64>,
    /// Projection of the shifted point onto the cone.
    pub projected_point: DVector<f64>,
}

/// Evaluates `f(x) + (c/2) dist^2(g(x) + lam/c, K) - ||lam||^2 / (2c)`
/// together with its gradients in `x` and `lam`.
pub fn aug_lagrangian(
    problem: &ProblemInstance,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    c: f64,
) -> Result<AugLagEval> {
    if c <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "penalty parameter must be positive, got {c}"
        )));
    }
    let g = problem.g_value(x);
    let shifted = &g + lam / c;
    let projected = problem.cone().project(&shifted)?;
    let defect = &shifted - &projected;
    let value =
        problem.f_value(x) + 0.5 * c * defect.norm_squared() - lam.norm_squared() / (2.0 * c);
    // Multiplier candidate z = c (shifted - projected); grad_x = grad f + Jg' z.
    let z = &defect * c;
    let grad_x = problem.f_grad(x) + problem.g_jac(x).transpose() * &z;
    let grad_lambda = &g - &projected;
    Ok(AugLagEval {
        value,
        grad_x,
        grad_lambda,
        shifted_point: shifted,
        projected_point: projected,
    })
}

/// Gradient of the ordinary Lagrangian in `x`: `grad f(x) + Jg(x)' lam`.
pub fn lagrangian_grad_x(
    problem: &ProblemInstance,
    x: &DVector<f64>,
    lam: &DVector<f64>,
) -> DVector<f64> {
    problem.f_grad(x) + problem.g_jac(x).transpose() * lam
}

/// KKT residual `||grad_x L(x, lam)|| + ||g(x) - proj_K(g(x) + lam)||`;
/// zero exactly at KKT points.
pub fn kkt_residual(problem: &ProblemInstance, x: &DVector<f64>, lam: &DVector<f64>) -> f64 {
    let stationarity = lagrangian_grad_x(problem, x, lam).norm();
    let g = problem.g_value(x);
    let projected = problem
        .cone()
        .project(&(&g + lam))
        .expect("dimensions checked by evaluators");
    stationarity + (g - projected).norm()
}

/// Dual update `lam+ = c g(x) + lam - proj_K(c g(x) + lam)`.
pub fn multiplier_update(
    problem: &ProblemInstance,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    c: f64,
) -> Result<DVector<f64>> {
    if c <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "penalty parameter must be positive, got {c}"
        )));
    }
    let w = problem.g_value(x) * c + lam;
    let projected = problem.cone().project(&w)?;
    Ok(w - projected)
}
