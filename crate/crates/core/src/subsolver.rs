//! Inexact minimization of the proximal subproblem
//! `x -> L(x, lam, c) + ||x - v||^2 / (2c)` to a first-order tolerance,
//! by semismooth Newton steps with a gradient-descent safeguard.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lagrangian::aug_lagrangian;
use crate::model::ProblemInstance;

/// Armijo sufficient-decrease parameter.
const ARMIJO: f64 = 1e-4;
/// Steps below this length fail the line search.
const MIN_STEP: f64 = 1e-16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubproblemStatus {
    Converged,
    MaxIter,
    LineSearchFail,
}

#[derive(Clone, Debug)]
pub struct SubproblemResult {
    pub x: DVector<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub status: SubproblemStatus,
    pub objective: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SubsolverLimits {
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for SubsolverLimits {
    fn default() -> Self {
        SubsolverLimits {
            max_iterations: 200,
            max_halvings: 60,
        }
    }
}

/// The inner minimization target: the augmented Lagrangian at fixed
/// `(lam, c)`, plus the proximal term when a center is present.
pub(crate) struct Subproblem<'a> {
    problem: &'a ProblemInstance,
    lam: &'a DVector<f64>,
    c: f64,
    prox_center: Option<&'a DVector<f64>>,
}

impl<'a> Subproblem<'a> {
    pub(crate) fn new(
        problem: &'a ProblemInstance,
        lam: &'a DVector<f64>,
        c: f64,
        prox_center: Option<&'a DVector<f64>>,
    ) -> Result<Self> {
        if c <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "penalty parameter must be positive, got {c}"
            )));
        }
        Ok(Subproblem {
            problem,
            lam,
            c,
            prox_center,
        })
    }

    fn objective(&self, x: &DVector<f64>) -> Result<f64> {
        let mut value = aug_lagrangian(self.problem, x, self.lam, self.c)?.value;
        if let Some(v) = self.prox_center {
            value += (x - v).norm_squared() / (2.0 * self.c);
        }
        Ok(value)
    }

    fn grad(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut grad = aug_lagrangian(self.problem, x, self.lam, self.c)?.grad_x;
        if let Some(v) = self.prox_center {
            grad += (x - v) / self.c;
        }
        Ok(grad)
    }

    /// One element of the generalized Hessian:
    /// `Hess f + sum_i z_i Hess g_i + c Jg' (I - P) Jg (+ I/c)`,
    /// where `z` is the multiplier candidate at `x` and `P` is a generalized
    /// Jacobian of the projection at the shifted point.
    fn generalized_hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let eval = aug_lagrangian(self.problem, x, self.lam, self.c)?;
        let z = (&eval.shifted_point - &eval.projected_point) * self.c;
        let p = self
            .problem
            .cone()
            .proj_generalized_jacobian(&eval.shifted_point)?;
        let jac = self.problem.g_jac(x);
        let m = DMatrix::identity(p.nrows(), p.ncols()) - p;
        let mut h = self.problem.f_hess(x)
            + self.problem.g_hess_contract(x, &z)
            + jac.transpose() * m * &jac * self.c;
        if self.prox_center.is_some() {
            let n = h.nrows();
            h += DMatrix::identity(n, n) / self.c;
        }
        // Symmetrize away assembly rounding.
        Ok((&h + h.transpose()) * 0.5)
    }

    fn solve(
        &self,
        eps: f64,
        x_init: &DVector<f64>,
        limits: SubsolverLimits,
        mut observer: impl FnMut(f64),
    ) -> Result<SubproblemResult> {
        if eps <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "subproblem tolerance must be positive, got {eps}"
            )));
        }
        if x_init.len() != self.problem.n() {
            return Err(Error::dim(
                self.problem.n(),
                x_init.len(),
                "subproblem x_init",
            ));
        }

        let mut x = x_init.clone();
        let mut obj = self.objective(&x)?;
        observer(obj);
        let mut iterations = 0;

        loop {
            let grad = self.grad(&x)?;
            let grad_norm = grad.norm();
            if grad_norm <= eps {
                return Ok(SubproblemResult {
                    x,
                    grad_norm,
                    iterations,
                    status: SubproblemStatus::Converged,
                    objective: obj,
                });
            }
            if iterations >= limits.max_iterations {
                return Ok(SubproblemResult {
                    x,
                    grad_norm,
                    iterations,
                    status: SubproblemStatus::MaxIter,
                    objective: obj,
                });
            }

            let h = self.generalized_hessian(&x)?;
            let mut direction = newton_direction(&h, &grad);
            // Safeguard: fall back to steepest descent when the regularized
            // Newton direction fails to descend.
            let descent_ok = |d: &DVector<f64>| grad.dot(d) < -1e-14 * d.norm() * grad_norm;
            if !direction.as_ref().is_some_and(descent_ok) {
                direction = Some(-&grad);
            }
            let direction = direction.expect("descent direction always available");
            let slope = grad.dot(&direction);

            // Backtracking by halving; the epsilon slack keeps the test
            // meaningful once predicted decreases reach rounding level.
            let slack = 4.0 * f64::EPSILON * (1.0 + obj.abs());
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..=limits.max_halvings {
                let candidate = &x + &direction * step;
                let cand_obj = self.objective(&candidate)?;
                if cand_obj <= obj + ARMIJO * step * slope + slack {
                    x = candidate;
                    obj = cand_obj;
                    observer(obj);
                    accepted = true;
                    break;
                }
                step *= 0.5;
                if step < MIN_STEP {
                    break;
                }
            }
            if !accepted {
                return Ok(SubproblemResult {
                    x,
                    grad_norm,
                    iterations,
                    status: SubproblemStatus::LineSearchFail,
                    objective: obj,
                });
            }
            iterations += 1;
        }
    }
}

/// Solves the regularized Newton system `(H + mu I) d = -g`, escalating the
/// Levenberg parameter until the factorization succeeds.
fn newton_direction(h: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    let scale = h
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let mut mu = (1e-8 * scale).max(1e-12);
    for _ in 0..20 {
        let reg = h + DMatrix::identity(n, n) * mu;
        if let Some(chol) = reg.cholesky() {
            return Some(chol.solve(&(-grad)));
        }
        mu = (mu * 100.0).max(1e-10 * (1.0 + scale));
    }
    None
}

/// Gradient of the proximal subproblem at `x`:
/// `grad_x L(x, lam, c) + (x - v) / c`.
pub fn subproblem_grad(
    problem: &ProblemInstance,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    c: f64,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    Subproblem::new(problem, lam, c, Some(v))?.grad(x)
}

/// One element of the generalized Hessian of the proximal subproblem at `x`.
pub fn subproblem_generalized_hessian(
    problem: &ProblemInstance,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    c: f64,
    v: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    Subproblem::new(problem, lam, c, Some(v))?.generalized_hessian(x)
}

/// Minimizes the proximal subproblem until `||subproblem_grad|| <= eps`.
/// Iteration caps and failed line searches return the best iterate with the
/// corresponding status instead of an error.
pub fn solve_subproblem(
    problem: &ProblemInstance,
    lam: &DVector<f64>,
    c: f64,
    v: &DVector<f64>,
    eps: f64,
    x_init: &DVector<f64>,
    limits: SubsolverLimits,
) -> Result<SubproblemResult> {
    Subproblem::new(problem, lam, c, Some(v))?.solve(eps, x_init, limits, |_| {})
}

/// Minimizes the plain augmented Lagrangian in `x` (no proximal term), the
/// inner step of the classical method of multipliers.
pub fn solve_alm_subproblem(
    problem: &ProblemInstance,
    lam: &DVector<f64>,
    c: f64,
    eps: f64,
    x_init: &DVector<f64>,
    limits: SubsolverLimits,
) -> Result<SubproblemResult> {
    Subproblem::new(problem, lam, c, None)?.solve(eps, x_init, limits, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_problem, registry_get};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dvec(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    /// Scalar toy: f = x^2/2, g(x) = x, K = {0}.
    fn scalar_toy() -> ProblemInstance {
        parse_problem(
            r#"{
                "n": 1,
                "f": {"Q": [1.0], "q": [0.0], "r0": 0.0},
                "constraints": [
                    {"map": {"A": [1.0], "b": [0.0]}, "cone": {"kind": "zero", "dim": 1}}
                ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn gradient_hand_values_on_scalar_toy() {
        let p = scalar_toy();
        let zero = dvec(&[0.0]);
        let g0 = subproblem_grad(&p, &zero, &zero, 1.0, &zero).unwrap();
        assert_relative_eq!(g0[0], 0.0);
        let g1 = subproblem_grad(&p, &dvec(&[1.0]), &zero, 1.0, &zero).unwrap();
        assert_relative_eq!(g1[0], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = 1e-6;
        for name in crate::model::registry_names() {
            let p = registry_get(name).unwrap();
            for _ in 0..10 {
                let x = DVector::from_fn(p.n(), |_, _| rng.gen_range(-0.8..0.8));
                let v = DVector::from_fn(p.n(), |_, _| rng.gen_range(-0.8..0.8));
                let lam = DVector::from_fn(p.m(), |_, _| rng.gen_range(-0.8..0.8));
                let c = rng.gen_range(0.5..10.0);
                let sub = Subproblem::new(&p, &lam, c, Some(&v)).unwrap();
                let grad = sub.grad(&x).unwrap();
                for i in 0..p.n() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd =
                        (sub.objective(&xp).unwrap() - sub.objective(&xm).unwrap()) / (2.0 * h);
                    assert!(
                        (fd - grad[i]).abs() <= 1e-5 * (1.0 + grad[i].abs()),
                        "{name}: grad[{i}] fd {fd} vs {}",
                        grad[i]
                    );
                }
            }
        }
    }

    #[test]
    fn hessian_hand_values() {
        let p = scalar_toy();
        let zero = dvec(&[0.0]);
        let h = subproblem_generalized_hessian(&p, &zero, &zero, 1.0, &zero).unwrap();
        assert_relative_eq!(h[(0, 0)], 3.0, epsilon = 1e-14);

        // Interior shifted point kills the penalty curvature: Hess f + I/c.
        let p1 = registry_get("nlp-degenerate").unwrap();
        let c = 4.0;
        let h = subproblem_generalized_hessian(
            &p1,
            &dvec(&[1.0, 0.0]),
            &dvec(&[0.0, 0.0]),
            c,
            &dvec(&[1.0, 0.0]),
        )
        .unwrap();
        let expected = p1.f_hess(&dvec(&[1.0, 0.0])) + DMatrix::identity(2, 2) / c;
        assert_relative_eq!((h - expected).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn hessian_matches_directional_differences_at_smooth_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = 1e-6;
        for name in crate::model::registry_names() {
            let p = registry_get(name).unwrap();
            let mut agreed = 0;
            let trials = 20;
            for _ in 0..trials {
                let x = DVector::from_fn(p.n(), |_, _| rng.gen_range(-0.8..0.8));
                let v = DVector::from_fn(p.n(), |_, _| rng.gen_range(-0.8..0.8));
                let lam = DVector::from_fn(p.m(), |_, _| rng.gen_range(-0.8..0.8));
                let c = rng.gen_range(0.5..10.0);
                let sub = Subproblem::new(&p, &lam, c, Some(&v)).unwrap();
                let hess = sub.generalized_hessian(&x).unwrap();
                let dir = DVector::from_fn(p.n(), |_, _| rng.gen_range(-1.0..1.0));
                let fd = (sub.grad(&(&x + &dir * h)).unwrap()
                    - sub.grad(&(&x - &dir * h)).unwrap())
                    / (2.0 * h);
                let an = &hess * &dir;
                if (fd - &an).norm() <= 1e-4 * (1.0 + an.norm()) {
                    agreed += 1;
                }
            }
            // Samples landing on a projection kink may disagree; they are rare.
            assert!(
                agreed >= trials - 2,
                "{name}: only {agreed}/{trials} agreed"
            );
        }
    }

    #[test]
    fn scalar_toy_solves_to_closed_form() {
        let p = scalar_toy();
        let zero = dvec(&[0.0]);
        let limits = SubsolverLimits::default();

        let res = solve_subproblem(&p, &zero, 1.0, &zero, 1e-10, &dvec(&[5.0]), limits).unwrap();
        assert_eq!(res.status, SubproblemStatus::Converged);
        assert!(res.grad_norm <= 1e-10);
        assert!(res.x[0].abs() <= 1e-10);

        // Stationarity x + (x + 1) + x = 0 at lam = 1.
        let res =
            solve_subproblem(&p, &dvec(&[1.0]), 1.0, &zero, 1e-10, &dvec(&[5.0]), limits).unwrap();
        assert_eq!(res.status, SubproblemStatus::Converged);
        assert!((res.x[0] + 1.0 / 3.0).abs() <= 1e-9);
    }

    #[test]
    fn p1_subproblem_matches_grid_oracle() {
        let p = registry_get("nlp-degenerate").unwrap();
        let lam = dvec(&[0.5, 0.5]);
        let c = 10.0;
        let v = dvec(&[0.05, 0.05]);
        let sub = Subproblem::new(&p, &lam, c, Some(&v)).unwrap();

        // Dense grid over [-0.5, 0.5]^2 with two refinement passes.
        let mut center = (0.0, 0.0);
        let mut half = 0.5;
        let mut best = (f64::INFINITY, center);
        for _pass in 0..3 {
            let steps = 400;
            for i in 0..=steps {
                let x1 = center.0 - half + 2.0 * half * i as f64 / steps as f64;
                for j in 0..=steps {
                    let x2 = center.1 - half + 2.0 * half * j as f64 / steps as f64;
                    let obj = sub.objective(&dvec(&[x1, x2])).unwrap();
                    if obj < best.0 {
                        best = (obj, (x1, x2));
                    }
                }
            }
            center = best.1;
            half = 4.0 * half / 400.0;
        }

        let res = solve_subproblem(&p, &lam, c, &v, 1e-8, &v, SubsolverLimits::default()).unwrap();
        assert_eq!(res.status, SubproblemStatus::Converged);
        assert!(
            (res.x[0] - best.1 .0).abs() <= 1.1e-6 && (res.x[1] - best.1 .1).abs() <= 1.1e-6,
            "solver {:?} vs oracle {:?}",
            res.x,
            best.1
        );
    }

    #[test]
    fn converged_status_honors_tolerance_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for name in crate::model::registry_names() {
            let p = registry_get(name).unwrap();
            let r = p.reference().unwrap();
            for _ in 0..20 {
                let v = &r.x_bar + DVector::from_fn(p.n(), |_, _| rng.gen_range(-0.05..0.05));
                let lam =
                    &r.lambda_bar + DVector::from_fn(p.m(), |_, _| rng.gen_range(-0.05..0.05));
                let c = rng.gen_range(2.0..50.0);
                let eps = 10f64.powf(rng.gen_range(-10.0..-4.0));
                let res =
                    solve_subproblem(&p, &lam, c, &v, eps, &v, SubsolverLimits::default()).unwrap();
                assert_eq!(res.status, SubproblemStatus::Converged, "{name}");
                assert!(res.grad_norm <= eps, "{name}: {} > {eps}", res.grad_norm);
                let grad = subproblem_grad(&p, &res.x, &lam, c, &v).unwrap();
                assert!(grad.norm() <= eps * (1.0 + 1e-9), "{name}");
            }
        }
    }

    #[test]
    fn objective_descends_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for name in crate::model::registry_names() {
            let p = registry_get(name).unwrap();
            let r = p.reference().unwrap();
            for _ in 0..10 {
                let v = &r.x_bar + DVector::from_fn(p.n(), |_, _| rng.gen_range(-0.3..0.3));
                let lam = &r.lambda_bar + DVector::from_fn(p.m(), |_, _| rng.gen_range(-0.3..0.3));
                let x0 = &r.x_bar + DVector::from_fn(p.n(), |_, _| rng.gen_range(-1.0..1.0));
                let sub = Subproblem::new(&p, &lam, 5.0, Some(&v)).unwrap();
                let mut history = Vec::new();
                sub.solve(1e-9, &x0, SubsolverLimits::default(), |obj| {
                    history.push(obj)
                })
                .unwrap();
                for w in history.windows(2) {
                    assert!(
                        w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs()),
                        "{name}: objective rose from {} to {}",
                        w[0],
                        w[1]
                    );
                }
            }
        }
    }

    #[test]
    fn solution_is_independent_of_initialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for name in crate::model::registry_names() {
            let p = registry_get(name).unwrap();
            let r = p.reference().unwrap();
            let eps = 1e-11;
            for _ in 0..10 {
                let v = &r.x_bar + DVector::from_fn(p.n(), |_, _| rng.gen_range(-0.03..0.03));
                let lam =
                    &r.lambda_bar + DVector::from_fn(p.m(), |_, _| rng.gen_range(-0.03..0.03));
                let init_a = &r.x_bar + DVector::from_fn(p.n(), |_, _| rng.gen_range(-0.1..0.1));
                let init_b = &r.x_bar + DVector::from_fn(p.n(), |_, _| rng.gen_range(-0.1..0.1));
                let a =
                    solve_subproblem(&p, &lam, 10.0, &v, eps, &init_a, SubsolverLimits::default())
                        .unwrap();
                let b =
                    solve_subproblem(&p, &lam, 10.0, &v, eps, &init_b, SubsolverLimits::default())
                        .unwrap();
                assert_eq!(a.status, SubproblemStatus::Converged);
                assert_eq!(b.status, SubproblemStatus::Converged);
                assert!(
                    (a.x - b.x).norm() <= 10.0 * eps,
                    "{name}: initializations disagree"
                );
            }
        }
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        let p = scalar_toy();
        let zero = dvec(&[0.0]);
        assert!(solve_subproblem(&p, &zero, 0.0, &zero, 1e-8, &zero, Default::default()).is_err());
        assert!(solve_subproblem(&p, &zero, 1.0, &zero, 0.0, &zero, Default::default()).is_err());
    }
}
