//! Problem representation: smooth objective and constraint map with first and
//! second derivatives, reference solutions with explicit multiplier-set
//! descriptions, a registry of analytic benchmarks, and derivative
//! self-checks.

mod parse;
mod quadratic;
mod registry;

pub use parse::{parse_problem, problem_to_json};
pub use quadratic::{
    ConstraintBlock, ConstraintMap, QuadraticObjective, QuadraticProblem, QuadraticRow,
};
pub use registry::{registry_get, registry_names, registry_penalty_threshold};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::cones::ConeSpec;
use crate::error::{Error, Result};

/// Twice-differentiable problem data `min f(x) s.t. g(x) in K`.
///
/// Implementations must be evaluable on the whole primal space and safe for
/// concurrent calls.
pub trait ProblemFunctions: Send + Sync {
    fn f_value(&self, x: &DVector<f64>) -> f64;
    fn f_grad(&self, x: &DVector<f64>) -> DVector<f64>;
    fn f_hess(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn g_value(&self, x: &DVector<f64>) -> DVector<f64>;
    /// The `m x n` derivative of the constraint map.
    fn g_jac(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// The `n x n` contraction `sum_i lam_i Hess g_i(x)`.
    fn g_hess_contract(&self, x: &DVector<f64>, lam: &DVector<f64>) -> DMatrix<f64>;
    /// Present when the instance is expressible in the quadratic file format.
    fn as_quadratic(&self) -> Option<&QuadraticProblem> {
        None
    }
}

/// An immutable problem instance; cheap to clone and safe to share.
#[derive(Clone)]
pub struct ProblemInstance {
    name: String,
    n: usize,
    cone: ConeSpec,
    functions: Arc<dyn ProblemFunctions>,
    reference: Option<ReferenceSolution>,
}

impl std::fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m())
            .field("cone", &self.cone)
            .field("has_reference", &self.reference.is_some())
            .finish()
    }
}

impl ProblemInstance {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        cone: ConeSpec,
        functions: Arc<dyn ProblemFunctions>,
        reference: Option<ReferenceSolution>,
    ) -> Result<Self> {
        let name = name.into();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "primal dimension must be >= 1".into(),
            ));
        }
        if let Some(r) = &reference {
            if r.x_bar.len() != n {
                return Err(Error::dim(n, r.x_bar.len(), "reference x_bar"));
            }
            if r.multiplier_set.dim() != cone.total_dim() {
                return Err(Error::dim(
                    cone.total_dim(),
                    r.multiplier_set.dim(),
                    "reference multiplier set",
                ));
            }
            r.multiplier_set.validate()?;
            if r.lambda_bar.len() != cone.total_dim() {
                return Err(Error::dim(
                    cone.total_dim(),
                    r.lambda_bar.len(),
                    "reference lambda_bar",
                ));
            }
        }
        let instance = ProblemInstance {
            name,
            n,
            cone,
            functions,
            reference,
        };
        let probe = instance.functions.g_value(&DVector::zeros(n));
        if probe.len() != instance.cone.total_dim() {
            return Err(Error::dim(
                instance.cone.total_dim(),
                probe.len(),
                "constraint image",
            ));
        }
        Ok(instance)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Primal dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Constraint-image dimension (equals the cone's total dimension).
    pub fn m(&self) -> usize {
        self.cone.total_dim()
    }

    pub fn cone(&self) -> &ConeSpec {
        &self.cone
    }

    pub fn reference(&self) -> Option<&ReferenceSolution> {
        self.reference.as_ref()
    }

    pub fn require_reference(&self) -> Result<&ReferenceSolution> {
        self.reference
            .as_ref()
            .ok_or_else(|| Error::MissingReference(self.name.clone()))
    }

    pub fn quadratic_data(&self) -> Option<&QuadraticProblem> {
        self.functions.as_quadratic()
    }

    pub fn f_value(&self, x: &DVector<f64>) -> f64 {
        assert_eq!(x.len(), self.n, "primal dimension");
        self.functions.f_value(x)
    }

    pub fn f_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.n, "primal dimension");
        self.functions.f_grad(x)
    }

    pub fn f_hess(&self, x: &DVector<f64>) -> DMatrix<f64> {
        assert_eq!(x.len(), self.n, "primal dimension");
        self.functions.f_hess(x)
    }

    pub fn g_value(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.n, "primal dimension");
        self.functions.g_value(x)
    }

    pub fn g_jac(&self, x: &DVector<f64>) -> DMatrix<f64> {
        assert_eq!(x.len(), self.n, "primal dimension");
        self.functions.g_jac(x)
    }

    pub fn g_hess_contract(&self, x: &DVector<f64>, lam: &DVector<f64>) -> DMatrix<f64> {
        assert_eq!(x.len(), self.n, "primal dimension");
        assert_eq!(lam.len(), self.m(), "dual dimension");
        self.functions.g_hess_contract(x, lam)
    }
}

/// Explicit description of the Lagrange multiplier set at a stationary point.
#[derive(Clone, Debug, PartialEq)]
pub enum MultiplierSetDesc {
    Singleton(DVector<f64>),
    Segment {
        a: DVector<f64>,
        b: DVector<f64>,
    },
    /// `{ anchor + basis t : lower <= t <= upper }` with a full-column-rank
    /// basis.
    AffineBox {
        anchor: DVector<f64>,
        basis: DMatrix<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl MultiplierSetDesc {
    pub fn dim(&self) -> usize {
        match self {
            MultiplierSetDesc::Singleton(v) => v.len(),
            MultiplierSetDesc::Segment { a, .. } => a.len(),
            MultiplierSetDesc::AffineBox { anchor, .. } => anchor.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MultiplierSetDesc::Singleton(_) => Ok(()),
            MultiplierSetDesc::Segment { a, b } => {
                if a.len() != b.len() {
                    return Err(Error::dim(a.len(), b.len(), "segment endpoints"));
                }
                if (a - b).norm() == 0.0 {
                    return Err(Error::InvalidArgument(
                        "segment endpoints must be distinct".into(),
                    ));
                }
                Ok(())
            }
            MultiplierSetDesc::AffineBox {
                anchor,
                basis,
                lower,
                upper,
            } => {
                if basis.nrows() != anchor.len() {
                    return Err(Error::dim(
                        anchor.len(),
                        basis.nrows(),
                        "affine box basis rows",
                    ));
                }
                let p = basis.ncols();
                if lower.len() != p || upper.len() != p {
                    return Err(Error::dim(
                        p,
                        lower.len().min(upper.len()),
                        "affine box bounds",
                    ));
                }
                if lower.iter().zip(upper).any(|(l, u)| l > u) {
                    return Err(Error::InvalidArgument(
                        "affine box lower bound exceeds upper bound".into(),
                    ));
                }
                if basis.clone().svd(false, false).rank(1e-12) < p {
                    return Err(Error::InvalidArgument(
                        "affine box basis must have full column rank".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Default designated element: the singleton value, segment midpoint, or
    /// box anchor.
    pub fn designated(&self) -> DVector<f64> {
        match self {
            MultiplierSetDesc::Singleton(v) => v.clone(),
            MultiplierSetDesc::Segment { a, b } => (a + b) * 0.5,
            MultiplierSetDesc::AffineBox { anchor, .. } => anchor.clone(),
        }
    }

    /// Euclidean distance from `lam` to the set. Segments project onto the
    /// supporting line and clamp the parameter; boxes run a projected-gradient
    /// solve of the box-constrained least-squares to tolerance 1e-12.
    pub fn distance_to(&self, lam: &DVector<f64>) -> f64 {
        match self {
            MultiplierSetDesc::Singleton(v) => (lam - v).norm(),
            MultiplierSetDesc::Segment { a, b } => {
                let d = b - a;
                let t = ((lam - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
                (lam - (a + d * t)).norm()
            }
            MultiplierSetDesc::AffineBox {
                anchor,
                basis,
                lower,
                upper,
            } => {
                let p = basis.ncols();
                let gram = basis.transpose() * basis;
                let rhs = basis.transpose() * (lam - anchor);
                // Frobenius norm bounds the spectral norm, so 1/step is a
                // safe Lipschitz constant for the gradient.
                let step = 1.0 / gram.norm().max(1e-300);
                let clamp = |t: &mut DVector<f64>| {
                    for i in 0..p {
                        t[i] = t[i].clamp(lower[i], upper[i]);
                    }
                };
                let mut t = DVector::from_fn(p, |i, _| 0.5 * (lower[i] + upper[i]));
                clamp(&mut t);
                for _ in 0..200_000 {
                    let grad = &gram * &t - &rhs;
                    let mut next = &t - grad * step;
                    clamp(&mut next);
                    let moved = (&next - &t).norm();
                    t = next;
                    if moved <= 1e-13 {
                        break;
                    }
                }
                (lam - (anchor + basis * t)).norm()
            }
        }
    }

    /// Draws a uniformly parameterized element of the set.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            MultiplierSetDesc::Singleton(v) => v.clone(),
            MultiplierSetDesc::Segment { a, b } => {
                let t: f64 = rng.gen_range(0.0..=1.0);
                a * (1.0 - t) + b * t
            }
            MultiplierSetDesc::AffineBox {
                anchor,
                basis,
                lower,
                upper,
            } => {
                let t = DVector::from_fn(basis.ncols(), |i, _| rng.gen_range(lower[i]..=upper[i]));
                anchor + basis * t
            }
        }
    }
}

/// A known stationary point with its multiplier set.
#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    pub x_bar: DVector<f64>,
    pub multiplier_set: MultiplierSetDesc,
    /// A designated element of the multiplier set.
    pub lambda_bar: DVector<f64>,
    /// Asserted at benchmark design time, never computed.
    pub sosc_holds: bool,
}

impl ReferenceSolution {
    pub fn new(x_bar: DVector<f64>, multiplier_set: MultiplierSetDesc, sosc_holds: bool) -> Self {
        let lambda_bar = multiplier_set.designated();
        ReferenceSolution {
            x_bar,
            multiplier_set,
            lambda_bar,
            sosc_holds,
        }
    }

    pub fn with_lambda_bar(mut self, lambda_bar: DVector<f64>) -> Self {
        self.lambda_bar = lambda_bar;
        self
    }
}

/// Max deviations of the analytic derivatives from central finite
/// differences, each relative to `1 + |value|`.
#[derive(Clone, Copy, Debug)]
pub struct DerivativeReport {
    pub f_grad_err: f64,
    pub f_hess_err: f64,
    pub g_jac_err: f64,
    pub g_hess_contract_err: f64,
}

impl DerivativeReport {
    pub fn max_err(&self) -> f64 {
        self.f_grad_err
            .max(self.f_hess_err)
            .max(self.g_jac_err)
            .max(self.g_hess_contract_err)
    }
}

const FD_STEP: f64 = 1e-6;

/// Compares all evaluators against central finite differences at `x`. The
/// seed draws the multiplier probe for the constraint Hessian contraction.
pub fn check_derivatives(
    problem: &ProblemInstance,
    x: &DVector<f64>,
    seed: u64,
) -> DerivativeReport {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = problem.n();
    let m = problem.m();
    let h = FD_STEP;

    let rel = |fd: f64, an: f64| (fd - an).abs() / (1.0 + an.abs());

    let grad = problem.f_grad(x);
    let hess = problem.f_hess(x);
    let jac = problem.g_jac(x);
    let lam = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
    let contract = problem.g_hess_contract(x, &lam);

    let mut f_grad_err: f64 = 0.0;
    let mut f_hess_err: f64 = 0.0;
    let mut g_jac_err: f64 = 0.0;
    let mut g_hess_contract_err: f64 = 0.0;

    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;

        let fd_grad = (problem.f_value(&xp) - problem.f_value(&xm)) / (2.0 * h);
        f_grad_err = f_grad_err.max(rel(fd_grad, grad[j]));

        let fd_hess_col = (problem.f_grad(&xp) - problem.f_grad(&xm)) / (2.0 * h);
        for i in 0..n {
            f_hess_err = f_hess_err.max(rel(fd_hess_col[i], hess[(i, j)]));
        }

        let fd_jac_col = (problem.g_value(&xp) - problem.g_value(&xm)) / (2.0 * h);
        for i in 0..m {
            g_jac_err = g_jac_err.max(rel(fd_jac_col[i], jac[(i, j)]));
        }

        // Column j of sum_i lam_i Hess g_i equals the derivative of
        // x -> Jg(x)^T lam in direction e_j.
        let fd_contract_col = (problem.g_jac(&xp).transpose() * &lam
            - problem.g_jac(&xm).transpose() * &lam)
            / (2.0 * h);
        for i in 0..n {
            g_hess_contract_err =
                g_hess_contract_err.max(rel(fd_contract_col[i], contract[(i, j)]));
        }
    }

    DerivativeReport {
        f_grad_err,
        f_hess_err,
        g_jac_err,
        g_hess_contract_err,
    }
}
