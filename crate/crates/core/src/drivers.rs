//! Outer loops: the inexact proximal augmented Lagrangian method and the
//! classical augmented Lagrangian baseline, with penalty schedules, the
//! tolerance rule `eps(t) = min(eps_max, sigma t^(1+theta))`, the step
//! acceptance test, and per-iteration trace recording.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::lagrangian::{kkt_residual, multiplier_update};
use crate::model::ProblemInstance;
use crate::subsolver::{solve_alm_subproblem, solve_subproblem, SubproblemStatus, SubsolverLimits};

/// Penalty parameter sequence `c_k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule {
    Constant(f64),
    Geometric { c0: f64, rho: f64, c_max: f64 },
    Unbounded { c0: f64, rho: f64 },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let positive = |c: f64, what: &str| {
            if c > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{what} must be positive, got {c}"
                )))
            }
        };
        match *self {
            Schedule::Constant(c) => positive(c, "penalty"),
            Schedule::Geometric { c0, rho, c_max } => {
                positive(c0, "initial penalty")?;
                positive(c_max, "penalty cap")?;
                if rho <= 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "geometric growth factor must exceed 1, got {rho}"
                    )));
                }
                if c_max < c0 {
                    return Err(Error::InvalidArgument(
                        "penalty cap below initial penalty".into(),
                    ));
                }
                Ok(())
            }
            Schedule::Unbounded { c0, rho } => {
                positive(c0, "initial penalty")?;
                if rho <= 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "growth factor must exceed 1, got {rho}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn penalty(&self, k: usize) -> f64 {
        match *self {
            Schedule::Constant(c) => c,
            Schedule::Geometric { c0, rho, c_max } => (c0 * rho.powi(k as i32)).min(c_max),
            Schedule::Unbounded { c0, rho } => c0 * rho.powi(k as i32),
        }
    }
}

/// Inner tolerance rule `eps(t) = min(eps_max, sigma t^(1+theta))`; any
/// `theta > 0` makes `eps(t) = o(t)` as `t -> 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsRule {
    pub sigma: f64,
    pub theta: f64,
    pub eps_max: f64,
}

impl Default for EpsRule {
    fn default() -> Self {
        EpsRule {
            sigma: 1.0,
            theta: 0.5,
            eps_max: 1.0,
        }
    }
}

impl EpsRule {
    pub fn validate(&self) -> Result<()> {
        if self.sigma <= 0.0 || self.theta <= 0.0 || self.eps_max <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "tolerance rule parameters must be positive: sigma {}, theta {}, eps_max {}",
                self.sigma, self.theta, self.eps_max
            )));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "residual argument must be nonnegative, got {t}"
            )));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        Ok((self.sigma * t.powf(1.0 + self.theta)).min(self.eps_max))
    }
}

/// Response to a step failing the acceptance test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectPolicy {
    /// Redo with the tolerance divided by 10, at most 3 times, then escalate
    /// to penalty increases.
    RetryTighter,
    /// Redo with the penalty multiplied by 10, at most 3 times. The bump is
    /// transient; the schedule itself is never rewritten.
    IncreaseC,
    Abort,
}

#[derive(Clone, Copy, Debug)]
pub struct RunConfig {
    pub schedule: Schedule,
    pub eps_rule: EpsRule,
    /// Acceptance constant: a step is accepted when
    /// `||dx|| + ||dlam|| <= alpha * r`.
    pub alpha: f64,
    /// Terminate once the KKT residual falls to this level.
    pub stop_tol: f64,
    pub max_outer: usize,
    pub on_reject: RejectPolicy,
    pub limits: SubsolverLimits,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schedule: Schedule::Geometric {
                c0: 10.0,
                rho: 2.0,
                c_max: 1e6,
            },
            eps_rule: EpsRule::default(),
            alpha: 1e3,
            stop_tol: 1e-10,
            max_outer: 100,
            on_reject: RejectPolicy::RetryTighter,
            limits: SubsolverLimits::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.eps_rule.validate()?;
        if self.alpha <= 0.0 {
            return Err(Error::InvalidArgument("alpha must be positive".into()));
        }
        if self.stop_tol <= 0.0 {
            return Err(Error::InvalidArgument("stop_tol must be positive".into()));
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidArgument("max_outer must be >= 1".into()));
        }
        Ok(())
    }
}

/// One iterate of a run, together with the step taken from it. The residual
/// `r` governs the step: `eps = eps_rule(r)`. The final iterate carries a
/// zero step.
#[derive(Clone, Debug)]
pub struct TraceRecord {
    pub k: usize,
    pub x: DVector<f64>,
    pub lam: DVector<f64>,
    pub c: f64,
    pub eps: f64,
    pub r: f64,
    /// `||x_next - x|| + ||lam_next - lam||`.
    pub step_norm: f64,
    pub accepted: bool,
    pub inner_iterations: usize,
    pub dist_primal: Option<f64>,
    pub dist_dual: Option<f64>,
    pub dist_pd: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub stop_tol: f64,
    pub converged: bool,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> &TraceRecord {
        self.records
            .last()
            .expect("traces always hold at least one record")
    }

    pub fn final_x(&self) -> &DVector<f64> {
        &self.last().x
    }

    pub fn final_lam(&self) -> &DVector<f64> {
        &self.last().lam
    }

    pub fn final_r(&self) -> f64 {
        self.last().r
    }

    /// Ground-truth distance series, present when the problem had a reference.
    pub fn dist_pd_series(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.dist_pd).collect()
    }
}

/// A failed run still yields the trace up to the failure point.
#[derive(Debug)]
pub struct RunFailure {
    pub source: Error,
    pub trace: Trace,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "run failed after {} recorded iterations: {}",
            self.trace.len(),
            self.source
        )
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

pub type RunResult = std::result::Result<Trace, Box<RunFailure>>;

/// Outcome of a single outer step.
#[derive(Clone, Debug)]
pub struct PalmStep {
    pub x: DVector<f64>,
    pub lam: DVector<f64>,
    /// Record for the iterate the step departed from; `k` is assigned by the
    /// driver.
    pub record: TraceRecord,
    pub terminal: bool,
}

#[allow(clippy::too_many_arguments)]
fn record_for(
    problem: &ProblemInstance,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    c: f64,
    eps: f64,
    r: f64,
    step_norm: f64,
    accepted: bool,
    inner_iterations: usize,
) -> TraceRecord {
    let (dist_primal, dist_dual) = match problem.reference() {
        Some(reference) => (
            Some((x - &reference.x_bar).norm()),
            Some(reference.multiplier_set.distance_to(lam)),
        ),
        None => (None, None),
    };
    let dist_pd = dist_primal.zip(dist_dual).map(|(p, d)| p + d);
    TraceRecord {
        k: 0,
        x: x.clone(),
        lam: lam.clone(),
        c,
        eps,
        r,
        step_norm,
        accepted,
        inner_iterations,
        dist_primal,
        dist_dual,
        dist_pd,
    }
}

/// One inexact proximal step: solve the proximal subproblem at `v = x` to
/// tolerance `eps_rule(r)`, update the multiplier, and test acceptance.
/// Rejections are retried per the configured policy.
pub fn palm_step(
    problem: &ProblemInstance,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    c: f64,
    config: &RunConfig,
) -> Result<PalmStep> {
    config.validate()?;
    let r = kkt_residual(problem, x, lam);
    if r <= config.stop_tol {
        return Ok(PalmStep {
            x: x.clone(),
            lam: lam.clone(),
            record: record_for(problem, x, lam, c, 0.0, r, 0.0, true, 0),
            terminal: true,
        });
    }

    let mut eps = config.eps_rule.eval(r)?;
    let mut c_eff = c;
    let mut tighten_left = match config.on_reject {
        RejectPolicy::RetryTighter => 3,
        _ => 0,
    };
    let mut increase_left = match config.on_reject {
        RejectPolicy::RetryTighter | RejectPolicy::IncreaseC => 3,
        RejectPolicy::Abort => 0,
    };
    let mut last_step_norm;

    loop {
        let sol = solve_subproblem(problem, lam, c_eff, x, eps, x, config.limits)?;
        let (sol, eps_achieved) = settle_inner(sol, eps, config.stop_tol)?;
        let lam_next = multiplier_update(problem, &sol.x, lam, c_eff)?;
        let step_norm = (&sol.x - x).norm() + (&lam_next - lam).norm();
        if step_norm <= config.alpha * r {
            return Ok(PalmStep {
                x: sol.x,
                lam: lam_next,
                record: record_for(
                    problem,
                    x,
                    lam,
                    c_eff,
                    eps_achieved,
                    r,
                    step_norm,
                    true,
                    sol.iterations,
                ),
                terminal: false,
            });
        }
        last_step_norm = step_norm;
        if tighten_left > 0 {
            tighten_left -= 1;
            eps /= 10.0;
        } else if increase_left > 0 {
            increase_left -= 1;
            c_eff *= 10.0;
        } else {
            return Err(Error::StepRejected {
                iteration: 0,
                step_norm: last_step_norm,
                bound: config.alpha * r,
            });
        }
    }
}

/// Resolves an inner solve whose demanded tolerance fell below what f64
/// arithmetic can certify. Large penalties amplify rounding in the gradient,
/// so the solver can stall at a gradient norm that no longer improves. Such
/// a stall is accepted only when it sits far below the outer stopping
/// tolerance (so termination is unaffected); the achieved norm is then
/// logged as the step's tolerance. Anything worse is a genuine failure.
fn settle_inner(
    sol: crate::subsolver::SubproblemResult,
    eps: f64,
    stop_tol: f64,
) -> Result<(crate::subsolver::SubproblemResult, f64)> {
    match sol.status {
        SubproblemStatus::Converged => Ok((sol, eps)),
        _ if sol.grad_norm <= 0.1 * stop_tol => {
            let achieved = sol.grad_norm.max(eps);
            Ok((sol, achieved))
        }
        status => Err(Error::SubproblemFailure {
            status,
            grad_norm: sol.grad_norm,
            eps,
        }),
    }
}

enum Method {
    Palm,
    Alm,
}

fn run(
    problem: &ProblemInstance,
    x0: &DVector<f64>,
    lam0: &DVector<f64>,
    config: &RunConfig,
    method: Method,
) -> RunResult {
    let fail = |source: Error, records: Vec<TraceRecord>, stop_tol: f64| {
        Box::new(RunFailure {
            source,
            trace: Trace {
                records,
                stop_tol,
                converged: false,
            },
        })
    };

    if let Err(e) = config.validate() {
        return Err(fail(e, Vec::new(), config.stop_tol));
    }
    if x0.len() != problem.n() {
        return Err(fail(
            Error::dim(problem.n(), x0.len(), "starting point"),
            Vec::new(),
            config.stop_tol,
        ));
    }
    if lam0.len() != problem.m() {
        return Err(fail(
            Error::dim(problem.m(), lam0.len(), "starting multiplier"),
            Vec::new(),
            config.stop_tol,
        ));
    }

    let mut x = x0.clone();
    let mut lam = lam0.clone();
    let mut records: Vec<TraceRecord> = Vec::new();

    for k in 0..config.max_outer {
        let c = config.schedule.penalty(k);
        let outcome = match method {
            Method::Palm => palm_step(problem, &x, &lam, c, config),
            Method::Alm => alm_step(problem, &x, &lam, c, config),
        };
        match outcome {
            Ok(mut step) => {
                step.record.k = k;
                let terminal = step.terminal;
                records.push(step.record);
                if terminal {
                    return Ok(Trace {
                        records,
                        stop_tol: config.stop_tol,
                        converged: true,
                    });
                }
                x = step.x;
                lam = step.lam;
            }
            Err(mut e) => {
                if let Error::StepRejected { iteration, .. } = &mut e {
                    *iteration = k;
                }
                return Err(fail(e, records, config.stop_tol));
            }
        }
    }

    // Iteration budget exhausted; record the final iterate as reached.
    let r = kkt_residual(problem, &x, &lam);
    let c = config.schedule.penalty(config.max_outer);
    let mut record = record_for(problem, &x, &lam, c, 0.0, r, 0.0, true, 0);
    record.k = config.max_outer;
    let converged = r <= config.stop_tol;
    records.push(record);
    Ok(Trace {
        records,
        stop_tol: config.stop_tol,
        converged,
    })
}

/// Deterministic default start: a small offset from the reference along the
/// normalized all-ones direction, or the origin for reference-free problems.
pub fn default_start(problem: &ProblemInstance) -> (DVector<f64>, DVector<f64>) {
    match problem.reference() {
        Some(r) => {
            let offset = |dim: usize| DVector::from_element(dim, 0.03 / (dim as f64).sqrt());
            (
                &r.x_bar + offset(problem.n()),
                &r.lambda_bar + offset(problem.m()),
            )
        }
        None => (DVector::zeros(problem.n()), DVector::zeros(problem.m())),
    }
}

/// Runs the inexact proximal method until the residual reaches `stop_tol` or
/// the iteration budget runs out.
pub fn run_palm(
    problem: &ProblemInstance,
    x0: &DVector<f64>,
    lam0: &DVector<f64>,
    config: &RunConfig,
) -> RunResult {
    run(problem, x0, lam0, config, Method::Palm)
}

/// Classical baseline: the inner solve omits the proximal term and stops at
/// `||grad_x L|| <= eps_k`; no acceptance test is applied.
pub fn run_alm(
    problem: &ProblemInstance,
    x0: &DVector<f64>,
    lam0: &DVector<f64>,
    config: &RunConfig,
) -> RunResult {
    run(problem, x0, lam0, config, Method::Alm)
}

fn alm_step(
    problem: &ProblemInstance,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    c: f64,
    config: &RunConfig,
) -> Result<PalmStep> {
    let r = kkt_residual(problem, x, lam);
    if r <= config.stop_tol {
        return Ok(PalmStep {
            x: x.clone(),
            lam: lam.clone(),
            record: record_for(problem, x, lam, c, 0.0, r, 0.0, true, 0),
            terminal: true,
        });
    }
    let eps = config.eps_rule.eval(r)?;
    let sol = solve_alm_subproblem(problem, lam, c, eps, x, config.limits)?;
    let (sol, eps_achieved) = settle_inner(sol, eps, config.stop_tol)?;
    let lam_next = multiplier_update(problem, &sol.x, lam, c)?;
    let step_norm = (&sol.x - x).norm() + (&lam_next - lam).norm();
    Ok(PalmStep {
        x: sol.x,
        lam: lam_next,
        record: record_for(
            problem,
            x,
            lam,
            c,
            eps_achieved,
            r,
            step_norm,
            true,
            sol.iterations,
        ),
        terminal: false,
    })
}
