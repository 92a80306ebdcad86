//! Ground-truth distances to the solution set, convergence-rate estimation,
//! and sampled verification of the error-bound, quadratic-growth, subproblem
//! calmness, and step error-bound properties on benchmark problems.
//!
//! All existence constants (kappa, kappa_hat, tau, l_hat, alpha) are fitted
//! from samples and reported, never assumed; checks pass on finiteness and
//! stability of the fit.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::drivers::Trace;
use crate::error::{Error, Result};
use crate::lagrangian::{aug_lagrangian, kkt_residual, multiplier_update};
use crate::model::{MultiplierSetDesc, ProblemInstance, ReferenceSolution};
use crate::subsolver::{solve_subproblem, SubproblemStatus, SubsolverLimits};

/// Residuals below this are treated as "at the KKT set" when sampling.
const INFORMATIVE_R: f64 = 1e-14;
/// Inner tolerance for subproblem solves inside the property checks.
const CHECK_EPS: f64 = 1e-11;

/// Euclidean distance from `lam` to a described multiplier set.
pub fn dist_to_multiplier_set(lam: &DVector<f64>, desc: &MultiplierSetDesc) -> f64 {
    desc.distance_to(lam)
}

/// `||x - x_bar|| + dist(lam, multiplier set)`, the sum-form distance to
/// `{x_bar} x Lambda(x_bar)`.
pub fn dist_pd(x: &DVector<f64>, lam: &DVector<f64>, reference: &ReferenceSolution) -> f64 {
    (x - &reference.x_bar).norm() + reference.multiplier_set.distance_to(lam)
}

/// Tail contraction factors of a distance sequence.
#[derive(Clone, Debug, Serialize)]
pub struct RateReport {
    pub q_factors: Vec<f64>,
    /// Max successive ratio over indices >= 3 (or the last ratio for shorter
    /// sequences).
    pub q_max_tail: f64,
    /// Ratios eventually strictly decreasing with the final one <= 0.1.
    pub superlinear_flag: bool,
    /// Goodness of the least-squares line on log distances.
    pub fit_r2: f64,
}

/// Rates from the ground-truth distance series of a trace. Records at or
/// below `10 * stop_tol` are dropped as noise.
pub fn estimate_rates(trace: &Trace) -> Result<RateReport> {
    let dists = trace
        .dist_pd_series()
        .ok_or_else(|| Error::MissingReference("trace".into()))?;
    estimate_rates_from_dists(&dists, trace.stop_tol)
}

pub fn estimate_rates_from_dists(dists: &[f64], stop_tol: f64) -> Result<RateReport> {
    let floor = 10.0 * stop_tol;
    let usable: Vec<f64> = dists.iter().copied().take_while(|d| *d > floor).collect();
    if usable.len() < 3 {
        return Err(Error::TraceTooShort(usable.len()));
    }

    let q_factors: Vec<f64> = usable.windows(2).map(|w| w[1] / w[0]).collect();
    let tail_start = 3.min(q_factors.len() - 1);
    let q_max_tail = q_factors[tail_start..]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);

    // Longest strictly decreasing suffix of the ratios.
    let mut suffix = 1;
    for w in q_factors.windows(2).rev() {
        if w[1] < w[0] {
            suffix += 1;
        } else {
            break;
        }
    }
    let superlinear_flag = suffix >= 3.min(q_factors.len()) && *q_factors.last().unwrap() <= 0.1;

    // Least-squares fit of log dist against the iteration index.
    let n = usable.len() as f64;
    let logs: Vec<f64> = usable.iter().map(|d| d.ln()).collect();
    let k_mean = (usable.len() - 1) as f64 / 2.0;
    let log_mean = logs.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (k, log) in logs.iter().enumerate() {
        let dk = k as f64 - k_mean;
        let dy = log - log_mean;
        sxy += dk * dy;
        sxx += dk * dk;
        syy += dy * dy;
    }
    let fit_r2 = if syy > 0.0 {
        (sxy * sxy) / (sxx * syy)
    } else {
        1.0
    };

    Ok(RateReport {
        q_factors,
        q_max_tail,
        superlinear_flag,
        fit_r2,
    })
}

/// Result of one sampled property check.
#[derive(Clone, Debug, Serialize)]
pub struct PropertyReport {
    pub property: String,
    pub samples: usize,
    /// Samples that actually constrained the fit (for instance `r > 0`).
    pub informative: usize,
    pub violations: usize,
    pub fitted_constant: f64,
    /// The fits whose agreement the stability test compares: per penalty
    /// value, or first half versus all samples.
    pub constant_by_group: Vec<f64>,
    /// Relative disagreement across the groups (`max/min - 1`; the calmness
    /// fit counts only growth over the smallest penalty's fit).
    pub stability_spread: f64,
    pub stability_limit: f64,
    /// Mean and max of the per-sample ratios behind the fit.
    pub ratio_mean: f64,
    pub ratio_max: f64,
    pub subsolver_failures: usize,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl PropertyReport {
    fn empty(property: &str, samples: usize, note: &str) -> Self {
        PropertyReport {
            property: property.to_string(),
            samples,
            informative: 0,
            violations: 0,
            fitted_constant: 0.0,
            constant_by_group: Vec::new(),
            stability_spread: 0.0,
            stability_limit: 0.0,
            ratio_mean: 0.0,
            ratio_max: 0.0,
            subsolver_failures: 0,
            passed: true,
            note: Some(note.to_string()),
        }
    }
}

fn spread(groups: &[f64]) -> f64 {
    let min = groups.iter().copied().fold(f64::INFINITY, f64::min);
    let max = groups.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min <= 0.0 || !min.is_finite() || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min - 1.0
    }
}

/// Largest relative growth of later groups over the first; negative growth
/// (a shrinking constant) counts as zero.
fn upward_spread(groups: &[f64]) -> f64 {
    let base = groups[0];
    if base <= 0.0 || !base.is_finite() {
        return f64::INFINITY;
    }
    groups[1..]
        .iter()
        .map(|g| {
            if g.is_finite() {
                g / base - 1.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0f64, f64::max)
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; the lower bound keeps the logarithm finite.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform draw from the closed ball of the given radius around `center`.
pub fn sample_in_ball<R: Rng>(rng: &mut R, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let d = center.len();
    let g = DVector::from_fn(d, |_, _| standard_normal(rng));
    let norm = g.norm().max(f64::MIN_POSITIVE);
    let u: f64 = rng.gen();
    center + g * (radius * u.powf(1.0 / d as f64) / norm)
}

/// Uniform draw from the ball in the primal-dual product space.
fn sample_pair<R: Rng>(
    rng: &mut R,
    x_bar: &DVector<f64>,
    lambda_bar: &DVector<f64>,
    radius: f64,
) -> (DVector<f64>, DVector<f64>) {
    let n = x_bar.len();
    let m = lambda_bar.len();
    let mut center = DVector::zeros(n + m);
    center.rows_mut(0, n).copy_from(x_bar);
    center.rows_mut(n, m).copy_from(lambda_bar);
    let joint = sample_in_ball(rng, &center, radius);
    (
        joint.rows(0, n).clone_owned(),
        joint.rows(n, m).clone_owned(),
    )
}

/// Draws an element of the multiplier set within `radius` of `lambda_bar`.
/// Segments restrict the parameter window analytically; boxes fall back to
/// rejection with the designated element as a last resort.
fn sample_multiplier_near<R: Rng>(
    rng: &mut R,
    desc: &MultiplierSetDesc,
    lambda_bar: &DVector<f64>,
    radius: f64,
) -> DVector<f64> {
    match desc {
        MultiplierSetDesc::Singleton(v) => v.clone(),
        MultiplierSetDesc::Segment { a, b } => {
            let d = b - a;
            let len = d.norm();
            let t_bar = ((lambda_bar - a).dot(&d) / (len * len)).clamp(0.0, 1.0);
            let w = radius / len;
            let lo = (t_bar - w).max(0.0);
            let hi = (t_bar + w).min(1.0);
            let t = rng.gen_range(lo..=hi);
            a + d * t
        }
        MultiplierSetDesc::AffineBox { .. } => {
            for _ in 0..200 {
                let lam = desc.sample(rng);
                if (&lam - lambda_bar).norm() <= radius {
                    return lam;
                }
            }
            desc.designated()
        }
    }
}

/// Checks the uniform quadratic growth of the augmented Lagrangian around
/// the reference: `L(x, lam, c) >= L(x_bar, lam, c) + kappa/2 ||x - x_bar||^2`
/// for sampled `x` near `x_bar` and sampled multipliers in the set near
/// `lambda_bar`, at every penalty in `c_list`. Violations are counted at the
/// given `kappa`; the largest feasible `kappa` per penalty is found by
/// bisection and must agree across penalties within 30%.
pub fn check_quadratic_growth(
    problem: &ProblemInstance,
    c_list: &[f64],
    radius: f64,
    n_samples: usize,
    kappa: f64,
    seed: u64,
) -> Result<PropertyReport> {
    let reference = problem.require_reference()?;
    if !reference.sosc_holds {
        return Err(Error::InvalidArgument(format!(
            "problem '{}' does not assert second-order sufficiency",
            problem.name()
        )));
    }
    if n_samples == 0 || c_list.is_empty() {
        return Err(Error::InvalidArgument(
            "quadratic growth check needs samples and penalties".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let x = sample_in_ball(&mut rng, &reference.x_bar, radius);
        let lam = sample_multiplier_near(
            &mut rng,
            &reference.multiplier_set,
            &reference.lambda_bar,
            radius,
        );
        points.push((x, lam));
    }

    let mut violations = 0;
    let mut kappa_by_c = Vec::with_capacity(c_list.len());
    let mut kappa_samples: Vec<f64> = Vec::new();
    for &c in c_list {
        // Growth margins at this penalty; feasibility of a candidate kappa is
        // margin >= kappa/2 * ||x - x_bar||^2 on every sample.
        let mut margins = Vec::with_capacity(points.len());
        for (x, lam) in &points {
            let lhs = aug_lagrangian(problem, x, lam, c)?.value;
            let base = aug_lagrangian(problem, &reference.x_bar, lam, c)?.value;
            let dist_sq = (x - &reference.x_bar).norm_squared();
            let margin = lhs - base;
            let slack = 1e-14 * (1.0 + lhs.abs());
            if margin + slack < 0.5 * kappa * dist_sq {
                violations += 1;
            }
            if dist_sq > 0.0 {
                kappa_samples.push(2.0 * margin / dist_sq);
            }
            margins.push((margin, dist_sq, slack));
        }
        let feasible = |k: f64| {
            margins
                .iter()
                .all(|(margin, dist_sq, slack)| margin + slack >= 0.5 * k * dist_sq)
        };
        // Bisection for the largest feasible kappa.
        let fitted = if !feasible(0.0) {
            0.0
        } else {
            let mut hi = 1.0;
            let mut doublings = 0;
            while feasible(hi) && doublings < 60 {
                hi *= 2.0;
                doublings += 1;
            }
            let mut lo = 0.0;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if feasible(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        kappa_by_c.push(fitted);
    }

    let fitted_constant = kappa_by_c.iter().copied().fold(f64::INFINITY, f64::min);
    let stability_spread = spread(&kappa_by_c);
    let stability_limit = 0.3;
    let ratio_mean = kappa_samples.iter().sum::<f64>() / kappa_samples.len().max(1) as f64;
    let passed = violations == 0
        && fitted_constant.is_finite()
        && fitted_constant > 0.0
        && stability_spread <= stability_limit;

    Ok(PropertyReport {
        property: "quadratic_growth".into(),
        samples: n_samples * c_list.len(),
        informative: kappa_samples.len(),
        violations,
        fitted_constant,
        constant_by_group: kappa_by_c,
        stability_spread,
        stability_limit,
        ratio_mean,
        ratio_max: fitted_constant,
        subsolver_failures: 0,
        passed,
        note: None,
    })
}

/// Fits the smallest `tau` with
/// `||x - x_bar|| + dist(lam, set) <= tau r(x, lam)` over samples near the
/// reference; passes when the fit is finite and stable (within 30%) under
/// doubling the sample count.
pub fn check_error_bound(
    problem: &ProblemInstance,
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<PropertyReport> {
    fit_ratio_over_samples(
        problem,
        "error_bound",
        radius,
        n_samples,
        seed,
        0.3,
        |_problem, reference, x, lam, r| Some(dist_pd(x, lam, reference) / r),
    )
}

/// Fits the smallest `kappa_hat` with
/// `r(x, lam) <= kappa_hat (||x - x_bar|| + dist(lam, set))` over samples
/// near the reference; the Lipschitz counterpart of the error bound. Passes
/// when finite and stable (within 20%) under doubling the sample count.
pub fn check_residual_upper_bound(
    problem: &ProblemInstance,
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<PropertyReport> {
    fit_ratio_over_samples(
        problem,
        "residual_upper_bound",
        radius,
        n_samples,
        seed,
        0.2,
        |_problem, reference, x, lam, r| {
            let d = dist_pd(x, lam, reference);
            if d > 0.0 {
                Some(r / d)
            } else {
                None
            }
        },
    )
}

fn fit_ratio_over_samples(
    problem: &ProblemInstance,
    property: &str,
    radius: f64,
    n_samples: usize,
    seed: u64,
    stability_limit: f64,
    ratio: impl Fn(
        &ProblemInstance,
        &ReferenceSolution,
        &DVector<f64>,
        &DVector<f64>,
        f64,
    ) -> Option<f64>,
) -> Result<PropertyReport> {
    let reference = problem.require_reference()?;
    if n_samples == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be positive".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios: Vec<f64> = Vec::with_capacity(2 * n_samples);
    let mut skipped = 0;
    for _ in 0..2 * n_samples {
        let (x, lam) = sample_pair(&mut rng, &reference.x_bar, &reference.lambda_bar, radius);
        let r = kkt_residual(problem, &x, &lam);
        if r <= INFORMATIVE_R {
            skipped += 1;
            continue;
        }
        match ratio(problem, reference, &x, &lam, r) {
            Some(value) => ratios.push(value),
            None => skipped += 1,
        }
    }

    if ratios.is_empty() {
        return Ok(PropertyReport::empty(
            property,
            2 * n_samples,
            "no informative samples (r = 0 at every draw)",
        ));
    }

    let half_max = ratios[..ratios.len() / 2]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let full_max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let groups = vec![half_max, full_max];
    let stability_spread = spread(&groups);
    let violations = ratios.iter().filter(|v| !v.is_finite()).count();
    let passed = violations == 0 && full_max.is_finite() && stability_spread <= stability_limit;

    Ok(PropertyReport {
        property: property.into(),
        samples: 2 * n_samples,
        informative: ratios.len(),
        violations,
        fitted_constant: full_max,
        constant_by_group: groups,
        stability_spread,
        stability_limit,
        ratio_mean: ratios.iter().sum::<f64>() / ratios.len() as f64,
        ratio_max: full_max,
        subsolver_failures: 0,
        passed,
        note: if skipped > 0 {
            Some(format!("{skipped} draws skipped (at the KKT set)"))
        } else {
            None
        },
    })
}

/// Fits the smallest `l_hat` with
/// `||x_sol(lam, v) - x_loc|| <= l_hat (||lam - lambda_bar|| + ||v - x_bar||)`
/// where `x_sol` solves the proximal subproblem and `x_loc` solves it at the
/// reference pair.
///
/// The claimed modulus is one constant valid uniformly for all penalties at
/// or above the threshold, so the fit may shrink as the penalty grows (the
/// proximal weight is 1/c) but must not grow: each penalty's fit is compared
/// against the smallest penalty's, with 30% slack.
pub fn check_subproblem_calmness(
    problem: &ProblemInstance,
    c_list: &[f64],
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<PropertyReport> {
    let reference = problem.require_reference()?;
    if n_samples == 0 || c_list.is_empty() {
        return Err(Error::InvalidArgument(
            "calmness check needs samples and penalties".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Perturbations within ||lam - lambda_bar|| + ||v - x_bar|| <= radius.
    let mut points = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let lam = sample_in_ball(&mut rng, &reference.lambda_bar, radius / 2.0);
        let v = sample_in_ball(&mut rng, &reference.x_bar, radius / 2.0);
        points.push((lam, v));
    }

    let limits = SubsolverLimits::default();
    let mut failures = 0;
    let mut all_ratios: Vec<f64> = Vec::new();
    let mut l_by_c = Vec::with_capacity(c_list.len());
    for &c in c_list {
        let loc = solve_subproblem(
            problem,
            &reference.lambda_bar,
            c,
            &reference.x_bar,
            CHECK_EPS,
            &reference.x_bar,
            limits,
        )?;
        if loc.status != SubproblemStatus::Converged {
            failures += 1;
            l_by_c.push(f64::INFINITY);
            continue;
        }
        let mut l_c = f64::NEG_INFINITY;
        for (lam, v) in &points {
            let denom = (lam - &reference.lambda_bar).norm() + (v - &reference.x_bar).norm();
            if denom <= 0.0 {
                continue;
            }
            let sol = solve_subproblem(problem, lam, c, v, CHECK_EPS, v, limits)?;
            if sol.status != SubproblemStatus::Converged {
                failures += 1;
                continue;
            }
            let ratio = (&sol.x - &loc.x).norm() / denom;
            all_ratios.push(ratio);
            l_c = l_c.max(ratio);
        }
        l_by_c.push(l_c);
    }

    let fitted_constant = l_by_c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let stability_spread = upward_spread(&l_by_c);
    let stability_limit = 0.3;
    let total_solves = c_list.len() * (n_samples + 1);
    let violations = all_ratios.iter().filter(|v| !v.is_finite()).count();
    let passed = violations == 0
        && fitted_constant.is_finite()
        && stability_spread <= stability_limit
        && failures * 20 <= total_solves;

    Ok(PropertyReport {
        property: "subproblem_calmness".into(),
        samples: total_solves,
        informative: all_ratios.len(),
        violations,
        fitted_constant,
        constant_by_group: l_by_c,
        stability_spread,
        stability_limit,
        ratio_mean: all_ratios.iter().sum::<f64>() / all_ratios.len().max(1) as f64,
        ratio_max: fitted_constant,
        subsolver_failures: failures,
        passed,
        note: None,
    })
}

/// Fits the smallest `alpha` with `||u - x|| + ||lam_u - lam|| <= alpha r(x, lam)`
/// where `u` solves the proximal subproblem at `(lam, v = x)` and `lam_u` is
/// the corresponding dual update. More than 5% subsolver failures fail the
/// report; stability is compared across penalties.
pub fn check_step_error_bound(
    problem: &ProblemInstance,
    c_list: &[f64],
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<PropertyReport> {
    let reference = problem.require_reference()?;
    if n_samples == 0 || c_list.is_empty() {
        return Err(Error::InvalidArgument(
            "step error bound check needs samples and penalties".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n_samples);
    let mut skipped = 0;
    for _ in 0..n_samples {
        let (x, lam) = sample_pair(&mut rng, &reference.x_bar, &reference.lambda_bar, radius);
        let r = kkt_residual(problem, &x, &lam);
        if r <= INFORMATIVE_R {
            skipped += 1;
            continue;
        }
        points.push((x, lam, r));
    }

    if points.is_empty() {
        return Ok(PropertyReport::empty(
            "step_error_bound",
            n_samples * c_list.len(),
            "no informative samples (r = 0 at every draw)",
        ));
    }

    let limits = SubsolverLimits::default();
    let mut failures = 0;
    let mut all_ratios: Vec<f64> = Vec::new();
    let mut alpha_by_c = Vec::with_capacity(c_list.len());
    for &c in c_list {
        let mut alpha_c = f64::NEG_INFINITY;
        for (x, lam, r) in &points {
            let sol = solve_subproblem(problem, lam, c, x, CHECK_EPS, x, limits)?;
            if sol.status != SubproblemStatus::Converged {
                failures += 1;
                continue;
            }
            let lam_u = multiplier_update(problem, &sol.x, lam, c)?;
            let ratio = ((&sol.x - x).norm() + (lam_u - lam).norm()) / r;
            all_ratios.push(ratio);
            alpha_c = alpha_c.max(ratio);
        }
        alpha_by_c.push(alpha_c);
    }

    let fitted_constant = alpha_by_c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let stability_spread = spread(&alpha_by_c);
    let stability_limit = 0.3;
    let total_solves = points.len() * c_list.len();
    let violations = all_ratios.iter().filter(|v| !v.is_finite()).count();
    let passed = violations == 0
        && fitted_constant.is_finite()
        && stability_spread <= stability_limit
        && failures * 20 <= total_solves;

    Ok(PropertyReport {
        property: "step_error_bound".into(),
        samples: total_solves,
        informative: all_ratios.len(),
        violations,
        fitted_constant,
        constant_by_group: alpha_by_c,
        stability_spread,
        stability_limit,
        ratio_mean: all_ratios.iter().sum::<f64>() / all_ratios.len().max(1) as f64,
        ratio_max: fitted_constant,
        subsolver_failures: failures,
        passed,
        note: if skipped > 0 {
            Some(format!("{skipped} draws skipped (at the KKT set)"))
        } else {
            None
        },
    })
}
