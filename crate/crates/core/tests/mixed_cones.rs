//! Full-pipeline run on a file-defined problem that touches every cone kind
//! at once and uses a genuinely quadratic constraint row (so the constraint
//! Hessian contributes to the inner Newton model).
//!
//! minimize ||x - (3,0,0)||^2 / 2 subject to
//!   x3 = 0                      (zero cone)
//!   ||x||^2 - 4 <= 0            (nonpositive orthant, quadratic row; active)
//!   x2 + 1 >= 0                 (nonnegative orthant; inactive)
//!   (x1, x2, x3) in Q^3         (second-order cone; interior)
//!   diag(x1, 1) PSD             (semidefinite block; interior)
//!
//! Solution x* = (2, 0, 0); the only active multiplier is 1/4 on the ball
//! constraint (stationarity: (2-3) + 2*2*(1/4) = 0).

use conic_palm::analysis::{
    check_error_bound, check_quadratic_growth, check_residual_upper_bound,
    check_step_error_bound, check_subproblem_calmness, estimate_rates,
};
use conic_palm::drivers::{default_start, run_alm, run_palm, RunConfig, Schedule};
use conic_palm::lagrangian::kkt_residual;
use conic_palm::model::parse_problem;
use nalgebra::DVector;

const MIXED: &str = r#"{
    "name": "mixed-cones",
    "n": 3,
    "f": {
        "Q": [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        "q": [-3.0, 0.0, 0.0],
        "r0": 4.5
    },
    "constraints": [
        {"map": {"A": [0.0, 0.0, 1.0], "b": [0.0]},
         "cone": {"kind": "zero", "dim": 1}},
        {"map": {"rows": [{"Q": [2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0],
                           "q": [0.0, 0.0, 0.0], "r": -4.0}]},
         "cone": {"kind": "nonpos", "dim": 1}},
        {"map": {"A": [0.0, 1.0, 0.0], "b": [-1.0]},
         "cone": {"kind": "nonneg", "dim": 1}},
        {"map": {"A": [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
                 "b": [0.0, 0.0, 0.0]},
         "cone": {"kind": "soc", "dim": 3}},
        {"map": {"A": [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                 "b": [0.0, 0.0, -1.0]},
         "cone": {"kind": "psd", "n": 2}}
    ],
    "reference": {
        "x_bar": [2.0, 0.0, 0.0],
        "multiplier_set": {
            "type": "singleton",
            "lambda": [0.0, 0.25, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        },
        "sosc_holds": true
    }
}"#;

#[test]
fn reference_is_a_kkt_point() {
    let p = parse_problem(MIXED).unwrap();
    assert_eq!(p.n(), 3);
    assert_eq!(p.m(), 9);
    let r = p.reference().unwrap();
    let residual = kkt_residual(&p, &r.x_bar, &r.lambda_bar);
    assert!(residual <= 1e-12, "reference residual {residual}");
}

#[test]
fn palm_and_alm_converge_to_the_reference() {
    let p = parse_problem(MIXED).unwrap();
    let r = p.reference().unwrap();
    let (x0, lam0) = default_start(&p);
    let config = RunConfig {
        schedule: Schedule::Constant(10.0),
        ..RunConfig::default()
    };

    let trace = run_palm(&p, &x0, &lam0, &config).unwrap();
    assert!(trace.converged);
    assert!((trace.final_x() - &r.x_bar).norm() <= 1e-8);
    assert!((trace.final_lam() - &r.lambda_bar).norm() <= 1e-8);
    let rates = estimate_rates(&trace).unwrap();
    assert!(rates.q_max_tail < 1.0);

    let trace = run_alm(&p, &x0, &lam0, &config).unwrap();
    assert!(trace.converged);
    assert!((trace.final_x() - &r.x_bar).norm() <= 1e-8);

    // Ten independent starts agree on the (unique) limit pair.
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(31);
    for _ in 0..10 {
        let x0 = conic_palm::analysis::sample_in_ball(&mut rng, &r.x_bar, 0.05);
        let lam0 = conic_palm::analysis::sample_in_ball(&mut rng, &r.lambda_bar, 0.05);
        let trace = run_palm(&p, &x0, &lam0, &config).unwrap();
        assert!(trace.converged);
        assert!((trace.final_x() - &r.x_bar).norm() <= 1e-7);
        assert!((trace.final_lam() - &r.lambda_bar).norm() <= 1e-7);
    }
}

#[test]
fn final_iterate_is_feasible() {
    let p = parse_problem(MIXED).unwrap();
    let (x0, lam0) = default_start(&p);
    let config = RunConfig {
        schedule: Schedule::Constant(10.0),
        ..RunConfig::default()
    };
    let trace = run_palm(&p, &x0, &lam0, &config).unwrap();
    let g = p.g_value(trace.final_x());
    let dist = p.cone().dist_sq(&g).unwrap().sqrt();
    assert!(dist <= 1e-9, "constraint image {dist} from the cone");
    // The ball constraint is active, the orthant row strictly inactive.
    assert!(g[1].abs() <= 1e-8);
    assert!(g[2] >= 0.9);
}

#[test]
fn property_checks_pass_on_the_mixed_instance() {
    let p = parse_problem(MIXED).unwrap();
    // The binding direction is a single axis of the 3-ball, so the
    // min-over-samples fit needs a denser draw here than the planar
    // benchmarks do; it converges to the analytic kappa = 1.5.
    let growth = check_quadratic_growth(&p, &[1.0, 10.0], 0.02, 1000, 0.0, 5).unwrap();
    assert!(growth.passed && growth.fitted_constant > 0.0, "{growth:?}");
    assert!((growth.fitted_constant - 1.5).abs() <= 0.1, "{growth:?}");
    let tau = check_error_bound(&p, 0.05, 200, 5).unwrap();
    assert!(tau.passed, "{tau:?}");
    let upper = check_residual_upper_bound(&p, 0.1, 200, 5).unwrap();
    assert!(upper.passed, "{upper:?}");
    let calm = check_subproblem_calmness(&p, &[1.0, 10.0], 0.05, 50, 5).unwrap();
    assert!(calm.passed, "{calm:?}");
    let step = check_step_error_bound(&p, &[10.0, 100.0], 0.02, 150, 5).unwrap();
    assert!(step.passed && step.subsolver_failures == 0, "{step:?}");
}

#[test]
fn derivative_checks_cover_the_quadratic_constraint() {
    let p = parse_problem(MIXED).unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(32);
    for _ in 0..20 {
        let x = DVector::from_fn(3, |_, _| rand::Rng::gen_range(&mut rng, -1.5..1.5));
        let report = conic_palm::model::check_derivatives(&p, &x, 9);
        assert!(report.max_err() <= 1e-5, "{report:?}");
        // The ball row contributes a genuine constraint Hessian.
        let lam = DVector::from_fn(9, |i, _| if i == 1 { 1.0 } else { 0.0 });
        let contract = p.g_hess_contract(&x, &lam);
        assert!((contract - nalgebra::DMatrix::identity(3, 3) * 2.0).norm() <= 1e-12);
    }
}
