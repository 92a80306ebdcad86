//! Command-line interface: load problems from the registry or a JSON file,
//! run the proximal or classical method, and emit traces and verification
//! reports.
//!
//! Exit codes: 0 on success/convergence, 2 when the iteration budget ran
//! out, 1 on any error (including invalid flags).

use std::io::Write;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use crate::analysis::{
    check_error_bound, check_quadratic_growth, check_residual_upper_bound, check_step_error_bound,
    check_subproblem_calmness, estimate_rates, PropertyReport, RateReport,
};
use crate::drivers::{default_start, run_alm, run_palm, EpsRule, RunConfig, Schedule, Trace};
use crate::model::{parse_problem, registry_get, registry_names, ProblemInstance};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ITERATION_CAP: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "conic-palm",
    version,
    about = "Proximal augmented Lagrangian solver for smooth conic programs, \
             with an empirical convergence-property harness"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a problem and write the iteration trace
    Solve(SolveArgs),
    /// Run the proximal method and the classical baseline side by side
    Compare(CompareArgs),
    /// Run the sampled property checks and report fitted constants
    Verify(VerifyArgs),
    /// Measure convergence rates under constant and unbounded penalties
    Rates(RatesArgs),
    /// List the registered benchmark problems
    List,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["problem", "file"])))]
struct SourceArgs {
    /// Registry name of the problem
    #[arg(long)]
    problem: Option<String>,
    /// Path to a problem JSON file
    #[arg(long)]
    file: Option<PathBuf>,
}

impl SourceArgs {
    fn load(&self) -> anyhow::Result<ProblemInstance> {
        if let Some(name) = &self.problem {
            return Ok(registry_get(name)?);
        }
        let path = self.file.as_ref().expect("clap enforces the source group");
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        Ok(parse_problem(&text)?)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Palm,
    Alm,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ScheduleArg {
    Constant,
    Geometric,
    Unbounded,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Penalty schedule
    #[arg(long, value_enum, default_value = "geometric")]
    schedule: ScheduleArg,
    /// Penalty parameter (constant value, or the initial value of a growing
    /// schedule)
    #[arg(long, default_value_t = 10.0)]
    c: f64,
    /// Growth factor of geometric/unbounded schedules
    #[arg(long, default_value_t = 2.0)]
    rho: f64,
    /// Penalty cap of the geometric schedule
    #[arg(long = "c-max", default_value_t = 1e6)]
    c_max: f64,
    /// Inner tolerance scale: eps(r) = min(eps_max, sigma r^(1+theta))
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Inner tolerance exponent offset; theta > 0 makes eps(r) = o(r)
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    /// Step acceptance constant
    #[arg(long, default_value_t = 1e3)]
    alpha: f64,
    /// Residual threshold for termination
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Outer iteration budget
    #[arg(long = "max-outer", default_value_t = 100)]
    max_outer: usize,
}

impl ConfigArgs {
    fn build(&self) -> anyhow::Result<RunConfig> {
        let schedule = match self.schedule {
            ScheduleArg::Constant => Schedule::Constant(self.c),
            ScheduleArg::Geometric => Schedule::Geometric {
                c0: self.c,
                rho: self.rho,
                c_max: self.c_max,
            },
            ScheduleArg::Unbounded => Schedule::Unbounded {
                c0: self.c,
                rho: self.rho,
            },
        };
        let config = RunConfig {
            schedule,
            eps_rule: EpsRule {
                sigma: self.sigma,
                theta: self.theta,
                ..EpsRule::default()
            },
            alpha: self.alpha,
            stop_tol: self.tol,
            max_outer: self.max_outer,
            ..RunConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct StartArgs {
    /// Starting primal point, comma-separated (default: a deterministic
    /// point near the reference, or the origin without one)
    #[arg(long)]
    x0: Option<String>,
    /// Starting multiplier, comma-separated
    #[arg(long)]
    lam0: Option<String>,
}

impl StartArgs {
    fn resolve(&self, problem: &ProblemInstance) -> anyhow::Result<(DVector<f64>, DVector<f64>)> {
        let x0 = match &self.x0 {
            Some(text) => parse_vector(text, problem.n(), "--x0")?,
            None => default_start(problem).0,
        };
        let lam0 = match &self.lam0 {
            Some(text) => parse_vector(text, problem.m(), "--lam0")?,
            None => default_start(problem).1,
        };
        Ok((x0, lam0))
    }
}

fn parse_vector(text: &str, expected: usize, what: &str) -> anyhow::Result<DVector<f64>> {
    let values: Vec<f64> = text
        .split(',')
        .map(|tok| tok.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| anyhow::anyhow!("{what}: {e}"))?;
    if values.len() != expected {
        anyhow::bail!(
            "{what}: expected {expected} components, got {}",
            values.len()
        );
    }
    Ok(DVector::from_column_slice(&values))
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Solver variant
    #[arg(long, value_enum, default_value = "palm")]
    method: MethodArg,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    start: StartArgs,
    /// Write the trace CSV to this path (stdout summary stays on stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the summary as JSON (default: JSON; flag kept for symmetry)
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    start: StartArgs,
    /// Write the comparison JSON to this path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print JSON only, without the text table
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Sample count per property check
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Override the sampling radius of every check (defaults are per check)
    #[arg(long)]
    radius: Option<f64>,
    /// Sampling seed
    #[arg(long, env = "CONIC_PALM_SEED", default_value_t = 0)]
    seed: u64,
    /// Write the aggregated report JSON to this path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the report as JSON (default: JSON; flag kept for symmetry)
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct RatesArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Penalty of the constant schedule (and start of the unbounded one)
    #[arg(long, default_value_t = 10.0)]
    c: f64,
    /// Growth factor of the unbounded schedule
    #[arg(long, default_value_t = 4.0)]
    rho: f64,
    /// Residual threshold for termination
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Outer iteration budget
    #[arg(long = "max-outer", default_value_t = 100)]
    max_outer: usize,
    #[command(flatten)]
    start: StartArgs,
    /// Write the rates JSON to this path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the report as JSON (default: JSON; flag kept for symmetry)
    #[arg(long)]
    json: bool,
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign { EXIT_OK } else { EXIT_ERROR };
        }
    };
    match run_command(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn run_command(command: Command) -> anyhow::Result<i32> {
    match command {
        Command::Solve(args) => cmd_solve(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Rates(args) => cmd_rates(args),
        Command::List => cmd_list(),
    }
}

fn write_out(path: &Option<PathBuf>, content: &str) -> anyhow::Result<()> {
    if let Some(path) = path {
        let mut file = std::fs::File::create(path)
            .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", path.display()))?;
        file.write_all(content.as_bytes())?;
    }
    Ok(())
}

/// Trace CSV with the fixed column order. Numbers print in shortest
/// round-trip decimal; distance fields are empty without a reference.
pub fn trace_to_csv(trace: &Trace) -> String {
    let mut out =
        String::from("k,c,eps,r,step_norm,accepted,inner_iters,dist_primal,dist_dual,dist_pd\n");
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for rec in &trace.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            rec.k,
            rec.c,
            rec.eps,
            rec.r,
            rec.step_norm,
            rec.accepted,
            rec.inner_iterations,
            opt(rec.dist_primal),
            opt(rec.dist_dual),
            opt(rec.dist_pd),
        ));
    }
    out
}

#[derive(Serialize)]
struct SolveSummary {
    problem: String,
    method: String,
    converged: bool,
    iterations: usize,
    final_r: f64,
    final_x: Vec<f64>,
    final_lambda: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_report: Option<RateReport>,
}

fn summarize(problem: &ProblemInstance, method: &str, trace: &Trace) -> SolveSummary {
    SolveSummary {
        problem: problem.name().to_string(),
        method: method.to_string(),
        converged: trace.converged,
        iterations: trace.len().saturating_sub(1),
        final_r: trace.final_r(),
        final_x: trace.final_x().as_slice().to_vec(),
        final_lambda: trace.final_lam().as_slice().to_vec(),
        rate_report: estimate_rates(trace).ok(),
    }
}

fn cmd_solve(args: SolveArgs) -> anyhow::Result<i32> {
    let problem = args.source.load()?;
    let config = args.config.build()?;
    let (x0, lam0) = args.start.resolve(&problem)?;
    let (method, result) = match args.method {
        MethodArg::Palm => ("palm", run_palm(&problem, &x0, &lam0, &config)),
        MethodArg::Alm => ("alm", run_alm(&problem, &x0, &lam0, &config)),
    };
    let trace = match result {
        Ok(trace) => trace,
        Err(failure) => {
            // The partial trace is still written for inspection.
            write_out(&args.out, &trace_to_csv(&failure.trace))?;
            return Err(anyhow::anyhow!(failure.to_string()));
        }
    };
    write_out(&args.out, &trace_to_csv(&trace))?;
    let summary = summarize(&problem, method, &trace);
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(if trace.converged {
        EXIT_OK
    } else {
        EXIT_ITERATION_CAP
    })
}

#[derive(Serialize)]
struct CompareReport {
    problem: String,
    palm: SolveSummary,
    alm: SolveSummary,
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<i32> {
    let problem = args.source.load()?;
    if problem.reference().is_none() {
        anyhow::bail!("reference required");
    }
    let config = args.config.build()?;
    let (x0, lam0) = args.start.resolve(&problem)?;
    let palm =
        run_palm(&problem, &x0, &lam0, &config).map_err(|f| anyhow::anyhow!(f.to_string()))?;
    let alm = run_alm(&problem, &x0, &lam0, &config).map_err(|f| anyhow::anyhow!(f.to_string()))?;
    let report = CompareReport {
        problem: problem.name().to_string(),
        palm: summarize(&problem, "palm", &palm),
        alm: summarize(&problem, "alm", &alm),
    };
    let json = serde_json::to_string_pretty(&report)?;
    write_out(&args.out, &json)?;
    if args.json {
        println!("{json}");
    } else {
        println!("{}", compare_table(&report));
        println!("{json}");
    }
    Ok(if palm.converged && alm.converged {
        EXIT_OK
    } else {
        EXIT_ITERATION_CAP
    })
}

fn compare_table(report: &CompareReport) -> String {
    let row = |s: &SolveSummary| {
        let (q, r2) = s
            .rate_report
            .as_ref()
            .map(|r| (format!("{:.4}", r.q_max_tail), format!("{:.4}", r.fit_r2)))
            .unwrap_or_else(|| ("-".into(), "-".into()));
        format!(
            "{:<6} {:>10} {:>6} {:>12.3e} {:>10} {:>8}",
            s.method, s.converged, s.iterations, s.final_r, q, r2
        )
    };
    format!(
        "problem: {}\n{:<6} {:>10} {:>6} {:>12} {:>10} {:>8}\n{}\n{}",
        report.problem,
        "method",
        "converged",
        "iters",
        "final_r",
        "q_tail",
        "fit_r2",
        row(&report.palm),
        row(&report.alm)
    )
}

#[derive(Serialize)]
struct VerifyReport {
    problem: String,
    seed: u64,
    samples: usize,
    all_passed: bool,
    checks: Vec<PropertyReport>,
}

fn cmd_verify(args: VerifyArgs) -> anyhow::Result<i32> {
    let problem = args.source.load()?;
    let reference = problem.require_reference()?;
    if !reference.sosc_holds {
        anyhow::bail!(
            "problem '{}' does not assert second-order sufficiency",
            problem.name()
        );
    }
    if args.samples == 0 {
        anyhow::bail!("--samples must be positive");
    }
    let seed = args.seed;
    let n = args.samples;
    let c_bar = crate::model::registry_penalty_threshold(problem.name());
    let growth_c = [c_bar, 10.0 * c_bar];
    let step_base = c_bar.max(10.0);
    let step_c = [step_base, 10.0 * step_base];
    let r = |default: f64| args.radius.unwrap_or(default);

    let checks = vec![
        check_residual_upper_bound(&problem, r(0.1), n, seed)?,
        check_error_bound(&problem, r(0.05), n, seed)?,
        check_quadratic_growth(&problem, &growth_c, r(0.02), n, 0.0, seed)?,
        check_subproblem_calmness(&problem, &growth_c, r(0.05), n, seed)?,
        check_step_error_bound(&problem, &step_c, r(0.02), n, seed)?,
    ];
    let all_passed = checks.iter().all(|c| c.passed);
    let report = VerifyReport {
        problem: problem.name().to_string(),
        seed,
        samples: n,
        all_passed,
        checks,
    };
    let json = serde_json::to_string_pretty(&report)?;
    write_out(&args.out, &json)?;
    println!("{json}");
    Ok(if all_passed { EXIT_OK } else { EXIT_ERROR })
}

#[derive(Serialize)]
struct RatesReport {
    problem: String,
    constant_penalty: f64,
    unbounded_rho: f64,
    constant: RateReport,
    unbounded: RateReport,
    qlinear_ok: bool,
    superlinear_ok: bool,
}

fn cmd_rates(args: RatesArgs) -> anyhow::Result<i32> {
    let problem = args.source.load()?;
    if problem.reference().is_none() {
        anyhow::bail!("reference required");
    }
    let (x0, lam0) = args.start.resolve(&problem)?;
    let base = RunConfig {
        stop_tol: args.tol,
        max_outer: args.max_outer,
        ..RunConfig::default()
    };
    let constant_cfg = RunConfig {
        schedule: Schedule::Constant(args.c),
        ..base
    };
    let unbounded_cfg = RunConfig {
        schedule: Schedule::Unbounded {
            c0: args.c,
            rho: args.rho,
        },
        ..base
    };
    let constant_trace = run_palm(&problem, &x0, &lam0, &constant_cfg)
        .map_err(|f| anyhow::anyhow!(f.to_string()))?;
    let unbounded_trace = run_palm(&problem, &x0, &lam0, &unbounded_cfg)
        .map_err(|f| anyhow::anyhow!(f.to_string()))?;
    let constant = estimate_rates(&constant_trace)?;
    let unbounded = estimate_rates(&unbounded_trace)?;
    let qlinear_ok = constant_trace.converged && constant.q_max_tail < 1.0;
    let superlinear_ok = unbounded_trace.converged && unbounded.superlinear_flag;
    let report = RatesReport {
        problem: problem.name().to_string(),
        constant_penalty: args.c,
        unbounded_rho: args.rho,
        constant,
        unbounded,
        qlinear_ok,
        superlinear_ok,
    };
    let json = serde_json::to_string_pretty(&report)?;
    write_out(&args.out, &json)?;
    println!("{json}");
    Ok(if qlinear_ok && superlinear_ok {
        EXIT_OK
    } else {
        EXIT_ERROR
    })
}

fn cmd_list() -> anyhow::Result<i32> {
    for name in registry_names() {
        let p = registry_get(name)?;
        println!(
            "{name}  (n = {}, m = {}, cone blocks = {})",
            p.n(),
            p.m(),
            p.cone().blocks().len()
        );
    }
    Ok(EXIT_OK)
}
