//! `gspline`: solve and verify generalized spline problems from JSON files.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gspline::bvpspline::{self, PiecewiseSpline};
use gspline::lqsegment;
use gspline::spline::{self, GeneralizedSpline, SolveOptions};
use gspline::transition;
use gspline::{Error, Problem, ProblemFile, Tolerance, ToleranceProfile};

#[derive(Debug, Parser)]
#[command(name = "gspline", version, about = "Generalized time-dependent splines via linear-quadratic control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a problem file and write trajectory.csv and summary.json.
    Solve(RunArgs),
    /// Solve and print the residual report; exit 1 if it fails.
    Verify(RunArgs),
    /// Print the controllability Gramian of an lq problem.
    Controllability(ControllabilityArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Problem file (JSON).
    path: PathBuf,
    /// Directory for output artifacts.
    #[arg(long, value_name = "DIR")]
    output: Option<PathBuf>,
    /// Tolerance profile: strict, default or loose. Overrides the file.
    #[arg(long, value_name = "NAME")]
    profile: Option<String>,
    /// Samples per segment in the CSV. Overrides the file.
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
    /// Seed of the random perturbation trials run by `verify`.
    #[arg(long, value_name = "K", default_value_t = 0)]
    seed: u64,
    /// Perturbation trials per segment (lq) or per spline run by `verify`.
    #[arg(long, value_name = "N", default_value_t = 20)]
    trials: usize,
    /// Skip the smoothness, invertibility and controllability checks.
    #[arg(long)]
    skip_hypotheses: bool,
}

#[derive(Debug, Args)]
struct ControllabilityArgs {
    path: PathBuf,
    /// Window start; defaults to the first knot.
    #[arg(long, allow_negative_numbers = true)]
    t0: Option<f64>,
    /// Window end; defaults to the last knot.
    #[arg(long, allow_negative_numbers = true)]
    t1: Option<f64>,
}

const EXIT_FAILED_CHECK: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_HYPOTHESIS: u8 = 4;

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::InvalidInput(_) | Error::Dimension(_) => EXIT_INPUT,
        Error::Hypothesis { .. } | Error::Expr(_) => EXIT_HYPOTHESIS,
        _ => EXIT_SOLVER,
    }
}

/// Failure of a run: an exit code and the message for stderr.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Self {
            code: exit_code(&err),
            message: err.to_string(),
        }
    }
}

fn io_failure(path: &Path, err: std::io::Error) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: format!("{}: {err}", path.display()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => run_solve(&args),
        Command::Verify(args) => run_verify(&args),
        Command::Controllability(args) => run_controllability(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(args: &RunArgs) -> Result<ProblemFile, Failure> {
    let mut file = ProblemFile::load(&args.path)?;
    if let Some(name) = &args.profile {
        file.profile = ToleranceProfile::from_name(name)?;
    }
    if let Some(n) = args.samples {
        if n == 0 {
            return Err(Error::InvalidInput("--samples must be at least 1".into()).into());
        }
        file.samples = n;
    }
    Ok(file)
}

fn solve_lq(file: &ProblemFile, args: &RunArgs, tol: Tolerance) -> Result<GeneralizedSpline, Failure> {
    let p = file.lq().expect("lq mode");
    let options = SolveOptions {
        check_hypotheses: !args.skip_hypotheses,
    };
    let mut s = spline::solve_problem_p(p, options, tol)?;
    if let Some(fault) = file.fault {
        s = s.with_scaled_costate(fault.segment, fault.costate_scale, tol)?;
    }
    Ok(s)
}

fn output_dir(args: &RunArgs) -> Result<PathBuf, Failure> {
    let dir = args.output.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| io_failure(&path, e))
}

fn run_solve(args: &RunArgs) -> Result<u8, Failure> {
    let file = load(args)?;
    let tol = file.profile.integrator();
    let dir = output_dir(args)?;
    match &file.problem {
        Problem::Lq(p) => {
            let s = solve_lq(&file, args, tol)?;
            write(&dir, "trajectory.csv", &output::lq_csv(&s, p.dim(), file.samples)?)?;
            let quadrature = s.quadrature_cost(tol)?;
            write(&dir, "summary.json", &output::lq_summary(&file, &s, quadrature))?;
            println!(
                "solved {} segments, total cost {:.16e}",
                s.segments().len(),
                s.total_cost()
            );
        }
        Problem::Spline(spec) => {
            let s = bvpspline::solve_spline(spec, tol)?;
            let energy = bvpspline::spline_energy(&s, &spec.operator, tol)?;
            write(&dir, "trajectory.csv", &output::spline_csv(&s, file.samples))?;
            write(&dir, "summary.json", &output::spline_summary(&file, &s, energy))?;
            println!("solved {} intervals, energy {:.16e}", s.interval_count(), energy);
        }
    }
    Ok(0)
}

fn run_verify(args: &RunArgs) -> Result<u8, Failure> {
    let file = load(args)?;
    let tol = file.profile.integrator();
    let passed = match &file.problem {
        Problem::Lq(p) => {
            let s = solve_lq(&file, args, tol)?;
            let report = spline::verify(&s, p, &file.profile, tol)?;
            println!("{report}");
            let mut perturbations_ok = true;
            for (i, seg) in s.segments().iter().enumerate() {
                let check = lqsegment::perturbation_check(seg, args.trials, args.seed.wrapping_add(i as u64), tol)?;
                println!(
                    "perturbation segment {i}: {} trials, min margin {:.3e}, violations {}",
                    check.trials.len(),
                    check.min_margin(),
                    check.violations.len()
                );
                perturbations_ok &= check.passed();
            }
            if let Some(dir) = &args.output {
                let dir = dir.clone();
                std::fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
                let json = serde_json::to_string_pretty(&report).expect("report serializes");
                write(&dir, "verification.json", &json)?;
            }
            report.passed && perturbations_ok
        }
        Problem::Spline(spec) => {
            let s: PiecewiseSpline = bvpspline::solve_spline(spec, tol)?;
            let report = bvpspline::verify_spline(&s, spec, &file.profile, tol)?;
            println!("{report}");
            let check = bvpspline::minimality_check(&s, &spec.operator, args.trials, args.seed, tol)?;
            let margin = check.trials.iter().map(|e| e - check.energy).fold(f64::INFINITY, f64::min);
            println!(
                "minimality: {} trials, min margin {:.3e}, violations {}",
                check.trials.len(),
                margin,
                check.violations.len()
            );
            if let Some(dir) = &args.output {
                let dir = dir.clone();
                std::fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
                let json = serde_json::to_string_pretty(&report).expect("report serializes");
                write(&dir, "verification.json", &json)?;
            }
            report.passed && check.passed()
        }
    };
    Ok(if passed { 0 } else { EXIT_FAILED_CHECK })
}

fn run_controllability(args: &ControllabilityArgs) -> Result<u8, Failure> {
    let file = ProblemFile::load(&args.path)?;
    let p = file.lq().ok_or_else(|| Failure {
        code: EXIT_INPUT,
        message: format!("controllability needs an lq-mode file, got {}", file.mode.name()),
    })?;
    let knots = p.knots();
    let t0 = args.t0.unwrap_or(knots[0]);
    let t1 = args.t1.unwrap_or(knots[knots.len() - 1]);
    if !(t0 < t1) {
        return Err(Error::InvalidInput(format!("--t0 must be below --t1, got [{t0}, {t1}]")).into());
    }
    let c = transition::controllability_gramian(p.a(), p.b(), t0, t1, file.profile.integrator())?;
    println!("W on [{t0}, {t1}]:");
    print!("{}", output::matrix_rows(&c.gramian));
    println!(
        "verdict: {}",
        if c.controllable {
            "controllable (W positive definite)"
        } else {
            "not controllable (W not positive definite)"
        }
    );
    Ok(if c.controllable { 0 } else { EXIT_FAILED_CHECK })
}
