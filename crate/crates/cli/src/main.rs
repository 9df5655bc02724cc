//! `singbif` command-line front end.
//!
//! Exit codes: 0 success, 1 the run finished but found no solution (or the
//! object asked for could not be certified), 2 usage or input errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use singbif::bifurcate::{bisect_threshold, existence_predicate, sweep, sweep_cold, ExistenceVerdict, Outcome};
use singbif::grid::{fmt17, ScalarField};
use singbif::nonlin::check_ko;
use singbif::odeprofile::{search_supersolution, solve_h, verify_supersolution_on};
use singbif::problem::{Axis, Discretization};
use singbif::problem_file::{parse_domain_expr, parse_g_expr, parse_problem, ProblemFile};
use singbif::solver::minimal_subsolution_on;
use singbif::spectral::{eigen_boundary_bounds, principal_eigenpair};
use singbif::Error;

#[derive(Parser)]
#[command(
    name = "singbif",
    version,
    about = "Singular elliptic problems with gradient terms: solvers and bifurcation thresholds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide existence for one problem file and report the solution.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        /// Result file; `.csv` holds the solution field, anything else JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve along a parameter axis and emit the bifurcation curve.
    Sweep {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value = "lambda")]
        axis: AxisArg,
        /// Comma-separated increasing parameter values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Solve every point independently and in parallel.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bisect the existence threshold along an axis.
    Bisect {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value = "lambda")]
        axis: AxisArg,
        #[arg(long)]
        lo: f64,
        #[arg(long)]
        hi: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// `.csv` writes the probe log, anything else JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Principal Dirichlet eigenpair, e.g. `--domain interval:0:1:256`.
    Eigen {
        #[arg(long)]
        domain: String,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keller–Osserman integral of g, e.g. `--g "power(alpha=0.5)"`.
    Ko {
        #[arg(long)]
        g: String,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search the (M, c) ladder for a verified super-solution.
    Supersol {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a stored field (grid CSV) as a super-solution of a problem.
    Verify {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Lambda,
    Mu,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Lambda => Axis::Lambda,
            AxisArg::Mu => Axis::Mu,
        }
    }
}

/// Input problems map to exit code 2, everything else the library reports
/// is a failed run (also 2); "no solution" outcomes are returned as `Ok(1)`.
struct Failure(String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(e.to_string())
    }
}

type Run = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path) -> Result<ProblemFile, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    parse_problem(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure(e.to_string()))?;
    text.push('\n');
    write(path, &text)
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value, Failure> {
    serde_json::to_value(v).map_err(|e| Failure(e.to_string()))
}

fn run(command: Command) -> Run {
    match command {
        Command::Solve { problem, out } => solve(&problem, out.as_deref()),
        Command::Sweep { problem, axis, values, parallel, out } => {
            let pf = load(&problem)?;
            let f = if parallel { sweep_cold } else { sweep };
            let curve = f(&pf.problem, axis.into(), &values, &pf.opts)?;
            let csv = curve.to_csv();
            print!("{csv}");
            if let Some(path) = out {
                if is_csv(&path) {
                    write(&path, &csv)?;
                } else {
                    write_json(&path, &to_value(&curve)?)?;
                }
            }
            Ok(0)
        }
        Command::Bisect { problem, axis, lo, hi, tol, out } => {
            let pf = load(&problem)?;
            let est = match bisect_threshold(&pf.problem, axis.into(), lo, hi, tol, &pf.opts) {
                Ok(est) => est,
                Err(Error::Bracket(msg)) => {
                    println!("no valid bracket: {msg}");
                    return Ok(1);
                }
                Err(e) => return Err(e.into()),
            };
            println!("estimate {}", fmt17(est.estimate));
            println!("bracket [{}, {}] after {} steps", fmt17(est.lo), fmt17(est.hi), est.bisection_steps);
            if let Some(cf) = est.closed_form {
                println!("closed form {}", fmt17(cf));
            }
            if est.poisoned {
                println!("warning: some probes stayed inconclusive and were counted as nonexistent");
            }
            if let Some(path) = out {
                if is_csv(&path) {
                    write(&path, &est.to_csv())?;
                } else {
                    write_json(&path, &to_value(&est)?)?;
                }
            }
            Ok(0)
        }
        Command::Eigen { domain, tol, out } => {
            let domain = parse_domain_expr(&domain)?;
            let pair = principal_eigenpair(domain, tol)?;
            let (c1, c2) = eigen_boundary_bounds(&pair)?;
            println!("lambda1 {}", fmt17(pair.lambda1));
            println!("residual {:e} after {} sweeps", pair.residual, pair.iterations);
            println!("phi1/dist in [{}, {}]", fmt17(c1), fmt17(c2));
            if let Some(path) = out {
                if is_csv(&path) {
                    write(&path, &pair.phi1.to_csv()?)?;
                } else {
                    let v = json!({
                        "lambda1": pair.lambda1,
                        "residual": pair.residual,
                        "iterations": pair.iterations,
                        "c1": c1,
                        "c2": c2,
                    });
                    write_json(&path, &v)?;
                }
            }
            Ok(0)
        }
        Command::Ko { g, tol, out } => {
            let g = parse_g_expr(&g)?;
            let report = check_ko(&g, tol)?;
            let verdict = if report.satisfied() {
                "satisfied"
            } else if report.status.fails() {
                "violated"
            } else {
                "undetermined"
            };
            println!("value {}", fmt17(report.value));
            println!("error estimate {:e}", report.error_estimate);
            println!("{verdict}");
            if let Some(path) = out {
                let v = json!({
                    "value": report.value,
                    "error_estimate": report.error_estimate,
                    "status": verdict,
                });
                if is_csv(&path) {
                    write(
                        &path,
                        &format!(
                            "value,error_estimate,status\n{},{},{verdict}\n",
                            fmt17(report.value),
                            fmt17(report.error_estimate)
                        ),
                    )?;
                } else {
                    write_json(&path, &v)?;
                }
            }
            Ok(0)
        }
        Command::Supersol { problem, out } => {
            let pf = load(&problem)?;
            let disc = Discretization::new(pf.problem.domain)?;
            let pair = principal_eigenpair(pf.problem.domain, 1e-12)?;
            let hp = solve_h(&pf.problem.g, pf.opts.eta, pf.opts.hprime_eta, 1e-12)?;
            let zeta = minimal_subsolution_on(&disc, &pf.problem.g, &pf.opts)?.solution;
            let found = search_supersolution(&disc, &pf.problem, &hp, &pair, zeta.as_ref())?;
            match found {
                Some(s) => {
                    println!("verified super-solution: M = {}, c = {}", fmt17(s.scale), fmt17(s.stretch));
                    println!(
                        "min excess {:e} (slack {:e}) after {} candidates",
                        s.check.min_excess, s.check.slack, s.tried
                    );
                    if let Some(path) = out {
                        if is_csv(&path) {
                            write(&path, &s.field.to_csv()?)?;
                        } else {
                            let v = json!({
                                "found": true,
                                "scale": s.scale,
                                "stretch": s.stretch,
                                "min_excess": s.check.min_excess,
                                "slack": s.check.slack,
                                "tried": s.tried,
                            });
                            write_json(&path, &v)?;
                        }
                    }
                    Ok(0)
                }
                None => {
                    println!("no verified super-solution on the (M, c) ladder");
                    if let Some(path) = out {
                        if !is_csv(&path) {
                            write_json(&path, &json!({ "found": false }))?;
                        }
                    }
                    Ok(1)
                }
            }
        }
        Command::Verify { problem, field, out } => {
            let pf = load(&problem)?;
            let text = fs::read_to_string(&field).map_err(|e| Failure(format!("{}: {e}", field.display())))?;
            let candidate = ScalarField::from_csv(pf.problem.domain, &text)?;
            let disc = Discretization::new(pf.problem.domain)?;
            let check = verify_supersolution_on(&disc, &candidate, &pf.problem)?;
            println!(
                "{}: min excess {:e} at node {} (slack {:e})",
                if check.ok { "super-solution" } else { "not a super-solution" },
                check.min_excess,
                check.argmin,
                check.slack
            );
            if let Some(path) = out {
                if is_csv(&path) {
                    write(&path, &check.excess.to_csv()?)?;
                } else {
                    let v = json!({
                        "ok": check.ok,
                        "min_excess": check.min_excess,
                        "argmin": check.argmin,
                        "slack": check.slack,
                    });
                    write_json(&path, &v)?;
                }
            }
            Ok(if check.ok { 0 } else { 1 })
        }
    }
}

fn solve(problem: &Path, out: Option<&Path>) -> Run {
    let pf = load(problem)?;
    let verdict: ExistenceVerdict = existence_predicate(&pf.problem, None, &pf.opts)?;
    println!("verdict {}", verdict.outcome.label());
    for a in &verdict.attempts {
        println!("  {:?}: {} after {} iterations {}", a.strategy, a.verdict.label(), a.iterations, a.detail);
    }
    if let Some(sol) = &verdict.report.solution {
        println!("sup_norm {}", fmt17(sol.sup_norm()));
        println!("residual {:e} (tolerance {:e})", verdict.report.residual_inf, verdict.report.tol_used);
    }
    if let Some(path) = out {
        match (&verdict.report.solution, is_csv(path)) {
            (Some(sol), true) => write(path, &sol.to_csv()?)?,
            (None, true) => write(path, "")?,
            (_, false) => write_json(path, &to_value(&verdict)?)?,
        }
    }
    Ok(if verdict.outcome == Outcome::Exists { 0 } else { 1 })
}
