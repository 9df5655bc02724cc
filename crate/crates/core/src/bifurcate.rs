//! Existence predicate, threshold bisection and parameter sweeps.
//!
//! "Numerically nonexistent" is an evidence grade: every strategy of the
//! ladder failed and no super-solution was found. Each verdict keeps the
//! full list of attempts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{fmt17, ScalarField};
use crate::nonlin::{FShape, GSpec, Weight};
use crate::odeprofile::{search_supersolution, solve_h, HProfile};
use crate::problem::{Axis, Discretization, ProblemSpec, SolverOpts};
use crate::solver::{
    continuation, minimal_subsolution_on, solve_monotone_on, solve_newton_on, solve_transformed_on, transform_applies,
    Method, Path, SolveReport, Verdict,
};
use crate::spectral::{principal_eigenpair, ratio_bounds, EigenPair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Exists,
    NumericallyNonexistent,
    Inconclusive,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Exists => "exists",
            Outcome::NumericallyNonexistent => "numerically_nonexistent",
            Outcome::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    WarmStart,
    Monotone,
    Transformed,
    NewtonLadder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub strategy: Strategy,
    pub verdict: Verdict,
    pub iterations: usize,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExistenceVerdict {
    pub outcome: Outcome,
    pub report: SolveReport,
    pub attempts: Vec<Attempt>,
}

impl ExistenceVerdict {
    pub fn exists(&self) -> bool {
        self.outcome == Outcome::Exists
    }
}

/// A converged solution at parameter value `param` along `axis`.
#[derive(Clone, Debug, PartialEq)]
pub struct WarmStart {
    pub axis: Axis,
    pub param: f64,
    pub field: ScalarField,
}

/// Everything the predicate needs that depends only on the grid and `g`,
/// so bisection and sweeps compute it once.
#[derive(Clone, Debug)]
pub struct Context {
    pub disc: Discretization,
    pub pair: EigenPair,
    /// Minimal positive solution of `-Δζ = g(ζ)`, when it could be computed.
    pub zeta: Option<ScalarField>,
    /// Profile for super-solutions, when `g` admits one.
    pub profile: Option<HProfile>,
    g: GSpec,
}

const EIGEN_TOL: f64 = 1e-12;
const PROFILE_TOL: f64 = 1e-12;
const LADDER: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

impl Context {
    pub fn new(problem: &ProblemSpec, opts: &SolverOpts) -> Result<Self> {
        problem.validate()?;
        opts.validate()?;
        let disc = Discretization::new(problem.domain)?;
        let pair = principal_eigenpair(problem.domain, EIGEN_TOL)?;
        let zeta = minimal_subsolution_on(&disc, &problem.g, opts)?.solution;
        let profile = solve_h(&problem.g, opts.eta, opts.hprime_eta, PROFILE_TOL).ok();
        Ok(Self { disc, pair, zeta, profile, g: problem.g.clone() })
    }

    fn check(&self, problem: &ProblemSpec) -> Result<()> {
        if problem.domain != *self.disc.grid.domain() || problem.g != self.g {
            return Err(Error::Domain("context was built for a different grid or g".into()));
        }
        Ok(())
    }
}

/// Strategy ladder: (1) continuation from the warm start, (2) monotone
/// iteration between `ζ` and a searched super-solution, (3) the transformed
/// path when it applies, (4) Newton from multiples of `φ₁`.
pub fn existence_predicate(
    problem: &ProblemSpec,
    warm_start: Option<&WarmStart>,
    opts: &SolverOpts,
) -> Result<ExistenceVerdict> {
    let ctx = Context::new(problem, opts)?;
    existence_with(&ctx, problem, warm_start, opts)
}

pub fn existence_with(
    ctx: &Context,
    problem: &ProblemSpec,
    warm_start: Option<&WarmStart>,
    opts: &SolverOpts,
) -> Result<ExistenceVerdict> {
    ctx.check(problem)?;
    problem.validate()?;
    let disc = &ctx.disc;
    let mut attempts = Vec::new();
    let mut last: Option<SolveReport> = None;
    let mut record = |strategy: Strategy, rep: SolveReport, attempts: &mut Vec<Attempt>| -> Option<SolveReport> {
        attempts.push(Attempt {
            strategy,
            verdict: rep.verdict,
            iterations: rep.iterations,
            detail: rep.detail.clone(),
        });
        if rep.converged() {
            Some(rep)
        } else {
            last = Some(rep);
            None
        }
    };
    let path = if transform_applies(problem).is_ok() { Path::Transformed } else { Path::Direct };

    if let Some(warm) = warm_start {
        let target = problem.param(warm.axis);
        let rep = if warm.param <= target {
            continuation(disc, problem, path, warm.axis, Some((warm.param, &warm.field)), opts)?
        } else {
            solve_newton_on(disc, problem, &warm.field, opts)?
        };
        if let Some(rep) = record(Strategy::WarmStart, rep, &mut attempts) {
            return Ok(ExistenceVerdict { outcome: Outcome::Exists, report: rep, attempts });
        }
    }

    let mut super_found = false;
    let monotone = match (&ctx.zeta, &ctx.profile) {
        (Some(zeta), Some(hp)) => match search_supersolution(disc, problem, hp, &ctx.pair, Some(zeta))? {
            Some(found) => {
                super_found = true;
                solve_monotone_on(disc, problem, zeta, &found.field, opts)?
            }
            None => precondition(Method::Monotone, "no verified super-solution on the (M, c) ladder"),
        },
        (None, _) => precondition(Method::Monotone, "minimal sub-solution unavailable"),
        (_, None) => precondition(Method::Monotone, "no profile for super-solutions"),
    };
    if let Some(rep) = record(Strategy::Monotone, monotone, &mut attempts) {
        return Ok(ExistenceVerdict { outcome: Outcome::Exists, report: rep, attempts });
    }

    if path == Path::Transformed {
        let rep = solve_transformed_on(disc, problem, None, opts)?;
        if let Some(rep) = record(Strategy::Transformed, rep, &mut attempts) {
            return Ok(ExistenceVerdict { outcome: Outcome::Exists, report: rep, attempts });
        }
    }

    for c in LADDER {
        let init = ctx.pair.phi1.scaled(c);
        let rep = solve_newton_on(disc, problem, &init, opts)?;
        if let Some(rep) = record(Strategy::NewtonLadder, rep, &mut attempts) {
            return Ok(ExistenceVerdict { outcome: Outcome::Exists, report: rep, attempts });
        }
    }

    // Inapplicable strategies report a failed precondition; only an
    // iteration cap leaves the question open.
    let capped = attempts.iter().any(|a| a.verdict == Verdict::IterationCap);
    let outcome = if !capped && !super_found { Outcome::NumericallyNonexistent } else { Outcome::Inconclusive };
    let report = last.expect("at least one strategy ran");
    Ok(ExistenceVerdict { outcome, report, attempts })
}

fn precondition(method: Method, detail: &str) -> SolveReport {
    SolveReport {
        method,
        verdict: Verdict::PreconditionFailed,
        solution: None,
        residual_inf: f64::NAN,
        tol_used: f64::NAN,
        iterations: 0,
        history: Vec::new(),
        detail: detail.to_string(),
    }
}

/// `λ₁ / (a + μ)`, the exact `λ`-threshold for `p = 2`, `f ≡ 1`.
pub fn closed_form_threshold(g: &GSpec, mu: f64, pair: &EigenPair) -> Result<f64> {
    let a = g.asymptote();
    if !(a + mu > 0.0) {
        return Err(Error::OutOfRange(format!("closed-form threshold needs a + mu > 0, got a = {a}, mu = {mu}")));
    }
    Ok(pair.lambda1 / (a + mu))
}

/// Closed-form threshold along `axis` when the problem is in the `p = 2`,
/// `f ≡ 1` family.
fn closed_form_along(problem: &ProblemSpec, axis: Axis, pair: &EigenPair) -> Option<f64> {
    let unit_f = problem.f.shape == FShape::Const && problem.f.weight == Weight::Uniform;
    if problem.p != 2.0 || !unit_f {
        return None;
    }
    match axis {
        Axis::Lambda => closed_form_threshold(&problem.g, problem.mu, pair).ok(),
        Axis::Mu if problem.lambda > 0.0 => {
            let mu = pair.lambda1 / problem.lambda - problem.g.asymptote();
            (mu >= 0.0).then_some(mu)
        }
        Axis::Mu => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub param: f64,
    pub outcome: Outcome,
    /// Probe was inconclusive even at doubled `max_iter`.
    pub poisoned: bool,
    pub sup_norm: f64,
    pub iterations: usize,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub axis: Axis,
    pub lo: f64,
    pub hi: f64,
    pub estimate: f64,
    pub bisection_steps: usize,
    pub closed_form: Option<f64>,
    /// Some probe stayed inconclusive and was counted as nonexistent.
    pub poisoned: bool,
    pub probes: Vec<Probe>,
}

impl ThresholdEstimate {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,param,outcome,poisoned,sup_norm,iterations,lo,hi\n");
        for (i, p) in self.probes.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                i,
                fmt17(p.param),
                p.outcome.label(),
                p.poisoned,
                fmt17(p.sup_norm),
                p.iterations,
                fmt17(p.lo),
                fmt17(p.hi)
            ));
        }
        out
    }
}

/// Runs the predicate; an inconclusive verdict is retried once with
/// doubled `max_iter`.
fn probe(
    ctx: &Context,
    problem: &ProblemSpec,
    warm: Option<&WarmStart>,
    opts: &SolverOpts,
) -> Result<(ExistenceVerdict, bool)> {
    let v = existence_with(ctx, problem, warm, opts)?;
    if v.outcome != Outcome::Inconclusive {
        return Ok((v, false));
    }
    let retry = SolverOpts { max_iter: opts.max_iter * 2, ..opts.clone() };
    let v = existence_with(ctx, problem, warm, &retry)?;
    let poisoned = v.outcome == Outcome::Inconclusive;
    Ok((v, poisoned))
}

/// Bisection on the existence predicate along `axis`. The bracket is
/// verified first (existence at `lo`, nonexistence at `hi`); each probe
/// warm-starts from the largest parameter value known to have a solution.
pub fn bisect_threshold(
    problem: &ProblemSpec,
    axis: Axis,
    lo: f64,
    hi: f64,
    param_tol: f64,
    opts: &SolverOpts,
) -> Result<ThresholdEstimate> {
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::OutOfRange(format!("bisection needs 0 <= lo < hi, got [{lo}, {hi}]")));
    }
    if !(param_tol > 0.0) {
        return Err(Error::OutOfRange(format!("param_tol must be positive, got {param_tol}")));
    }
    let ctx = Context::new(problem, opts)?;
    let at = |v: f64| problem.with_param(axis, v);
    let (vlo, _) = probe(&ctx, &at(lo), None, opts)?;
    let (vhi, _) = probe(&ctx, &at(hi), None, opts)?;
    if vlo.outcome != Outcome::Exists || vhi.outcome != Outcome::NumericallyNonexistent {
        let note = if vhi.outcome == Outcome::Exists { "; no threshold in range" } else { "" };
        return Err(Error::Bracket(format!(
            "{} = {lo}: {}, {} = {hi}: {}{note}",
            axis.label(),
            vlo.outcome.label(),
            axis.label(),
            vhi.outcome.label()
        )));
    }
    let sup = |v: &ExistenceVerdict| v.report.sup_norm().unwrap_or(f64::NAN);
    let mut probes = vec![
        Probe {
            param: lo,
            outcome: vlo.outcome,
            poisoned: false,
            sup_norm: sup(&vlo),
            iterations: vlo.report.iterations,
            lo,
            hi,
        },
        Probe {
            param: hi,
            outcome: vhi.outcome,
            poisoned: false,
            sup_norm: sup(&vhi),
            iterations: vhi.report.iterations,
            lo,
            hi,
        },
    ];
    let mut warm = WarmStart { axis, param: lo, field: vlo.report.solution.clone().expect("converged") };
    let (mut lo, mut hi) = (lo, hi);
    let mut poisoned = false;
    let mut steps = 0;
    while hi - lo > param_tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (v, bad) = probe(&ctx, &at(mid), Some(&warm), opts)?;
        steps += 1;
        poisoned |= bad;
        if v.outcome == Outcome::Exists {
            lo = mid;
            warm = WarmStart { axis, param: mid, field: v.report.solution.clone().expect("converged") };
        } else {
            hi = mid;
        }
        probes.push(Probe {
            param: mid,
            outcome: v.outcome,
            poisoned: bad,
            sup_norm: sup(&v),
            iterations: v.report.iterations,
            lo,
            hi,
        });
    }
    Ok(ThresholdEstimate {
        axis,
        lo,
        hi,
        estimate: 0.5 * (lo + hi),
        bisection_steps: steps,
        closed_form: closed_form_along(problem, axis, &ctx.pair),
        poisoned,
        probes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub param: f64,
    pub outcome: Outcome,
    pub sup_norm: f64,
    pub center_value: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BifurcationCurve {
    pub axis: Axis,
    pub records: Vec<CurveRecord>,
}

pub const CURVE_HEADER: &str = "param,outcome,sup_norm,center_value,ratio_min,ratio_max,iterations,residual";

impl BifurcationCurve {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CURVE_HEADER}\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                fmt17(r.param),
                r.outcome.label(),
                fmt17(r.sup_norm),
                fmt17(r.center_value),
                fmt17(r.ratio_min),
                fmt17(r.ratio_max),
                r.iterations,
                fmt17(r.residual)
            ));
        }
        out
    }

    /// No `exists` record above a `numerically_nonexistent` one.
    pub fn down_closed(&self) -> bool {
        let mut seen_gap = false;
        for r in &self.records {
            match r.outcome {
                Outcome::NumericallyNonexistent => seen_gap = true,
                Outcome::Exists if seen_gap => return false,
                _ => {}
            }
        }
        true
    }
}

fn curve_record(ctx: &Context, param: f64, v: &ExistenceVerdict) -> CurveRecord {
    let nan = f64::NAN;
    match &v.report.solution {
        Some(sol) if v.exists() => {
            let (ratio_min, ratio_max) = ratio_bounds(&sol.values, &ctx.disc.dist);
            CurveRecord {
                param,
                outcome: v.outcome,
                sup_norm: sol.sup_norm(),
                center_value: sol.values[ctx.disc.grid.center_index()],
                ratio_min,
                ratio_max,
                iterations: v.report.iterations,
                residual: v.report.residual_inf,
            }
        }
        _ => CurveRecord {
            param,
            outcome: v.outcome,
            sup_norm: nan,
            center_value: nan,
            ratio_min: nan,
            ratio_max: nan,
            iterations: v.report.iterations,
            residual: v.report.residual_inf,
        },
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::OutOfRange("sweep values must be finite and nonnegative".into()));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::OutOfRange("sweep values must be strictly increasing".into()));
    }
    Ok(())
}

/// Ascending sweep, each point warm-started from the last solution found.
/// Nonexistent points are recorded and the sweep continues.
pub fn sweep(problem: &ProblemSpec, axis: Axis, values: &[f64], opts: &SolverOpts) -> Result<BifurcationCurve> {
    check_values(values)?;
    let ctx = Context::new(problem, opts)?;
    let mut warm: Option<WarmStart> = None;
    let mut records = Vec::with_capacity(values.len());
    for &param in values {
        let v = existence_with(&ctx, &problem.with_param(axis, param), warm.as_ref(), opts)?;
        if let (true, Some(sol)) = (v.exists(), &v.report.solution) {
            warm = Some(WarmStart { axis, param, field: sol.clone() });
        }
        records.push(curve_record(&ctx, param, &v));
    }
    Ok(BifurcationCurve { axis, records })
}

/// Cold sweep: every point solved independently, in parallel. Output is
/// independent of thread count.
pub fn sweep_cold(problem: &ProblemSpec, axis: Axis, values: &[f64], opts: &SolverOpts) -> Result<BifurcationCurve> {
    check_values(values)?;
    let ctx = Context::new(problem, opts)?;
    let records = values
        .par_iter()
        .map(|&param| {
            let v = existence_with(&ctx, &problem.with_param(axis, param), None, opts)?;
            Ok(curve_record(&ctx, param, &v))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BifurcationCurve { axis, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainSpec;
    use crate::nonlin::FSpec;
    use std::f64::consts::PI;

    fn shifted(lambda: f64) -> ProblemSpec {
        ProblemSpec {
            domain: DomainSpec::unit_interval(64),
            g: GSpec::power_shift(0.5, 1.0),
            f: FSpec::constant(),
            lambda,
            mu: 1.0,
            p: 2.0,
        }
    }

    #[test]
    fn closed_form_values() {
        let pair = principal_eigenpair(DomainSpec::unit_interval(256), 1e-12).unwrap();
        let t = closed_form_threshold(&GSpec::power_shift(0.5, 1.0), 1.0, &pair).unwrap();
        assert!((t / (PI * PI / 2.0) - 1.0).abs() < 1e-3);
        let t0 = closed_form_threshold(&GSpec::power(0.5), 1.0, &pair).unwrap();
        assert!((t0 / (PI * PI) - 1.0).abs() < 1e-3);
        assert!(closed_form_threshold(&GSpec::power(0.5), 0.0, &pair).is_err());
    }

    #[test]
    fn predicate_on_both_sides_of_threshold() {
        let star = PI * PI / 2.0;
        let below = existence_predicate(&shifted(0.5 * star), None, &SolverOpts::default()).unwrap();
        assert_eq!(below.outcome, Outcome::Exists);
        assert!(below.report.converged());
        let above = existence_predicate(&shifted(1.5 * star), None, &SolverOpts::default()).unwrap();
        assert_eq!(above.outcome, Outcome::NumericallyNonexistent, "{:?}", above.attempts);
        assert!(above.attempts.len() >= 3);
    }

    #[test]
    fn sublinear_gradient_with_large_mu() {
        let p = ProblemSpec {
            domain: DomainSpec::unit_interval(64),
            g: GSpec::power(0.5),
            f: FSpec::power(0.5),
            lambda: 1.0,
            mu: 100.0,
            p: 0.5,
        };
        let v = existence_predicate(&p, None, &SolverOpts::default()).unwrap();
        assert_eq!(v.outcome, Outcome::Exists);
    }

    #[test]
    fn bracket_is_validated() {
        let err = bisect_threshold(&shifted(0.0), Axis::Lambda, 0.0, 1.0, 1e-3, &SolverOpts::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("exists") && msg.contains("no threshold"), "{msg}");
    }

    #[test]
    fn curve_csv_header_and_closure() {
        let curve = sweep(&shifted(0.0), Axis::Lambda, &[1.0, 2.0, 8.0], &SolverOpts::default()).unwrap();
        let csv = curve.to_csv();
        assert!(csv.starts_with("param,outcome,sup_norm,center_value,ratio_min,ratio_max,iterations,residual\n"));
        assert_eq!(csv.lines().count(), 4);
        assert!(curve.down_closed());
        assert_eq!(curve.records[2].outcome, Outcome::NumericallyNonexistent);
        assert!(curve.records[2].sup_norm.is_nan());
        let cold = sweep_cold(&shifted(0.0), Axis::Lambda, &[1.0, 2.0, 8.0], &SolverOpts::default()).unwrap();
        let outcomes = |c: &BifurcationCurve| c.records.iter().map(|r| r.outcome).collect::<Vec<_>>();
        assert_eq!(outcomes(&curve), outcomes(&cold));
    }

    #[test]
    fn rejects_unsorted_sweep() {
        assert!(sweep(&shifted(0.0), Axis::Lambda, &[2.0, 1.0], &SolverOpts::default()).is_err());
    }
}
