//! The full problem instance, solver options, and the discrete residual
//! `R(u) = -Δu - g(u) - λ|∇u|^p - μ f(x,u)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_grid, DomainSpec, Grid};
use crate::nonlin::{FSpec, GSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub domain: DomainSpec,
    pub g: GSpec,
    pub f: FSpec,
    pub lambda: f64,
    pub mu: f64,
    /// Exponent of the gradient term, in (0, 2].
    pub p: f64,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.g.validate()?;
        self.f.validate()?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::OutOfRange(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::OutOfRange(format!("mu must be finite and nonnegative, got {}", self.mu)));
        }
        check_p(self.p)
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..self.clone() }
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        Self { mu, ..self.clone() }
    }

    pub fn with_domain(&self, domain: DomainSpec) -> Self {
        Self { domain, ..self.clone() }
    }
}

/// Continuation / bisection parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Lambda,
    Mu,
}

impl Axis {
    pub fn label(&self) -> &'static str {
        match self {
            Axis::Lambda => "lambda",
            Axis::Mu => "mu",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(Axis::Lambda),
            "mu" => Ok(Axis::Mu),
            other => Err(Error::OutOfRange(format!("unknown axis {other:?} (expected lambda or mu)"))),
        }
    }
}

impl ProblemSpec {
    pub fn param(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Lambda => self.lambda,
            Axis::Mu => self.mu,
        }
    }

    pub fn with_param(&self, axis: Axis, value: f64) -> Self {
        match axis {
            Axis::Lambda => self.with_lambda(value),
            Axis::Mu => self.with_mu(value),
        }
    }
}

pub fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 2.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("gradient exponent p must lie in (0, 2], got {p}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOpts {
    /// Target for the sup-norm of the nonlinear residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Sup-norm beyond which an iteration is declared divergent.
    pub sup_cap: f64,
    /// Smallest Newton step fraction tried by the line search.
    pub damping_floor: f64,
    /// Iterates are clamped to `floor_base + floor_slope * dist(x)`.
    pub floor_base: f64,
    pub floor_slope: f64,
    /// Right endpoint of the profile used for super-solutions.
    pub eta: f64,
    /// Terminal slope of that profile.
    pub hprime_eta: f64,
}

impl Default for SolverOpts {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
            sup_cap: 1e6,
            damping_floor: 0.5f64.powi(20),
            floor_base: 1e-12,
            floor_slope: 1e-6,
            eta: 1.0,
            hprime_eta: 1.0,
        }
    }
}

impl SolverOpts {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::OutOfRange(m.to_string()));
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return bad("tol must lie in (0, 1)");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        if !(self.sup_cap > 0.0) {
            return bad("sup_cap must be positive");
        }
        if !(self.damping_floor > 0.0 && self.damping_floor <= 1.0) {
            return bad("damping_floor must lie in (0, 1]");
        }
        if !(self.floor_base > 0.0 && self.floor_slope >= 0.0) {
            return bad("positivity floor must be positive");
        }
        if !(self.eta > 0.0 && self.hprime_eta > 0.0) {
            return bad("profile parameters eta and hprime_eta must be positive");
        }
        Ok(())
    }
}

/// Grid plus the per-node data every residual evaluation needs.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub grid: Grid,
    pub dist: Vec<f64>,
    /// Fractional x-position of each node (for the weight of `f`).
    pub frac: Vec<f64>,
}

impl Discretization {
    pub fn new(domain: DomainSpec) -> Result<Self> {
        let grid = build_grid(domain)?;
        let dist = grid.distance_values();
        let frac = (0..grid.len()).map(|k| grid.x_fraction(k)).collect();
        Ok(Self { grid, dist, frac })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn floor(&self, opts: &SolverOpts) -> Vec<f64> {
        self.dist.iter().map(|d| opts.floor_base + opts.floor_slope * d).collect()
    }

    /// Zeroth-order right-hand side `g(u) + μ f(x,u)`.
    #[inline]
    pub fn source(&self, problem: &ProblemSpec, k: usize, u: f64) -> f64 {
        problem.g.value(u) + problem.mu * problem.f.value(self.frac[k], u)
    }

    /// `R(u) = -Δu - g(u) - λ|∇u|^p - μ f(x,u)`; `u` must be positive.
    pub fn residual_into(&self, problem: &ProblemSpec, u: &[f64], out: &mut [f64]) {
        self.grid.neg_laplacian_into(u, out);
        if problem.lambda != 0.0 {
            let mut gp = vec![0.0; u.len()];
            self.grid.gradient_p_into(u, problem.p, &mut gp);
            for (o, v) in out.iter_mut().zip(&gp) {
                *o -= problem.lambda * v;
            }
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o -= self.source(problem, k, u[k]);
        }
    }

    pub fn residual(&self, problem: &ProblemSpec, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.residual_into(problem, u, &mut out);
        out
    }

    /// Rounding-level size of the residual at `u`: the stencil and the
    /// right-hand side are both O(1/h^2) times the field, so a residual much
    /// below `eps * (|A| |u| + |F|)` cannot be resolved in floating point.
    pub fn noise_floor(&self, problem: &ProblemSpec, u: &[f64]) -> f64 {
        let diag = self.grid.stencil_diag();
        let mut worst = 0.0_f64;
        let mut gp = vec![0.0; u.len()];
        if problem.lambda != 0.0 {
            self.grid.gradient_p_into(u, problem.p, &mut gp);
        }
        for k in 0..u.len() {
            let scale = 2.0 * diag * u[k].abs() + self.source(problem, k, u[k]).abs() + problem.lambda * gp[k];
            worst = worst.max(scale);
        }
        16.0 * f64::EPSILON * worst
    }
}
