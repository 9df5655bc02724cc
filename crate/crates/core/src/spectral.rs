//! Principal Dirichlet eigenpair of the discrete negative Laplacian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_grid, DomainSpec, Grid, ScalarField};
use crate::linalg::{conjugate_gradient, dot, norm_inf, solve_tridiagonal};

/// `(λ₁, φ₁)` with `max φ₁ = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda1: f64,
    pub phi1: ScalarField,
    /// `‖-Δφ₁ - λ₁φ₁‖∞`
    pub residual: f64,
    pub iterations: usize,
}

const MAX_SWEEPS: usize = 500;

/// Inverse power iteration from the all-ones vector. Each sweep solves
/// `(-Δ) y = x` (Thomas algorithm in 1D, CG in 2D), rescales to unit
/// sup-norm and updates the Rayleigh quotient. Stops once the eigenvalue
/// increment is below `tol` and the eigen-residual is below `tol` or has
/// reached rounding level.
pub fn principal_eigenpair(domain: DomainSpec, tol: f64) -> Result<EigenPair> {
    if !(tol > 0.0) {
        return Err(Error::OutOfRange(format!("eigen tolerance must be positive, got {tol}")));
    }
    let grid = build_grid(domain)?;
    let len = grid.len();
    let mut x = vec![1.0; len];
    let mut ax = vec![0.0; len];
    let mut lambda = rayleigh(&grid, &x, &mut ax);
    // rounding floor for the residual of a unit-sup-norm vector
    let noise = 64.0 * f64::EPSILON * 2.0 * grid.stencil_diag();
    let mut prev_res = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for sweep in 1..=MAX_SWEEPS {
        let mut y = inverse_apply(&grid, &x)?;
        let scale = norm_inf(&y);
        y.iter_mut().for_each(|v| *v /= scale);
        let next = rayleigh(&grid, &y, &mut ax);
        residual = ax.iter().zip(&y).fold(0.0_f64, |m, (a, v)| m.max((a - next * v).abs()));
        let increment = (next - lambda).abs();
        x = y;
        lambda = next;
        let settled = residual <= tol.max(noise) || (residual <= 1e3 * noise && residual >= 0.9 * prev_res);
        if increment < tol && settled {
            let phi1 = ScalarField::new(domain, x)?;
            return Ok(EigenPair { lambda1: lambda, phi1, residual, iterations: sweep });
        }
        prev_res = residual;
    }
    Err(Error::Eigen { iterations: MAX_SWEEPS, residual })
}

fn rayleigh(grid: &Grid, x: &[f64], ax: &mut [f64]) -> f64 {
    grid.neg_laplacian_into(x, ax);
    dot(x, ax) / dot(x, x)
}

fn inverse_apply(grid: &Grid, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = grid.n();
    if grid.dim() == 1 {
        let ih2 = 1.0 / (grid.hx() * grid.hx());
        let off = vec![-ih2; n];
        let diag = vec![2.0 * ih2; n];
        solve_tridiagonal(&off, &diag, &off, rhs)
    } else {
        let apply = |v: &[f64], out: &mut [f64]| grid.neg_laplacian_into(v, out);
        let res = conjugate_gradient(apply, rhs, None, 1e-14, 20 * grid.len());
        Ok(res.x)
    }
}

/// `(C1, C2)` = min / max over nodes of `φ₁ / dist(x, ∂Ω)`.
pub fn eigen_boundary_bounds(pair: &EigenPair) -> Result<(f64, f64)> {
    let grid = pair.phi1.grid()?;
    let dist = grid.distance_values();
    Ok(ratio_bounds(&pair.phi1.values, &dist))
}

/// Min and max of `values / dist` over all nodes.
pub fn ratio_bounds(values: &[f64], dist: &[f64]) -> (f64, f64) {
    values
        .iter()
        .zip(dist)
        .map(|(v, d)| v / d)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
}
