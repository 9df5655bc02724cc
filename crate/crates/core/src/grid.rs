//! Uniform finite-difference grids on intervals and axis-aligned rectangles.
//!
//! Only interior nodes carry unknowns; the Dirichlet boundary value is always
//! zero and enters the stencils as a ghost value. Two-dimensional fields are
//! stored row-major with the x index outer and the y index inner, so node
//! `(i, j)` lives at `i * n + j`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of the domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bounds {
    Interval { a: f64, b: f64 },
    Rectangle { ax: f64, bx: f64, ay: f64, by: f64 },
}

/// A domain together with its resolution (`n` interior nodes per axis).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub bounds: Bounds,
    pub n: usize,
}

impl DomainSpec {
    pub fn interval(a: f64, b: f64, n: usize) -> Self {
        Self { bounds: Bounds::Interval { a, b }, n }
    }

    pub fn rectangle(ax: f64, bx: f64, ay: f64, by: f64, n: usize) -> Self {
        Self { bounds: Bounds::Rectangle { ax, bx, ay, by }, n }
    }

    pub fn unit_interval(n: usize) -> Self {
        Self::interval(0.0, 1.0, n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::Domain(format!("need at least 3 interior nodes per axis, got {}", self.n)));
        }
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo < hi;
        let fine = match self.bounds {
            Bounds::Interval { a, b } => ok(a, b),
            Bounds::Rectangle { ax, bx, ay, by } => ok(ax, bx) && ok(ay, by),
        };
        if !fine {
            return Err(Error::Domain(format!("degenerate bounds {:?}", self.bounds)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self.bounds {
            Bounds::Interval { .. } => 1,
            Bounds::Rectangle { .. } => 2,
        }
    }

    /// Number of unknowns.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same geometry with a different resolution.
    pub fn with_n(&self, n: usize) -> Self {
        Self { bounds: self.bounds, n }
    }
}

/// Node coordinates and mesh widths of a validated domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    domain: DomainSpec,
    xs: Vec<f64>,
    ys: Vec<f64>,
    hx: f64,
    hy: f64,
}

/// Build the interior grid of a domain.
pub fn build_grid(domain: DomainSpec) -> Result<Grid> {
    domain.validate()?;
    let n = domain.n;
    let axis = |lo: f64, hi: f64| {
        let h = (hi - lo) / (n as f64 + 1.0);
        let pts = (1..=n).map(|k| lo + k as f64 * h).collect::<Vec<_>>();
        (pts, h)
    };
    let (xs, hx, ys, hy) = match domain.bounds {
        Bounds::Interval { a, b } => {
            let (xs, hx) = axis(a, b);
            (xs, hx, Vec::new(), f64::NAN)
        }
        Bounds::Rectangle { ax, bx, ay, by } => {
            let (xs, hx) = axis(ax, bx);
            let (ys, hy) = axis(ay, by);
            (xs, hx, ys, hy)
        }
    };
    Ok(Grid { domain, xs, ys, hx, hy })
}

impl Grid {
    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn n(&self) -> usize {
        self.domain.n
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    /// Empty for intervals.
    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    /// NaN for intervals.
    pub fn hy(&self) -> f64 {
        self.hy
    }

    /// Largest mesh width.
    pub fn h_max(&self) -> f64 {
        if self.dim() == 1 {
            self.hx
        } else {
            self.hx.max(self.hy)
        }
    }

    /// Coordinates of node `k` (y is NaN in 1D).
    pub fn coords(&self, k: usize) -> (f64, f64) {
        if self.dim() == 1 {
            (self.xs[k], f64::NAN)
        } else {
            let n = self.n();
            (self.xs[k / n], self.ys[k % n])
        }
    }

    /// Fractional position along the x axis, in (0, 1).
    pub fn x_fraction(&self, k: usize) -> f64 {
        let n = self.n();
        let i = if self.dim() == 1 { k } else { k / n };
        (i as f64 + 1.0) / (n as f64 + 1.0)
    }

    /// Index of the node closest to the domain center (lower index on ties).
    pub fn center_index(&self) -> usize {
        let n = self.n();
        let c = (n - 1) / 2;
        if self.dim() == 1 {
            c
        } else {
            c * n + c
        }
    }

    /// Largest diagonal entry of the discrete negative Laplacian.
    pub fn stencil_diag(&self) -> f64 {
        let mut d = 2.0 / (self.hx * self.hx);
        if self.dim() == 2 {
            d += 2.0 / (self.hy * self.hy);
        }
        d
    }

    pub fn check(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::Shape { expected: self.len(), got: values.len() });
        }
        Ok(())
    }

    /// Visit the axis neighbours of node `k`: `(neighbour or None at the
    /// boundary, axis index, sign)` where sign is +1 for the forward
    /// neighbour and -1 for the backward one.
    #[inline]
    pub(crate) fn for_each_neighbour(&self, k: usize, mut visit: impl FnMut(Option<usize>, usize, f64)) {
        let n = self.n();
        if self.dim() == 1 {
            visit(if k > 0 { Some(k - 1) } else { None }, 0, -1.0);
            visit(if k + 1 < n { Some(k + 1) } else { None }, 0, 1.0);
        } else {
            let (i, j) = (k / n, k % n);
            visit(if i > 0 { Some(k - n) } else { None }, 0, -1.0);
            visit(if i + 1 < n { Some(k + n) } else { None }, 0, 1.0);
            visit(if j > 0 { Some(k - 1) } else { None }, 1, -1.0);
            visit(if j + 1 < n { Some(k + 1) } else { None }, 1, 1.0);
        }
    }

    /// Mesh width of axis 0 or 1.
    #[inline]
    pub(crate) fn h_axis(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.hx
        } else {
            self.hy
        }
    }

    /// 3-point / 5-point negative Laplacian with zero ghost values.
    pub fn neg_laplacian_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n();
        let ihx2 = 1.0 / (self.hx * self.hx);
        if self.dim() == 1 {
            for k in 0..n {
                let left = if k > 0 { u[k - 1] } else { 0.0 };
                let right = if k + 1 < n { u[k + 1] } else { 0.0 };
                out[k] = (2.0 * u[k] - left - right) * ihx2;
            }
        } else {
            let ihy2 = 1.0 / (self.hy * self.hy);
            for i in 0..n {
                for j in 0..n {
                    let k = i * n + j;
                    let w = if i > 0 { u[k - n] } else { 0.0 };
                    let e = if i + 1 < n { u[k + n] } else { 0.0 };
                    let s = if j > 0 { u[k - 1] } else { 0.0 };
                    let nn = if j + 1 < n { u[k + 1] } else { 0.0 };
                    out[k] = (2.0 * u[k] - w - e) * ihx2 + (2.0 * u[k] - s - nn) * ihy2;
                }
            }
        }
    }

    /// Centered-difference gradient components at every node. Next to the
    /// boundary the stencil uses the zero Dirichlet value, which is the
    /// second-order three-point formula through the boundary node.
    pub fn gradient_into(&self, u: &[f64], gx: &mut [f64], gy: &mut [f64]) {
        let n = self.n();
        let inv2hx = 0.5 / self.hx;
        if self.dim() == 1 {
            for k in 0..n {
                let left = if k > 0 { u[k - 1] } else { 0.0 };
                let right = if k + 1 < n { u[k + 1] } else { 0.0 };
                gx[k] = (right - left) * inv2hx;
            }
        } else {
            let inv2hy = 0.5 / self.hy;
            for i in 0..n {
                for j in 0..n {
                    let k = i * n + j;
                    let w = if i > 0 { u[k - n] } else { 0.0 };
                    let e = if i + 1 < n { u[k + n] } else { 0.0 };
                    let s = if j > 0 { u[k - 1] } else { 0.0 };
                    let nn = if j + 1 < n { u[k + 1] } else { 0.0 };
                    gx[k] = (e - w) * inv2hx;
                    gy[k] = (nn - s) * inv2hy;
                }
            }
        }
    }

    /// `|grad u|^p` at every node.
    pub fn gradient_p_into(&self, u: &[f64], p: f64, out: &mut [f64]) {
        let len = self.len();
        let mut gx = vec![0.0; len];
        let mut gy = vec![0.0; if self.dim() == 2 { len } else { 0 }];
        self.gradient_into(u, &mut gx, &mut gy);
        for k in 0..len {
            let sq = gx[k] * gx[k] + if self.dim() == 2 { gy[k] * gy[k] } else { 0.0 };
            out[k] = pow_half(sq, p);
        }
    }

    /// Distance from each node to the boundary of the box.
    pub fn distance_values(&self) -> Vec<f64> {
        match self.domain.bounds {
            Bounds::Interval { a, b } => self.xs.iter().map(|&x| (x - a).min(b - x)).collect(),
            Bounds::Rectangle { ax, bx, ay, by } => {
                let mut d = Vec::with_capacity(self.len());
                for &x in &self.xs {
                    for &y in &self.ys {
                        d.push((x - ax).min(bx - x).min(y - ay).min(by - y));
                    }
                }
                d
            }
        }
    }
}

/// `(sq)^(p/2)` with the conventions `0^p = 0` for `p > 0`.
#[inline]
pub(crate) fn pow_half(sq: f64, p: f64) -> f64 {
    if sq == 0.0 {
        0.0
    } else if p == 2.0 {
        sq
    } else if p == 1.0 {
        sq.sqrt()
    } else {
        sq.powf(0.5 * p)
    }
}

/// Node values over the interior of a domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub domain: DomainSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(domain: DomainSpec, values: Vec<f64>) -> Result<Self> {
        domain.validate()?;
        if values.len() != domain.len() {
            return Err(Error::Shape { expected: domain.len(), got: values.len() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::OutOfRange(format!("non-finite field value at node {k}")));
        }
        Ok(Self { domain, values })
    }

    pub fn zeros(domain: DomainSpec) -> Result<Self> {
        Self::new(domain, vec![0.0; domain.len()])
    }

    /// Sample a function of the node coordinates (`y` is NaN in 1D).
    pub fn from_fn(domain: DomainSpec, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let grid = build_grid(domain)?;
        let values = (0..grid.len()).map(|k| {
            let (x, y) = grid.coords(k);
            f(x, y)
        });
        Self::new(domain, values.collect())
    }

    pub fn grid(&self) -> Result<Grid> {
        build_grid(self.domain)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { domain: self.domain, values: self.values.iter().map(|v| v * factor).collect() }
    }

    /// Sup-norm distance between two fields on the same grid.
    pub fn distance(&self, other: &ScalarField) -> Result<f64> {
        if self.domain != other.domain {
            return Err(Error::Domain("fields live on different grids".into()));
        }
        Ok(self.values.iter().zip(&other.values).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// CSV dump: header `x,value` or `x,y,value`, 17 significant digits.
    pub fn to_csv(&self) -> Result<String> {
        let grid = self.grid()?;
        let mut out = String::new();
        if grid.dim() == 1 {
            out.push_str("x,value\n");
        } else {
            out.push_str("x,y,value\n");
        }
        for (k, v) in self.values.iter().enumerate() {
            let (x, y) = grid.coords(k);
            if grid.dim() == 1 {
                let _ = writeln!(out, "{},{}", fmt17(x), fmt17(*v));
            } else {
                let _ = writeln!(out, "{},{},{}", fmt17(x), fmt17(y), fmt17(*v));
            }
        }
        Ok(out)
    }

    /// Read back a CSV dump for a known domain. Coordinates are checked
    /// against the grid.
    pub fn from_csv(domain: DomainSpec, text: &str) -> Result<Self> {
        let grid = build_grid(domain)?;
        let cols = grid.dim() + 1;
        let mut values = Vec::with_capacity(grid.len());
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != cols {
                return Err(Error::Parse { line: lineno + 1, msg: format!("expected {cols} columns") });
            }
            let nums = parts
                .iter()
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse { line: lineno + 1, msg: e.to_string() })?;
            let k = values.len();
            if k >= grid.len() {
                return Err(Error::Shape { expected: grid.len(), got: k + 1 });
            }
            let (x, y) = grid.coords(k);
            let tol = 1e-9 * grid.h_max();
            if (nums[0] - x).abs() > tol || (cols == 3 && (nums[1] - y).abs() > tol) {
                return Err(Error::Parse { line: lineno + 1, msg: "node coordinates do not match the grid".into() });
            }
            values.push(nums[cols - 1]);
        }
        Self::new(domain, values)
    }
}

/// Shortest decimal with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        }
    } else {
        format!("{v:.16e}")
    }
}

pub fn neg_laplacian(u: &ScalarField) -> Result<ScalarField> {
    let grid = u.grid()?;
    let mut out = vec![0.0; grid.len()];
    grid.neg_laplacian_into(&u.values, &mut out);
    ScalarField::new(u.domain, out)
}

pub fn gradient_p(u: &ScalarField, p: f64) -> Result<ScalarField> {
    if !(p > 0.0 && p <= 2.0) {
        return Err(Error::OutOfRange(format!("gradient exponent p must lie in (0, 2], got {p}")));
    }
    let grid = u.grid()?;
    let mut out = vec![0.0; grid.len()];
    grid.gradient_p_into(&u.values, p, &mut out);
    ScalarField::new(u.domain, out)
}

pub fn boundary_distance(domain: DomainSpec) -> Result<ScalarField> {
    let grid = build_grid(domain)?;
    ScalarField::new(domain, grid.distance_values())
}
