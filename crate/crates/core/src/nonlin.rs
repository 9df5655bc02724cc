//! Parametric families for the singular term `g` and the source term `f`,
//! plus the structural checks the existence theory depends on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Singular nonlinearity `g(s)`, positive and nonincreasing with
/// `g(0+) = +inf`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GSpec {
    /// `s^-alpha`
    Power { alpha: f64 },
    /// `s^-alpha + a0`
    PowerShift { alpha: f64, a0: f64 },
    /// Log-log interpolation of `(s, value)` nodes. Below the first node the
    /// first segment's power law is extended; beyond the last node the
    /// last value is held constant.
    Table { s: Vec<f64>, values: Vec<f64> },
}

impl GSpec {
    pub fn power(alpha: f64) -> Self {
        GSpec::Power { alpha }
    }

    pub fn power_shift(alpha: f64, a0: f64) -> Self {
        GSpec::PowerShift { alpha, a0 }
    }

    /// Full check: positive, nonincreasing, singular at 0.
    pub fn validate(&self) -> Result<()> {
        self.validate_monotone()?;
        if let GSpec::Table { values, .. } = self {
            if values[1] >= values[0] {
                return Err(Error::Nonlinearity(
                    "g table must decrease on its first segment so that g(0+) is infinite".into(),
                ));
            }
        }
        Ok(())
    }

    /// Positivity and monotonicity only; admits bounded tables such as a
    /// constant, which the profile construction can still use.
    pub fn validate_monotone(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Nonlinearity(m));
        match self {
            GSpec::Power { alpha } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return bad(format!("power exponent alpha must be positive, got {alpha}"));
                }
            }
            GSpec::PowerShift { alpha, a0 } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return bad(format!("power exponent alpha must be positive, got {alpha}"));
                }
                if !(a0.is_finite() && *a0 >= 0.0) {
                    return bad(format!("shift a0 must be nonnegative, got {a0}"));
                }
            }
            GSpec::Table { s, values } => {
                if s.len() < 2 || s.len() != values.len() {
                    return bad("g table needs at least two (s, value) pairs of equal length".into());
                }
                if s.iter().chain(values).any(|v| !(v.is_finite() && *v > 0.0)) {
                    return bad("g table entries must be finite and positive".into());
                }
                if s.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("g table abscissas must be strictly increasing".into());
                }
                if values.windows(2).any(|w| w[1] > w[0]) {
                    return bad("g table values must be nonincreasing".into());
                }
            }
        }
        // sampled confirmation of positivity and monotonicity
        let mut prev = f64::INFINITY;
        for k in -12..=12 {
            let v = self.value(10f64.powi(k));
            if !(v > 0.0) || v > prev * (1.0 + 1e-12) {
                return bad(format!("g fails positivity or monotonicity near s = 1e{k}"));
            }
            prev = v;
        }
        Ok(())
    }

    /// `g(s)` for `s > 0`, without argument checking.
    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        match self {
            GSpec::Power { alpha } => s.powf(-alpha),
            GSpec::PowerShift { alpha, a0 } => s.powf(-alpha) + a0,
            GSpec::Table { s: xs, values } => {
                let (c, k) = table_segment(xs, values, s);
                match k {
                    None => c,
                    Some(k) => c * s.powf(k),
                }
            }
        }
    }

    /// `g'(s)`.
    #[inline]
    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            GSpec::Power { alpha } | GSpec::PowerShift { alpha, .. } => -alpha * s.powf(-alpha - 1.0),
            GSpec::Table { s: xs, values } => {
                let (c, k) = table_segment(xs, values, s);
                match k {
                    None => 0.0,
                    Some(k) => c * k * s.powf(k - 1.0),
                }
            }
        }
    }

    /// `lim g(s)` as `s -> inf`.
    pub fn asymptote(&self) -> f64 {
        match self {
            GSpec::Power { .. } => 0.0,
            GSpec::PowerShift { a0, .. } => *a0,
            GSpec::Table { values, .. } => *values.last().unwrap_or(&0.0),
        }
    }

    /// `int_lo^hi g(s) ds` in closed form (`lo >= 0`); `+inf` when the
    /// singularity at 0 is not integrable.
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        if hi == lo {
            return 0.0;
        }
        if hi < lo {
            return -self.integral(hi, lo);
        }
        match self {
            GSpec::Power { alpha } => power_integral(1.0, -alpha, lo, hi),
            GSpec::PowerShift { alpha, a0 } => power_integral(1.0, -alpha, lo, hi) + a0 * (hi - lo),
            GSpec::Table { s: xs, values } => {
                // split [lo, hi] at the table nodes
                let mut cuts = vec![lo];
                cuts.extend(xs.iter().copied().filter(|&x| x > lo && x < hi));
                cuts.push(hi);
                let mut total = 0.0;
                for w in cuts.windows(2) {
                    let mid = if w[0] == 0.0 { 0.5 * w[1] } else { (w[0] * w[1]).sqrt() };
                    let (c, k) = table_segment(xs, values, mid);
                    total += match k {
                        None => c * (w[1] - w[0]),
                        Some(k) => power_integral(c, k, w[0], w[1]),
                    };
                }
                total
            }
        }
    }

    /// Whether `int_0^1 g` is finite.
    pub fn integrable_at_zero(&self) -> bool {
        self.integral(0.0, 1.0).is_finite()
    }

    /// Effective singularity exponent `alpha` with `g(s) ~ s^-alpha` at 0.
    pub fn singular_exponent(&self) -> f64 {
        match self {
            GSpec::Power { alpha } | GSpec::PowerShift { alpha, .. } => *alpha,
            GSpec::Table { s, values } => -(values[1] / values[0]).ln() / (s[1] / s[0]).ln(),
        }
    }
}

/// `(coefficient, exponent)` of the power-law piece containing `s`;
/// exponent `None` means the constant tail.
#[inline]
fn table_segment(xs: &[f64], values: &[f64], s: f64) -> (f64, Option<f64>) {
    let last = xs.len() - 1;
    if s >= xs[last] {
        return (values[last], None);
    }
    let seg = match xs.iter().position(|&x| x > s) {
        Some(0) | None => 0,
        Some(i) => i - 1,
    };
    let k = (values[seg + 1] / values[seg]).ln() / (xs[seg + 1] / xs[seg]).ln();
    let c = values[seg] / xs[seg].powf(k);
    (c, Some(k))
}

/// `int_lo^hi c s^k ds`.
fn power_integral(c: f64, k: f64, lo: f64, hi: f64) -> f64 {
    if (k + 1.0).abs() < 1e-14 {
        if lo == 0.0 {
            f64::INFINITY
        } else {
            c * (hi / lo).ln()
        }
    } else if k + 1.0 < 0.0 && lo == 0.0 {
        f64::INFINITY
    } else {
        c * (hi.powf(k + 1.0) - lo.powf(k + 1.0)) / (k + 1.0)
    }
}

pub fn eval_g(g: &GSpec, s: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::OutOfRange(format!("g is singular at s = {s}; need s > 0")));
    }
    Ok(g.value(s))
}

pub fn g_asymptote(g: &GSpec) -> f64 {
    g.asymptote()
}

/// Tri-state verdict of a structural check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Check {
    Holds,
    Fails { witness: Witness },
    Undetermined { reason: String },
}

impl Check {
    pub fn holds(&self) -> bool {
        matches!(self, Check::Holds)
    }

    pub fn fails(&self) -> bool {
        matches!(self, Check::Fails { .. })
    }

    fn fail(s: f64, other: Option<f64>, detail: impl Into<String>) -> Self {
        Check::Fails { witness: Witness { s, other, detail: detail.into() } }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Check::Holds => "holds",
            Check::Fails { .. } => "fails",
            Check::Undetermined { .. } => "undetermined",
        }
    }
}

/// Sample point(s) exhibiting a violation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub s: f64,
    pub other: Option<f64>,
    pub detail: String,
}

/// Keller–Osserman integral and its verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KoReport {
    pub value: f64,
    pub error_estimate: f64,
    pub status: Check,
}

impl KoReport {
    pub fn satisfied(&self) -> bool {
        self.status.holds()
    }
}

/// `int_0^1 (int_0^t g)^{-1/2} dt`. The outer integral is split into dyadic
/// pieces `[2^-(m+1), 2^-m]`, each done by tanh-sinh quadrature; the tail is
/// closed with a geometric (Richardson-type) estimate once the piece ratio
/// settles. An infinite inner integral contributes 0.
pub fn check_ko(g: &GSpec, quad_tol: f64) -> Result<KoReport> {
    g.validate()?;
    let tol = quad_tol.max(1e-15);
    let integrand = |t: f64| {
        let inner = g.integral(0.0, t);
        if inner.is_finite() && inner > 0.0 {
            1.0 / inner.sqrt()
        } else {
            0.0
        }
    };
    let mut total = 0.0;
    let mut err = 0.0;
    let mut pieces: Vec<f64> = Vec::new();
    let max_pieces = 200;
    for m in 0..max_pieces {
        let hi = 0.5f64.powi(m);
        let lo = 0.5 * hi;
        let out = quadrature::double_exponential::integrate(integrand, lo, hi, tol * 1e-3);
        total += out.integral;
        err += out.error_estimate;
        pieces.push(out.integral);
        if out.integral == 0.0 && m >= 4 && pieces.iter().rev().take(4).all(|p| *p == 0.0) {
            return Ok(KoReport { value: total, error_estimate: err, status: Check::Holds });
        }
        if m >= 6 {
            let n = pieces.len();
            let r1 = pieces[n - 1] / pieces[n - 2];
            let r2 = pieces[n - 2] / pieces[n - 3];
            if r1 < 1.0 && (r1 - r2).abs() < 1e-3 * r1.max(1e-300) {
                let tail = pieces[n - 1] * r1 / (1.0 - r1);
                if tail < tol {
                    total += tail;
                    err += (tail * (r1 - r2).abs()).abs() + tail * 1e-6;
                    return Ok(KoReport { value: total, error_estimate: err, status: Check::Holds });
                }
            } else if r1 >= 1.0 && r2 >= 1.0 && m > 40 {
                return Ok(KoReport {
                    value: f64::INFINITY,
                    error_estimate: f64::INFINITY,
                    status: Check::fail(lo, None, "dyadic contributions do not decay"),
                });
            }
        }
    }
    Ok(KoReport {
        value: total,
        error_estimate: err,
        status: Check::Undetermined { reason: "tail estimate did not settle".into() },
    })
}

/// Dependence of `f` on position, along the first axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weight {
    #[default]
    Uniform,
    /// Linear ramp from `w0` at the left edge to `w1` at the right edge.
    Linear { w0: f64, w1: f64 },
}

impl Weight {
    /// Weight at fractional position `frac` in `[0, 1]` along the x axis.
    #[inline]
    pub fn at(&self, frac: f64) -> f64 {
        match self {
            Weight::Uniform => 1.0,
            Weight::Linear { w0, w1 } => w0 + (w1 - w0) * frac,
        }
    }
}

/// Shape of the `s`-dependence of `f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FShape {
    /// `1`
    Const,
    /// `s^beta`
    Power { beta: f64 },
    /// `slope * s`
    Linear { slope: f64 },
    /// `exp(s / (1 + eps s))`
    Arrhenius { eps: f64 },
    /// Piecewise-linear interpolation of `(s, value)` nodes: constant below
    /// the first node, linear continuation of the last segment beyond the
    /// last node.
    Table { s: Vec<f64>, values: Vec<f64> },
}

/// Separable source term `f(x, s) = weight(x) * shape(s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FSpec {
    pub shape: FShape,
    #[serde(default)]
    pub weight: Weight,
}

impl FSpec {
    pub fn constant() -> Self {
        Self { shape: FShape::Const, weight: Weight::Uniform }
    }

    pub fn power(beta: f64) -> Self {
        Self { shape: FShape::Power { beta }, weight: Weight::Uniform }
    }

    pub fn linear(slope: f64) -> Self {
        Self { shape: FShape::Linear { slope }, weight: Weight::Uniform }
    }

    pub fn arrhenius(eps: f64) -> Self {
        Self { shape: FShape::Arrhenius { eps }, weight: Weight::Uniform }
    }

    pub fn with_weight(mut self, weight: Weight) -> Self {
        self.weight = weight;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Nonlinearity(m));
        match &self.shape {
            FShape::Const => {}
            FShape::Power { beta } => {
                if !(beta.is_finite() && *beta > 0.0) {
                    return bad(format!("f power exponent beta must be positive, got {beta}"));
                }
            }
            FShape::Linear { slope } => {
                if !(slope.is_finite() && *slope > 0.0) {
                    return bad(format!("f slope must be positive, got {slope}"));
                }
            }
            FShape::Arrhenius { eps } => {
                if !(eps.is_finite() && *eps >= 0.0) {
                    return bad(format!("arrhenius eps must be nonnegative, got {eps}"));
                }
            }
            FShape::Table { s, values } => {
                if s.len() < 2 || s.len() != values.len() {
                    return bad("f table needs at least two (s, value) pairs of equal length".into());
                }
                if s.iter().chain(values).any(|v| !v.is_finite() || *v < 0.0) {
                    return bad("f table entries must be finite and nonnegative".into());
                }
                if s.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("f table abscissas must be strictly increasing".into());
                }
                if values.windows(2).any(|w| w[1] < w[0]) {
                    return bad("f table values must be nondecreasing".into());
                }
                if values.iter().all(|v| *v == 0.0) {
                    return bad("f table must be positive somewhere".into());
                }
            }
        }
        if let Weight::Linear { w0, w1 } = self.weight {
            if !(w0.is_finite() && w1.is_finite() && w0 > 0.0 && w1 > 0.0) {
                return bad(format!("weights must be positive, got w0={w0}, w1={w1}"));
            }
        }
        Ok(())
    }

    /// Whether `f` ignores `s`.
    pub fn is_x_only(&self) -> bool {
        matches!(self.shape, FShape::Const)
    }

    /// `f(x, s)` with `frac` the fractional x-position.
    #[inline]
    pub fn value(&self, frac: f64, s: f64) -> f64 {
        self.weight.at(frac) * self.shape_value(s)
    }

    /// `df/ds`.
    #[inline]
    pub fn derivative(&self, frac: f64, s: f64) -> f64 {
        self.weight.at(frac) * self.shape_derivative(s)
    }

    #[inline]
    pub fn shape_value(&self, s: f64) -> f64 {
        match &self.shape {
            FShape::Const => 1.0,
            FShape::Power { beta } => {
                if s <= 0.0 {
                    0.0
                } else {
                    s.powf(*beta)
                }
            }
            FShape::Linear { slope } => slope * s,
            FShape::Arrhenius { eps } => (s / (1.0 + eps * s)).exp(),
            FShape::Table { s: xs, values } => {
                let (v0, slope, x0) = linear_segment(xs, values, s);
                v0 + slope * (s - x0)
            }
        }
    }

    #[inline]
    pub fn shape_derivative(&self, s: f64) -> f64 {
        match &self.shape {
            FShape::Const => 0.0,
            FShape::Power { beta } => {
                if s <= 0.0 {
                    0.0
                } else {
                    beta * s.powf(beta - 1.0)
                }
            }
            FShape::Linear { slope } => *slope,
            FShape::Arrhenius { eps } => {
                let d = 1.0 + eps * s;
                (s / d).exp() / (d * d)
            }
            FShape::Table { s: xs, values } => linear_segment(xs, values, s).1,
        }
    }
}

/// `(value at segment start, slope, segment start)` for the piecewise
/// linear table.
#[inline]
fn linear_segment(xs: &[f64], values: &[f64], s: f64) -> (f64, f64, f64) {
    let last = xs.len() - 1;
    if s <= xs[0] {
        return (values[0], 0.0, s);
    }
    let seg = match xs.iter().position(|&x| x > s) {
        Some(i) => i - 1,
        None => last - 1,
    };
    let slope = (values[seg + 1] - values[seg]) / (xs[seg + 1] - xs[seg]);
    (values[seg], slope, xs[seg])
}

/// Verdicts for the four structural hypotheses on `f`:
/// `f1`: `f >= c s` for some `c > 0`; `f2`: `f/s` nondecreasing;
/// `f3`: `f/s` nonincreasing; `f4`: `f/s -> 0` as `s -> inf`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub f1: Check,
    pub f2: Check,
    pub f3: Check,
    pub f4: Check,
}

/// Sampled classification on a geometric grid over `[1e-6, 1e6]`; the
/// built-in closed-form families use their analytic verdicts instead.
pub fn classify_f(f: &FSpec, samples: usize) -> Result<HypothesisReport> {
    f.validate()?;
    let analytic = match &f.shape {
        FShape::Const => Some(HypothesisReport {
            f1: Check::fail(1e6, None, "f/s -> 0, so no c > 0 gives f >= c s"),
            f2: Check::fail(1.0, Some(2.0), "f/s = 1/s decreases"),
            f3: Check::Holds,
            f4: Check::Holds,
        }),
        FShape::Power { beta } => {
            let b = *beta;
            let (lo_w, hi_w) = (1e-6, 1e6);
            Some(HypothesisReport {
                f1: if b == 1.0 {
                    Check::Holds
                } else if b < 1.0 {
                    Check::fail(hi_w, None, "f/s = s^(beta-1) -> 0 at infinity")
                } else {
                    Check::fail(lo_w, None, "f/s = s^(beta-1) -> 0 at the origin")
                },
                f2: if b >= 1.0 { Check::Holds } else { Check::fail(1.0, Some(2.0), "f/s decreases for beta < 1") },
                f3: if b <= 1.0 { Check::Holds } else { Check::fail(1.0, Some(2.0), "f/s increases for beta > 1") },
                f4: if b < 1.0 { Check::Holds } else { Check::fail(hi_w, None, "f/s does not vanish at infinity") },
            })
        }
        FShape::Linear { .. } => Some(HypothesisReport {
            f1: Check::Holds,
            f2: Check::Holds,
            f3: Check::Holds,
            f4: Check::fail(1e6, None, "f/s is a positive constant"),
        }),
        FShape::Arrhenius { eps } => {
            let e = *eps;
            if e == 0.0 {
                Some(HypothesisReport {
                    f1: Check::Holds,
                    f2: Check::fail(0.5, Some(0.9), "exp(s)/s decreases on (0, 1)"),
                    f3: Check::fail(1.0, Some(2.0), "exp(s)/s increases on (1, inf)"),
                    f4: Check::fail(1e6, None, "exp(s)/s is unbounded"),
                })
            } else {
                // f/s is nonincreasing iff s <= (1 + eps s)^2 for all s > 0,
                // i.e. iff eps >= 1/4. Otherwise f/s increases around the
                // minimiser s = 1/eps of (1 + eps s)^2 / s.
                let f3 = if e >= 0.25 {
                    Check::Holds
                } else {
                    let s0 = 1.0 / e;
                    Check::fail(s0, Some(s0 * 1.01), "f/s increases where (1 + eps s)^2 < s")
                };
                Some(HypothesisReport {
                    f1: Check::fail(1e6, None, "f is bounded by exp(1/eps)"),
                    f2: Check::fail(1e6, Some(2e6), "f/s decreases at large s"),
                    f3,
                    f4: Check::Holds,
                })
            }
        }
        FShape::Table { .. } => None,
    };
    if let Some(report) = analytic {
        return Ok(report);
    }
    Ok(sampled_report(f, samples.max(16)))
}

fn sampled_report(f: &FSpec, samples: usize) -> HypothesisReport {
    let (lo, hi) = (1e-6f64, 1e6f64);
    let ratio = (hi / lo).powf(1.0 / (samples as f64 - 1.0));
    let pts: Vec<f64> = (0..samples).map(|k| lo * ratio.powi(k as i32)).collect();
    let q: Vec<f64> = pts.iter().map(|&s| f.shape_value(s) / s).collect();
    let rel = 1e-12;

    let mut f2 = Check::Holds;
    let mut f3 = Check::Holds;
    for k in 1..pts.len() {
        let scale = q[k].abs().max(q[k - 1].abs());
        if q[k] < q[k - 1] - rel * scale && f2.holds() {
            f2 = Check::fail(pts[k - 1], Some(pts[k]), "sampled f/s decreases");
        }
        if q[k] > q[k - 1] + rel * scale && f3.holds() {
            f3 = Check::fail(pts[k - 1], Some(pts[k]), "sampled f/s increases");
        }
    }
    let (kmin, qmin) =
        q.iter().copied().enumerate().fold((0, f64::INFINITY), |m, (k, v)| if v < m.1 { (k, v) } else { m });
    let qmax_first = q[0];
    let q_last = *q.last().unwrap();
    let f1 = if qmin <= 0.0 {
        Check::fail(pts[kmin], None, "f vanishes at a positive sample")
    } else if q_last < 1e-3 * qmax_first.min(1.0) && q_last < q[q.len() - 2] {
        Check::fail(pts[pts.len() - 1], None, "f/s decays at the largest samples")
    } else {
        Check::Undetermined { reason: "sampling cannot certify a uniform lower bound".into() }
    };
    let f4 = if q_last < 1e-6 * qmax_first.max(1.0) {
        Check::Undetermined { reason: "f/s small at the largest sample; limit not certified".into() }
    } else if q_last >= q[q.len() - 2] * (1.0 - 1e-9) {
        Check::fail(hi, None, "sampled f/s does not decay")
    } else {
        Check::Undetermined { reason: "decay of f/s not certified by sampling".into() }
    };
    HypothesisReport { f1, f2, f3, f4 }
}
