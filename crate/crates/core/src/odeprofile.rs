//! The one-dimensional profile `h'' = -g(h)`, `h(0) = 0`, on `[0, η]` and
//! the super-solutions `M h(c φ₁)` built from it.
//!
//! The profile is never integrated forward from the singular endpoint.
//! Along a trajectory with `h(η) = H` and `h'(η) = q` the energy
//! `(h')² = 2G(h) + q²`, `G(s) = ∫_s^H g`, holds, so `t` is a function of
//! `h` given by a regular quadrature, and `H` is pinned by requiring the
//! travel time from `h = 0` to `h = H` to be `η`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::nonlin::GSpec;
use crate::problem::{Discretization, ProblemSpec};
use crate::spectral::EigenPair;

/// Tabulated profile; `nodes[0] = 0`, `nodes[last] = eta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HProfile {
    pub eta: f64,
    pub hprime_eta: f64,
    /// `h(η)`
    pub top: f64,
    pub nodes: Vec<f64>,
    pub h: Vec<f64>,
    /// `h'` at the nodes; `+inf` at `t = 0` when `g` is not integrable there.
    pub hprime: Vec<f64>,
    pub g: GSpec,
}

fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64, scale: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let target = (1e-15 * scale).max(1e-300);
    quadrature::double_exponential::integrate(f, a, b, target).integral
}

/// `∫_0^top ds / sqrt(2 ∫_s^top g + q²)`: the time the trajectory ending at
/// height `top` with slope `q` needs to climb from 0.
pub fn travel_time(g: &GSpec, top: f64, q: f64) -> f64 {
    let speed = |s: f64| {
        let e = 2.0 * g.integral(s, top) + q * q;
        if e.is_finite() {
            1.0 / e.sqrt()
        } else {
            0.0
        }
    };
    quad(speed, 0.0, top, top / q)
}

/// Profile with `h(0) = 0`, `h'(η) = hprime_eta`; `tol` bounds the relative
/// mismatch of the travel time.
pub fn solve_h(g: &GSpec, eta: f64, hprime_eta: f64, tol: f64) -> Result<HProfile> {
    g.validate_monotone()?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::OutOfRange(format!("profile endpoint eta must be positive, got {eta}")));
    }
    if !(hprime_eta > 0.0 && hprime_eta.is_finite()) {
        return Err(Error::OutOfRange(format!("terminal slope must be positive, got {hprime_eta}")));
    }
    let q = hprime_eta;
    let tol = tol.clamp(1e-15, 1e-3);

    // travel time is at most top/q, so top = q·eta undershoots
    let mut lo = q * eta;
    let mut hi = 2.0 * lo;
    let mut grow = 0;
    while travel_time(g, hi, q) < eta {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::Profile("could not bracket the terminal height".into()));
        }
    }
    let mut steps = 0;
    while (hi - lo) > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if travel_time(g, mid, q) < eta {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
        if steps > 200 {
            break;
        }
    }
    let top = 0.5 * (lo + hi);
    let reached = travel_time(g, top, q);
    if (reached - eta).abs() > tol * eta {
        return Err(Error::Profile(format!("travel-time calibration missed eta: {reached} vs {eta}")));
    }

    let levels = profile_levels(g, top, q);
    let energy = |s: f64| (2.0 * g.integral(s, top) + q * q).sqrt();

    // t(s) accumulated upwards from s = 0
    let mut nodes = Vec::with_capacity(levels.len());
    let mut acc = 0.0;
    let mut prev = 0.0;
    for &s in &levels {
        acc += quad(|x| 1.0 / energy(x), prev, s, (s - prev) / q);
        nodes.push(acc);
        prev = s;
    }
    let drift = (acc - eta).abs();
    if drift > 1e3 * tol * eta {
        return Err(Error::Profile(format!("tabulated travel time drifted by {drift:e}")));
    }
    // pin the right endpoint exactly
    let last = nodes.len() - 1;
    nodes[last] = eta;

    // h' = q + ∫_h^H g/h' ds, accumulated downwards from the top
    let n = levels.len();
    let mut hprime = vec![0.0; n];
    hprime[last] = q;
    let mut acc = 0.0;
    for k in (0..last).rev() {
        let (a, b) = (levels[k], levels[k + 1]);
        if a == 0.0 && !g.integrable_at_zero() {
            hprime[k] = f64::INFINITY;
            continue;
        }
        let slope = |x: f64| g.value(x) / energy(x);
        if a == 0.0 {
            // s = b u^m with m(1 - alpha) = 1 turns the s^-alpha endpoint
            // singularity into a smooth integrand
            let m = 1.0 / (1.0 - g.singular_exponent().clamp(0.0, 0.999));
            let smooth = |u: f64| if u == 0.0 { 0.0 } else { slope(b * u.powf(m)) * b * m * u.powf(m - 1.0) };
            acc += quad(smooth, 0.0, 1.0, smooth(0.5).abs().max(1e-300));
        } else {
            acc += quad(slope, a, b, ((b - a) * slope(a)).max(1e-300));
        }
        hprime[k] = q + acc;
    }

    let mut h = levels;
    h[0] = 0.0;
    Ok(HProfile { eta, hprime_eta: q, top, nodes, h, hprime, g: g.clone() })
}

/// Heights at which the profile is tabulated: 0, a geometric ladder down to
/// tiny heights, and a uniform set up to the top. For non-integrable `g` the
/// ladder stops where `2G` reaches 1e4, beyond which `h'` is only resolvable
/// to a relative accuracy.
fn profile_levels(g: &GSpec, top: f64, q: f64) -> Vec<f64> {
    let mut smallest = 1e-14 * top;
    if !g.integrable_at_zero() {
        let cap = 1e4 * (1.0 + q * q);
        let (mut lo, mut hi) = (1e-300f64.ln(), top.ln());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 2.0 * g.integral(mid.exp(), top) > cap {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        smallest = smallest.max(hi.exp());
    }
    let decades = (top / smallest).log10();
    let geometric = (decades * 20.0).ceil() as usize;
    let mut levels = vec![0.0];
    for k in 0..=geometric {
        levels.push(smallest * (top / smallest).powf(k as f64 / geometric as f64));
    }
    for k in 1..=256 {
        levels.push(top * k as f64 / 256.0);
    }
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    levels.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * top);
    let last = levels.len() - 1;
    levels[last] = top;
    levels
}

impl HProfile {
    /// `h'` at height `level` (0 < level <= top), by direct quadrature.
    pub fn hprime_at_level(&self, level: f64) -> f64 {
        let g = &self.g;
        let q = self.hprime_eta;
        let top = self.top;
        let slope = |x: f64| g.value(x) / (2.0 * g.integral(x, top) + q * q).sqrt();
        let mut acc = 0.0;
        // integrate in geometric pieces for accuracy near a singular g
        let mut b = top;
        while b > level {
            let a = (0.5 * b).max(level);
            acc += quad(slope, a, b, (b - a) * slope(a));
            b = a;
        }
        q + acc
    }

    /// Monotone cubic Hermite interpolation of `h(t)` for `t` in `[0, η]`,
    /// using the tabulated slopes limited to keep each piece monotone.
    pub fn interpolate(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.eta * (1.0 + 1e-14)) {
            return Err(Error::OutOfRange(format!("profile argument {t} outside [0, {}]", self.eta)));
        }
        let t = t.min(self.eta);
        let k = match self.nodes.partition_point(|&x| x <= t) {
            0 => 0,
            i if i >= self.nodes.len() => self.nodes.len() - 2,
            i => i - 1,
        };
        let (t0, t1) = (self.nodes[k], self.nodes[k + 1]);
        let (y0, y1) = (self.h[k], self.h[k + 1]);
        let dt = t1 - t0;
        let secant = (y1 - y0) / dt;
        let limit = 3.0 * secant;
        let m0 = self.hprime[k].min(limit);
        let m1 = self.hprime[k + 1].min(limit);
        let s = (t - t0) / dt;
        let s2 = s * s;
        let s3 = s2 * s;
        Ok((2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * dt * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * dt * m1)
    }
}

/// Max over nodes with finite `h'` of `|(h')² - 2G(h) - (h'(η))²|`.
pub fn energy_residual(hp: &HProfile) -> f64 {
    let q2 = hp.hprime_eta * hp.hprime_eta;
    hp.h.iter()
        .zip(&hp.hprime)
        .filter(|(_, d)| d.is_finite())
        .map(|(&h, &d)| (d * d - 2.0 * hp.g.integral(h, hp.top) - q2).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    /// `2 h(η)`
    pub c1: f64,
    /// `h'(η)² + 1`
    pub c2: f64,
    pub verified: bool,
    /// First node violating `(h')^p <= c1 g(h) + c2`.
    pub witness: Option<usize>,
}

/// Checks `(h')^p <= c1 g(h) + c2` at every node with `t > 0`.
pub fn growth_constants(hp: &HProfile, p: f64) -> Result<GrowthConstants> {
    crate::problem::check_p(p)?;
    let c1 = 2.0 * hp.top;
    let c2 = hp.hprime_eta * hp.hprime_eta + 1.0;
    let witness = (1..hp.nodes.len()).find(|&k| {
        let lhs = hp.hprime[k].powf(p);
        let rhs = c1 * hp.g.value(hp.h[k]) + c2;
        lhs > rhs * (1.0 + 1e-12)
    });
    Ok(GrowthConstants { c1, c2, verified: witness.is_none(), witness })
}

/// `M h(c φ₁)` at every node; requires `c max φ₁ <= η`.
pub fn build_supersolution(hp: &HProfile, pair: &EigenPair, scale: f64, stretch: f64) -> Result<ScalarField> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::OutOfRange(format!("amplitude M must be positive, got {scale}")));
    }
    if !(stretch > 0.0) || stretch * pair.phi1.sup_norm() > hp.eta * (1.0 + 1e-14) {
        return Err(Error::OutOfRange(format!("need 0 < c and c·max φ₁ <= η; got c = {stretch}, η = {}", hp.eta)));
    }
    let values =
        pair.phi1.values.iter().map(|&v| hp.interpolate(stretch * v).map(|h| scale * h)).collect::<Result<Vec<_>>>()?;
    ScalarField::new(pair.phi1.domain, values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupersolutionCheck {
    pub min_excess: f64,
    /// Node where the minimum is attained.
    pub argmin: usize,
    pub slack: f64,
    pub ok: bool,
    /// `-Δu - g(u) - λ|∇u|^p - μ f(x,u)` at every node.
    pub excess: ScalarField,
}

/// Discretisation allowance `h² max(1, ‖u‖∞)` for residual sign checks.
pub fn sign_slack(disc: &Discretization, u: &[f64]) -> f64 {
    let h = disc.grid.h_max();
    let sup = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    h * h * sup.max(1.0)
}

pub fn verify_supersolution(candidate: &ScalarField, problem: &ProblemSpec) -> Result<SupersolutionCheck> {
    let disc = Discretization::new(problem.domain)?;
    verify_supersolution_on(&disc, candidate, problem)
}

pub fn verify_supersolution_on(
    disc: &Discretization,
    candidate: &ScalarField,
    problem: &ProblemSpec,
) -> Result<SupersolutionCheck> {
    disc.grid.check(&candidate.values)?;
    if candidate.domain != problem.domain {
        return Err(Error::Domain("candidate and problem live on different grids".into()));
    }
    if let Some(k) = candidate.values.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::OutOfRange(format!("candidate is not positive at node {k}")));
    }
    let excess = disc.residual(problem, &candidate.values);
    let (argmin, min_excess) =
        excess.iter().copied().enumerate().fold((0, f64::INFINITY), |m, (k, v)| if v < m.1 { (k, v) } else { m });
    let slack = sign_slack(disc, &candidate.values);
    Ok(SupersolutionCheck {
        min_excess,
        argmin,
        slack,
        ok: min_excess >= -slack,
        excess: ScalarField::new(candidate.domain, excess)?,
    })
}

/// First verified pair of the `(M, c)` ladder.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperSearch {
    pub scale: f64,
    pub stretch: f64,
    pub field: ScalarField,
    pub check: SupersolutionCheck,
    pub tried: usize,
}

/// Ladder of amplitudes `M = 2^(k/2)` (k = 0..=60) and stretches `c` at
/// fixed fractions of `η / max φ₁`; returns the smallest verified `M`
/// (largest `c` on ties) whose field also dominates `floor` when given.
pub fn search_supersolution(
    disc: &Discretization,
    problem: &ProblemSpec,
    hp: &HProfile,
    pair: &EigenPair,
    floor: Option<&ScalarField>,
) -> Result<Option<SuperSearch>> {
    let cmax = hp.eta / pair.phi1.sup_norm();
    let fractions = [1.0, 0.75, 0.5, 0.3, 0.2, 0.1, 0.05];
    let mut tried = 0;
    for k in 0..=60 {
        let scale = 2f64.powf(k as f64 / 2.0);
        for frac in fractions {
            let stretch = frac * cmax;
            let field = build_supersolution(hp, pair, scale, stretch)?;
            tried += 1;
            if let Some(fl) = floor {
                if field.values.iter().zip(&fl.values).any(|(u, z)| u < z) {
                    continue;
                }
            }
            let check = verify_supersolution_on(disc, &field, problem)?;
            if check.ok {
                return Ok(Some(SuperSearch { scale, stretch, field, check, tried }));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainSpec;
    use crate::nonlin::FSpec;
    use crate::spectral::principal_eigenpair;

    fn profile(alpha: f64) -> HProfile {
        solve_h(&GSpec::power(alpha), 1.0, 1.0, 1e-12).unwrap()
    }

    #[test]
    fn basic_shape() {
        for alpha in [0.3, 0.5, 0.9, 1.0, 1.5, 2.5] {
            let hp = profile(alpha);
            assert_eq!(hp.h[0], 0.0);
            assert_eq!(hp.nodes[0], 0.0);
            assert_eq!(*hp.nodes.last().unwrap(), 1.0);
            assert!(hp.nodes.windows(2).all(|w| w[1] > w[0]), "alpha {alpha}");
            assert!(hp.h.windows(2).all(|w| w[1] > w[0]));
            // concave: h' nonincreasing
            assert!(hp.hprime.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14)));
            assert!(energy_residual(&hp) <= 1e-8, "alpha {alpha}: {}", energy_residual(&hp));
        }
    }

    #[test]
    fn travel_time_is_pinned() {
        let g = GSpec::power(0.5);
        let hp = solve_h(&g, 0.7, 2.0, 1e-12).unwrap();
        assert!((travel_time(&g, hp.top, 2.0) - 0.7).abs() < 1e-11);
    }

    #[test]
    fn matches_closed_form_for_constant_g() {
        // g ≡ c0: h = c0 t (2η - t)/2 + q t, so h(η) = c0 η²/2 + q η
        let c0 = 2.0;
        let g = GSpec::Table { s: vec![1.0, 2.0], values: vec![c0, c0] };
        let hp = solve_h(&g, 1.0, 0.5, 1e-12).unwrap();
        assert!((hp.top - (c0 / 2.0 + 0.5)).abs() < 1e-10);
        assert!(energy_residual(&hp) <= 1e-8);
        for (t, h) in hp.nodes.iter().zip(&hp.h) {
            let want = c0 * t * (2.0 - t) / 2.0 + 0.5 * t;
            assert!((h - want).abs() < 1e-9, "t {t}: {h} vs {want}");
        }
    }

    #[test]
    fn slope_at_origin_finite_iff_integrable() {
        let hp = profile(0.5);
        assert!(hp.hprime[0].is_finite());
        // h'(0)² = 2G(0) + q²
        let want = (2.0 * hp.g.integral(0.0, hp.top) + 1.0).sqrt();
        assert!((hp.hprime[0] - want).abs() < 1e-9);
        let levels: Vec<f64> = (2..=12).map(|k| 10f64.powi(-k)).collect();
        let soft: Vec<f64> = levels.iter().map(|&s| hp.hprime_at_level(s)).collect();
        assert!(soft.iter().all(|d| *d <= hp.hprime[0] + 1e-9));

        let hard = profile(1.5);
        assert!(hard.hprime[0].is_infinite());
        let steep: Vec<f64> = levels.iter().map(|&s| hard.hprime_at_level(s)).collect();
        assert!(steep.windows(2).all(|w| w[1] > 1.5 * w[0]));
        assert!(*steep.last().unwrap() > 1e3);
    }

    #[test]
    fn perturbed_profile_is_detected() {
        let mut hp = profile(0.5);
        hp.h.iter_mut().skip(1).for_each(|h| *h += 1e-3);
        assert!(energy_residual(&hp) > 1e-5);
    }

    #[test]
    fn growth_bounds_hold() {
        for alpha in [0.5, 1.5] {
            let hp = profile(alpha);
            for p in [0.5, 1.0, 2.0] {
                let gc = growth_constants(&hp, p).unwrap();
                assert!(gc.verified, "alpha {alpha} p {p}");
                assert_eq!(gc.c1, 2.0 * hp.top);
                assert_eq!(gc.c2, 2.0);
            }
        }
    }

    #[test]
    fn doubled_slope_violates_growth_bound() {
        let mut hp = profile(0.5);
        hp.hprime.iter_mut().for_each(|d| *d *= 2.0);
        let gc = growth_constants(&hp, 2.0).unwrap();
        assert!(!gc.verified);
        let k = gc.witness.unwrap();
        assert!(hp.hprime[k].powi(2) > gc.c1 * hp.g.value(hp.h[k]) + gc.c2);
    }

    #[test]
    fn interpolation_is_accurate_and_monotone() {
        let c0 = 2.0;
        let g = GSpec::Table { s: vec![1.0, 2.0], values: vec![c0, c0] };
        let hp = solve_h(&g, 1.0, 0.5, 1e-12).unwrap();
        let mut prev = -1.0;
        for k in 0..=1000 {
            let t = k as f64 / 1000.0;
            let h = hp.interpolate(t).unwrap();
            let want = c0 * t * (2.0 - t) / 2.0 + 0.5 * t;
            assert!((h - want).abs() < 1e-9);
            assert!(h > prev);
            prev = h;
        }
        assert!(hp.interpolate(1.5).is_err());
        let hp = profile(1.5);
        let mut prev = -1.0;
        for k in 0..=1000 {
            let h = hp.interpolate(k as f64 / 1000.0).unwrap();
            assert!(h > prev || k == 0);
            prev = h;
        }
    }

    fn problem(lambda: f64, mu: f64, n: usize) -> ProblemSpec {
        ProblemSpec {
            domain: DomainSpec::unit_interval(n),
            g: GSpec::power(0.5),
            f: FSpec::constant(),
            lambda,
            mu,
            p: 2.0,
        }
    }

    #[test]
    fn supersolution_composition() {
        let hp = profile(0.5);
        let pair = principal_eigenpair(DomainSpec::unit_interval(63), 1e-10).unwrap();
        let one = build_supersolution(&hp, &pair, 1.0, 0.8).unwrap();
        for (u, phi) in one.values.iter().zip(&pair.phi1.values) {
            assert!((u - hp.interpolate(0.8 * phi).unwrap()).abs() < 1e-15);
        }
        let two = build_supersolution(&hp, &pair, 2.0, 0.8).unwrap();
        assert!(two.values.iter().zip(&one.values).all(|(a, b)| *a == 2.0 * b));
        assert!(build_supersolution(&hp, &pair, 1.0, 1.2).is_err());
        // vanishes at the boundary like the distance
        let dist = one.grid().unwrap().distance_values();
        let (lo, hi) = crate::spectral::ratio_bounds(&one.values, &dist);
        assert!(lo > 0.0 && hi.is_finite());
    }

    #[test]
    fn small_multiples_fail_and_search_succeeds() {
        let p = ProblemSpec { p: 0.5, f: FSpec::power(0.5), ..problem(1.0, 1.0, 63) };
        let disc = Discretization::new(p.domain).unwrap();
        let hp = profile(0.5);
        let pair = principal_eigenpair(p.domain, 1e-10).unwrap();
        let tiny = build_supersolution(&hp, &pair, 0.01, 1.0).unwrap();
        let check = verify_supersolution(&tiny, &p).unwrap();
        assert!(!check.ok && check.min_excess < 0.0);
        assert_eq!(check.excess.values[check.argmin], check.min_excess);

        let found = search_supersolution(&disc, &p, &hp, &pair, None).unwrap().unwrap();
        assert!(found.check.ok);
        // monotone in M
        let bigger = build_supersolution(&hp, &pair, 2.0 * found.scale, found.stretch).unwrap();
        assert!(bigger.values.iter().zip(&found.field.values).all(|(a, b)| a >= b));
    }

    #[test]
    fn rejects_nonpositive_candidate() {
        let p = problem(0.0, 0.0, 8);
        let zero = ScalarField::zeros(p.domain).unwrap();
        assert!(verify_supersolution(&zero, &p).is_err());
    }
}
