//! Turning points, the oscillation set `U`, and the per-trip rotation and
//! length of oscillating geodesics.
//!
//! For `γ_a` launched horizontally at `s = a` the Clairaut constant is
//! `c = h(a)`. Along the geodesic `θ′ = c / h²` and, at unit speed,
//! `|s′| = √(h² − c²) / h`. Dividing, the half trip from `a` to `b(a)`
//! contributes
//!
//! ```text
//! dt/ds = h / √(h² − c²)            (length)
//! dθ/ds = c / (h √(h² − c²))        (rotation)
//! ```
//!
//! and a full trip doubles each. Both integrands have inverse square-root
//! singularities at `a` and `b` because `h − c` has simple zeros there. The
//! substitution `s = a + (b − a)(1 − cos v)/2` turns `(s − a)(b − s)` into
//! `((b − a) sin v / 2)²` and cancels the `sin v` of `ds`, leaving a smooth
//! integrand on `[0, π]` that Gauss–Kronrod handles without special nodes.

use std::f64::consts::PI;
use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geodesic::{self, f17, GeodesicState, ASYMPTOTIC_TOL, PARALLEL_TOL};
use crate::ode::Dopri5;
use crate::profile::Surface;
use crate::quad::{self, QuadOptions};
use crate::roots;

/// Launch points closer than this to a critical point are refused.
pub const BOUNDARY_MARGIN: f64 = 1e-6;
/// Default quadrature tolerance for `R` and `L`.
pub const DEFAULT_QUAD_TOL: f64 = 1e-12;

/// Values of one full trip `a → b(a) → a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TripData {
    pub a: f64,
    pub b: f64,
    /// time from `a` to `b(a)`
    pub t_half: f64,
    /// `θ` advance over a full trip
    pub rotation: f64,
    /// length of a full trip (`2 · t_half`)
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurningPoint {
    pub b: f64,
    /// `h` only touches the level `h(a)` at `b` (a critical point).
    pub asymptotic: bool,
}

/// First point beyond `a`, in the direction `h` increases, at which `h`
/// returns to the level `h(a)`.
///
/// The search walks the monotone pieces between consecutive critical points
/// and bisects inside the first piece that crosses the level; a critical
/// point lying exactly on the level is returned as an asymptotic limit.
pub fn turning_point(surface: &Surface, a: f64) -> Result<TurningPoint> {
    let p = surface.profile();
    let slope = p.dh(a);
    if !slope.is_finite() {
        return Err(Error::OutsideDomain { s: a });
    }
    if slope.abs() <= PARALLEL_TOL {
        return Err(Error::Parallel { a, slope });
    }
    let forward = slope > 0.0;
    let level = p.h(a);
    let end = match (p.is_torus(), forward) {
        (true, true) => a + p.period(),
        (true, false) => a - p.period(),
        (false, true) => PI,
        (false, false) => 0.0,
    };
    let mut stops = surface.breakpoints_between(a, end);
    if !p.is_torus() {
        stops.push(end);
    }
    let touch_tol = 16.0 * f64::EPSILON * (1.0 + level.abs());
    let mut prev = a;
    for &x in &stops {
        let gap = p.h(x) - level;
        if gap.abs() <= touch_tol && x != end {
            return Ok(TurningPoint { b: x, asymptotic: true });
        }
        if gap < 0.0 {
            let b = roots::bisect(|s| p.h(s) - level, prev, x, 0.0)?;
            return Ok(TurningPoint { b, asymptotic: false });
        }
        prev = x;
    }
    Err(Error::NoReturn { a })
}

/// The oscillating band of `a`, checked against the defining conditions
/// of `U`: `h′(a) > 0` and `h′(b(a)) < 0`.
pub fn band_in_u(surface: &Surface, a: f64) -> Result<(f64, f64)> {
    let p = surface.profile();
    if !p.is_torus() && !(a > 0.0 && a < PI) {
        return Err(Error::OutsideDomain { s: a });
    }
    if let Some((distance, critical)) = surface.nearest_critical(a) {
        if distance < BOUNDARY_MARGIN {
            return Err(Error::BoundaryProximity { a, critical, distance });
        }
    }
    if p.dh(a) <= 0.0 {
        return Err(Error::NotInU { a, reason: "h'(a) <= 0" });
    }
    let turn = turning_point(surface, a)?;
    if turn.asymptotic || p.dh(turn.b) >= -ASYMPTOTIC_TOL {
        return Err(Error::NotInU { a, reason: "asymptotic launch" });
    }
    Ok((a, turn.b))
}

#[allow(clippy::excessive_precision)]
const GL8: [(f64, f64); 4] = [
    (0.183434642495649804939476142360184, 0.362683783378361982965150449277196),
    (0.525532409916328985817739049189254, 0.313706645877887287337962201986601),
    (0.796666477413626739591553936475831, 0.222381034453374470544355994426241),
    (0.960289856497536231683560868569473, 0.101228536290376259152531354309962),
];

/// `h(s) − c` at distance `d > 0` from the endpoint `e`, where `h(e) = c`.
/// The direct difference cancels badly when the band is thin or `s` is near
/// `e`, so for short distances it is computed as the integral of `h′` over
/// `[e, s]` (8-point Gauss–Legendre). The residual `h(e) − c` left by the
/// root finder is dropped so that the gap keeps its sign.
fn level_gap(surface: &Surface, e: f64, d: f64, toward: f64, c: f64) -> f64 {
    let p = surface.profile();
    if d > 0.25 {
        return p.h(e + toward * d) - c;
    }
    let half = 0.5 * toward * d;
    let mid = e + half;
    let rise: f64 = GL8.iter().map(|&(x, w)| w * (p.dh(mid - half * x) + p.dh(mid + half * x))).sum();
    half * rise
}

#[derive(Debug, Clone, Copy)]
enum Integrand {
    Length,
    Rotation,
}

/// Integral over the substitution variable `v ∈ [v0, v1] ⊆ [0, π]`.
fn band_integral(surface: &Surface, a: f64, b: f64, which: Integrand, v0: f64, v1: f64, tol: f64) -> Result<f64> {
    let p = surface.profile();
    let c = p.h(a);
    let half = 0.5 * (b - a);
    let g = |v: f64| {
        // distances to both ends without cancellation
        let da = 2.0 * half * (0.5 * v).sin().powi(2);
        let db = 2.0 * half * (0.5 * v).cos().powi(2);
        let (s, gap) = if da <= db {
            (a + da, level_gap(surface, a, da, 1.0, c))
        } else {
            (b - db, level_gap(surface, b, db, -1.0, c))
        };
        let h = p.h(s);
        let jac = half * v.sin() / (gap * (h + c)).sqrt();
        match which {
            Integrand::Length => h * jac,
            Integrand::Rotation => c / h * jac,
        }
    };
    let opts = QuadOptions { abs_tol: tol, rel_tol: tol, max_intervals: 400 };
    Ok(2.0 * quad::integrate(g, v0, v1, &opts)?.value)
}

/// Full-trip length `L(a) = 2 ∫ₐ^{b(a)} h / √(h² − h(a)²) ds`.
pub fn length_l(surface: &Surface, a: f64, quad_tol: f64) -> Result<f64> {
    let (a, b) = band_in_u(surface, a)?;
    band_integral(surface, a, b, Integrand::Length, 0.0, PI, quad_tol)
}

/// Full-trip rotation `R(a) = 2 ∫ₐ^{b(a)} h(a) / (h √(h² − h(a)²)) ds`.
pub fn rotation_r(surface: &Surface, a: f64, quad_tol: f64) -> Result<f64> {
    let (a, b) = band_in_u(surface, a)?;
    band_integral(surface, a, b, Integrand::Rotation, 0.0, PI, quad_tol)
}

/// `b(a)`, `R(a)` and `L(a)` from one turning-point solve.
pub fn trip_quadrature(surface: &Surface, a: f64, quad_tol: f64) -> Result<TripData> {
    let (a, b) = band_in_u(surface, a)?;
    let rotation = band_integral(surface, a, b, Integrand::Rotation, 0.0, PI, quad_tol)?;
    let length = band_integral(surface, a, b, Integrand::Length, 0.0, PI, quad_tol)?;
    Ok(TripData { a, b, t_half: 0.5 * length, rotation, length })
}

/// `L_δ(a) = 2 ∫_{a+δ}^{b(a)−δ} h / √(h² − h(a)²) ds`, a proper integral.
pub fn truncated_l_delta(surface: &Surface, a: f64, delta: f64) -> Result<f64> {
    let (a, b) = band_in_u(surface, a)?;
    if !(delta > 0.0 && delta < 0.5 * (b - a)) {
        return Err(Error::InvalidArgument(format!("delta = {delta} outside (0, (b - a)/2)")));
    }
    // s(v) = a + δ  ⇔  sin²(v/2) = δ/(b − a); the map is symmetric about π/2
    let v0 = 2.0 * (delta / (b - a)).sqrt().asin();
    band_integral(surface, a, b, Integrand::Length, v0, PI - v0, DEFAULT_QUAD_TOL)
}

/// Upper bound on `L(a) − L_δ(a)` from the substitution `y = h(s)² − h(a)²`:
/// each end contributes at most `√|h(e ± δ)² − h(a)²| / min|h′|` over the
/// end piece.
pub fn truncation_tail_bound(surface: &Surface, a: f64, delta: f64) -> Result<f64> {
    let (a, b) = band_in_u(surface, a)?;
    let p = surface.profile();
    let c = p.h(a);
    let min_slope = |lo: f64, hi: f64| {
        (0..=64)
            .map(|i| p.dh(lo + (hi - lo) * i as f64 / 64.0).abs())
            .fold(f64::INFINITY, f64::min)
    };
    let left = (p.h(a + delta).powi(2) - c * c).abs().sqrt() / min_slope(a, a + delta);
    let right = (p.h(b - delta).powi(2) - c * c).abs().sqrt() / min_slope(b - delta, b);
    Ok(2.0 * (left + right))
}

/// `T`, `R` and `L` measured on the integrated geodesic: launch
/// horizontally at `a`, stop at the second zero of `ṡ`.
pub fn trip_via_ode(surface: &Surface, a: f64, rtol: f64) -> Result<TripData> {
    let p = surface.profile();
    if !(p.dh(a) > PARALLEL_TOL) {
        return Err(Error::NotInU { a, reason: "h'(a) <= 0" });
    }
    let horizon = 10.0
        * length_l(surface, a, 1e-6)
            .ok()
            .filter(|l| l.is_finite())
            .unwrap_or(100.0);
    let x0 = GeodesicState::horizontal(p, a, 0.0);
    let rhs = |_t: f64, y: &[f64; 4]| -> Option<[f64; 4]> {
        let x = GeodesicState::new(y[0], y[1], y[2], y[3]);
        geodesic::geodesic_rhs(p, &x).ok().map(|d| [d.s, d.theta, d.s_dot, d.theta_dot])
    };
    let mut stepper = Dopri5::new(rhs, 0.0, [x0.s, x0.theta, x0.s_dot, x0.theta_dot], geodesic::ode_options(rtol))?;
    // ṡ leaves zero upward since s̈(0) = h′(a)/h(a) > 0
    let mut turn: Option<f64> = None;
    while stepper.t() < horizon {
        let step = stepper.step_toward(horizon)?;
        let (g0, g1) = (step.y0[2], step.y1[2]);
        let crossed = match turn {
            None => g0 >= 0.0 && g1 < 0.0,
            Some(_) => g0 <= 0.0 && g1 > 0.0,
        };
        if !crossed {
            continue;
        }
        let (t, y) = stepper.locate(&step, |y| y[2]).ok_or(Error::EventNotFound { horizon })?;
        match turn {
            None => turn = Some(y[0]),
            Some(b) => return Ok(TripData { a, b, t_half: 0.5 * t, rotation: y[1], length: t }),
        }
    }
    Err(Error::EventNotFound { horizon })
}

/// Disjoint open intervals making up the oscillation set `U`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct USet {
    pub intervals: Vec<(f64, f64)>,
}

impl USet {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, a: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| a > lo && a < hi)
    }
}

/// Computes `U` piece by piece.
///
/// Between consecutive critical points where `h` increases, `b(a)` is
/// continuous except where `h(a)` equals the value of `h` at some critical
/// point (there the launch is asymptotic). Each piece between such levels is
/// kept when the defining conditions hold at all grid samples inside it.
pub fn compute_u(surface: &Surface, grid_n: usize) -> USet {
    let p = surface.profile();
    let mut cuts: Vec<f64> = Vec::new();
    let mut levels: Vec<f64> = Vec::new();
    for c in surface.critical_points() {
        match c.span {
            Some((x, y)) => {
                cuts.extend([x, y]);
                levels.extend([p.h(x), p.h(y)]);
            }
            None => {
                cuts.push(c.s0);
                levels.push(c.h_value);
            }
        }
    }
    let pieces: Vec<(f64, f64)> = if p.is_torus() {
        if cuts.is_empty() {
            Vec::new()
        } else {
            let mut v: Vec<(f64, f64)> = cuts.windows(2).map(|w| (w[0], w[1])).collect();
            v.push((cuts[cuts.len() - 1], cuts[0] + p.period()));
            v
        }
    } else {
        let mut edges = vec![0.0];
        edges.extend(cuts.iter().copied());
        edges.push(PI);
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    };

    let spacing = p.period() / grid_n.max(16) as f64;
    let mut intervals = Vec::new();
    for (lo, hi) in pieces {
        if hi - lo <= 2.0 * BOUNDARY_MARGIN || !(p.dh(0.5 * (lo + hi)) > 0.0) {
            continue;
        }
        let (h_lo, h_hi) = (p.h(lo), p.h(hi));
        let mut splits: Vec<f64> = levels
            .iter()
            .filter(|&&l| l > h_lo && l < h_hi)
            .filter_map(|&l| roots::bisect(|s| p.h(s) - l, lo, hi, 0.0).ok())
            .collect();
        splits.sort_by(f64::total_cmp);
        let mut edges = vec![lo];
        edges.extend(splits);
        edges.push(hi);
        for w in edges.windows(2) {
            let (x, y) = (w[0], w[1]);
            let inner_lo = x + 2.0 * BOUNDARY_MARGIN;
            let inner_hi = y - 2.0 * BOUNDARY_MARGIN;
            if inner_hi <= inner_lo {
                continue;
            }
            let n = (((y - x) / spacing).ceil() as usize).max(3);
            let ok = (0..=n).all(|i| {
                let a = inner_lo + (inner_hi - inner_lo) * i as f64 / n as f64;
                band_in_u(surface, a).is_ok()
            });
            if ok {
                intervals.push((x, y));
            }
        }
    }
    USet { intervals }
}

/// Writes `a,b,T,R,L` rows.
pub fn write_trip_csv<W: Write>(mut out: W, trips: &[TripData]) -> io::Result<()> {
    writeln!(out, "a,b,T,R,L")?;
    for t in trips {
        writeln!(out, "{},{},{},{},{}", f17(t.a), f17(t.b), f17(t.t_half), f17(t.rotation), f17(t.length))?;
    }
    Ok(())
}
