//! Warp functions `h` of metrics `ds² + h(s)² dθ²`.
//!
//! A [`Profile`] pairs a parsed expression with its surface type and caches
//! the symbolic first and second derivatives.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::expr::{EvalError, Expr, ParseError};
use crate::roots;

/// Default number of grid cells used when scanning for critical points.
pub const DEFAULT_CRITICAL_GRID: usize = 4096;
/// Default tolerance on `|h′|` for critical points.
pub const DEFAULT_CRITICAL_TOL: f64 = 1e-10;
/// Step of the one-sided difference quotients used for pole slopes.
pub const POLE_SLOPE_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceKind {
    /// Sphere with poles at `s = 0` and `s = π`.
    #[serde(alias = "spherecap", alias = "sphere_cap")]
    Sphere,
    /// Torus whose warp function is `π`-periodic.
    Torus,
}

impl fmt::Display for SurfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurfaceKind::Sphere => write!(f, "sphere"),
            SurfaceKind::Torus => write!(f, "torus"),
        }
    }
}

/// A warp function together with its surface type.
#[derive(Debug, Clone)]
pub struct Profile {
    kind: SurfaceKind,
    h: Expr,
    dh: Expr,
    d2h: Expr,
}

impl Profile {
    pub fn new(kind: SurfaceKind, h: Expr) -> Profile {
        let dh = h.derivative();
        let d2h = dh.derivative();
        Profile { kind, h, dh, d2h }
    }

    pub fn parse(kind: SurfaceKind, formula: &str) -> Result<Profile, ParseError> {
        Ok(Profile::new(kind, Expr::parse(formula)?))
    }

    pub fn kind(&self) -> SurfaceKind {
        self.kind
    }

    pub fn expr(&self) -> &Expr {
        &self.h
    }

    pub fn derivative_expr(&self) -> &Expr {
        &self.dh
    }

    /// Length of the fundamental domain; both surface types use `π`.
    pub fn period(&self) -> f64 {
        PI
    }

    pub fn is_torus(&self) -> bool {
        self.kind == SurfaceKind::Torus
    }

    /// `h(s)`, or NaN when `s` is outside the expression's domain.
    #[inline]
    pub fn h(&self, s: f64) -> f64 {
        self.h.eval(s).unwrap_or(f64::NAN)
    }

    #[inline]
    pub fn dh(&self, s: f64) -> f64 {
        self.dh.eval(s).unwrap_or(f64::NAN)
    }

    #[inline]
    pub fn d2h(&self, s: f64) -> f64 {
        self.d2h.eval(s).unwrap_or(f64::NAN)
    }

    pub fn try_h(&self, s: f64) -> Result<f64, EvalError> {
        self.h.eval(s)
    }

    pub fn try_dh(&self, s: f64) -> Result<f64, EvalError> {
        self.dh.eval(s)
    }

    /// Gaussian curvature `−h″/h`.
    pub fn curvature(&self, s: f64) -> f64 {
        -self.d2h(s) / self.h(s)
    }
}

/// Which profile condition a diagnostic refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    PoleValue,
    PoleSlope,
    Positivity,
    Periodicity,
    Evaluation,
}

/// A failed profile condition with the value that was measured.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub condition: Condition,
    pub at: f64,
    pub measured: f64,
    pub expected: f64,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

const VALIDATION_SAMPLES: usize = 1024;

/// Checks the boundary, positivity and periodicity conditions of `profile`.
///
/// Returns an empty list when every condition holds within `tol`.
pub fn validate_profile(profile: &Profile, tol: f64) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let eval = |s: f64, out: &mut Vec<Diagnostic>| -> Option<f64> {
        match profile.try_h(s) {
            Ok(v) => Some(v),
            Err(e) => {
                out.push(Diagnostic {
                    condition: Condition::Evaluation,
                    at: s,
                    measured: f64::NAN,
                    expected: f64::NAN,
                    message: format!("h cannot be evaluated at s = {s}: {e}"),
                });
                None
            }
        }
    };

    match profile.kind() {
        SurfaceKind::Sphere => {
            let step = POLE_SLOPE_STEP;
            for (pole, name, slope_sign) in [(0.0, "0", 1.0), (PI, "π", -1.0)] {
                let Some(v) = eval(pole, &mut out) else { continue };
                if v.abs() > tol {
                    out.push(Diagnostic {
                        condition: Condition::PoleValue,
                        at: pole,
                        measured: v,
                        expected: 0.0,
                        message: format!("h({name}) = {v:e}, expected 0"),
                    });
                }
                let inner = pole + slope_sign * step;
                let Some(w) = eval(inner, &mut out) else { continue };
                // one-sided quotient, oriented so both poles expect +1 for
                // h′(0) and -1 for h′(π)
                let slope = (w - v) / (inner - pole);
                let want = slope_sign;
                if (slope - want).abs() > tol {
                    out.push(Diagnostic {
                        condition: Condition::PoleSlope,
                        at: pole,
                        measured: slope,
                        expected: want,
                        message: format!("h'({name}) = {slope}, expected {want}"),
                    });
                }
            }
            let mut prev: Option<(f64, f64)> = None;
            let mut reported = false;
            for i in 1..VALIDATION_SAMPLES {
                let s = PI * i as f64 / VALIDATION_SAMPLES as f64;
                let Some(v) = eval(s, &mut out) else {
                    prev = None;
                    continue;
                };
                if !reported && v <= tol {
                    out.push(interior_zero(profile, prev, s, v, tol));
                    reported = true;
                }
                prev = Some((s, v));
            }
        }
        SurfaceKind::Torus => {
            let mut positivity_reported = false;
            let mut periodicity_reported = false;
            for i in 0..VALIDATION_SAMPLES {
                let s = PI * i as f64 / VALIDATION_SAMPLES as f64;
                let Some(v) = eval(s, &mut out) else { continue };
                if !positivity_reported && v <= tol {
                    out.push(Diagnostic {
                        condition: Condition::Positivity,
                        at: s,
                        measured: v,
                        expected: 0.0,
                        message: format!("h({s:.6}) = {v:e} is not positive"),
                    });
                    positivity_reported = true;
                }
                let Some(w) = eval(s + PI, &mut out) else { continue };
                if !periodicity_reported && (w - v).abs() > tol * (1.0 + v.abs()) {
                    out.push(Diagnostic {
                        condition: Condition::Periodicity,
                        at: s,
                        measured: w - v,
                        expected: 0.0,
                        message: format!("h({s:.6} + π) - h({s:.6}) = {:e}, expected 0", w - v),
                    });
                    periodicity_reported = true;
                }
            }
        }
    }
    let mut seen_eval = false;
    out.retain(|d| {
        let keep = d.condition != Condition::Evaluation || !seen_eval;
        seen_eval |= d.condition == Condition::Evaluation;
        keep
    });
    out
}

/// Locates the first interior zero of `h` by bisection when a sign change
/// bracket is available.
fn interior_zero(profile: &Profile, prev: Option<(f64, f64)>, s: f64, v: f64, tol: f64) -> Diagnostic {
    let (at, measured) = match prev {
        Some((s0, v0)) if v0 > 0.0 && v < 0.0 => {
            let z = roots::bisect(|x| profile.h(x), s0, s, 1e-14).unwrap_or(s);
            (z, profile.h(z))
        }
        _ => (s, v),
    };
    Diagnostic {
        condition: Condition::Positivity,
        at,
        measured,
        expected: 0.0,
        message: format!("h({at:.6}) = {measured:e}: interior zero (h must exceed {tol:e} on (0, π))"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Min,
    Max,
    Degenerate,
}

/// A zero of `h′`. Degenerate spans carry the interval on which `h′`
/// vanishes across whole grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub s0: f64,
    pub kind: CriticalKind,
    pub h_value: f64,
    pub span: Option<(f64, f64)>,
    /// Sign of `h′` just left and right of the point (0 for spans).
    pub slope_left: i8,
    pub slope_right: i8,
}

impl CriticalPoint {
    pub fn is_span(&self) -> bool {
        self.span.is_some()
    }

    /// Isolated local minimum of `h` (sign change of `h′` from − to +).
    pub fn is_local_min(&self) -> bool {
        self.span.is_none() && self.slope_left < 0 && self.slope_right > 0
    }

    pub fn is_local_max(&self) -> bool {
        self.span.is_none() && self.slope_left > 0 && self.slope_right < 0
    }
}

fn sign(x: f64, tol: f64) -> i8 {
    if x > tol {
        1
    } else if x < -tol {
        -1
    } else {
        0
    }
}

/// Finds the zeros of `h′` on the fundamental domain.
///
/// Sign changes on a uniform grid are refined by bisection. Cells on which
/// `|h′| ≤ tol` at every probe point are merged into degenerate spans; a
/// constant `h` yields a single span covering the whole domain.
pub fn critical_points(profile: &Profile, grid_n: usize, tol: f64) -> Vec<CriticalPoint> {
    let grid_n = grid_n.max(16);
    let (lo, hi) = (0.0, PI);
    let width = (hi - lo) / grid_n as f64;
    let node = |i: usize| lo + width * i as f64;
    let g: Vec<f64> = (0..=grid_n).map(|i| profile.dh(node(i))).collect();

    let flat_cell = |i: usize| -> bool {
        g[i].abs() <= tol
            && g[i + 1].abs() <= tol
            && [0.25, 0.5, 0.75]
                .iter()
                .all(|f| profile.dh(node(i) + f * width).abs() <= tol)
    };

    let classify = |s: f64, left: i8, right: i8| -> CriticalPoint {
        let curv = profile.d2h(s);
        let kind = if curv > tol {
            CriticalKind::Min
        } else if curv < -tol {
            CriticalKind::Max
        } else {
            CriticalKind::Degenerate
        };
        CriticalPoint {
            s0: s,
            kind,
            h_value: profile.h(s),
            span: None,
            slope_left: left,
            slope_right: right,
        }
    };

    let mut out: Vec<CriticalPoint> = Vec::new();
    let mut i = 0;
    while i < grid_n {
        if flat_cell(i) {
            let start = i;
            while i < grid_n && flat_cell(i) {
                i += 1;
            }
            let (a, b) = (node(start), node(i));
            let mid = 0.5 * (a + b);
            let h_max = (start..=i).map(|k| profile.h(node(k))).fold(f64::MIN, f64::max);
            out.push(CriticalPoint {
                s0: mid,
                kind: CriticalKind::Degenerate,
                h_value: h_max,
                span: Some((a, b)),
                slope_left: 0,
                slope_right: 0,
            });
            continue;
        }
        let (x0, x1) = (node(i), node(i + 1));
        let (g0, g1) = (g[i], g[i + 1]);
        if g0 != 0.0 && g1 != 0.0 && (g0 < 0.0) != (g1 < 0.0) {
            let s = roots::bisect(|x| profile.dh(x), x0, x1, 0.0).unwrap_or(0.5 * (x0 + x1));
            out.push(classify(s, sign(g0, 0.0), sign(g1, 0.0)));
        } else if g0 == 0.0 {
            // exact zero on a node: orientation from the neighbouring nodes
            let left = match i {
                0 if profile.is_torus() => sign(g[grid_n - 1], 0.0),
                0 => 0,
                _ => sign(g[i - 1], 0.0),
            };
            out.push(classify(x0, left, sign(g1, 0.0)));
        }
        i += 1;
    }

    if profile.is_torus() {
        wrap_periodic(&mut out, hi);
    }
    out.sort_by(|a, b| a.s0.total_cmp(&b.s0));
    out
}

/// Folds torus critical points into `[0, period)`, removing the duplicate
/// produced at the period boundary and joining spans that wrap around it.
fn wrap_periodic(points: &mut Vec<CriticalPoint>, period: f64) {
    const SAME: f64 = 1e-9;
    for c in points.iter_mut() {
        if c.span.is_none() && c.s0 > period - SAME {
            c.s0 -= period;
        }
    }
    points.sort_by(|a, b| a.s0.total_cmp(&b.s0));
    points.dedup_by(|b, a| a.span.is_none() && b.span.is_none() && (a.s0 - b.s0).abs() <= SAME);
    if points.len() > 1 {
        let (first, last) = (points[0], points[points.len() - 1]);
        if let (Some((fa, fb)), Some((la, lb))) = (first.span, last.span) {
            if fa <= 0.0 && lb >= period {
                points.pop();
                points[0] = CriticalPoint {
                    s0: 0.5 * (la + fb + period),
                    span: Some((la, fb + period)),
                    h_value: first.h_value.max(last.h_value),
                    ..first
                };
            }
        }
    }
}

/// `true` when `h(s) = h(π − s)` on a sample grid, so the reflection across
/// the equator is an isometry.
pub fn has_equatorial_symmetry(profile: &Profile, tol: f64) -> bool {
    (1..256).all(|i| {
        let s = PI * i as f64 / 256.0;
        let (a, b) = (profile.h(s), profile.h(PI - s));
        (a - b).abs() <= tol * (1.0 + a.abs())
    })
}

/// `true` when `h″ + h = 0` on a sample grid, i.e. constant curvature one.
pub fn has_unit_curvature(profile: &Profile, tol: f64) -> bool {
    (1..256).all(|i| {
        let s = PI * i as f64 / 256.0;
        (profile.d2h(s) + profile.h(s)).abs() <= tol
    })
}

/// A profile together with its critical points, shared by the geodesic,
/// integral and census computations.
#[derive(Debug, Clone)]
pub struct Surface {
    profile: Profile,
    critical: Vec<CriticalPoint>,
}

impl Surface {
    pub fn new(profile: Profile) -> Surface {
        Surface::with_grid(profile, DEFAULT_CRITICAL_GRID, DEFAULT_CRITICAL_TOL)
    }

    pub fn with_grid(profile: Profile, grid_n: usize, tol: f64) -> Surface {
        let critical = critical_points(&profile, grid_n, tol);
        Surface { profile, critical }
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Critical points on the fundamental domain, sorted by position.
    pub fn critical_points(&self) -> &[CriticalPoint] {
        &self.critical
    }

    /// Critical points (and span endpoints) strictly between `from` and
    /// `to`, ordered from `from` toward `to`. Torus critical points are
    /// repeated periodically.
    pub fn breakpoints_between(&self, from: f64, to: f64) -> Vec<f64> {
        let (lo, hi) = (from.min(to), from.max(to));
        let mut pts = Vec::new();
        let period = self.profile.period();
        let shifts: Vec<f64> = if self.profile.is_torus() {
            let k0 = (lo / period).floor() as i64 - 1;
            let k1 = (hi / period).ceil() as i64 + 1;
            (k0..=k1).map(|k| k as f64 * period).collect()
        } else {
            vec![0.0]
        };
        for shift in shifts {
            for c in &self.critical {
                let cands: Vec<f64> = match c.span {
                    Some((a, b)) => vec![a + shift, b + shift],
                    None => vec![c.s0 + shift],
                };
                pts.extend(cands.into_iter().filter(|&x| x > lo && x < hi));
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        if to < from {
            pts.reverse();
        }
        pts
    }

    /// Distance from `s` to the nearest critical point, with its position.
    pub fn nearest_critical(&self, s: f64) -> Option<(f64, f64)> {
        let period = self.profile.period();
        self.critical
            .iter()
            .flat_map(|c| {
                let base: Vec<f64> = match c.span {
                    Some((a, b)) => vec![a, b],
                    None => vec![c.s0],
                };
                base.into_iter().flat_map(move |x| {
                    if self.profile.is_torus() {
                        let k = ((s - x) / period).round();
                        vec![x + (k - 1.0) * period, x + k * period, x + (k + 1.0) * period]
                    } else {
                        vec![x]
                    }
                })
            })
            .map(|x| ((x - s).abs(), x))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// `true` when some critical point is a degenerate span.
    pub fn has_degenerate_span(&self) -> bool {
        self.critical.iter().any(|c| c.is_span())
    }
}
