//! Geodesic flow of `ds² + h(s)² dθ²` in the covering coordinates `(s, θ)`.
//!
//! With `t` the arclength parameter the equations are
//!
//! ```text
//! s″ = h(s) h′(s) θ′²
//! θ″ = −2 (h′(s) / h(s)) s′ θ′
//! ```
//!
//! and `h(s)² θ′` is conserved (the Clairaut constant). `θ` is kept in the
//! universal cover; it is never reduced modulo `2π` here.

use std::f64::consts::PI;
use std::io::{self, Write};

use serde::Serialize;

use crate::clairaut;
use crate::error::{Error, Result};
use crate::ode::{Dopri5, OdeError, OdeOptions};
use crate::profile::{Profile, Surface};
use crate::quad::{self, QuadOptions};

/// Sphere trajectories halt when `s` comes this close to a pole.
pub const POLE_EPS: f64 = 1e-8;
/// `|h′(a)|` at or below this marks a parallel.
pub const PARALLEL_TOL: f64 = 1e-10;
/// `|h′(b(a))|` at or below this marks an asymptotic launch.
pub const ASYMPTOTIC_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeodesicState {
    pub s: f64,
    pub theta: f64,
    pub s_dot: f64,
    pub theta_dot: f64,
}

impl GeodesicState {
    pub fn new(s: f64, theta: f64, s_dot: f64, theta_dot: f64) -> Self {
        GeodesicState { s, theta, s_dot, theta_dot }
    }

    /// Unit-speed launch at `(s, θ)` in the `+θ` direction.
    pub fn horizontal(profile: &Profile, s: f64, theta: f64) -> Self {
        GeodesicState::new(s, theta, 0.0, 1.0 / profile.h(s))
    }

    fn to_array(self) -> [f64; 4] {
        [self.s, self.theta, self.s_dot, self.theta_dot]
    }

    fn from_array(y: [f64; 4]) -> Self {
        GeodesicState::new(y[0], y[1], y[2], y[3])
    }

    /// `ṡ² + h(s)² θ̇²`.
    pub fn speed_sq(&self, profile: &Profile) -> f64 {
        let h = profile.h(self.s);
        self.s_dot * self.s_dot + h * h * self.theta_dot * self.theta_dot
    }
}

fn in_open_domain(profile: &Profile, s: f64) -> bool {
    profile.is_torus() || (s > POLE_EPS && s < PI - POLE_EPS)
}

/// Right-hand side of the geodesic equations.
pub fn geodesic_rhs(profile: &Profile, x: &GeodesicState) -> Result<GeodesicState> {
    if !in_open_domain(profile, x.s) {
        return Err(Error::OutsideDomain { s: x.s });
    }
    let (h, dh) = (profile.h(x.s), profile.dh(x.s));
    let d = GeodesicState::new(
        x.s_dot,
        x.theta_dot,
        h * dh * x.theta_dot * x.theta_dot,
        -2.0 * (dh / h) * x.s_dot * x.theta_dot,
    );
    if [d.s_dot, d.theta_dot].iter().all(|v| v.is_finite()) {
        Ok(d)
    } else {
        Err(Error::OutsideDomain { s: x.s })
    }
}

/// `h(s)² θ̇`, which equals `h cos α` for a unit-speed state.
pub fn clairaut_constant(profile: &Profile, x: &GeodesicState) -> f64 {
    let h = profile.h(x.s);
    h * h * x.theta_dot
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub state: GeodesicState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub clairaut: f64,
    /// max `|h² θ̇ − c|` over the samples
    pub clairaut_drift: f64,
    /// max `|ṡ² + h² θ̇² − 1|` over the samples
    pub speed_drift: f64,
}

impl Trajectory {
    fn start(profile: &Profile, x0: GeodesicState) -> Self {
        Trajectory {
            samples: vec![Sample { t: 0.0, state: x0 }],
            clairaut: clairaut_constant(profile, &x0),
            clairaut_drift: 0.0,
            speed_drift: (x0.speed_sq(profile) - 1.0).abs(),
        }
    }

    fn push(&mut self, profile: &Profile, t: f64, x: GeodesicState) {
        self.clairaut_drift = self.clairaut_drift.max((clairaut_constant(profile, &x) - self.clairaut).abs());
        self.speed_drift = self.speed_drift.max((x.speed_sq(profile) - 1.0).abs());
        self.samples.push(Sample { t, state: x });
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has its initial sample")
    }

    /// Writes `t,s,theta,s_dot,theta_dot` rows, appending the embedded
    /// `x,y,z` columns when `embed` is given. `θ` is reduced modulo `2π`.
    pub fn write_csv<W: Write>(&self, mut out: W, embed: Option<&Embedding>) -> io::Result<()> {
        write!(out, "t,s,theta,s_dot,theta_dot")?;
        if embed.is_some() {
            write!(out, ",x,y,z")?;
        }
        writeln!(out)?;
        for Sample { t, state } in &self.samples {
            let theta = state.theta.rem_euclid(2.0 * PI);
            write!(out, "{},{},{},{},{}", f17(*t), f17(state.s), f17(theta), f17(state.s_dot), f17(state.theta_dot))?;
            if let Some(e) = embed {
                let [x, y, z] = e.point(state.s, state.theta).map_err(io::Error::other)?;
                write!(out, ",{},{},{}", f17(x), f17(y), f17(z))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Formats a float with 17 significant digits.
pub fn f17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Controller tolerances used for a requested trajectory tolerance `rtol`.
pub(crate) fn ode_options(rtol: f64) -> OdeOptions {
    OdeOptions::with_tol(0.1 * rtol, 1e-3 * rtol)
}

/// Integrates the geodesic through `x0` for arclength `t_max` (negative
/// values integrate backward in time).
///
/// Sphere trajectories that approach a pole fail with
/// [`Error::PoleEscape`] carrying the partial trajectory. The invariant
/// drifts must stay within `100 · rtol`.
pub fn integrate_geodesic(profile: &Profile, x0: GeodesicState, t_max: f64, rtol: f64) -> Result<Trajectory> {
    let speed_sq = x0.speed_sq(profile);
    if !((speed_sq - 1.0).abs() <= 1e-9) {
        return Err(Error::NotUnitSpeed { speed_sq });
    }
    if !in_open_domain(profile, x0.s) {
        return Err(Error::OutsideDomain { s: x0.s });
    }
    let rhs = |_t: f64, y: &[f64; 4]| -> Option<[f64; 4]> {
        geodesic_rhs(profile, &GeodesicState::from_array(*y)).ok().map(GeodesicState::to_array)
    };
    let mut stepper = Dopri5::new(rhs, 0.0, x0.to_array(), ode_options(rtol))?;
    let mut traj = Trajectory::start(profile, x0);
    while stepper.t() != t_max {
        match stepper.step_toward(t_max) {
            Ok(step) => traj.push(profile, step.t1, GeodesicState::from_array(step.y1)),
            Err(OdeError::StepUnderflow { t }) if !profile.is_torus() => {
                let s = stepper.y()[0];
                if !(1e-4..=PI - 1e-4).contains(&s) {
                    return Err(Error::PoleEscape { t, partial: Box::new(traj) });
                }
                return Err(OdeError::StepUnderflow { t }.into());
            }
            Err(e) => return Err(e.into()),
        }
    }
    let bound = 100.0 * rtol;
    if traj.clairaut_drift > bound || traj.speed_drift > bound {
        return Err(Error::DriftExceeded {
            clairaut_drift: traj.clairaut_drift,
            speed_drift: traj.speed_drift,
            bound,
        });
    }
    Ok(traj)
}

/// Outcome of launching `γ_a` in the `θ`-direction at `s = a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum ClairautClass {
    Meridian,
    Parallel,
    Asymptotic { limit: f64 },
    Oscillating { lo: f64, hi: f64 },
}

/// Classifies the horizontal launch at `a` into parallel, asymptotic or
/// oscillating.
pub fn classify_initial(surface: &Surface, a: f64) -> Result<ClairautClass> {
    let profile = surface.profile();
    if !profile.is_torus() && !(a > 0.0 && a < PI) {
        return Err(Error::OutsideDomain { s: a });
    }
    let slope = profile.dh(a);
    if slope.abs() <= PARALLEL_TOL {
        return Ok(ClairautClass::Parallel);
    }
    let turn = clairaut::turning_point(surface, a)?;
    if turn.asymptotic || profile.dh(turn.b).abs() <= ASYMPTOTIC_TOL {
        return Ok(ClairautClass::Asymptotic { limit: turn.b });
    }
    Ok(ClairautClass::Oscillating { lo: a.min(turn.b), hi: a.max(turn.b) })
}

/// Height function of the surface of revolution realising the metric in
/// `R³`, for profiles with `|h′| ≤ 1`.
pub struct Embedding<'a> {
    profile: &'a Profile,
}

impl<'a> Embedding<'a> {
    pub fn new(profile: &'a Profile) -> Self {
        Embedding { profile }
    }

    /// `z(s) = ∫₀ˢ √(1 − h′²)`.
    pub fn height(&self, s: f64) -> Result<f64> {
        const SLACK: f64 = 1e-12;
        let n = 512;
        for i in 0..=n {
            let x = s * i as f64 / n as f64;
            let slope = self.profile.dh(x);
            if slope.abs() > 1.0 + SLACK || !slope.is_finite() {
                return Err(Error::NonEmbeddable { s: x, slope: slope.abs() });
            }
        }
        let f = |x: f64| (1.0 - self.profile.dh(x).powi(2)).max(0.0).sqrt();
        let opts = QuadOptions { abs_tol: 1e-12, rel_tol: 1e-12, max_intervals: 500 };
        Ok(quad::integrate(f, 0.0, s, &opts)?.value)
    }

    pub fn point(&self, s: f64, theta: f64) -> Result<[f64; 3]> {
        let r = self.profile.h(s);
        Ok([r * theta.cos(), r * theta.sin(), self.height(s)?])
    }
}

/// Embeds `(s, θ)` as `(h cos θ, h sin θ, z(s))`.
pub fn embed_r3(profile: &Profile, s: f64, theta: f64) -> Result<[f64; 3]> {
    Embedding::new(profile).point(s, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::SurfaceKind;
    use std::f64::consts::FRAC_PI_4;

    fn sphere(f: &str) -> Profile {
        Profile::parse(SurfaceKind::Sphere, f).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let p = sphere("sin(s)");
        let d = geodesic_rhs(&p, &GeodesicState::new(PI / 2.0, 0.0, 0.0, 1.0)).unwrap();
        assert_eq!((d.s, d.theta, d.theta_dot), (0.0, 1.0, 0.0));
        assert!(d.s_dot.abs() < 1e-16);
        let d = geodesic_rhs(&p, &GeodesicState::new(FRAC_PI_4, 0.0, 1.0, 0.0)).unwrap();
        assert_eq!((d.s, d.theta, d.s_dot, d.theta_dot), (1.0, 0.0, 0.0, 0.0));
        let x = GeodesicState::new(FRAC_PI_4, 0.0, 0.0, 1.0 / FRAC_PI_4.sin());
        let d = geodesic_rhs(&p, &x).unwrap();
        assert!((d.s_dot - 1.0).abs() < 1e-15);
        assert!(matches!(geodesic_rhs(&p, &GeodesicState::new(1e-9, 0.0, 1.0, 0.0)), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn clairaut_examples() {
        let p = sphere("sin(s)");
        let x = GeodesicState::horizontal(&p, FRAC_PI_4, 0.0);
        assert!((clairaut_constant(&p, &x) - FRAC_PI_4.sin()).abs() < 1e-15);
        assert_eq!(clairaut_constant(&p, &GeodesicState::new(1.0, 0.0, 1.0, 0.0)), 0.0);
        let eq = GeodesicState::horizontal(&p, PI / 2.0, 0.0);
        assert!((clairaut_constant(&p, &eq) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn equator_closes() {
        let p = sphere("sin(s)");
        let tr = integrate_geodesic(&p, GeodesicState::horizontal(&p, PI / 2.0, 0.0), 2.0 * PI, 1e-9).unwrap();
        let end = tr.last();
        assert_eq!(end.t, 2.0 * PI);
        assert!((end.state.theta - 2.0 * PI).abs() < 1e-8);
        assert!((end.state.s - PI / 2.0).abs() < 1e-8);
    }

    #[test]
    fn tilted_great_circle_closes() {
        let p = sphere("sin(s)");
        let x0 = GeodesicState::horizontal(&p, FRAC_PI_4, 0.0);
        let tr = integrate_geodesic(&p, x0, 2.0 * PI, 1e-9).unwrap();
        let end = tr.last().state;
        assert!((end.s - FRAC_PI_4).abs() < 1e-7, "{end:?}");
        assert!((end.theta - 2.0 * PI).abs() < 1e-7);
        assert!(end.s_dot.abs() < 1e-7);
        assert!((end.theta_dot - x0.theta_dot).abs() < 1e-7);
    }

    #[test]
    fn meridian_escapes_through_pole() {
        let p = sphere("sin(s)");
        match integrate_geodesic(&p, GeodesicState::new(PI / 2.0, 0.0, 1.0, 0.0), 3.0, 1e-9) {
            Err(Error::PoleEscape { t, partial }) => {
                assert!((t - PI / 2.0).abs() < 1e-6, "{t}");
                assert!(partial.samples.len() > 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_non_unit_speed() {
        let p = sphere("sin(s)");
        assert!(matches!(
            integrate_geodesic(&p, GeodesicState::new(1.0, 0.0, 1.0, 1.0), 1.0, 1e-9),
            Err(Error::NotUnitSpeed { .. })
        ));
    }

    #[test]
    fn classification_examples() {
        let round = Surface::new(sphere("sin(s)"));
        assert_eq!(classify_initial(&round, PI / 2.0).unwrap(), ClairautClass::Parallel);
        match classify_initial(&round, FRAC_PI_4).unwrap() {
            ClairautClass::Oscillating { lo, hi } => {
                assert!((lo - FRAC_PI_4).abs() < 1e-15);
                assert!((hi - 3.0 * FRAC_PI_4).abs() < 1e-12);
            }
            c => panic!("{c:?}"),
        }
        match classify_initial(&round, 3.0 * FRAC_PI_4).unwrap() {
            ClairautClass::Oscillating { lo, hi } => {
                assert!((lo - FRAC_PI_4).abs() < 1e-12);
                assert!((hi - 3.0 * FRAC_PI_4).abs() < 1e-15);
            }
            c => panic!("{c:?}"),
        }
        let bumpy = Surface::new(sphere("sin(s)*(1 + 0.3*sin(s)^2)"));
        match classify_initial(&bumpy, 0.5).unwrap() {
            ClairautClass::Oscillating { lo, hi } => {
                assert_eq!(lo, 0.5);
                assert!(hi > PI / 2.0 && hi < PI);
                let p = bumpy.profile();
                assert!((p.h(hi) - p.h(0.5)).abs() <= 1e-12);
            }
            c => panic!("{c:?}"),
        }
    }

    #[test]
    fn asymptotic_launch_at_saddle_level() {
        // two humps with a local minimum of h at π/2
        let p = sphere("sin(s)*(1 + 2*sin(s)^2*cos(s)^2)");
        let surf = Surface::new(p.clone());
        let crit = surf.critical_points().to_vec();
        let min = crit.iter().find(|c| c.is_local_min()).expect("two-hump profile");
        // launch below the first hump at the level of the minimum
        let a = crate::roots::bisect(|s| p.h(s) - min.h_value, 1e-3, crit[0].s0, 0.0).unwrap();
        match classify_initial(&surf, a).unwrap() {
            ClairautClass::Asymptotic { limit } => assert!((limit - min.s0).abs() < 1e-6, "{limit} vs {}", min.s0),
            c => panic!("{c:?}"),
        }
    }

    #[test]
    fn embedding_examples() {
        let p = sphere("sin(s)");
        let [x, y, z] = embed_r3(&p, PI / 2.0, 0.0).unwrap();
        assert!((x - 1.0).abs() < 1e-15 && y.abs() < 1e-15 && (z - 1.0).abs() < 1e-12);
        assert_eq!(embed_r3(&p, 0.0, 0.0).unwrap(), [0.0, 0.0, 0.0]);
        for s in [0.3, 1.0, 2.0, 3.0] {
            let z = Embedding::new(&p).height(s).unwrap();
            assert!((z - (1.0 - s.cos())).abs() < 1e-11);
        }
        let t = Profile::parse(SurfaceKind::Torus, "2 + cos(2*s)").unwrap();
        assert!(matches!(embed_r3(&t, PI / 2.0, 0.0), Err(Error::NonEmbeddable { .. })));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let p = sphere("sin(s)");
        let tr = integrate_geodesic(&p, GeodesicState::horizontal(&p, 1.0, 0.0), 1.0, 1e-9).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, Some(&Embedding::new(&p))).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,s,theta,s_dot,theta_dot,x,y,z");
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row.len(), 8);
        assert_eq!(row[1], 1.0);
        assert_eq!(text.lines().count(), tr.samples.len() + 1);
    }
}
