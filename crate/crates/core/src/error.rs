use thiserror::Error;

use crate::expr::ParseError;
use crate::geodesic::Trajectory;
use crate::ode::OdeError;
use crate::quad::QuadError;
use crate::roots::RootError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("s = {s} lies outside the open domain")]
    OutsideDomain { s: f64 },
    #[error("initial state is not unit speed (|v|² = {speed_sq})")]
    NotUnitSpeed { speed_sq: f64 },
    #[error("geodesic reached a pole at t = {t}")]
    PoleEscape { t: f64, partial: Box<Trajectory> },
    #[error("invariant drift too large: Clairaut {clairaut_drift:e}, speed {speed_drift:e} (bound {bound:e})")]
    DriftExceeded { clairaut_drift: f64, speed_drift: f64, bound: f64 },
    #[error("a = {a} is a parallel (h'(a) = {slope:e})")]
    Parallel { a: f64, slope: f64 },
    #[error("a = {a} is within {distance:e} of the critical point {critical}")]
    BoundaryProximity { a: f64, critical: f64, distance: f64 },
    #[error("no return to level h({a}) found")]
    NoReturn { a: f64 },
    #[error("a = {a} is not in U: {reason}")]
    NotInU { a: f64, reason: &'static str },
    #[error("turning point not reached before t = {horizon}")]
    EventNotFound { horizon: f64 },
    #[error("surface is not embeddable in R^3: |h'({s})| = {slope} > 1")]
    NonEmbeddable { s: f64, slope: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Root(#[from] RootError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
