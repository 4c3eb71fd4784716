//! Geodesics on surfaces of revolution with metric `ds² + h(s)² dθ²`:
//! integration, Clairaut trip integrals, and censuses of closed geodesics
//! by length.

// `!(x > y)` is used on purpose so that NaN takes the failing branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod census;
pub mod clairaut;
pub mod error;
pub mod expr;
pub mod farey;
pub mod geodesic;
pub mod ode;
pub mod profile;
pub mod quad;
pub mod roots;

pub use error::{Error, Result};
pub use profile::{Profile, Surface, SurfaceKind};
