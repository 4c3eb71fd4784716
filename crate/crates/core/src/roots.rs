//! Bracketing root finders.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RootError {
    #[error("no sign change on [{lo}, {hi}] (f = {flo}, {fhi})")]
    NoBracket { lo: f64, hi: f64, flo: f64, fhi: f64 },
    #[error("non-finite function value at {0}")]
    NonFinite(f64),
}

/// Bisection on a sign-change bracket until its width is at most `xtol`
/// or the floating-point midpoint stops moving.
pub fn bisect<F>(f: F, lo: f64, hi: f64, xtol: f64) -> Result<f64, RootError>
where
    F: Fn(f64) -> f64,
{
    bisect_until(f, lo, hi, |width, _| width <= xtol)
}

/// Bisection with a caller-supplied stopping rule `done(width, f(mid))`.
///
/// An exact zero at either end of the bracket is returned immediately.
pub fn bisect_until<F, D>(f: F, mut lo: f64, mut hi: f64, done: D) -> Result<f64, RootError>
where
    F: Fn(f64) -> f64,
    D: Fn(f64, f64) -> bool,
{
    let mut flo = f(lo);
    let fhi = f(hi);
    if !flo.is_finite() {
        return Err(RootError::NonFinite(lo));
    }
    if !fhi.is_finite() {
        return Err(RootError::NonFinite(hi));
    }
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if (flo < 0.0) == (fhi < 0.0) {
        return Err(RootError::NoBracket { lo, hi, flo, fhi });
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            return Ok(mid);
        }
        let fm = f(mid);
        if !fm.is_finite() {
            return Err(RootError::NonFinite(mid));
        }
        if fm == 0.0 || done((hi - lo).abs() * 0.5, fm) {
            return Ok(mid);
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
}

/// Illinois-modified regula falsi on a sign-change bracket with known end
/// values. Stops once `|f| ≤ ftol` or the bracket collapses.
pub fn illinois<F, E>(f: F, mut lo: f64, mut hi: f64, mut flo: f64, mut fhi: f64, ftol: f64) -> Result<f64, E>
where
    F: Fn(f64) -> Result<f64, E>,
    E: From<RootError>,
{
    if flo.abs() <= ftol {
        return Ok(lo);
    }
    if fhi.abs() <= ftol {
        return Ok(hi);
    }
    if (flo < 0.0) == (fhi < 0.0) {
        return Err(RootError::NoBracket { lo, hi, flo, fhi }.into());
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let mut x = hi - fhi * (hi - lo) / (fhi - flo);
        if !(x > lo.min(hi) && x < lo.max(hi)) {
            x = 0.5 * (lo + hi);
        }
        if x <= lo.min(hi) || x >= lo.max(hi) {
            return Ok(x);
        }
        let fx = f(x)?;
        if !fx.is_finite() {
            return Err(RootError::NonFinite(x).into());
        }
        if fx.abs() <= ftol {
            return Ok(x);
        }
        if (fx < 0.0) == (fhi < 0.0) {
            hi = x;
            fhi = fx;
            if side == -1 {
                flo *= 0.5;
            }
            side = -1;
        } else {
            lo = x;
            flo = fx;
            if side == 1 {
                fhi *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn reversed_bracket() {
        let r = bisect(|x| x.cos(), 3.0, 1.0, 1e-13).unwrap();
        assert!((r - std::f64::consts::FRAC_PI_2).abs() < 1e-13);
    }

    #[test]
    fn rejects_missing_bracket() {
        assert!(matches!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12), Err(RootError::NoBracket { .. })));
    }

    #[test]
    fn stops_on_residual() {
        let r = bisect_until(|x| x - 0.3, 0.0, 1.0, |_, fm| fm.abs() < 1e-3).unwrap();
        assert!((r - 0.3).abs() < 1e-3);
    }

    #[test]
    fn runs_to_machine_precision() {
        let r = bisect(|x| x - 1.0 / 3.0, 0.0, 1.0, 0.0).unwrap();
        assert!((r - 1.0 / 3.0).abs() <= f64::EPSILON);
    }

    #[test]
    fn illinois_converges_on_skewed_function() {
        let f = |x: f64| Ok::<_, RootError>(x.powi(9) - 0.5);
        let r = illinois(f, 0.0, 1.0, -0.5, 0.5, 1e-15).unwrap();
        assert!((r - 0.5f64.powf(1.0 / 9.0)).abs() < 1e-13);
        assert!(matches!(illinois(f, 0.0, 0.5, -0.5, -0.49, 1e-15), Err(RootError::NoBracket { .. })));
    }
}
