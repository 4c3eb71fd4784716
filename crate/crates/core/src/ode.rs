//! Dormand–Prince 5(4) integrator with step rejection and event location.
//!
//! The right-hand side may refuse a state by returning `None`; the step is
//! then rejected and retried with a smaller step, which is how callers fence
//! off coordinate singularities.

use thiserror::Error;

use crate::roots;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("right-hand side rejected the initial state at t = {t}")]
    InvalidState { t: f64 },
    #[error("step limit reached at t = {t}")]
    TooManySteps { t: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        OdeOptions { rtol, atol, ..Default::default() }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-9,
            atol: 1e-12,
            h_init: 1e-3,
            h_max: 0.25,
            h_min: 1e-13,
            max_steps: 5_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 35.0 / 384.0 - 5179.0 / 57600.0;
const E3: f64 = 500.0 / 1113.0 - 7571.0 / 16695.0;
const E4: f64 = 125.0 / 192.0 - 393.0 / 640.0;
const E5: f64 = -2187.0 / 6784.0 + 92097.0 / 339200.0;
const E6: f64 = 11.0 / 84.0 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

type State<const N: usize> = [f64; N];

fn axpy<const N: usize>(y: &State<N>, h: f64, terms: &[(f64, &State<N>)]) -> State<N> {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

/// One accepted step of an integration.
#[derive(Debug, Clone, Copy)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub y0: State<N>,
    pub t1: f64,
    pub y1: State<N>,
}

/// Stateful stepper over `y′ = f(t, y)`.
pub struct Dopri5<F, const N: usize> {
    f: F,
    opts: OdeOptions,
    t: f64,
    y: State<N>,
    k1: State<N>,
    h: f64,
    steps: usize,
}

impl<F, const N: usize> Dopri5<F, N>
where
    F: Fn(f64, &State<N>) -> Option<State<N>>,
{
    pub fn new(f: F, t0: f64, y0: State<N>, opts: OdeOptions) -> Result<Self, OdeError> {
        let k1 = f(t0, &y0).ok_or(OdeError::InvalidState { t: t0 })?;
        Ok(Dopri5 { f, opts, t: t0, y: y0, k1, h: opts.h_init, steps: 0 })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &State<N> {
        &self.y
    }

    /// Single Dormand–Prince step of signed size `h` from `(t, y)` with
    /// first stage `k1`. Returns the new state, its derivative, and the
    /// scaled error norm.
    fn attempt(&self, t: f64, y: &State<N>, k1: &State<N>, h: f64) -> Option<(State<N>, State<N>, f64)> {
        let f = &self.f;
        let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, k1)]))?;
        let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
        let k4 = f(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = f(t + C5 * h, &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
        let k6 = f(
            t + h,
            &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        )?;
        let y1 = axpy(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = f(t + h, &y1)?;
        let err = axpy(
            &[0.0; N],
            h,
            &[(E1, k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
        );
        let mut norm = 0.0;
        for i in 0..N {
            let sc = self.opts.atol + self.opts.rtol * y[i].abs().max(y1[i].abs());
            norm += (err[i] / sc).powi(2);
        }
        let norm = (norm / N as f64).sqrt();
        if norm.is_finite() && y1.iter().all(|v| v.is_finite()) {
            Some((y1, k7, norm))
        } else {
            None
        }
    }

    /// State reached from the start of `step` after time `tau` (same sign
    /// as the step), by one fresh Runge–Kutta step.
    pub fn advance_within(&self, step: &Step<N>, tau: f64) -> Option<State<N>> {
        if tau == 0.0 {
            return Some(step.y0);
        }
        let k1 = (self.f)(step.t0, &step.y0)?;
        self.attempt(step.t0, &step.y0, &k1, tau).map(|(y, _, _)| y)
    }

    /// Takes one accepted step toward `t_end` without passing it.
    pub fn step_toward(&mut self, t_end: f64) -> Result<Step<N>, OdeError> {
        let dir = if t_end >= self.t { 1.0 } else { -1.0 };
        let mut h = self.h.abs().min(self.opts.h_max) * dir;
        loop {
            if self.steps >= self.opts.max_steps {
                return Err(OdeError::TooManySteps { t: self.t });
            }
            let remaining = t_end - self.t;
            let last = h.abs() >= remaining.abs();
            if last {
                h = remaining;
            }
            match self.attempt(self.t, &self.y, &self.k1, h) {
                Some((y1, k7, err)) if err <= 1.0 => {
                    let step = Step { t0: self.t, y0: self.y, t1: if last { t_end } else { self.t + h }, y1 };
                    self.t = step.t1;
                    self.y = y1;
                    self.k1 = k7;
                    self.steps += 1;
                    let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    // keep the pre-truncation step size for the next step
                    if !last || factor < 1.0 {
                        self.h = (h * factor).abs().min(self.opts.h_max);
                    }
                    return Ok(step);
                }
                Some((_, _, err)) => {
                    h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                }
                None => h *= 0.25,
            }
            if h.abs() < self.opts.h_min {
                return Err(OdeError::StepUnderflow { t: self.t });
            }
        }
    }

    /// Locates a zero of `g` inside `step`, given that `g` changes sign
    /// between its ends. Returns the event time and state.
    pub fn locate<G>(&self, step: &Step<N>, g: G) -> Option<(f64, State<N>)>
    where
        G: Fn(&State<N>) -> f64,
    {
        let h = step.t1 - step.t0;
        let phi = |tau: f64| self.advance_within(step, tau).map(|y| g(&y)).unwrap_or(f64::NAN);
        let tau = roots::bisect(phi, 0.0, h, 0.0).ok()?;
        let y = self.advance_within(step, tau)?;
        Some((step.t0 + tau, y))
    }
}
