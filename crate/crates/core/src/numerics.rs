//! Fixed-step explicit integration, scalar root bracketing and 1-D minimisation.
//!
//! Every ODE in this crate is low dimensional, so states are plain `[f64; N]`
//! arrays. Right-hand sides may be piecewise: a [`VectorField`] exposes a
//! discrete `mode` which the integrator evaluates once at the start of each
//! step and then holds fixed for all stages of that step. This mirrors the
//! discrete news process, where the regime indicator is known before the
//! step is taken.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub method: Method,
    pub max_time: f64,
}

impl IntegratorConfig {
    /// RK4 configuration; `dt` must be positive and not exceed `max_time`.
    pub fn new(dt: f64, max_time: f64) -> Result<Self> {
        Self::with_method(dt, max_time, Method::Rk4)
    }

    pub fn with_method(dt: f64, max_time: f64, method: Method) -> Result<Self> {
        let cfg = Self {
            dt,
            method,
            max_time,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.max_time.is_finite() && self.max_time > 0.0) {
            return Err(invalid(
                "max_time",
                format!("must be positive, got {}", self.max_time),
            ));
        }
        if self.dt > self.max_time {
            return Err(invalid(
                "dt",
                format!("step {} exceeds horizon {}", self.dt, self.max_time),
            ));
        }
        Ok(())
    }

    /// Number of steps needed to cover `max_time`. A horizon that is an
    /// integer multiple of `dt` up to rounding noise is not rounded up.
    pub fn n_steps(&self) -> usize {
        let ratio = self.max_time / self.dt;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            ratio.ceil() as usize
        }
    }
}

/// A possibly piecewise-defined vector field on `R^N`.
pub trait VectorField<const N: usize> {
    /// Discrete regime at `(t, x)`. Smooth fields keep the default.
    fn mode(&self, _t: f64, _x: &[f64; N]) -> u8 {
        0
    }

    fn eval(&self, t: f64, x: &[f64; N], mode: u8) -> [f64; N];
}

/// Adapter turning a smooth closure `(t, x) -> dx` into a [`VectorField`].
pub struct Smooth<F>(pub F);

impl<const N: usize, F> VectorField<N> for Smooth<F>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    fn eval(&self, t: f64, x: &[f64; N], _mode: u8) -> [f64; N] {
        (self.0)(t, x)
    }
}

/// Uniformly sampled solution. `modes[k]` is the regime used for the step
/// leaving sample `k` (the last entry is the regime of the final state).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize> {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<[f64; N]>,
    pub modes: Vec<u8>,
}

impl<const N: usize> Trajectory<N> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&[f64; N]> {
        self.states.last()
    }

    /// Component `k` of every sample.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|x| x[k]).collect()
    }

    /// Linear interpolation of the state at time `t`, clamped to the sampled range.
    pub fn sample_at(&self, t: f64) -> [f64; N] {
        let t0 = self.times[0];
        let n = self.states.len();
        if n == 1 || t <= t0 {
            return self.states[0];
        }
        let pos = (t - t0) / self.dt;
        let k = pos.floor() as usize;
        if k + 1 >= n {
            return self.states[n - 1];
        }
        let w = pos - k as f64;
        let (a, b) = (&self.states[k], &self.states[k + 1]);
        let mut out = [0.0; N];
        for j in 0..N {
            out[j] = a[j] + w * (b[j] - a[j]);
        }
        out
    }
}

fn axpy<const N: usize>(x: &[f64; N], h: f64, k: &[f64; N]) -> [f64; N] {
    let mut out = *x;
    for j in 0..N {
        out[j] += h * k[j];
    }
    out
}

/// One explicit step of `method` with the mode held fixed.
pub fn step<const N: usize, F: VectorField<N>>(
    field: &F,
    method: Method,
    t: f64,
    x: &[f64; N],
    dt: f64,
    mode: u8,
) -> [f64; N] {
    match method {
        Method::Euler => axpy(x, dt, &field.eval(t, x, mode)),
        Method::Rk4 => {
            let half = 0.5 * dt;
            let k1 = field.eval(t, x, mode);
            let k2 = field.eval(t + half, &axpy(x, half, &k1), mode);
            let k3 = field.eval(t + half, &axpy(x, half, &k2), mode);
            let k4 = field.eval(t + dt, &axpy(x, dt, &k3), mode);
            let mut out = *x;
            for j in 0..N {
                out[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            out
        }
    }
}

/// Integrates from `t = 0`.
pub fn integrate<const N: usize, F: VectorField<N>>(
    field: &F,
    init: [f64; N],
    cfg: &IntegratorConfig,
) -> Result<Trajectory<N>> {
    integrate_from(field, 0.0, init, cfg)
}

/// Integrates over `[t0, t0 + max_time]`. Sample times are `t0 + k * dt`.
pub fn integrate_from<const N: usize, F: VectorField<N>>(
    field: &F,
    t0: f64,
    init: [f64; N],
    cfg: &IntegratorConfig,
) -> Result<Trajectory<N>> {
    cfg.validate()?;
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { time: t0 });
    }
    let n = cfg.n_steps();
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut modes = Vec::with_capacity(n + 1);

    let mut x = init;
    for k in 0..n {
        let t = t0 + k as f64 * cfg.dt;
        let mode = field.mode(t, &x);
        times.push(t);
        states.push(x);
        modes.push(mode);
        x = step(field, cfg.method, t, &x, cfg.dt, mode);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                time: t0 + (k + 1) as f64 * cfg.dt,
            });
        }
    }
    let t_end = t0 + n as f64 * cfg.dt;
    times.push(t_end);
    modes.push(field.mode(t_end, &x));
    states.push(x);

    Ok(Trajectory {
        dt: cfg.dt,
        times,
        states,
        modes,
    })
}

/// Bisection on a sign-changing bracket. Returns the midpoint of the final
/// interval, whose width is at most `tol`.
pub fn find_root_bracketed<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(lo < hi) {
        return Err(invalid("lo", format!("need lo < hi, got [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {tol}")));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa * fb < 0.0) {
        return Err(Error::InvalidBracket {
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }
    // 200 halvings exhaust f64 resolution for any finite bracket.
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    Ok(0.5 * (a + b))
}

/// Golden-section search for the minimiser of `f` on `[lo, hi]`.
/// Stops once the bracket is narrower than `tol`; returns `(x, f(x))`
/// for the best point evaluated.
pub fn golden_section_min<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        for (x, v) in [(c, fc), (d, fd)] {
            if v < best.1 {
                best = (x, v);
            }
        }
    }
    let mid = 0.5 * (a + b);
    let fm = f(mid);
    if fm <= best.1 {
        best = (mid, fm);
    }
    best
}
