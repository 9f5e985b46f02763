//! Adaptive embedded Runge-Kutta integration (Dormand-Prince 5(4)) with
//! cubic-Hermite dense output.
//!
//! The driver is generic over the state dimension so the same code path
//! integrates plain orbits (N = 3) and the variational system (N = 12).
//! Observers see every accepted step as a [`DenseStep`] and can stop the
//! integration early; callers map the end condition onto domain errors.

use nalgebra::SVector;

/// One accepted step with the data needed for cubic Hermite interpolation.
#[derive(Clone, Copy, Debug)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: SVector<f64, N>,
    pub y1: SVector<f64, N>,
    pub f0: SVector<f64, N>,
    pub f1: SVector<f64, N>,
}

impl<const N: usize> DenseStep<N> {
    /// Cubic Hermite interpolant at `t` in `[t0, t1]` (or `[t1, t0]` when
    /// integrating backward).
    pub fn eval(&self, t: f64) -> SVector<f64, N> {
        let h = self.t1 - self.t0;
        let th = (t - self.t0) / h;
        let th2 = th * th;
        let th3 = th2 * th;
        self.y0 * (2.0 * th3 - 3.0 * th2 + 1.0)
            + self.f0 * (h * (th3 - 2.0 * th2 + th))
            + self.y1 * (-2.0 * th3 + 3.0 * th2)
            + self.f1 * (h * (th3 - th2))
    }

    /// Time derivative of the interpolant at `t`.
    pub fn eval_derivative(&self, t: f64) -> SVector<f64, N> {
        let h = self.t1 - self.t0;
        let th = (t - self.t0) / h;
        let th2 = th * th;
        self.y0 * ((6.0 * th2 - 6.0 * th) / h)
            + self.f0 * (3.0 * th2 - 4.0 * th + 1.0)
            + self.y1 * ((6.0 * th - 6.0 * th2) / h)
            + self.f1 * (3.0 * th2 - 2.0 * th)
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.t0 <= self.t1 { (self.t0, self.t1) } else { (self.t1, self.t0) };
        (lo..=hi).contains(&t)
    }
}

/// Observer decision after each accepted step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepControl {
    Continue,
    /// Stop at the end of this step.
    Stop,
    /// Stop at a specific time inside this step; the final state is the
    /// dense-output value there.
    StopAt(f64),
}

/// Why the driver returned.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndKind {
    /// Reached the target time.
    Reached,
    /// An observer requested a stop.
    Stopped,
    /// The step size underflowed (the classic symptom of integrating into a
    /// singularity or other loss of smoothness).
    Underflow,
    /// The step budget ran out.
    MaxSteps,
    /// The right-hand side produced non-finite values that step-halving
    /// could not avoid.
    NonFinite,
}

#[derive(Clone, Copy, Debug)]
pub struct Integration<const N: usize> {
    pub t: f64,
    pub y: SVector<f64, N>,
    pub end: EndKind,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct IntegrateOptions {
    /// Per-step tolerance, used as both absolute and relative weight.
    pub tol: f64,
    /// Upper bound on |step size|.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions { tol: crate::DEFAULT_TOL, h_max: 1.0, max_steps: 20_000_000 }
    }
}

// Dormand-Prince 5(4) coefficients.
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
// b - b*: weights of the embedded error estimate.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Node times are not needed: the right-hand sides here are autonomous.

/// Integrate `y' = f(y)` from `(0, y0)` to `t_end` (which may be negative).
///
/// `on_step` observes each accepted step in order and may stop the run. The
/// returned state is exact RK output when the target time is reached and
/// dense output when an observer stops mid-step.
pub fn integrate<const N: usize>(
    f: &impl Fn(&SVector<f64, N>) -> SVector<f64, N>,
    y0: SVector<f64, N>,
    t_end: f64,
    opts: &IntegrateOptions,
    mut on_step: impl FnMut(&DenseStep<N>) -> StepControl,
) -> Integration<N> {
    let mut t = 0.0;
    let mut y = y0;
    let mut k1 = f(&y);
    if !is_finite(&y) || !is_finite(&k1) {
        return Integration { t, y, end: EndKind::NonFinite, steps: 0 };
    }
    if t_end == 0.0 {
        return Integration { t, y, end: EndKind::Reached, steps: 0 };
    }
    let dir = t_end.signum();
    let tol = opts.tol;
    let mut h = dir * initial_step(f, &y, &k1, tol, opts.h_max, t_end.abs());

    let mut steps = 0usize;
    loop {
        if steps >= opts.max_steps {
            return Integration { t, y, end: EndKind::MaxSteps, steps };
        }
        // Clamp the final step so the endpoint is hit exactly (no dense
        // output error at t_end).
        let mut last = false;
        if (t + h - t_end) * dir >= 0.0 {
            h = t_end - t;
            last = true;
        }
        if h.abs() < 1e-14 * t.abs().max(1.0) {
            if last {
                // Within rounding of the target; call it reached.
                return Integration { t: t_end, y, end: EndKind::Reached, steps };
            }
            return Integration { t, y, end: EndKind::Underflow, steps };
        }

        let k2 = f(&(y + k1 * (A21 * h)));
        let k3 = f(&(y + k1 * (A31 * h) + k2 * (A32 * h)));
        let k4 = f(&(y + k1 * (A41 * h) + k2 * (A42 * h) + k3 * (A43 * h)));
        let k5 = f(&(y + k1 * (A51 * h) + k2 * (A52 * h) + k3 * (A53 * h) + k4 * (A54 * h)));
        let k6 = f(&(y
            + k1 * (A61 * h)
            + k2 * (A62 * h)
            + k3 * (A63 * h)
            + k4 * (A64 * h)
            + k5 * (A65 * h)));
        let y1 = y + (k1 * B1 + k3 * B3 + k4 * B4 + k5 * B5 + k6 * B6) * h;
        let k7 = f(&y1);
        let err_vec = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * h;

        let finite = is_finite(&y1) && is_finite(&err_vec);
        let err = if finite { wrms(&err_vec, &y, &y1, tol) } else { f64::INFINITY };
        steps += 1;

        if err <= 1.0 {
            let step = DenseStep { t0: t, t1: t + h, y0: y, y1, f0: k1, f1: k7 };
            match on_step(&step) {
                StepControl::Continue => {}
                StepControl::Stop => {
                    return Integration { t: step.t1, y: y1, end: EndKind::Stopped, steps };
                }
                StepControl::StopAt(ts) => {
                    let ys = step.eval(ts);
                    return Integration { t: ts, y: ys, end: EndKind::Stopped, steps };
                }
            }
            t += h;
            y = y1;
            k1 = k7; // FSAL
            if last {
                return Integration { t: t_end, y, end: EndKind::Reached, steps };
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = dir * (h.abs() * factor).min(opts.h_max);
        } else {
            if !finite && h.abs() < 1e-13 * t.abs().max(1.0) {
                return Integration { t, y, end: EndKind::NonFinite, steps };
            }
            let factor = if finite { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.5 };
            h *= factor;
        }
    }
}

fn is_finite<const N: usize>(v: &SVector<f64, N>) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Weighted RMS error norm with scale tol * (1 + max(|y0_i|, |y1_i|)).
fn wrms<const N: usize>(
    err: &SVector<f64, N>,
    y0: &SVector<f64, N>,
    y1: &SVector<f64, N>,
    tol: f64,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let scale = tol * (1.0 + y0[i].abs().max(y1[i].abs()));
        let r = err[i] / scale;
        acc += r * r;
    }
    (acc / N as f64).sqrt()
}

/// Standard two-evaluation starting-step heuristic (Hairer-Norsett-Wanner).
fn initial_step<const N: usize>(
    f: &impl Fn(&SVector<f64, N>) -> SVector<f64, N>,
    y0: &SVector<f64, N>,
    f0: &SVector<f64, N>,
    tol: f64,
    h_max: f64,
    t_span: f64,
) -> f64 {
    let norm = |v: &SVector<f64, N>, rel: &SVector<f64, N>| -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let scale = tol * (1.0 + rel[i].abs());
            let r = v[i] / scale;
            acc += r * r;
        }
        (acc / N as f64).sqrt()
    };
    let d0 = norm(y0, y0);
    let d1 = norm(f0, y0);
    let h0 = if d0 >= 1e-5 && d1 >= 1e-5 { 0.01 * d0 / d1 } else { 1e-6 };
    let h0 = h0.min(h_max).min(t_span);
    let y1 = y0 + f0 * h0;
    let f1 = f(&y1);
    let d2 = if is_finite(&f1) { norm(&(f1 - f0), y0) / h0 } else { f64::INFINITY };
    let d_max = d1.max(d2);
    let h1 = if d_max <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d_max).powf(0.2) };
    (100.0 * h0).min(h1).min(h_max).min(t_span)
}
