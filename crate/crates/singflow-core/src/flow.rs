//! The flow map, the tangent flow, and orbit sampling.
//!
//! All three integrate the same autonomous system; the tangent flow couples
//! the variational equation M' = DX(x) M into a 12-dimensional augmented
//! state rather than finite-differencing the flow. Orbits are confined to an
//! inflated copy of the field region (escape is an error carrying the escape
//! time) and are truncated with a flag when the local speed drops below
//! [`crate::SPEED_FLOOR`].

use nalgebra::{Matrix3, SVector, Vector3};

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::integrate::{integrate, DenseStep, EndKind, IntegrateOptions, StepControl};
use crate::SPEED_FLOOR;

/// Orbits may use this much of each region edge beyond the region itself
/// before escape is declared (10% per side).
pub const REGION_INFLATE_FRAC: f64 = 0.1;

/// Time-stamped orbit samples with the tangent-flow cocycle along them.
#[derive(Clone, Debug)]
pub struct OrbitSegment {
    pub seed: Vector3<f64>,
    /// Increasing, starts at 0.
    pub times: Vec<f64>,
    pub points: Vec<Vector3<f64>>,
    /// `cocycle[i]` is the tangent-flow matrix from the seed to `points[i]`.
    pub cocycle: Vec<Matrix3<f64>>,
    pub speed: Vec<f64>,
    pub truncation: Option<Truncation>,
}

/// Where and when an orbit was cut short by singularity proximity.
#[derive(Clone, Copy, Debug)]
pub struct Truncation {
    pub t: f64,
    pub state: Vector3<f64>,
}

pub(crate) fn pack(x: &Vector3<f64>, m: &Matrix3<f64>) -> SVector<f64, 12> {
    let mut y = SVector::<f64, 12>::zeros();
    y.fixed_rows_mut::<3>(0).copy_from(x);
    for c in 0..3 {
        y.fixed_rows_mut::<3>(3 + 3 * c).copy_from(&m.column(c));
    }
    y
}

pub(crate) fn unpack(y: &SVector<f64, 12>) -> (Vector3<f64>, Matrix3<f64>) {
    let x = Vector3::new(y[0], y[1], y[2]);
    let m = Matrix3::from_fn(|r, c| y[3 + 3 * c + r]);
    (x, m)
}

pub(crate) fn position_of(y: &SVector<f64, 12>) -> Vector3<f64> {
    Vector3::new(y[0], y[1], y[2])
}

/// Right-hand side of the augmented system (x, M) -> (X(x), DX(x) M).
pub(crate) fn augmented_rhs(field: &FieldSpec) -> impl Fn(&SVector<f64, 12>) -> SVector<f64, 12> + '_ {
    move |y| {
        let x = position_of(y);
        let fx = field.evaluate(&x);
        let j = field.jacobian(&x);
        let mut out = SVector::<f64, 12>::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&fx);
        for c in 0..3 {
            let m = Vector3::new(y[3 + 3 * c], y[4 + 3 * c], y[5 + 3 * c]);
            out.fixed_rows_mut::<3>(3 + 3 * c).copy_from(&(j * m));
        }
        out
    }
}

/// What the shared step observer decided about an accepted step.
enum Watch {
    Fine,
    Escaped { t: f64, state: Vector3<f64> },
    Slow { t: f64, state: Vector3<f64> },
}

/// Watches an orbit for region escape and speed-floor crossing. Generic so
/// it serves the 3- and 12-dimensional integrations alike.
struct OrbitWatcher<'a> {
    field: &'a FieldSpec,
    bounds: crate::field::Region,
}

impl<'a> OrbitWatcher<'a> {
    fn new(field: &'a FieldSpec) -> Self {
        OrbitWatcher { field, bounds: field.region.inflate(REGION_INFLATE_FRAC) }
    }

    fn seed_check(&self, x: &Vector3<f64>) -> Result<()> {
        if !self.bounds.contains(x) {
            return Err(Error::RegionEscape { t_escape: 0.0, state: *x });
        }
        if self.field.evaluate(x).norm() < SPEED_FLOOR {
            return Err(Error::ProximityTruncation { t_truncate: 0.0, state: *x });
        }
        Ok(())
    }

    fn inspect<const N: usize>(
        &self,
        step: &DenseStep<N>,
        position: impl Fn(&SVector<f64, N>) -> Vector3<f64>,
    ) -> Watch {
        let x1 = position(&step.y1);
        if !self.bounds.contains(&x1) {
            // Bisect the step for the boundary-crossing time.
            let (mut lo, mut hi) = (step.t0, step.t1);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if self.bounds.contains(&position(&step.eval(mid))) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let state = position(&step.eval(lo));
            return Watch::Escaped { t: lo, state };
        }
        if self.field.evaluate(&x1).norm() < SPEED_FLOOR {
            return Watch::Slow { t: step.t1, state: x1 };
        }
        Watch::Fine
    }
}

fn end_to_error<const N: usize>(
    end: &crate::integrate::Integration<N>,
    position: impl Fn(&SVector<f64, N>) -> Vector3<f64>,
    max_steps: usize,
) -> Error {
    match end.end {
        EndKind::Underflow => {
            Error::ProximityTruncation { t_truncate: end.t, state: position(&end.y) }
        }
        EndKind::MaxSteps => Error::MaxSteps { max_steps, t_reached: end.t },
        EndKind::NonFinite => Error::NonFinite { t: end.t },
        EndKind::Reached | EndKind::Stopped => {
            unreachable!("normal end mapped to error")
        }
    }
}

/// φ_t(x), by adaptive integration at per-step tolerance `tol`.
pub fn flow(field: &FieldSpec, x: &Vector3<f64>, t: f64, tol: f64) -> Result<Vector3<f64>> {
    check_tol(tol)?;
    field.try_evaluate(x)?;
    let watcher = OrbitWatcher::new(field);
    watcher.seed_check(x)?;
    let opts = IntegrateOptions { tol, ..Default::default() };
    let mut fault: Option<Error> = None;
    let rhs = |y: &Vector3<f64>| field.evaluate(y);
    let run = integrate(&rhs, *x, t, &opts, |step| match watcher.inspect(step, |y| *y) {
        Watch::Fine => StepControl::Continue,
        Watch::Escaped { t, state } => {
            fault = Some(Error::RegionEscape { t_escape: t, state });
            StepControl::StopAt(t)
        }
        Watch::Slow { t, state } => {
            fault = Some(Error::ProximityTruncation { t_truncate: t, state });
            StepControl::Stop
        }
    });
    match run.end {
        EndKind::Reached => Ok(run.y),
        EndKind::Stopped => Err(fault.expect("stop implies fault")),
        _ => Err(end_to_error(&run, |y| *y, opts.max_steps)),
    }
}

/// (φ_t(x), Dφ_t(x)) by coupled integration of the variational equation.
pub fn tangent_flow(
    field: &FieldSpec,
    x: &Vector3<f64>,
    t: f64,
    tol: f64,
) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    check_tol(tol)?;
    field.try_evaluate(x)?;
    let watcher = OrbitWatcher::new(field);
    watcher.seed_check(x)?;
    let opts = IntegrateOptions { tol, ..Default::default() };
    let mut fault: Option<Error> = None;
    let rhs = augmented_rhs(field);
    let y0 = pack(x, &Matrix3::identity());
    let run = integrate(&rhs, y0, t, &opts, |step| match watcher.inspect(step, |y| position_of(y)) {
        Watch::Fine => StepControl::Continue,
        Watch::Escaped { t, state } => {
            fault = Some(Error::RegionEscape { t_escape: t, state });
            StepControl::StopAt(t)
        }
        Watch::Slow { t, state } => {
            fault = Some(Error::ProximityTruncation { t_truncate: t, state });
            StepControl::Stop
        }
    });
    match run.end {
        EndKind::Reached => {
            let (xt, m) = unpack(&run.y);
            Ok((xt, m))
        }
        EndKind::Stopped => Err(fault.expect("stop implies fault")),
        _ => Err(end_to_error(&run, |y| position_of(y), opts.max_steps)),
    }
}

/// Sample the forward orbit of `seed` at multiples of `dt_out` up to `T`,
/// accumulating the cocycle alongside. Speed-floor proximity truncates the
/// segment and sets the flag; region escape is an error as in [`flow`].
pub fn sample_orbit(
    field: &FieldSpec,
    seed: &Vector3<f64>,
    t_total: f64,
    dt_out: f64,
    tol: f64,
) -> Result<OrbitSegment> {
    check_tol(tol)?;
    if !(t_total > 0.0) || !(dt_out > 0.0) {
        return Err(Error::InvalidArgument("sample_orbit needs T > 0 and dt_out > 0".into()));
    }
    field.try_evaluate(seed)?;
    let watcher = OrbitWatcher::new(field);
    watcher.seed_check(seed)?;

    let mut seg = OrbitSegment {
        seed: *seed,
        times: vec![0.0],
        points: vec![*seed],
        cocycle: vec![Matrix3::identity()],
        speed: vec![field.evaluate(seed).norm()],
        truncation: None,
    };

    let opts = IntegrateOptions { tol, ..Default::default() };
    let rhs = augmented_rhs(field);
    let y0 = pack(seed, &Matrix3::identity());
    let mut fault: Option<Error> = None;
    let mut next_k: u64 = 1;

    let run = integrate(&rhs, y0, t_total, &opts, |step| {
        let watch = watcher.inspect(step, |y| position_of(y));
        let limit = match &watch {
            Watch::Escaped { t, .. } => *t,
            _ => step.t1,
        };
        // Emit output samples in (t0, limit].
        let slack = 1e-12 * limit.abs().max(1.0);
        while (next_k as f64) * dt_out <= limit + slack {
            let tk = (next_k as f64) * dt_out;
            if tk > t_total + slack {
                break;
            }
            let y = step.eval(tk.min(limit));
            let (x, m) = unpack(&y);
            let speed = field.evaluate(&x).norm();
            if speed < SPEED_FLOOR {
                seg.truncation = Some(Truncation { t: tk, state: x });
                return StepControl::Stop;
            }
            seg.times.push(tk);
            seg.points.push(x);
            seg.cocycle.push(m);
            seg.speed.push(speed);
            next_k += 1;
        }
        match watch {
            Watch::Fine => StepControl::Continue,
            Watch::Escaped { t, state } => {
                fault = Some(Error::RegionEscape { t_escape: t, state });
                StepControl::StopAt(t)
            }
            Watch::Slow { t, state } => {
                seg.truncation = Some(Truncation { t, state });
                StepControl::Stop
            }
        }
    });

    match run.end {
        EndKind::Reached => Ok(seg),
        EndKind::Stopped => {
            if let Some(err) = fault {
                Err(err)
            } else {
                // Speed-floor truncation: partial segment with the flag set.
                Ok(seg)
            }
        }
        EndKind::Underflow => {
            seg.truncation =
                Some(Truncation { t: run.t, state: position_of(&run.y) });
            Ok(seg)
        }
        _ => Err(end_to_error(&run, |y| position_of(y), opts.max_steps)),
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidArgument("tolerance must be positive and finite".into()));
    }
    Ok(())
}

/// Capture (t, φ_t(x), Dφ_t(x)) at each time in `ts` (ascending, positive)
/// along a single forward integration. Region escape or speed-floor
/// proximity truncates the capture — the rows collected so far are returned
/// together with the truncation record — so callers sampling finite-time
/// rates can use partial windows. Only a bad seed or argument is an error.
pub(crate) fn orbit_checkpoints(
    field: &FieldSpec,
    x: &Vector3<f64>,
    ts: &[f64],
    tol: f64,
) -> Result<(Vec<(f64, Vector3<f64>, Matrix3<f64>, f64)>, Option<Truncation>)> {
    check_tol(tol)?;
    if ts.is_empty() || ts[0] <= 0.0 || ts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "checkpoint times must be positive and strictly ascending".into(),
        ));
    }
    field.try_evaluate(x)?;
    let watcher = OrbitWatcher::new(field);
    watcher.seed_check(x)?;
    let t_end = *ts.last().expect("non-empty");
    let opts = IntegrateOptions { tol, ..Default::default() };
    // (x, M, q) with q' = tr DX(x), so det Dφ_t = e^q by the
    // Abel–Jacobi–Liouville formula: the only stable handle on the smallest
    // stretch once the cocycle's condition number outruns f64.
    let base_rhs = augmented_rhs(field);
    let rhs = |y: &SVector<f64, 13>| {
        let base = base_rhs(&y.fixed_rows::<12>(0).into());
        let x = Vector3::new(y[0], y[1], y[2]);
        let mut out = SVector::<f64, 13>::zeros();
        out.fixed_rows_mut::<12>(0).copy_from(&base);
        out[12] = field.jacobian(&x).trace();
        out
    };
    let mut y0 = SVector::<f64, 13>::zeros();
    y0.fixed_rows_mut::<12>(0).copy_from(&pack(x, &Matrix3::identity()));
    let mut rows = Vec::with_capacity(ts.len());
    let mut next = 0usize;
    let mut trunc: Option<Truncation> = None;
    let run = integrate(&rhs, y0, t_end, &opts, |step| {
        let watch = watcher.inspect(step, |y| position_of(&y.fixed_rows::<12>(0).into()));
        let t_ok = match watch {
            Watch::Fine => step.t1,
            Watch::Escaped { t, .. } | Watch::Slow { t, .. } => t,
        };
        while next < ts.len() && ts[next] <= t_ok + 1e-12 {
            let y = step.eval(ts[next].min(step.t1));
            let (p, m) = unpack(&y.fixed_rows::<12>(0).into());
            rows.push((ts[next], p, m, y[12]));
            next += 1;
        }
        match watch {
            Watch::Fine => StepControl::Continue,
            Watch::Escaped { t, state } | Watch::Slow { t, state } => {
                trunc = Some(Truncation { t, state });
                StepControl::Stop
            }
        }
    });
    match run.end {
        EndKind::Reached | EndKind::Stopped => Ok((rows, trunc)),
        EndKind::Underflow => Ok((
            rows,
            Some(Truncation {
                t: run.t,
                state: position_of(&run.y.fixed_rows::<12>(0).into()),
            }),
        )),
        _ => Err(end_to_error(&run, |y| position_of(&y.fixed_rows::<12>(0).into()), opts.max_steps)),
    }
}
