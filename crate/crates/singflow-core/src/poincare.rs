//! Normal bundle and the four derived flows over regular orbits: the linear
//! Poincare flow, the sectional Poincare flow, and their speed-rescaled
//! variants.
//!
//! The linear flows are orthogonal projections of the integrated tangent
//! flow onto the normal planes N_x = X(x)^perp; they are never integrated as
//! a separate ODE, so the projection identity doubles as a cross-check. The
//! sectional flow is the nonlinear holonomy between affine normal planes,
//! computed by crossing detection on the displaced orbit.

use nalgebra::{Matrix2, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::flow::{self, tangent_flow};
use crate::integrate::{integrate, DenseStep, EndKind, IntegrateOptions, StepControl};
use crate::{DEFAULT_TOL, SPEED_FLOOR};

/// h_rad = `HOLONOMY_RADIUS_FACTOR` * speed / (1 + |DX|).
pub const HOLONOMY_RADIUS_FACTOR: f64 = 0.05;

/// Half-width of the crossing-time window around the target time.
pub const CROSSING_WINDOW: f64 = 0.5;

/// Minimum |X . n| / |X| at a crossing for it to count as transversal.
const TRANSVERSAL_MIN: f64 = 1e-3;

/// Orthonormal basis of the normal plane at a regular point.
///
/// The frame rule is deterministic: with n = X(x)/|X(x)|, take u as the
/// first of (e_x, e_y, e_z) with |u . n| < 0.9, then e1 is u orthonormalized
/// against n and e2 = n x e1.
#[derive(Clone, Copy, Debug)]
pub struct NormalFrame {
    pub base: Vector3<f64>,
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
    pub speed: f64,
}

impl NormalFrame {
    /// Coordinates of the normal component of `w`.
    pub fn project(&self, w: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(w.dot(&self.e1), w.dot(&self.e2))
    }

    /// The 3-vector with the given frame coordinates.
    pub fn embed(&self, coords: &Vector2<f64>) -> Vector3<f64> {
        self.e1 * coords.x + self.e2 * coords.y
    }

    /// Unit flow direction at the base point (e1 x e2 = n by construction).
    pub fn normal(&self) -> Vector3<f64> {
        self.e1.cross(&self.e2)
    }
}

/// A tangent vector constrained to the normal plane at its base point.
#[derive(Clone, Copy, Debug)]
pub struct NormalVector {
    pub frame: NormalFrame,
    pub coords: Vector2<f64>,
}

impl NormalVector {
    pub fn to_ambient(&self) -> Vector3<f64> {
        self.frame.embed(&self.coords)
    }

    pub fn norm(&self) -> f64 {
        self.coords.norm()
    }
}

/// Deterministic orthonormal basis of X(x)^perp.
pub fn normal_frame(field: &FieldSpec, x: &Vector3<f64>) -> Result<NormalFrame> {
    let fx = field.try_evaluate(x)?;
    let speed = fx.norm();
    if speed < SPEED_FLOOR {
        return Err(Error::VanishingField);
    }
    let n = fx / speed;
    let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
    let u = axes.iter().find(|u| u.dot(&n).abs() < 0.9).expect("some axis is transverse");
    let e1 = (u - n * u.dot(&n)).normalize();
    let e2 = n.cross(&e1);
    Ok(NormalFrame { base: *x, e1, e2, speed })
}

fn check_based_at(v: &NormalVector, x: &Vector3<f64>) -> Result<()> {
    if (v.frame.base - x).norm() > 1e-9 * (1.0 + x.norm()) {
        return Err(Error::InvalidArgument(
            "normal vector is not based at the given point".into(),
        ));
    }
    Ok(())
}

/// The 2x2 coordinate matrix of the projection of `dphi` between the two
/// frames: column j is the target-frame coordinates of Pi(dphi * ej).
pub fn project_cocycle(
    frame_x: &NormalFrame,
    frame_y: &NormalFrame,
    dphi: &nalgebra::Matrix3<f64>,
) -> Matrix2<f64> {
    let c1 = frame_y.project(&(dphi * frame_x.e1));
    let c2 = frame_y.project(&(dphi * frame_x.e2));
    Matrix2::from_columns(&[c1, c2])
}

/// The linear Poincare flow as a coordinate matrix, with the frames at both
/// ends. psi_t = Pi_{N_{phi_t(x)}} . Dphi_t | N_x.
pub fn linear_poincare_matrix(
    field: &FieldSpec,
    x: &Vector3<f64>,
    t: f64,
    tol: f64,
) -> Result<(Matrix2<f64>, NormalFrame, NormalFrame)> {
    let frame_x = normal_frame(field, x)?;
    let (y, m) = tangent_flow(field, x, t, tol)?;
    let frame_y = normal_frame(field, &y)?;
    Ok((project_cocycle(&frame_x, &frame_y, &m), frame_x, frame_y))
}

/// psi_t(v), expressed in the frame at phi_t(x).
pub fn linear_poincare(
    field: &FieldSpec,
    x: &Vector3<f64>,
    t: f64,
    v: &NormalVector,
) -> Result<NormalVector> {
    check_based_at(v, x)?;
    let (psi, _, frame_y) = linear_poincare_matrix(field, x, t, DEFAULT_TOL)?;
    Ok(NormalVector { frame: frame_y, coords: psi * v.coords })
}

/// The speed-ratio factor |X(x)| / |X(phi_t(x))| and the matrix of psi*_t.
pub fn rescaled_linear_poincare_matrix(
    field: &FieldSpec,
    x: &Vector3<f64>,
    t: f64,
    tol: f64,
) -> Result<(Matrix2<f64>, NormalFrame, NormalFrame)> {
    let (psi, frame_x, frame_y) = linear_poincare_matrix(field, x, t, tol)?;
    Ok((psi * (frame_x.speed / frame_y.speed), frame_x, frame_y))
}

/// psi*_t(v) = (|X(x)| / |X(phi_t(x))|) psi_t(v).
pub fn rescaled_linear_poincare(
    field: &FieldSpec,
    x: &Vector3<f64>,
    t: f64,
    v: &NormalVector,
) -> Result<NormalVector> {
    check_based_at(v, x)?;
    let (psi_star, _, frame_y) = rescaled_linear_poincare_matrix(field, x, t, DEFAULT_TOL)?;
    Ok(NormalVector { frame: frame_y, coords: psi_star * v.coords })
}

/// Radius of the holonomy tube at `x`: displacements beyond this are
/// rejected rather than silently holonomy-mapped.
pub fn holonomy_radius(field: &FieldSpec, x: &Vector3<f64>) -> Result<f64> {
    let speed = field.try_evaluate(x)?.norm();
    if speed < SPEED_FLOOR {
        return Err(Error::VanishingField);
    }
    let jac_norm = field.jacobian(x).singular_values().max();
    Ok(HOLONOMY_RADIUS_FACTOR * speed / (1.0 + jac_norm))
}

/// P_t(v): follow the orbit of x + v until it crosses the affine plane
/// phi_t(x) + N_{phi_t(x)} transversally, taking the crossing whose time is
/// closest to t within the window |dt| <= `CROSSING_WINDOW`; the returned
/// vector is the crossing offset in the frame at phi_t(x).
pub fn sectional_poincare(
    field: &FieldSpec,
    x: &Vector3<f64>,
    t: f64,
    v: &NormalVector,
    tol: f64,
) -> Result<NormalVector> {
    check_based_at(v, x)?;
    let w = v.to_ambient();
    let radius = holonomy_radius(field, x)?;
    if w.norm() > radius {
        return Err(Error::HolonomyRadius { requested: w.norm(), radius });
    }
    if t == 0.0 {
        return Ok(*v);
    }

    let y = flow::flow(field, x, t, tol)?;
    let frame_y = normal_frame(field, &y)?;
    let n = frame_y.normal();
    // Signed distance from the target plane along the displaced orbit.
    let g = |p: &Vector3<f64>| (p - y).dot(&n);

    let z0 = x + w;
    field.try_evaluate(&z0)?;
    let t_far = t + CROSSING_WINDOW * t.signum();
    let t_near = t - CROSSING_WINDOW * t.signum();

    // Integrate the displaced orbit across the window, keeping the dense
    // steps that overlap it.
    let mut window_steps: Vec<DenseStep<3>> = Vec::new();
    let span = |a: f64, b: f64| if a <= b { (a, b) } else { (b, a) };
    let (w_lo, w_hi) = span(t_near, t_far);
    let opts = IntegrateOptions { tol, ..Default::default() };
    let rhs = |p: &Vector3<f64>| field.evaluate(p);
    let bounds = field.region.inflate(flow::REGION_INFLATE_FRAC);
    let mut fault: Option<Error> = None;
    let run = integrate(&rhs, z0, t_far, &opts, |step| {
        let (s_lo, s_hi) = span(step.t0, step.t1);
        if s_hi >= w_lo && s_lo <= w_hi {
            window_steps.push(*step);
        }
        if !bounds.contains(&step.y1) {
            fault = Some(Error::RegionEscape { t_escape: step.t1, state: step.y1 });
            return StepControl::Stop;
        }
        if field.evaluate(&step.y1).norm() < SPEED_FLOOR {
            fault = Some(Error::ProximityTruncation { t_truncate: step.t1, state: step.y1 });
            return StepControl::Stop;
        }
        StepControl::Continue
    });
    match run.end {
        EndKind::Reached => {}
        EndKind::Stopped => return Err(fault.expect("stop implies fault")),
        EndKind::Underflow => {
            return Err(Error::ProximityTruncation { t_truncate: run.t, state: run.y })
        }
        EndKind::MaxSteps => {
            return Err(Error::MaxSteps { max_steps: opts.max_steps, t_reached: run.t })
        }
        EndKind::NonFinite => return Err(Error::NonFinite { t: run.t }),
    }

    // Bracket sign changes of g on a sub-step scan grid, then keep the
    // bracket whose refined root lies closest to t.
    const SCAN: usize = 8;
    let mut best: Option<(f64, DenseStep<3>, f64, f64)> = None; // (|s-t|, step, s_lo, s_hi)
    for step in &window_steps {
        let (s0, s1) = (step.t0, step.t1);
        let mut prev_s = s0;
        let mut prev_g = g(&step.y0);
        for k in 1..=SCAN {
            let s = s0 + (s1 - s0) * (k as f64 / SCAN as f64);
            let gs = g(&step.eval(s));
            if prev_g == 0.0 || prev_g.signum() != gs.signum() {
                let (c_lo, c_hi) = span(prev_s, s);
                if c_hi >= w_lo && c_lo <= w_hi {
                    let root = bisect_root(step, &g, prev_s, s);
                    if (w_lo..=w_hi).contains(&root) {
                        let d = (root - t).abs();
                        if best.as_ref().is_none_or(|b| d < b.0) {
                            best = Some((d, *step, prev_s, s));
                        }
                    }
                }
            }
            prev_s = s;
            prev_g = gs;
        }
    }
    let Some((_, step, b_lo, b_hi)) = best else {
        return Err(Error::NoCrossing { window: CROSSING_WINDOW });
    };

    // Refine on the dense interpolant, then polish by Newton iteration with
    // short re-integrations from the step start (the interpolant alone is an
    // order lower than the integrator).
    let s_dense = bisect_root(&step, &g, b_lo, b_hi);
    let mut s_star = s_dense;
    for _ in 0..4 {
        let z_star = short_flow(field, &step.y0, s_star - step.t0, tol)?;
        let gs = g(&z_star);
        let dg = field.evaluate(&z_star).dot(&n);
        if dg.abs() < SPEED_FLOOR {
            break;
        }
        let ds = gs / dg;
        s_star -= ds;
        if !(w_lo - 0.1..=w_hi + 0.1).contains(&s_star) {
            return Err(Error::NoCrossing { window: CROSSING_WINDOW });
        }
        if ds.abs() < 1e-14 * s_star.abs().max(1.0) {
            break;
        }
    }
    let z_star = short_flow(field, &step.y0, s_star - step.t0, tol)?;

    let fz = field.evaluate(&z_star);
    if fz.dot(&n).abs() < TRANSVERSAL_MIN * fz.norm() {
        return Err(Error::TangentialCrossing { t: s_star });
    }

    let offset = z_star - y;
    Ok(NormalVector { frame: frame_y, coords: frame_y.project(&offset) })
}

/// P*_t(v) = |X(phi_t(x))|^{-1} P_t(|X(x)| v).
pub fn rescaled_sectional_poincare(
    field: &FieldSpec,
    x: &Vector3<f64>,
    t: f64,
    v: &NormalVector,
    tol: f64,
) -> Result<NormalVector> {
    check_based_at(v, x)?;
    let speed_x = v.frame.speed;
    let scaled = NormalVector { frame: v.frame, coords: v.coords * speed_x };
    let crossed = sectional_poincare(field, x, t, &scaled, tol)?;
    let speed_y = crossed.frame.speed;
    Ok(NormalVector { frame: crossed.frame, coords: crossed.coords / speed_y })
}

fn bisect_root(
    step: &DenseStep<3>,
    g: &impl Fn(&Vector3<f64>) -> f64,
    a: f64,
    b: f64,
) -> f64 {
    let (mut lo, mut hi) = (a, b);
    let mut g_lo = g(&step.eval(lo));
    if g_lo == 0.0 {
        return lo;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let g_mid = g(&step.eval(mid));
        if g_mid == 0.0 {
            return mid;
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One short accurate hop used by the crossing polish: no region or speed
/// checks, the orbit already passed them on this stretch.
fn short_flow(
    field: &FieldSpec,
    y0: &Vector3<f64>,
    dt: f64,
    tol: f64,
) -> Result<Vector3<f64>> {
    if dt == 0.0 {
        return Ok(*y0);
    }
    let opts = IntegrateOptions { tol, ..Default::default() };
    let rhs = |p: &Vector3<f64>| field.evaluate(p);
    let run = integrate(&rhs, *y0, dt, &opts, |_| StepControl::Continue);
    match run.end {
        EndKind::Reached => Ok(run.y),
        EndKind::Underflow => Err(Error::ProximityTruncation { t_truncate: run.t, state: run.y }),
        EndKind::MaxSteps => Err(Error::MaxSteps { max_steps: opts.max_steps, t_reached: run.t }),
        EndKind::NonFinite => Err(Error::NonFinite { t: run.t }),
        EndKind::Stopped => unreachable!("no observer stops"),
    }
}
