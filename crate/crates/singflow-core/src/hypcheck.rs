//! Singularity classification and finite-time certificates.
//!
//! Everything here is finite-time and sampled: the certificates fit (C, λ)
//! pairs by least squares on log quantities against time and then re-check
//! the fitted inequality pointwise with a slack. A "dominated" or
//! "hyperbolic" verdict is numerical evidence, not a proof, and every
//! report says so through its `assumptions_unchecked` list.
//!
//! Conventions shared by all checks:
//! - Directions are estimated from singular vectors of one forward window
//!   matrix per seed. The most-contracted direction is the bottom right
//!   singular vector — equivalently the top singular direction of the
//!   inverse cocycle — which stays numerically meaningful even when the
//!   smallest singular value underflows, as long as the spectral gap is
//!   healthy. No backward orbit integration is ever required (backward
//!   orbits of a volume-contracting flow blow up).
//! - Expansion laws are measured through reciprocals along the forward
//!   orbit: for a one-dimensional bundle, ‖ψ_{−t}‖ on the image fiber is
//!   exactly 1/‖ψ_t‖ on the source fiber.
//! - Every fitted law is brought to decay form v(t) ≤ C·e^{−λt}.

use std::collections::BTreeSet;

use nalgebra::{Complex, Matrix2, Matrix3, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::chainrec::{BoxCover, BoxSet};
use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::flow::{orbit_checkpoints, sample_orbit};
use crate::poincare::{normal_frame, project_cocycle, NormalFrame};
use crate::{DEFAULT_TOL, SPEED_FLOOR};

/// Spectral resolution for the strict classification inequalities.
pub const EIG_RESOLUTION: f64 = 1e-8;

/// Default certificate window.
pub const DEFAULT_WINDOW: f64 = 10.0;

/// Smallest fitted rate that counts as a uniform bound.
pub const DEFAULT_LAMBDA_MIN: f64 = 0.05;

/// Relative slack applied to the fitted (C, λ) in the pointwise re-check.
pub const DEFAULT_SLACK: f64 = 0.1;

/// Fraction of pointwise samples that must satisfy the slack-adjusted law.
pub const DEFAULT_PASS_FRACTION: f64 = 0.99;

const ASSUME_PERIODIC: &str =
    "every periodic orbit in the class is a hyperbolic saddle (not verified)";
const ASSUME_ROTATION: &str =
    "the class is not a suspension of an irrational rotation (not verified)";
const ASSUME_FINITE: &str =
    "finite-time window and finite seed sampling stand in for uniform bounds";
const ASSUME_BOXES: &str = "the box class over-approximates the invariant set";

// --- singularity classification ---------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SingularityClass {
    /// Real spectrum λ₁ < λ₂ < 0 < −λ₂ < λ₃.
    #[serde(rename = "lorenz_like_for_X")]
    LorenzLikeForX,
    /// The negated spectrum satisfies the same chain.
    #[serde(rename = "lorenz_like_for_minus_X")]
    LorenzLikeForMinusX,
    #[serde(rename = "hyperbolic_other")]
    HyperbolicOther,
    #[serde(rename = "non_hyperbolic")]
    NonHyperbolic,
}

#[derive(Clone, Debug, Serialize)]
pub struct SingularityRecord {
    pub position: [f64; 3],
    /// (re, im) pairs sorted by real part, then imaginary part.
    pub eigenvalues: [[f64; 2]; 3],
    /// Unit eigenvectors for the real eigenvalues (None for members of a
    /// complex pair).
    pub eigenvectors: [Option<[f64; 3]>; 3],
    pub classification: SingularityClass,
    /// The classification sits within EIG_RESOLUTION of a decision
    /// boundary: a spectral perturbation of that size could flip it.
    pub resolution_limited: bool,
    /// A repeated eigenvalue has a deficient eigenspace; classification by
    /// eigenvalues alone.
    pub non_diagonalizable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wss_check: Option<WssCheck>,
}

fn lorenz_chain(l: &[f64; 3], margin: f64) -> bool {
    l[1] - l[0] > margin        // λ₁ < λ₂
        && -l[1] > margin       // λ₂ < 0
        && l[2] > margin        // 0 < λ₃
        && l[2] + l[1] > margin // −λ₂ < λ₃
}

fn spectrum_class(eigs: &[Complex<f64>; 3], margin: f64) -> SingularityClass {
    if eigs.iter().any(|z| z.re.abs() <= margin) {
        return SingularityClass::NonHyperbolic;
    }
    if eigs.iter().all(|z| z.im.abs() <= EIG_RESOLUTION) {
        let l = [eigs[0].re, eigs[1].re, eigs[2].re];
        if lorenz_chain(&l, margin) {
            return SingularityClass::LorenzLikeForX;
        }
        let neg = [-l[2], -l[1], -l[0]];
        if lorenz_chain(&neg, margin) {
            return SingularityClass::LorenzLikeForMinusX;
        }
    }
    SingularityClass::HyperbolicOther
}

/// Flip signs so the largest-magnitude component is positive.
fn canon_sign3(v: Vector3<f64>) -> Vector3<f64> {
    let i = v.iter().map(|c| c.abs()).enumerate().fold((0, 0.0), |best, (i, a)| {
        if a > best.1 {
            (i, a)
        } else {
            best
        }
    });
    if v[i.0] < 0.0 {
        -v
    } else {
        v
    }
}

fn canon_sign2(v: Vector2<f64>) -> Vector2<f64> {
    if (v.x.abs() >= v.y.abs() && v.x < 0.0) || (v.y.abs() > v.x.abs() && v.y < 0.0) {
        -v
    } else {
        v
    }
}

/// Eigen-classify the singular point σ of the field. The caller vouches
/// that σ is a zero (‖X(σ)‖ < 1e-10).
pub fn classify_singularity(field: &FieldSpec, sigma: &Vector3<f64>) -> Result<SingularityRecord> {
    let speed = field.try_evaluate(sigma)?.norm();
    if speed >= 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "not a singular point: ‖X(σ)‖ = {speed:.3e}"
        )));
    }
    let j = field.jacobian(sigma);
    let mut eigs: Vec<Complex<f64>> = j.complex_eigenvalues().iter().copied().collect();
    eigs.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).expect("finite eigenvalues"));
    let eigs: [Complex<f64>; 3] = [eigs[0], eigs[1], eigs[2]];

    let classification = spectrum_class(&eigs, EIG_RESOLUTION);
    let lenient = spectrum_class(&eigs, -EIG_RESOLUTION);
    let resolution_limited = classification != lenient;

    // Eigenvectors for real eigenvalues: kernel directions of J − λI.
    let mut eigenvectors: [Option<[f64; 3]>; 3] = [None; 3];
    for (k, z) in eigs.iter().enumerate() {
        if z.im.abs() <= EIG_RESOLUTION {
            let shifted = j - Matrix3::identity() * z.re;
            let svd = shifted.svd(false, true);
            let vals = &svd.singular_values;
            let mut arg = 0;
            for i in 1..3 {
                if vals[i] < vals[arg] {
                    arg = i;
                }
            }
            let v_t = svd.v_t.expect("requested V^T");
            let v = canon_sign3(v_t.row(arg).transpose().normalize());
            eigenvectors[k] = Some([v.x, v.y, v.z]);
        }
    }

    // Defectiveness: a cluster of m nearby eigenvalues whose joint
    // eigenspace has fewer than m near-kernel directions.
    let scale = j.norm().max(1.0);
    let ctol = 1e-6 * scale;
    let mut non_diagonalizable = false;
    let mut k = 0;
    while k < 3 {
        let mut m = 1;
        while k + m < 3 && (eigs[k + m] - eigs[k]).norm() <= ctol {
            m += 1;
        }
        if m >= 2 && eigs[k].im.abs() <= EIG_RESOLUTION {
            let shifted = j - Matrix3::identity() * eigs[k].re;
            let geo = shifted.singular_values().iter().filter(|&&s| s <= ctol).count();
            if geo < m {
                non_diagonalizable = true;
            }
        }
        k += m;
    }

    Ok(SingularityRecord {
        position: [sigma.x, sigma.y, sigma.z],
        eigenvalues: [
            [eigs[0].re, eigs[0].im],
            [eigs[1].re, eigs[1].im],
            [eigs[2].re, eigs[2].im],
        ],
        eigenvectors,
        classification,
        resolution_limited,
        non_diagonalizable,
        wss_check: None,
    })
}

// --- splitting certificates --------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    Tangent,
    LinearPoincare,
    RescaledLinearPoincare,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitVerdict {
    Dominated,
    Contracted,
    AreaExpanding,
    Failed,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Fitted {
    #[serde(rename = "C")]
    pub c: f64,
    pub lambda: f64,
}

/// One seed's estimated directions. `e` and the columns of `f` are unit
/// vectors: ambient (length 3) for the tangent kind, normal-frame
/// coordinates (length 2) for the Poincaré kinds. For the tangent kind `f`
/// spans a 2-plane whose first column is the unit field direction.
#[derive(Clone, Debug, Serialize)]
pub struct SplitSample {
    pub point: [f64; 3],
    pub e: Vec<f64>,
    pub f: Vec<Vec<f64>>,
    /// Window actually reached when estimating (≤ the requested window for
    /// orbits truncated by region escape or singularity proximity).
    pub t_window: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SplittingCertificate {
    pub flow_kind: FlowKind,
    pub window: f64,
    pub samples: Vec<SplitSample>,
    pub checkpoints: Vec<f64>,
    /// Per-sample OLS slope of the checked log quantity against t.
    pub exponents: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted: Option<Fitted>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<SplitVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    pub n_samples: usize,
    pub n_failures: usize,
    pub assumptions_unchecked: Vec<String>,
}

impl SplittingCertificate {
    pub fn passed(&self) -> bool {
        matches!(
            self.verdict,
            Some(SplitVerdict::Dominated)
                | Some(SplitVerdict::Contracted)
                | Some(SplitVerdict::AreaExpanding)
        )
    }
}

fn right_singular_extremes2(m: &Matrix2<f64>) -> (Vector2<f64>, Vector2<f64>) {
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (mut top, mut bot) = (0, 0);
    for i in 1..2 {
        if svd.singular_values[i] > svd.singular_values[top] {
            top = i;
        }
        if svd.singular_values[i] < svd.singular_values[bot] {
            bot = i;
        }
    }
    (v_t.row(top).transpose().normalize(), v_t.row(bot).transpose().normalize())
}

fn right_singular_extremes3(m: &Matrix3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (mut top, mut bot) = (0, 0);
    for i in 1..3 {
        if svd.singular_values[i] > svd.singular_values[top] {
            top = i;
        }
        if svd.singular_values[i] < svd.singular_values[bot] {
            bot = i;
        }
    }
    (v_t.row(top).transpose().normalize(), v_t.row(bot).transpose().normalize())
}

/// Integer checkpoint ladder 1, 2, …, plus T itself.
fn default_checkpoints(t_window: f64) -> Vec<f64> {
    let mut ts: Vec<f64> = (1..=t_window.floor() as usize).map(|k| k as f64).collect();
    if ts.last().copied() != Some(t_window) && t_window > 0.0 {
        ts.push(t_window);
    }
    ts
}

/// Capture times for the window-matrix estimate. Finer than the checkpoint
/// ladder so orbits truncated well before T still leave a usable partial
/// window; the cost is unchanged (one integration either way).
fn estimation_ladder(t_window: f64) -> Vec<f64> {
    (1..=16).map(|k| t_window * k as f64 / 16.0).collect()
}

/// The ψ or ψ* matrix over [0, t] assembled from the ambient cocycle and
/// the normal frames at departure and arrival.
fn poincare_matrix(
    kind: FlowKind,
    frame_x: &NormalFrame,
    frame_y: &NormalFrame,
    m: &Matrix3<f64>,
) -> Matrix2<f64> {
    let psi = project_cocycle(frame_x, frame_y, m);
    match kind {
        FlowKind::RescaledLinearPoincare => psi * (frame_x.speed / frame_y.speed),
        _ => psi,
    }
}

/// Estimate the splitting directions at each seed from the singular vectors
/// of the forward window cocycle. Seeds whose orbit yields no usable window
/// (bad seed, immediate truncation) are skipped and counted.
pub fn estimate_splitting(
    field: &FieldSpec,
    seeds: &[Vector3<f64>],
    t_window: f64,
    kind: FlowKind,
) -> Result<SplittingCertificate> {
    if !(t_window > 0.0) || !t_window.is_finite() {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    let ladder = estimation_ladder(t_window);
    let mut samples = Vec::new();
    let mut n_failures = 0usize;
    for seed in seeds {
        match estimate_at(field, seed, &ladder, kind) {
            Some(s) => samples.push(s),
            None => n_failures += 1,
        }
    }
    let n_samples = samples.len();
    Ok(SplittingCertificate {
        flow_kind: kind,
        window: t_window,
        samples,
        checkpoints: Vec::new(),
        exponents: Vec::new(),
        fitted: None,
        verdict: None,
        margin: None,
        n_samples,
        n_failures,
        assumptions_unchecked: Vec::new(),
    })
}

fn estimate_at(
    field: &FieldSpec,
    seed: &Vector3<f64>,
    ladder: &[f64],
    kind: FlowKind,
) -> Option<SplitSample> {
    let (rows, _trunc) = orbit_checkpoints(field, seed, ladder, DEFAULT_TOL).ok()?;
    match kind {
        FlowKind::Tangent => {
            let speed_vec = field.evaluate(seed);
            if speed_vec.norm() < SPEED_FLOOR {
                return None;
            }
            let (t_eff, _, m, _) = rows.last()?.to_owned();
            let xhat = speed_vec.normalize();
            let (_, e) = right_singular_extremes3(&m);
            let e = canon_sign3(e);
            // Most-expanded direction of the cocycle restricted to the
            // normal complement, folded into a plane with the flow
            // direction.
            let proj = Matrix3::identity() - xhat * xhat.transpose();
            let (w, _) = right_singular_extremes3(&(m * proj));
            let g = w - xhat * xhat.dot(&w);
            let norm = g.norm();
            if norm < 1e-12 {
                return None;
            }
            let g = canon_sign3(g / norm);
            Some(SplitSample {
                point: [seed.x, seed.y, seed.z],
                e: vec![e.x, e.y, e.z],
                f: vec![vec![xhat.x, xhat.y, xhat.z], vec![g.x, g.y, g.z]],
                t_window: t_eff,
            })
        }
        FlowKind::LinearPoincare | FlowKind::RescaledLinearPoincare => {
            let frame_x = normal_frame(field, seed).ok()?;
            // Walk back from the furthest row until the arrival frame is
            // well-defined.
            for (t_eff, y, m, _) in rows.iter().rev() {
                if let Ok(frame_y) = normal_frame(field, y) {
                    let psi = poincare_matrix(kind, &frame_x, &frame_y, m);
                    let (f, e) = right_singular_extremes2(&psi);
                    return Some(SplitSample {
                        point: [seed.x, seed.y, seed.z],
                        e: canon_sign2(e).iter().copied().collect(),
                        f: vec![canon_sign2(f).iter().copied().collect()],
                        t_window: *t_eff,
                    });
                }
            }
            None
        }
    }
}

// --- rate laws ---------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RateLaw {
    /// log(‖Φ_t e‖ / growth of F) decays.
    DominationRatio,
    /// log‖Φ_t e‖ decays.
    Contraction,
    /// −log‖Φ_t f‖ decays (backward contraction of F, via reciprocals).
    Expansion,
    /// −log area(Φ_t|F-plane) decays.
    AreaExpansion,
}

impl RateLaw {
    fn pass_verdict(self) -> SplitVerdict {
        match self {
            RateLaw::DominationRatio => SplitVerdict::Dominated,
            RateLaw::Contraction | RateLaw::Expansion => SplitVerdict::Contracted,
            RateLaw::AreaExpansion => SplitVerdict::AreaExpanding,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RateOptions {
    pub lambda_min: f64,
    pub slack: f64,
    pub min_pass_fraction: f64,
    pub tol: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            lambda_min: DEFAULT_LAMBDA_MIN,
            slack: DEFAULT_SLACK,
            min_pass_fraction: DEFAULT_PASS_FRACTION,
            tol: DEFAULT_TOL,
        }
    }
}

fn ols(points: impl Iterator<Item = (f64, f64)> + Clone) -> Option<(f64, f64)> {
    let (mut n, mut st, mut sy, mut stt, mut sty) = (0.0f64, 0.0, 0.0, 0.0, 0.0);
    for (t, y) in points {
        n += 1.0;
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    let var = n * stt - st * st;
    if n < 2.0 || var <= 0.0 {
        return None;
    }
    let slope = (n * sty - st * sy) / var;
    let intercept = (sy - slope * st) / n;
    Some((intercept, slope))
}

/// Lift a direction sample out of its serialized form.
fn unit_from(v: &[f64]) -> Option<Vector3<f64>> {
    match v {
        [a, b, c] => {
            let v = Vector3::new(*a, *b, *c);
            let n = v.norm();
            (n > 0.0).then(|| v / n)
        }
        _ => None,
    }
}

fn unit2_from(v: &[f64]) -> Option<Vector2<f64>> {
    match v {
        [a, b] => {
            let v = Vector2::new(*a, *b);
            let n = v.norm();
            (n > 0.0).then(|| v / n)
        }
        _ => None,
    }
}

/// Collect (t, log value) rows for one sample under the given law, along a
/// single forward integration. Rows stop at truncation; None means the seed
/// produced nothing.
fn law_logs(
    field: &FieldSpec,
    sample: &SplitSample,
    kind: FlowKind,
    law: RateLaw,
    checkpoints: &[f64],
    tol: f64,
) -> Option<Vec<(f64, f64)>> {
    let x = Vector3::from(sample.point);
    let (rows, _trunc) = orbit_checkpoints(field, &x, checkpoints, tol).ok()?;
    if rows.is_empty() {
        return None;
    }
    let mut logs = Vec::with_capacity(rows.len());
    match kind {
        FlowKind::Tangent => {
            let _e = unit_from(&sample.e)?;
            let f_cols: Vec<Vector3<f64>> =
                sample.f.iter().filter_map(|c| unit_from(c)).collect();
            if f_cols.len() != sample.f.len() || f_cols.is_empty() {
                return None;
            }
            for (t, _y, m, q) in &rows {
                // Contracting rates come from det Φ_t = e^q (Liouville):
                // the least stretch is e^q/(σ₁σ₂). Applying Φ_t to the
                // estimated E direction instead drowns in the direction's
                // estimation error once the contraction is deep, because
                // the error component grows at the top rate.
                let log_v = match law {
                    RateLaw::DominationRatio => {
                        let (s1, s2) = top_two_singular(m);
                        q - s1.ln() - 2.0 * s2.ln()
                    }
                    RateLaw::Contraction => {
                        let (s1, s2) = top_two_singular(m);
                        q - s1.ln() - s2.ln()
                    }
                    RateLaw::Expansion => {
                        if f_cols.len() != 1 {
                            return None;
                        }
                        -(m * f_cols[0]).norm().ln()
                    }
                    RateLaw::AreaExpansion => {
                        if f_cols.len() != 2 {
                            return None;
                        }
                        -(m * f_cols[0]).cross(&(m * f_cols[1])).norm().ln()
                    }
                };
                if log_v.is_finite() {
                    logs.push((*t, log_v));
                }
            }
        }
        FlowKind::LinearPoincare | FlowKind::RescaledLinearPoincare => {
            let _e = unit2_from(&sample.e)?;
            let f = sample.f.first().and_then(|c| unit2_from(c))?;
            let frame_x = normal_frame(field, &x).ok()?;
            for (t, y, m, q) in &rows {
                let Ok(frame_y) = normal_frame(field, y) else {
                    break; // arrived too close to a singularity; keep earlier rows
                };
                let psi = poincare_matrix(kind, &frame_x, &frame_y, m);
                // Φ_t is block-triangular over the flow splitting
                // (Φ_t X(x) = X(y)), so det ψ = e^q · s_x/s_y; the rescaled
                // map multiplies that by (s_x/s_y)² more. Positive in all
                // cases, and the stable route to the small stretch σ₂.
                let log_sr = (frame_x.speed / frame_y.speed).ln();
                let log_det = match kind {
                    FlowKind::RescaledLinearPoincare => q + 3.0 * log_sr,
                    _ => q + log_sr,
                };
                let log_s1 = {
                    let sv = psi.singular_values();
                    sv[0].max(sv[1]).ln()
                };
                let log_v = match law {
                    RateLaw::DominationRatio => log_det - 2.0 * log_s1,
                    RateLaw::Contraction => log_det - log_s1,
                    RateLaw::Expansion => -(psi * f).norm().ln(),
                    RateLaw::AreaExpansion => return None,
                };
                if log_v.is_finite() {
                    logs.push((*t, log_v));
                }
            }
        }
    }
    (!logs.is_empty()).then_some(logs)
}

/// The two largest singular values, in order.
fn top_two_singular(m: &Matrix3<f64>) -> (f64, f64) {
    let sv = m.singular_values();
    let mut s = [sv[0], sv[1], sv[2]];
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    (s[0], s[1])
}

/// How a fitted rate becomes a verdict. Domination and hyperbolicity
/// certify a uniform-constant law, so the fit is re-checked pointwise with
/// slack; the singular-hyperbolic sub-rates certify fitted signs only — a
/// pooled prefactor has no chance against finite-time fluctuations when
/// the rate itself is small.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum VerdictGate {
    PointwiseLaw,
    FitSign,
}

/// Pooled decay fit, gated per [`VerdictGate`]: the core of every verdict.
fn rate_pass(
    field: &FieldSpec,
    base: &SplittingCertificate,
    law: RateLaw,
    checkpoints: &[f64],
    opts: &RateOptions,
    gate: VerdictGate,
) -> Result<SplittingCertificate> {
    validate_checkpoints(checkpoints, base.window)?;
    let mut kept: Vec<(SplitSample, Vec<(f64, f64)>)> = Vec::new();
    let mut n_failures = base.n_failures;
    for sample in &base.samples {
        match law_logs(field, sample, base.flow_kind, law, checkpoints, opts.tol) {
            Some(logs) => kept.push((sample.clone(), logs)),
            None => n_failures += 1,
        }
    }
    let all = kept.iter().flat_map(|(_, logs)| logs.iter().copied());
    let total = all.clone().count();
    let distinct_t: BTreeSet<u64> = all.clone().map(|(t, _)| t.to_bits()).collect();
    if total < 3 || distinct_t.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{total} pooled log values over {} distinct checkpoint times",
            distinct_t.len()
        )));
    }
    let (intercept, slope) = ols(all.clone()).expect("enough points checked above");
    let lambda = -slope;
    let c = intercept.exp();

    // Pointwise law with slack: log v ≤ log C + log(1+slack) − λ(1−slack)·t,
    // required at every checkpoint for a sample to count.
    let slackened = |t: f64| intercept + opts.slack.ln_1p() - lambda * (1.0 - opts.slack) * t;
    let ok = kept
        .iter()
        .filter(|(_, logs)| logs.iter().all(|(t, y)| *y <= slackened(*t)))
        .count();
    let fraction = ok as f64 / kept.len() as f64;
    let pointwise_ok = match gate {
        VerdictGate::PointwiseLaw => fraction >= opts.min_pass_fraction,
        VerdictGate::FitSign => true,
    };
    let pass = lambda > opts.lambda_min && pointwise_ok;

    let exponents = kept
        .iter()
        .map(|(_, logs)| ols(logs.iter().copied()).map(|(_, s)| s).unwrap_or(f64::NAN))
        .collect();
    let n_samples = kept.len();
    Ok(SplittingCertificate {
        flow_kind: base.flow_kind,
        window: base.window,
        samples: kept.into_iter().map(|(s, _)| s).collect(),
        checkpoints: checkpoints.to_vec(),
        exponents,
        fitted: Some(Fitted { c, lambda }),
        verdict: Some(if pass { law.pass_verdict() } else { SplitVerdict::Failed }),
        margin: Some(lambda - opts.lambda_min),
        n_samples,
        n_failures,
        assumptions_unchecked: vec![ASSUME_FINITE.into()],
    })
}

fn validate_checkpoints(checkpoints: &[f64], window: f64) -> Result<()> {
    if checkpoints.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 checkpoints, got {}",
            checkpoints.len()
        )));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("checkpoints must be strictly ascending".into()));
    }
    let (first, last) = (checkpoints[0], *checkpoints.last().expect("non-empty"));
    if first <= 0.0 || last > window * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "checkpoints must lie in (0, {window}], got [{first}, {last}]"
        )));
    }
    Ok(())
}

/// Fit and verify the domination law ‖Φ_t|E‖ ≤ C e^{−λt} ‖Φ_t|F‖ on the
/// certificate's samples at the given checkpoints.
pub fn check_domination(
    field: &FieldSpec,
    certificate: &SplittingCertificate,
    checkpoints: &[f64],
) -> Result<SplittingCertificate> {
    check_domination_with(field, certificate, checkpoints, &RateOptions::default())
}

pub fn check_domination_with(
    field: &FieldSpec,
    certificate: &SplittingCertificate,
    checkpoints: &[f64],
    opts: &RateOptions,
) -> Result<SplittingCertificate> {
    rate_pass(field, certificate, RateLaw::DominationRatio, checkpoints, opts, VerdictGate::PointwiseLaw)
}

// --- class certificates ------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Forward,
    Reverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassVerdict {
    Hyperbolic,
    NotHyperbolic,
    SingularHyperbolicAttractor,
    SingularHyperbolicRepeller,
    NotSingularHyperbolic,
    StructuralFailure,
    IsolatedSingularity,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassCertificate {
    pub checker: &'static str,
    pub verdict: ClassVerdict,
    pub margin: f64,
    pub window: f64,
    pub orientation: Orientation,
    pub n_samples: usize,
    pub n_failures: usize,
    pub singularities: Vec<SingularityRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structural_failure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contraction: Option<SplittingCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expansion: Option<SplittingCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub area_expansion: Option<SplittingCertificate>,
    pub assumptions_unchecked: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ClassOptions {
    pub rate: RateOptions,
    /// None → integer ladder 1..T plus T.
    pub checkpoints: Option<Vec<f64>>,
    /// Grid resolution for the singularity scan.
    pub grid_n: usize,
    /// Seed offset for the strong stable trace; None → 1e-3 × max box edge.
    pub wss_delta: Option<f64>,
    /// Near-σ exclusion radius; None → 2 × box diameter.
    pub wss_r_loc: Option<f64>,
    pub wss_t_max: f64,
    /// Arc-length cap in box diameters.
    pub wss_arc_factor: f64,
}

impl Default for ClassOptions {
    fn default() -> Self {
        ClassOptions {
            rate: RateOptions::default(),
            checkpoints: None,
            grid_n: 8,
            wss_delta: None,
            wss_r_loc: None,
            wss_t_max: 40.0,
            wss_arc_factor: 12.0,
        }
    }
}

fn class_assumptions() -> Vec<String> {
    vec![
        ASSUME_PERIODIC.into(),
        ASSUME_ROTATION.into(),
        ASSUME_FINITE.into(),
        ASSUME_BOXES.into(),
    ]
}

fn singularities_in_class(
    field: &FieldSpec,
    class: &BoxSet,
    grid_n: usize,
) -> Result<Vec<Vector3<f64>>> {
    let found = field.find_singularities(grid_n)?;
    Ok(found
        .iter()
        .map(|s| s.point())
        .filter(|p| class.contains_point_padded(p, 1))
        .collect())
}

fn usable_seeds(field: &FieldSpec, class: &BoxSet, seeds: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    seeds
        .iter()
        .filter(|p| class.is_empty() || class.contains_point_padded(p, 1))
        .filter(|p| field.evaluate(p).norm() >= SPEED_FLOOR)
        .copied()
        .collect()
}

/// Certify uniform hyperbolicity of a singularity-free class: E^s
/// contraction and E^u expansion of the linear Poincaré flow, directions
/// from [`estimate_splitting`].
pub fn check_hyperbolic(
    field: &FieldSpec,
    class: &BoxSet,
    seeds: &[Vector3<f64>],
    t_window: f64,
) -> Result<ClassCertificate> {
    check_hyperbolic_with(field, class, seeds, t_window, &ClassOptions::default())
}

pub fn check_hyperbolic_with(
    field: &FieldSpec,
    class: &BoxSet,
    seeds: &[Vector3<f64>],
    t_window: f64,
    opts: &ClassOptions,
) -> Result<ClassCertificate> {
    if class.is_empty() {
        return Err(Error::InvalidArgument("class is empty".into()));
    }
    if let Some(p) = singularities_in_class(field, class, opts.grid_n)?.first() {
        return Err(Error::WrongChecker { position: [p.x, p.y, p.z] });
    }
    let seeds = usable_seeds(field, class, seeds);
    if seeds.is_empty() {
        return Err(Error::InsufficientData("no regular seeds in the class".into()));
    }
    let checkpoints =
        opts.checkpoints.clone().unwrap_or_else(|| default_checkpoints(t_window));
    let est = estimate_splitting(field, &seeds, t_window, FlowKind::LinearPoincare)?;
    let contraction =
        rate_pass(field, &est, RateLaw::Contraction, &checkpoints, &opts.rate, VerdictGate::PointwiseLaw)?;
    let expansion =
        rate_pass(field, &est, RateLaw::Expansion, &checkpoints, &opts.rate, VerdictGate::PointwiseLaw)?;
    let pass = contraction.passed() && expansion.passed();
    let margin = contraction
        .margin
        .unwrap_or(f64::NEG_INFINITY)
        .min(expansion.margin.unwrap_or(f64::NEG_INFINITY));
    Ok(ClassCertificate {
        checker: "hyperbolic",
        verdict: if pass { ClassVerdict::Hyperbolic } else { ClassVerdict::NotHyperbolic },
        margin,
        window: t_window,
        orientation: Orientation::Forward,
        n_samples: est.n_samples,
        n_failures: est.n_failures,
        singularities: Vec::new(),
        structural_failure: None,
        contraction: Some(contraction),
        expansion: Some(expansion),
        area_expansion: None,
        assumptions_unchecked: class_assumptions(),
    })
}

/// Certify singular hyperbolicity of a class containing singularities:
/// all singularities Lorenz-like for the chosen orientation with disjoint
/// local strong stable manifolds, E^ss contracted, and area on E^cu
/// expanding. Reverse orientation runs the same checks on −X and reports a
/// repeller.
pub fn check_singular_hyperbolic(
    field: &FieldSpec,
    class: &BoxSet,
    seeds: &[Vector3<f64>],
    t_window: f64,
    orientation: Orientation,
) -> Result<ClassCertificate> {
    check_singular_hyperbolic_with(field, class, seeds, t_window, orientation, &ClassOptions::default())
}

pub fn check_singular_hyperbolic_with(
    field: &FieldSpec,
    class: &BoxSet,
    seeds: &[Vector3<f64>],
    t_window: f64,
    orientation: Orientation,
    opts: &ClassOptions,
) -> Result<ClassCertificate> {
    if class.is_empty() {
        return Err(Error::InvalidArgument("class is empty".into()));
    }
    let sing_points = singularities_in_class(field, class, opts.grid_n)?;
    if sing_points.is_empty() {
        return Err(Error::InvalidArgument(
            "class contains no singularity; use the hyperbolic checker".into(),
        ));
    }
    let work_field = match orientation {
        Orientation::Forward => field.clone(),
        Orientation::Reverse => field.reverse(),
    };

    let mut records = Vec::with_capacity(sing_points.len());
    for p in &sing_points {
        records.push(classify_singularity(field, p)?);
    }
    let wanted = match orientation {
        Orientation::Forward => SingularityClass::LorenzLikeForX,
        Orientation::Reverse => SingularityClass::LorenzLikeForMinusX,
    };
    if let Some(bad) = records.iter().find(|r| r.classification != wanted) {
        return Ok(ClassCertificate {
            checker: "singular_hyperbolic",
            verdict: ClassVerdict::StructuralFailure,
            margin: 0.0,
            window: t_window,
            orientation,
            n_samples: 0,
            n_failures: 0,
            structural_failure: Some(format!(
                "singularity at {:?} is {:?}, expected {:?}",
                bad.position, bad.classification, wanted
            )),
            singularities: records,
            contraction: None,
            expansion: None,
            area_expansion: None,
            assumptions_unchecked: class_assumptions(),
        });
    }

    // Strong stable disjointness, traced for the working orientation.
    let wss_opts = WssOptions {
        r_loc: opts.wss_r_loc.unwrap_or(2.0 * class.cover.box_diameter()),
        t_max: opts.wss_t_max,
        arc_max: opts.wss_arc_factor * class.cover.box_diameter(),
        tol: opts.rate.tol,
    };
    let delta = opts
        .wss_delta
        .unwrap_or(1e-3 * class.cover.h.iter().cloned().fold(0.0, f64::max));
    let mut all_wss_pass = true;
    for rec in &mut records {
        let work_rec = classify_singularity(&work_field, &Vector3::from(rec.position))?;
        let wss = check_strong_stable_disjoint_with(&work_field, &work_rec, class, delta, &wss_opts)?;
        all_wss_pass &= wss.pass;
        rec.wss_check = Some(wss);
    }

    let seeds = usable_seeds(field, class, seeds);
    if seeds.is_empty() {
        return Ok(ClassCertificate {
            checker: "singular_hyperbolic",
            verdict: ClassVerdict::IsolatedSingularity,
            margin: 0.0,
            window: t_window,
            orientation,
            n_samples: 0,
            n_failures: 0,
            singularities: records,
            structural_failure: None,
            contraction: None,
            expansion: None,
            area_expansion: None,
            assumptions_unchecked: class_assumptions(),
        });
    }

    let checkpoints =
        opts.checkpoints.clone().unwrap_or_else(|| default_checkpoints(t_window));
    let est = estimate_splitting(&work_field, &seeds, t_window, FlowKind::Tangent)?;
    let contraction =
        rate_pass(&work_field, &est, RateLaw::Contraction, &checkpoints, &opts.rate, VerdictGate::FitSign)?;
    let area =
        rate_pass(&work_field, &est, RateLaw::AreaExpansion, &checkpoints, &opts.rate, VerdictGate::FitSign)?;
    let pass = contraction.passed() && area.passed() && all_wss_pass;
    let margin = contraction
        .margin
        .unwrap_or(f64::NEG_INFINITY)
        .min(area.margin.unwrap_or(f64::NEG_INFINITY));
    let verdict = if pass {
        match orientation {
            Orientation::Forward => ClassVerdict::SingularHyperbolicAttractor,
            Orientation::Reverse => ClassVerdict::SingularHyperbolicRepeller,
        }
    } else {
        ClassVerdict::NotSingularHyperbolic
    };
    Ok(ClassCertificate {
        checker: "singular_hyperbolic",
        verdict,
        margin,
        window: t_window,
        orientation,
        n_samples: est.n_samples,
        n_failures: est.n_failures,
        singularities: records,
        structural_failure: None,
        contraction: Some(contraction),
        expansion: None,
        area_expansion: Some(area),
        assumptions_unchecked: class_assumptions(),
    })
}

// --- strong stable manifold heuristic ----------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WssOutcome {
    /// The trace moved beyond r_loc and never met the class boxes.
    Clear,
    /// The trace left the region of interest (counts as pass).
    Escaped,
    /// A traced point beyond r_loc fell inside the inflated class boxes.
    HitClass,
    /// The trace never probed beyond r_loc within its caps (counts as
    /// fail: nothing was learned).
    Stalled,
}

#[derive(Clone, Debug, Serialize)]
pub struct WssBranch {
    pub outcome: WssOutcome,
    /// Backward time reached (negative).
    pub t_end: f64,
    pub arc_length: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hit: Option<[f64; 3]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WssCheck {
    pub pass: bool,
    pub delta: f64,
    pub r_loc: f64,
    pub branches: [WssBranch; 2],
}

#[derive(Clone, Debug)]
pub struct WssOptions {
    /// Points closer to σ than this are not held against the class.
    pub r_loc: f64,
    /// Backward-time cap.
    pub t_max: f64,
    /// Arc-length cap.
    pub arc_max: f64,
    pub tol: f64,
}

impl WssOptions {
    pub fn for_cover(cover: &BoxCover) -> Self {
        WssOptions {
            r_loc: 2.0 * cover.box_diameter(),
            t_max: 40.0,
            arc_max: 12.0 * cover.box_diameter(),
            tol: DEFAULT_TOL,
        }
    }
}

/// Trace the two local branches of W^ss(σ) backward from σ ± δ·v₁ and test
/// that, beyond the exclusion radius, they stay out of the class boxes
/// (inflated by one box). A heuristic and labeled as such: it probes a
/// capped arc of the manifold, nothing more.
pub fn check_strong_stable_disjoint(
    field: &FieldSpec,
    record: &SingularityRecord,
    class: &BoxSet,
    delta: f64,
) -> Result<WssCheck> {
    check_strong_stable_disjoint_with(field, record, class, delta, &WssOptions::for_cover(&class.cover))
}

pub fn check_strong_stable_disjoint_with(
    field: &FieldSpec,
    record: &SingularityRecord,
    class: &BoxSet,
    delta: f64,
    opts: &WssOptions,
) -> Result<WssCheck> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument("offset delta must be positive".into()));
    }
    let [re, im] = record.eigenvalues[0];
    if im.abs() > EIG_RESOLUTION || re >= 0.0 {
        return Err(Error::InvalidArgument(
            "record has no real negative leading eigenvalue".into(),
        ));
    }
    let v1 = record.eigenvectors[0]
        .map(Vector3::from)
        .ok_or_else(|| Error::InvalidArgument("strong stable eigenvector unavailable".into()))?;
    let sigma = Vector3::from(record.position);
    let trace = |dir: f64| trace_branch(field, &(sigma + v1 * (dir * delta)), &sigma, class, opts);
    let branches = [trace(1.0), trace(-1.0)];
    let pass = branches
        .iter()
        .all(|b| matches!(b.outcome, WssOutcome::Clear | WssOutcome::Escaped));
    Ok(WssCheck { pass, delta, r_loc: opts.r_loc, branches })
}

fn trace_branch(
    field: &FieldSpec,
    start: &Vector3<f64>,
    sigma: &Vector3<f64>,
    class: &BoxSet,
    opts: &WssOptions,
) -> WssBranch {
    use crate::integrate::{integrate, EndKind, IntegrateOptions, StepControl};

    let bounds = field.region.inflate(crate::flow::REGION_INFLATE_FRAC);
    let min_h = class.cover.h.iter().cloned().fold(f64::INFINITY, f64::min);
    let int_opts = IntegrateOptions { tol: opts.tol, ..Default::default() };
    let rhs = |y: &Vector3<f64>| field.evaluate(y);

    let mut arc = 0.0f64;
    let mut beyond = false;
    let mut outcome = None::<WssOutcome>;
    let mut hit = None;
    let run = integrate(&rhs, *start, -opts.t_max, &int_opts, |step| {
        // Walk the dense step at sub-box spacing so thin classes cannot be
        // jumped over.
        let chord = (step.y1 - step.y0).norm();
        let n_sub = ((chord / (0.5 * min_h)).ceil() as usize).clamp(1, 4096);
        for i in 1..=n_sub {
            let t = step.t0 + (step.t1 - step.t0) * (i as f64 / n_sub as f64);
            let z = step.eval(t);
            let d = (z - sigma).norm();
            if d > opts.r_loc {
                beyond = true;
                if class.contains_point_padded(&z, 1) {
                    outcome = Some(WssOutcome::HitClass);
                    hit = Some([z.x, z.y, z.z]);
                    return StepControl::StopAt(t);
                }
            }
            if !bounds.contains(&z) {
                outcome = Some(WssOutcome::Escaped);
                return StepControl::StopAt(t);
            }
        }
        arc += chord;
        if arc > opts.arc_max {
            return StepControl::Stop;
        }
        StepControl::Continue
    });
    let outcome = outcome.unwrap_or(match run.end {
        // Caps reached (time, arc) with the trace inside the region.
        EndKind::Reached | EndKind::Stopped if beyond => WssOutcome::Clear,
        EndKind::Reached | EndKind::Stopped => WssOutcome::Stalled,
        _ => WssOutcome::Stalled,
    });
    WssBranch { outcome, t_end: run.t, arc_length: arc, hit }
}

// --- tangent vs linear Poincaré agreement ------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport {
    pub agree: bool,
    pub tangent: SplittingCertificate,
    pub linear_poincare: SplittingCertificate,
    pub assumptions_unchecked: Vec<String>,
}

/// Run the domination check for the tangent and the linear Poincaré flow on
/// the same seeds and report whether the verdicts agree. Agreement is the
/// numerical shadow of the equivalence between the two dominated splittings
/// away from singularities; its hypotheses ride along unchecked.
pub fn check_equivalence(
    field: &FieldSpec,
    class: &BoxSet,
    seeds: &[Vector3<f64>],
    t_window: f64,
) -> Result<EquivalenceReport> {
    check_equivalence_with(field, class, seeds, t_window, &ClassOptions::default())
}

pub fn check_equivalence_with(
    field: &FieldSpec,
    class: &BoxSet,
    seeds: &[Vector3<f64>],
    t_window: f64,
    opts: &ClassOptions,
) -> Result<EquivalenceReport> {
    let seeds = usable_seeds(field, class, seeds);
    if seeds.is_empty() {
        return Err(Error::InsufficientData("no regular seeds for the comparison".into()));
    }
    let checkpoints =
        opts.checkpoints.clone().unwrap_or_else(|| default_checkpoints(t_window));
    let est_t = estimate_splitting(field, &seeds, t_window, FlowKind::Tangent)?;
    let tangent = check_domination_with(field, &est_t, &checkpoints, &opts.rate)?;
    let est_p = estimate_splitting(field, &seeds, t_window, FlowKind::LinearPoincare)?;
    let linear_poincare = check_domination_with(field, &est_p, &checkpoints, &opts.rate)?;
    let agree = (tangent.verdict == Some(SplitVerdict::Dominated))
        == (linear_poincare.verdict == Some(SplitVerdict::Dominated));
    Ok(EquivalenceReport {
        agree,
        tangent,
        linear_poincare,
        assumptions_unchecked: class_assumptions(),
    })
}

// --- seed selection ----------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SeedPlan {
    /// Total seed target; the long-orbit share is `count − random_boxes`.
    pub count: usize,
    /// Number of random recurrent-box centers mixed in.
    pub random_boxes: usize,
    /// Transient discarded from the front of the long orbit.
    pub transient: f64,
    /// Time budget for collecting orbit points after the transient.
    pub orbit_budget: f64,
    /// Minimum spacing between kept orbit points, in units of the largest
    /// box edge.
    pub spacing_boxes: f64,
    pub rng_seed: u64,
    pub tol: f64,
}

impl Default for SeedPlan {
    fn default() -> Self {
        SeedPlan {
            count: 100,
            random_boxes: 50,
            transient: 30.0,
            orbit_budget: 250.0,
            spacing_boxes: 10.0,
            rng_seed: 7,
            tol: DEFAULT_TOL,
        }
    }
}

/// Sample seeds for certificate checks from one chain class: a long orbit
/// started near the class centroid, subsampled at box-scale spacing, plus
/// the centers of randomly chosen class boxes. Deterministic for a fixed
/// plan. May return fewer seeds than asked; never errs.
pub fn class_seeds(field: &FieldSpec, class: &BoxSet, plan: &SeedPlan) -> Vec<Vector3<f64>> {
    let mut seeds = Vec::new();
    if class.is_empty() {
        return seeds;
    }
    let max_h = class.cover.h.iter().cloned().fold(0.0, f64::max);
    let spacing = plan.spacing_boxes * max_h;
    let orbit_target = plan.count.saturating_sub(plan.random_boxes);

    if orbit_target > 0 {
        if let Some(centroid) = class.centroid() {
            // Up to five starting boxes, nearest the centroid first.
            let mut by_dist: Vec<(f64, u32)> = class
                .ids()
                .iter()
                .map(|&b| ((class.cover.box_center(b) - centroid).norm_squared(), b))
                .collect();
            by_dist.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
            for &(_, start) in by_dist.iter().take(5) {
                let start = class.cover.box_center(start);
                let total = plan.transient + plan.orbit_budget;
                let Ok(orbit) = sample_orbit(field, &start, total, 0.02, plan.tol) else {
                    continue;
                };
                let mut last: Option<Vector3<f64>> = None;
                for (t, p) in orbit.times.iter().zip(orbit.points.iter()) {
                    if seeds.len() >= orbit_target {
                        break;
                    }
                    if *t < plan.transient {
                        continue;
                    }
                    let spaced = last.map_or(true, |q| (p - q).norm() >= spacing);
                    if spaced
                        && class.contains_point_padded(p, 1)
                        && field.evaluate(p).norm() >= SPEED_FLOOR
                    {
                        seeds.push(*p);
                        last = Some(*p);
                    }
                }
                if !seeds.is_empty() {
                    break;
                }
            }
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(plan.rng_seed);
    let picks: Vec<usize> = if class.len() <= plan.random_boxes {
        (0..class.len()).collect()
    } else {
        let mut idx = rand::seq::index::sample(&mut rng, class.len(), plan.random_boxes).into_vec();
        idx.sort_unstable();
        idx
    };
    for i in picks {
        let c = class.cover.box_center(class.ids()[i]);
        if field.evaluate(&c).norm() >= SPEED_FLOOR {
            seeds.push(c);
        }
    }
    seeds
}
