//! Vector field definitions with exact Jacobians.
//!
//! A [`FieldSpec`] is either a catalogue entry (Lorenz, a constant linear
//! field, a translation, the suspension-saddle testbed, a double sink) or a
//! polynomial field with per-component coefficient tables of total degree at
//! most 4. Both variants evaluate the field and its analytic Jacobian
//! exactly; nothing downstream ever finite-differences the field itself.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned bounding box in phase space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Region {
    /// Per-axis `[min, max]` bounds.
    pub bounds: [[f64; 2]; 3],
}

impl Region {
    pub fn new(bounds: [[f64; 2]; 3]) -> Result<Self> {
        for (axis, b) in bounds.iter().enumerate() {
            if !b[0].is_finite() || !b[1].is_finite() || b[0] >= b[1] {
                return Err(Error::InvalidField(format!(
                    "region axis {axis} has empty or non-finite bounds [{}, {}]",
                    b[0], b[1]
                )));
            }
        }
        Ok(Region { bounds })
    }

    pub fn min(&self) -> Vector3<f64> {
        Vector3::new(self.bounds[0][0], self.bounds[1][0], self.bounds[2][0])
    }

    pub fn max(&self) -> Vector3<f64> {
        Vector3::new(self.bounds[0][1], self.bounds[1][1], self.bounds[2][1])
    }

    pub fn edge_lengths(&self) -> Vector3<f64> {
        self.max() - self.min()
    }

    pub fn diameter(&self) -> f64 {
        self.edge_lengths().norm()
    }

    pub fn center(&self) -> Vector3<f64> {
        0.5 * (self.min() + self.max())
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.bounds[a][0] && p[a] <= self.bounds[a][1])
    }

    /// Region grown by `frac` of each edge length on every side.
    pub fn inflate(&self, frac: f64) -> Region {
        let mut bounds = self.bounds;
        for (axis, b) in bounds.iter_mut().enumerate() {
            let pad = frac * (self.bounds[axis][1] - self.bounds[axis][0]);
            b[0] -= pad;
            b[1] += pad;
        }
        Region { bounds }
    }
}

/// One monomial `c * x^i * y^j * z^k` of a polynomial component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub powers: [u8; 3],
}

impl Term {
    fn degree(&self) -> u32 {
        self.powers.iter().map(|&p| u32::from(p)).sum()
    }
}

/// Maximum total degree accepted for polynomial components.
pub const MAX_POLY_DEGREE: u32 = 4;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Kind {
    Lorenz { sigma: f64, rho: f64, beta: f64 },
    Linear { a: Matrix3<f64> },
    Translation { v: Vector3<f64> },
    /// Suspension of a planar saddle map, embedded in R^3: the unit circle
    /// in the z=0 plane is a periodic orbit of period 2*pi/omega whose
    /// Floquet multipliers per period are exp(-2*lambda*T) radially and
    /// exp(mu*T) vertically. With the default parameters (omega = 2*pi,
    /// lambda = ln(2)/2, mu = ln(2)) these are exactly 0.5 and 2.0.
    SuspensionSaddle { lambda: f64, omega: f64, mu: f64 },
    /// x' = x - x^3, y' = -y, z' = -z: two sinks at (+-1, 0, 0) separated
    /// by a saddle at the origin.
    DoubleSink,
    Polynomial { components: [Vec<Term>; 3] },
}

/// A smooth vector field on a bounded region of R^3.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSpec {
    pub(crate) kind: Kind,
    pub region: Region,
    /// Evaluate as −X instead of X (time reversal).
    reversed: bool,
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FieldSpec {
    pub fn lorenz(sigma: f64, rho: f64, beta: f64, region: Region) -> Result<Self> {
        for (name, v) in [("sigma", sigma), ("rho", rho), ("beta", beta)] {
            if !v.is_finite() {
                return Err(Error::InvalidField(format!("parameter {name} is not finite")));
            }
        }
        Ok(FieldSpec { kind: Kind::Lorenz { sigma, rho, beta }, region, reversed: false })
    }

    /// Classic Lorenz parameters (10, 28, 8/3) on a region containing the
    /// attractor.
    pub fn lorenz_classic() -> Self {
        let region = Region::new([[-30.0, 30.0], [-30.0, 30.0], [-5.0, 55.0]]).unwrap();
        FieldSpec::lorenz(10.0, 28.0, 8.0 / 3.0, region).unwrap()
    }

    pub fn linear(a: Matrix3<f64>, region: Region) -> Result<Self> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("linear field matrix has non-finite entries".into()));
        }
        Ok(FieldSpec { kind: Kind::Linear { a }, region, reversed: false })
    }

    pub fn translation(v: Vector3<f64>, region: Region) -> Result<Self> {
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidField("translation vector has non-finite entries".into()));
        }
        Ok(FieldSpec { kind: Kind::Translation { v }, region, reversed: false })
    }

    pub fn suspension_saddle(lambda: f64, omega: f64, mu: f64, region: Region) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("omega", omega), ("mu", mu)] {
            if !v.is_finite() {
                return Err(Error::InvalidField(format!("parameter {name} is not finite")));
            }
        }
        if omega == 0.0 {
            return Err(Error::InvalidField("omega must be nonzero".into()));
        }
        Ok(FieldSpec { kind: Kind::SuspensionSaddle { lambda, omega, mu }, region, reversed: false })
    }

    /// Suspension-saddle with multipliers exactly 0.5 and 2.0 per period 1.
    pub fn suspension_saddle_default() -> Self {
        let region = Region::new([[-2.0, 2.0], [-2.0, 2.0], [-2.0, 2.0]]).unwrap();
        let ln2 = std::f64::consts::LN_2;
        FieldSpec::suspension_saddle(0.5 * ln2, std::f64::consts::TAU, ln2, region).unwrap()
    }

    pub fn double_sink(region: Region) -> Self {
        FieldSpec { kind: Kind::DoubleSink, region, reversed: false }
    }

    /// Polynomial field: one monomial list per component, total degree <= 4.
    pub fn polynomial(components: [Vec<Term>; 3], region: Region) -> Result<Self> {
        for (i, comp) in components.iter().enumerate() {
            for term in comp {
                if !term.coeff.is_finite() {
                    return Err(Error::InvalidField(format!(
                        "component {i} has a non-finite coefficient"
                    )));
                }
                if term.degree() > MAX_POLY_DEGREE {
                    return Err(Error::InvalidField(format!(
                        "component {i} has a term of total degree {} (max {})",
                        term.degree(),
                        MAX_POLY_DEGREE
                    )));
                }
            }
        }
        Ok(FieldSpec { kind: Kind::Polynomial { components }, region, reversed: false })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            Kind::Lorenz { .. } => "lorenz",
            Kind::Linear { .. } => "linear",
            Kind::Translation { .. } => "translation",
            Kind::SuspensionSaddle { .. } => "suspension-saddle",
            Kind::DoubleSink => "double-sink",
            Kind::Polynomial { .. } => "polynomial",
        }
    }

    /// The same field with its sign flipped: evaluates −X. Reversing twice
    /// restores the original. Zeros, region, and catalogue identity are
    /// shared; the spectrum at each singularity negates.
    pub fn reverse(&self) -> FieldSpec {
        FieldSpec { kind: self.kind.clone(), region: self.region.clone(), reversed: !self.reversed }
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    /// X(x).
    pub fn evaluate(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let v = self.evaluate_raw(x);
        if self.reversed {
            -v
        } else {
            v
        }
    }

    fn evaluate_raw(&self, x: &Vector3<f64>) -> Vector3<f64> {
        match &self.kind {
            Kind::Lorenz { sigma, rho, beta } => Vector3::new(
                sigma * (x.y - x.x),
                x.x * (rho - x.z) - x.y,
                x.x * x.y - beta * x.z,
            ),
            Kind::Linear { a } => a * x,
            Kind::Translation { v } => *v,
            Kind::SuspensionSaddle { lambda, omega, mu } => {
                let r2 = x.x * x.x + x.y * x.y - 1.0;
                Vector3::new(
                    -lambda * x.x * r2 - omega * x.y,
                    -lambda * x.y * r2 + omega * x.x,
                    mu * x.z,
                )
            }
            Kind::DoubleSink => Vector3::new(x.x - x.x * x.x * x.x, -x.y, -x.z),
            Kind::Polynomial { components } => Vector3::from_fn(|i, _| {
                components[i]
                    .iter()
                    .map(|t| {
                        t.coeff
                            * x.x.powi(i32::from(t.powers[0]))
                            * x.y.powi(i32::from(t.powers[1]))
                            * x.z.powi(i32::from(t.powers[2]))
                    })
                    .sum()
            }),
        }
    }

    /// DX(x), the analytic Jacobian.
    pub fn jacobian(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        let j = self.jacobian_raw(x);
        if self.reversed {
            -j
        } else {
            j
        }
    }

    fn jacobian_raw(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        match &self.kind {
            Kind::Lorenz { sigma, rho, beta } => Matrix3::new(
                -sigma, *sigma, 0.0, //
                rho - x.z, -1.0, -x.x, //
                x.y, x.x, -beta,
            ),
            Kind::Linear { a } => *a,
            Kind::Translation { .. } => Matrix3::zeros(),
            Kind::SuspensionSaddle { lambda, omega, mu } => {
                let (x1, y1) = (x.x, x.y);
                Matrix3::new(
                    -lambda * (3.0 * x1 * x1 + y1 * y1 - 1.0),
                    -2.0 * lambda * x1 * y1 - omega,
                    0.0,
                    -2.0 * lambda * x1 * y1 + omega,
                    -lambda * (x1 * x1 + 3.0 * y1 * y1 - 1.0),
                    0.0,
                    0.0,
                    0.0,
                    *mu,
                )
            }
            Kind::DoubleSink => Matrix3::new(
                1.0 - 3.0 * x.x * x.x, 0.0, 0.0, //
                0.0, -1.0, 0.0, //
                0.0, 0.0, -1.0,
            ),
            Kind::Polynomial { components } => Matrix3::from_fn(|i, j| {
                components[i]
                    .iter()
                    .filter(|t| t.powers[j] > 0)
                    .map(|t| {
                        let mut pw = t.powers;
                        pw[j] -= 1;
                        f64::from(t.powers[j])
                            * t.coeff
                            * x.x.powi(i32::from(pw[0]))
                            * x.y.powi(i32::from(pw[1]))
                            * x.z.powi(i32::from(pw[2]))
                    })
                    .sum()
            }),
        }
    }

    /// Evaluate with domain checking at entry points: rejects non-finite
    /// inputs and outputs.
    pub fn try_evaluate(&self, x: &Vector3<f64>) -> Result<Vector3<f64>> {
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("point has non-finite coordinates".into()));
        }
        let v = self.evaluate(x);
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { t: 0.0 });
        }
        Ok(v)
    }
}

/// A zero of the field found by Newton iteration.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SingularPoint {
    pub position: [f64; 3],
    /// The Jacobian at the root is numerically rank-deficient; classification
    /// downstream should expect a non-hyperbolic candidate.
    pub degenerate_jacobian: bool,
}

impl SingularPoint {
    pub fn point(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }
}

impl FieldSpec {
    /// Zeros of the field inside the region, located by damped Newton
    /// iteration from a `grid_n`^3 grid of seeds and deduplicated by a merge
    /// radius of 1e-6 x region diameter. Every returned point satisfies
    /// ||X(x)|| < 1e-10.
    pub fn find_singularities(&self, grid_n: usize) -> Result<Vec<SingularPoint>> {
        if grid_n < 2 {
            return Err(Error::InvalidArgument("grid_n must be at least 2".into()));
        }
        let lo = self.region.min();
        let edge = self.region.edge_lengths();
        let diam = self.region.diameter();
        let merge_radius = 1e-6 * diam;
        // Accept roots slightly outside the region: Newton may land within
        // one merge radius of the boundary.
        let margin = merge_radius.max(1e-9 * diam);

        let mut roots: Vec<Vector3<f64>> = Vec::new();
        for iz in 0..grid_n {
            for iy in 0..grid_n {
                for ix in 0..grid_n {
                    let frac = |i: usize| (i as f64 + 0.5) / grid_n as f64;
                    let seed = lo
                        + Vector3::new(frac(ix) * edge.x, frac(iy) * edge.y, frac(iz) * edge.z);
                    if let Some(root) = self.newton_root(seed, diam) {
                        let inside = (0..3).all(|a| {
                            root[a] >= self.region.bounds[a][0] - margin
                                && root[a] <= self.region.bounds[a][1] + margin
                        });
                        if inside {
                            roots.push(root);
                        }
                    }
                }
            }
        }

        // Deterministic dedup: lexicographic sort, then greedy merge.
        roots.sort_by(|a, b| {
            (a.x, a.y, a.z).partial_cmp(&(b.x, b.y, b.z)).expect("finite roots")
        });
        let mut merged: Vec<Vector3<f64>> = Vec::new();
        for r in roots {
            if merged.iter().all(|m| (m - r).norm() > merge_radius) {
                merged.push(r);
            }
        }

        Ok(merged
            .into_iter()
            .map(|p| {
                let j = self.jacobian(&p);
                let sv = j.singular_values();
                let (smax, smin) = (sv.max(), sv.min());
                SingularPoint {
                    position: [p.x, p.y, p.z],
                    degenerate_jacobian: smin <= 1e-8 * smax.max(1.0),
                }
            })
            .collect())
    }

    fn newton_root(&self, seed: Vector3<f64>, scale: f64) -> Option<Vector3<f64>> {
        let mut x = seed;
        for _ in 0..60 {
            let f = self.evaluate(&x);
            if !f.iter().all(|c| c.is_finite()) {
                return None;
            }
            if f.norm() < 1e-13 * scale.max(1.0) {
                break;
            }
            let j = self.jacobian(&x);
            let step = j.lu().solve(&(-f))?;
            if !step.iter().all(|c| c.is_finite()) {
                return None;
            }
            // Damping keeps wild seeds from shooting far outside the region.
            let max_step = 0.5 * scale;
            let x_next = if step.norm() > max_step { x + step * (max_step / step.norm()) } else { x + step };
            if (x_next - x).norm() < 1e-15 * scale.max(1.0) {
                x = x_next;
                break;
            }
            x = x_next;
        }
        (self.evaluate(&x).norm() < 1e-10).then_some(x)
    }
}

// --- JSON interchange -------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct RawSpec {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coefficients: Option<Vec<Vec<[f64; 4]>>>,
    region: [[f64; 2]; 3],
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    reversed: bool,
}

fn take_param(
    params: &mut BTreeMap<String, f64>,
    name: &str,
    default: Option<f64>,
) -> Result<f64> {
    match (params.remove(name), default) {
        (Some(v), _) => Ok(v),
        (None, Some(d)) => Ok(d),
        (None, None) => Err(Error::ParseField(format!("missing parameter {name}"))),
    }
}

impl FieldSpec {
    /// Build a catalogue field by name. Unknown parameters are rejected;
    /// missing ones fall back to the catalogue defaults where they exist.
    pub fn from_catalogue(
        name: &str,
        params: &BTreeMap<String, f64>,
        region: Option<Region>,
    ) -> Result<Self> {
        let mut p = params.clone();
        let ln2 = std::f64::consts::LN_2;
        let spec = match name {
            "lorenz" => {
                let sigma = take_param(&mut p, "sigma", Some(10.0))?;
                let rho = take_param(&mut p, "rho", Some(28.0))?;
                let beta = take_param(&mut p, "beta", Some(8.0 / 3.0))?;
                let region = region
                    .unwrap_or(Region::new([[-30.0, 30.0], [-30.0, 30.0], [-5.0, 55.0]]).unwrap());
                FieldSpec::lorenz(sigma, rho, beta, region)?
            }
            "linear" => {
                let mut a = Matrix3::zeros();
                for i in 0..3 {
                    for j in 0..3 {
                        a[(i, j)] = take_param(&mut p, &format!("a{}{}", i + 1, j + 1), Some(0.0))?;
                    }
                }
                let region = region.unwrap_or(Region::new([[-2.0, 2.0]; 3]).unwrap());
                FieldSpec::linear(a, region)?
            }
            "translation" => {
                let v = Vector3::new(
                    take_param(&mut p, "vx", Some(1.0))?,
                    take_param(&mut p, "vy", Some(0.0))?,
                    take_param(&mut p, "vz", Some(0.0))?,
                );
                let region = region.unwrap_or(Region::new([[-2.0, 2.0]; 3]).unwrap());
                FieldSpec::translation(v, region)?
            }
            "suspension-saddle" => {
                let lambda = take_param(&mut p, "lambda", Some(0.5 * ln2))?;
                let omega = take_param(&mut p, "omega", Some(std::f64::consts::TAU))?;
                let mu = take_param(&mut p, "mu", Some(ln2))?;
                let region = region.unwrap_or(Region::new([[-2.0, 2.0]; 3]).unwrap());
                FieldSpec::suspension_saddle(lambda, omega, mu, region)?
            }
            "double-sink" => {
                let region = region.unwrap_or(Region::new([[-2.0, 2.0]; 3]).unwrap());
                FieldSpec::double_sink(region)
            }
            other => {
                return Err(Error::ParseField(format!("unknown catalogue field {other:?}")));
            }
        };
        if let Some(stray) = p.keys().next() {
            return Err(Error::ParseField(format!(
                "unknown parameter {stray:?} for catalogue field {name:?}"
            )));
        }
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSpec =
            serde_json::from_str(text).map_err(|e| Error::ParseField(e.to_string()))?;
        let region = Some(Region::new(raw.region)?);
        let spec = match raw.kind.as_str() {
            "catalogue" => {
                let name = raw
                    .name
                    .ok_or_else(|| Error::ParseField("catalogue spec needs a name".into()))?;
                FieldSpec::from_catalogue(&name, &raw.params.unwrap_or_default(), region)
            }
            "polynomial" => {
                let coeffs = raw.coefficients.ok_or_else(|| {
                    Error::ParseField("polynomial spec needs coefficients".into())
                })?;
                if coeffs.len() != 3 {
                    return Err(Error::ParseField(format!(
                        "polynomial spec needs 3 component tables, got {}",
                        coeffs.len()
                    )));
                }
                let mut components: [Vec<Term>; 3] = Default::default();
                for (i, comp) in coeffs.iter().enumerate() {
                    for row in comp {
                        let to_pow = |v: f64, what: &str| -> Result<u8> {
                            if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                                return Err(Error::ParseField(format!(
                                    "component {i}: {what} exponent {v} is not a small non-negative integer"
                                )));
                            }
                            Ok(v as u8)
                        };
                        components[i].push(Term {
                            coeff: row[0],
                            powers: [to_pow(row[1], "x")?, to_pow(row[2], "y")?, to_pow(row[3], "z")?],
                        });
                    }
                }
                FieldSpec::polynomial(components, region.unwrap())
            }
            other => Err(Error::ParseField(format!("unknown field kind {other:?}"))),
        }?;
        Ok(if raw.reversed { spec.reverse() } else { spec })
    }

    /// Canonical JSON form (used for config hashing and reports).
    pub fn to_json_value(&self) -> serde_json::Value {
        let raw = match &self.kind {
            Kind::Polynomial { components } => RawSpec {
                kind: "polynomial".into(),
                name: None,
                params: None,
                coefficients: Some(
                    components
                        .iter()
                        .map(|comp| {
                            comp.iter()
                                .map(|t| {
                                    [
                                        t.coeff,
                                        f64::from(t.powers[0]),
                                        f64::from(t.powers[1]),
                                        f64::from(t.powers[2]),
                                    ]
                                })
                                .collect()
                        })
                        .collect(),
                ),
                region: self.region.bounds,
                reversed: self.reversed,
            },
            kind => {
                let mut params = BTreeMap::new();
                match kind {
                    Kind::Lorenz { sigma, rho, beta } => {
                        params.insert("sigma".into(), *sigma);
                        params.insert("rho".into(), *rho);
                        params.insert("beta".into(), *beta);
                    }
                    Kind::Linear { a } => {
                        for i in 0..3 {
                            for j in 0..3 {
                                params.insert(format!("a{}{}", i + 1, j + 1), a[(i, j)]);
                            }
                        }
                    }
                    Kind::Translation { v } => {
                        params.insert("vx".into(), v.x);
                        params.insert("vy".into(), v.y);
                        params.insert("vz".into(), v.z);
                    }
                    Kind::SuspensionSaddle { lambda, omega, mu } => {
                        params.insert("lambda".into(), *lambda);
                        params.insert("omega".into(), *omega);
                        params.insert("mu".into(), *mu);
                    }
                    Kind::DoubleSink | Kind::Polynomial { .. } => {}
                }
                RawSpec {
                    kind: "catalogue".into(),
                    name: Some(self.name().into()),
                    params: Some(params),
                    coefficients: None,
                    region: self.region.bounds,
                    reversed: self.reversed,
                }
            }
        };
        serde_json::to_value(raw).expect("field spec serializes")
    }
}
