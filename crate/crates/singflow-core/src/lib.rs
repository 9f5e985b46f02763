//! Numerical toolkit for smooth vector fields on subsets of R^3.
//!
//! The crate is organised in four layers, each building on the previous one:
//!
//! * [`field`] — vector field definitions (catalogue + polynomial), Jacobians,
//!   singularity finding.
//! * [`flow`] — the flow map and tangent flow, computed by adaptive
//!   Runge-Kutta integration of the (augmented) ODE, plus orbit sampling.
//! * [`poincare`] — linear and sectional Poincare flows on normal planes,
//!   and their rescaled variants, which stay well-conditioned near
//!   singularities.
//! * [`chainrec`] / [`hypcheck`] — chain-recurrence over-approximation via a
//!   box transition graph, singularity classification, and finite-time
//!   certificates for dominated splittings, hyperbolicity and singular
//!   hyperbolicity.
//!
//! Everything here is numerical and non-rigorous: certificates report what a
//! finite-time, finite-resolution computation saw, not a proof.

pub mod chainrec;
pub mod error;
pub mod field;
pub mod flow;
pub mod hypcheck;
pub mod integrate;
pub mod poincare;

pub use error::{Error, Result};
pub use field::FieldSpec;

/// Default per-step integration tolerance (relative and absolute).
pub const DEFAULT_TOL: f64 = 1e-9;

/// Speed threshold below which an orbit is considered to have reached a
/// singularity and integration is truncated.
pub const SPEED_FLOOR: f64 = 1e-8;
