use nalgebra::Vector3;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A field definition failed validation (unknown name, bad parameter,
    /// polynomial degree out of range, ...).
    #[error("invalid field: {0}")]
    InvalidField(String),

    /// A field definition could not be parsed from JSON.
    #[error("malformed field spec: {0}")]
    ParseField(String),

    /// An argument was outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The orbit left the region of interest before reaching the requested
    /// time. Carries the escape time and the last state inside the region.
    #[error("orbit escaped the region at t = {t_escape}")]
    RegionEscape {
        t_escape: f64,
        state: Vector3<f64>,
    },

    /// Integration was truncated because the orbit came too close to a
    /// singularity: either the local speed dropped below the speed floor or
    /// the adaptive step size underflowed. Carries the truncation time and
    /// the last valid state.
    #[error("integration truncated near a singularity at t = {t_truncate}")]
    ProximityTruncation {
        t_truncate: f64,
        state: Vector3<f64>,
    },

    /// The integrator exceeded its step budget before reaching the target
    /// time.
    #[error("integration exceeded {max_steps} steps at t = {t_reached}")]
    MaxSteps { max_steps: usize, t_reached: f64 },

    /// A Poincare-flow operation was asked to evaluate at a singularity,
    /// where no normal plane exists.
    #[error("no normal plane: the field vanishes at the base point")]
    VanishingField,

    /// A sectional Poincare displacement exceeded the holonomy radius at the
    /// base point, so the plane-to-plane map is not trusted there.
    #[error("displacement {requested:.3e} exceeds the holonomy radius {radius:.3e}")]
    HolonomyRadius { requested: f64, radius: f64 },

    /// The displaced orbit never crossed the target normal plane within the
    /// allowed crossing-time window.
    #[error("no transversal crossing of the target plane within |dt| <= {window}")]
    NoCrossing { window: f64 },

    /// A plane crossing was found but the orbit met the plane nearly
    /// tangentially, so the crossing time is ill-conditioned.
    #[error("near-tangential plane crossing at t = {t}")]
    TangentialCrossing { t: f64 },

    /// The right-hand side or a downstream computation produced a
    /// non-finite value.
    #[error("non-finite value produced at t = {t}")]
    NonFinite { t: f64 },

    /// The queried point's box is not chain recurrent, so it belongs to no
    /// chain class.
    #[error("box {box_id} is not chain recurrent")]
    NotRecurrent { box_id: usize },

    #[error("class contains a singularity near {position:?}; use the singular-hyperbolic checker")]
    WrongChecker { position: [f64; 3] },

    /// A box cover or transition graph would exceed the configured budget.
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    /// Not enough usable data to fit or check a certificate (e.g. fewer than
    /// three checkpoints survive truncation).
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}
