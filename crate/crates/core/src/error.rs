use thiserror::Error;

/// Errors produced by the cell model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} = {value} outside of domain [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("requested {requested} modes, at most {cap} are supported")]
    TooManyModes { requested: usize, cap: usize },

    #[error("quadrature under-resolved: {0}")]
    QuadratureUnderresolved(String),

    #[error("contact: gap {gap:.3e} m at x = {x:.3e} m is within the contact margin")]
    Contact { gap: f64, x: f64 },

    #[error("newton iteration did not converge (residual {residual:.3e})")]
    NotConverged { residual: f64 },

    #[error("branch does not lose stability below {v_max} V")]
    NoSnap { v_max: f64 },

    #[error("equilibrium is not a stable minimum")]
    NotStable,

    #[error("step size underflow at t = {t:.3e} s (stiffness failure)")]
    StepUnderflow { t: f64 },

    #[error("unknown electrode `{0}`")]
    UnknownElectrode(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
