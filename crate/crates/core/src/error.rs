use thiserror::Error;

/// Errors raised anywhere in the solver stack.
///
/// Every variant knows which subsystem produced it (see [`Error::module`]) so
/// front ends can print a one-line structured record.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degree {degree} out of table range [{min}, {max}]")]
    DegreeOutOfRange {
        degree: usize,
        min: usize,
        max: usize,
    },

    #[error("SBP rule unavailable for (N={degree}, {family})")]
    SbpRuleUnavailable { degree: usize, family: String },

    #[error("rule data line {line}: {msg}")]
    RuleParse { line: usize, msg: String },

    #[error("quadrature exactness violated: {what} (max error {max_error:.3e})")]
    Exactness { what: String, max_error: f64 },

    #[error("operator construction refused: {0}")]
    Operator(String),

    #[error("selection map mismatch: {0}")]
    SelectionMismatch(String),

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("non-positive Jacobian {value:.3e} in element {element}")]
    NonPositiveJacobian { element: usize, value: f64 },

    #[error("unmatched {kind} face: element {element}, face {face}")]
    UnmatchedFace {
        element: usize,
        face: usize,
        kind: &'static str,
    },

    #[error("mesh file line {line}: {msg}")]
    MeshFormat { line: usize, msg: String },

    #[error("non-positive water height h={h:.6e}")]
    NonPositiveHeight { h: f64 },

    #[error("non-positive water height h={h:.6e} in element {element} at t={time:.6e}")]
    Positivity { element: usize, time: f64, h: f64 },

    #[error("non-finite value in element {element} at t={time:.6e}")]
    NonFinite { element: usize, time: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Name of the subsystem the error originated from.
    pub fn module(&self) -> &'static str {
        match self {
            Error::DegreeOutOfRange { .. }
            | Error::SbpRuleUnavailable { .. }
            | Error::RuleParse { .. }
            | Error::Exactness { .. } => "quadrature",
            Error::Operator(_) | Error::SelectionMismatch(_) => "refelem",
            Error::DegenerateMesh(_)
            | Error::NonPositiveJacobian { .. }
            | Error::UnmatchedFace { .. }
            | Error::MeshFormat { .. } => "mesh",
            Error::Positivity { .. } | Error::NonPositiveHeight { .. } => "swe",
            Error::NonFinite { .. } | Error::InvalidState(_) => "solver",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
