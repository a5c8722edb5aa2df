use thiserror::Error;

/// Errors produced anywhere in the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parameter id {0} is out of range")]
    MissingParameter(usize),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("malformed expression: {0}")]
    InvalidExpr(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("graph preservation violated at transition {state} -> {successor}: {detail}")]
    GraphPreservation {
        state: usize,
        successor: usize,
        detail: String,
    },

    #[error("empty uncertainty set at state {0}")]
    EmptyUncertaintySet(usize),

    #[error("terminal states are not reached almost surely from state {0}")]
    Unreachable(usize),

    #[error("singular matrix: pivot {pivot:e} at elimination step {step}")]
    SingularMatrix { step: usize, pivot: f64 },

    #[error("solution function not differentiable: {0}")]
    NotDifferentiable(String),

    #[error("linear program: {0}")]
    Lp(String),

    #[error("learning step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error categories, used by the command-line front end for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Infeasible,
    NotDifferentiable,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Domain(_)
            | Error::MissingParameter(_)
            | Error::UnknownParameter(_)
            | Error::InvalidExpr(_)
            | Error::InvalidModel(_)
            | Error::GraphPreservation { .. }
            | Error::Json(_) => ErrorClass::Validation,
            Error::EmptyUncertaintySet(_) => ErrorClass::Infeasible,
            Error::NotDifferentiable(_) => ErrorClass::NotDifferentiable,
            Error::Unreachable(_) | Error::SingularMatrix { .. } | Error::Lp(_) => {
                ErrorClass::Numerical
            }
            Error::Step { source, .. } => source.class(),
            Error::Io(_) => ErrorClass::Io,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
