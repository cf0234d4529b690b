use std::fmt;

/// The state invariant a validation step rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateInvariant {
    Finite,
    Square,
    Dimension,
    Hermitian,
    UnitTrace,
    PositiveSemidefinite,
}

impl fmt::Display for StateInvariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StateInvariant::Finite => "finite entries",
            StateInvariant::Square => "square matrix",
            StateInvariant::Dimension => "dimension matches layout",
            StateInvariant::Hermitian => "hermitian",
            StateInvariant::UnitTrace => "unit trace",
            StateInvariant::PositiveSemidefinite => "positive semidefinite",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("labeling error: {0}")]
    Labeling(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid state ({invariant}): {detail}")]
    InvalidState {
        invariant: StateInvariant,
        detail: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid decomposition: {0}")]
    InvalidDecomposition(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid_state(invariant: StateInvariant, detail: impl Into<String>) -> Self {
        Error::InvalidState {
            invariant,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
