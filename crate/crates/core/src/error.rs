use thiserror::Error;

/// Everything that can go wrong between reading a file and finishing a step.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {message}")]
    Json { path: String, message: String },

    #[error("invalid molecule: {0}")]
    InvalidMolecule(String),

    #[error("unknown element symbol `{0}`")]
    UnknownElement(String),

    #[error("no covalent radius for element `{0}`")]
    MissingRadius(String),

    #[error("radii table: {0}")]
    RadiiTable(String),

    #[error("index {index} out of range for {what} of size {len}")]
    IndexOutOfRange { what: &'static str, index: usize, len: usize },

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape { op: &'static str, lhs: [usize; 2], rhs: [usize; 2] },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("loss is not a scalar: shape {0:?}")]
    NonScalarLoss([usize; 2]),

    #[error("molecule `{0}` has no target")]
    MissingTarget(String),

    #[error("non-finite loss at step {step}")]
    Diverged { step: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::NonScalarLoss(_) | Error::Diverged { .. } | Error::Shape { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
