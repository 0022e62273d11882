use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected dimension {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error(
        "dilation capacity exceeded: shift of {requested_cells} cells needs padding >= {required_padding}, have {padding}"
    )]
    Capacity {
        requested_cells: usize,
        required_padding: usize,
        padding: usize,
    },

    #[error("time {time} is not a node of the noise grid")]
    Alignment { time: f64 },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("numerical blowup at t = {time}: |y| = {norm}")]
    NumericalBlowup { time: f64, norm: f64 },

    #[error("non-explosion violated: truncation level {k} exceeds k_max = {k_max} (exit at t = {time})")]
    NonExplosionViolated { k: f64, k_max: f64, time: f64 },

    #[error("large-jump times not strictly increasing at t = {time}")]
    DuplicateJumpTime { time: f64 },

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures raised by a solver rather than by input checking.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalBlowup { .. } | Error::NonExplosionViolated { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape { expected, got })
    }
}
