use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A demographic profile drove a volume, clearance or lean body mass to
    /// a non-positive value.
    #[error("degenerate patient profile: {field} = {value}")]
    DegenerateProfile { field: &'static str, value: f64 },

    /// The integrated state or controller output stopped being finite.
    #[error("numeric blow-up at t = {t} min (step {step}): {detail}")]
    NumericBlowup { t: f64, step: usize, detail: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Stamps a numeric blow-up with the loop time and step index.
    pub fn at(self, t: f64, step: usize) -> Self {
        match self {
            Error::NumericBlowup { detail, .. } => Error::NumericBlowup { t, step, detail },
            other => other,
        }
    }
}
