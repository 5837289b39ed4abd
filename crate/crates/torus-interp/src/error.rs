use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("argument {arg} outside working strip |Im u| <= {bound}; reduce it with quasi-periodicity first")]
    StripViolation { arg: String, bound: f64 },
    #[error("evaluation at or too close to a pole near {0}")]
    Pole(String),
    #[error("derivative order {requested} exceeds cap {cap}")]
    DerivativeOrder { requested: usize, cap: usize },
    #[error("matrix numerically singular: {0}")]
    Singular(String),
    #[error("contour unreliable: {0}")]
    ContourUnreliable(String),
    #[error("winding number not resolved: {0}")]
    Winding(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("construction failed: {0}")]
    ConstructionFailed(String),
    #[error("numerically indeterminate: {0}")]
    Indeterminate(String),
}

impl Error {
    /// Input errors are caller mistakes; everything else is a numerical failure.
    pub fn is_input(&self) -> bool {
        matches!(self, Error::InvalidInput(_) | Error::DerivativeOrder { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
