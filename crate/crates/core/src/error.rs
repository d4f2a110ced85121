use thiserror::Error;

pub type Result<T, E = SpinError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinError {
    #[error("inner box radius {inner} exceeds outer box radius {outer}")]
    BoxOrder { inner: u32, outer: u32 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// Some flip rate is unbounded.
    #[error("flip rates are unbounded: {0}")]
    UnboundedRates(String),

    /// The weighted influence sum diverges.
    #[error("weighted influence sum diverges: {0}")]
    DivergentInfluence(String),

    #[error("state space too large: {sites} active sites (at most {max} supported)")]
    StateSpaceTooLarge { sites: usize, max: usize },

    #[error("parse error: {0}")]
    Parse(String),

    /// A configuration file failed to parse or validate.
    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A mark interval left `[0, C + A λ_v / λ]`: the rate bookkeeping is wrong.
    #[error("mark interval overflow at t={time} site {site}: {lower} + {width} > {rate}")]
    MarkOverflow {
        time: f64,
        site: String,
        lower: f64,
        width: f64,
        rate: f64,
    },
}

impl SpinError {
    /// True when the error is a rejection of the well-posedness hypotheses.
    pub fn is_hypothesis_violation(&self) -> bool {
        matches!(
            self,
            SpinError::UnboundedRates(_) | SpinError::DivergentInfluence(_)
        )
    }
}
