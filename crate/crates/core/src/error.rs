use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("cannot parse rational `{input}`: {reason}")]
    ParseRational { input: String, reason: String },

    #[error("index out of range: {0}")]
    Index(String),

    #[error(
        "depth {depth} cannot certify tolerance {tolerance:e}; increase depth to at least {recommended}"
    )]
    InsufficientDepth {
        depth: usize,
        tolerance: f64,
        recommended: usize,
    },

    #[error("{available} working bits cannot certify the tolerance; need at least {recommended}")]
    InsufficientPrecision { available: u32, recommended: u32 },

    #[error("majorant is not yet non-increasing at index {from_index}; truncate later{}", recommended.map(|n| format!(" (first certified index {n})")).unwrap_or_default())]
    NotMonotone {
        from_index: usize,
        recommended: Option<usize>,
    },

    #[error("no certified truncation order exists below depth {limit} (tau too large)")]
    Uncertifiable { limit: usize },

    #[error("state space 0..={k_max} drops too much mass; use at least {recommended} states")]
    InsufficientStates { k_max: usize, recommended: usize },

    #[error("invalid rates: {0}")]
    Rates(String),

    #[error("invalid triangle cache: {0}")]
    Cache(String),

    #[error("triangle depths differ: {0} vs {1}")]
    DepthMismatch(usize, usize),
}

impl Error {
    /// True when the failure means the requested tolerance cannot be met
    /// with the given depth or precision, as opposed to bad input.
    pub fn is_tolerance_failure(&self) -> bool {
        matches!(
            self,
            Error::InsufficientDepth { .. }
                | Error::InsufficientPrecision { .. }
                | Error::Uncertifiable { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
