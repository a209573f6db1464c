use thiserror::Error;

/// Errors raised by the discovery pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Inputs violate the documented shape or range contract of an operation.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Scott's rule cannot be applied because a state variable never varies.
    #[error(
        "state variable {variable} has zero pooled variance; set the KDE bandwidth manually"
    )]
    ZeroVariance { variable: usize },

    /// Every simulated trajectory blew up or became non-finite.
    #[error(
        "all {total} simulations diverged; the prior is inconsistent with the scale of the data"
    )]
    AllDiverged { total: usize },

    #[error(
        "acceptance rate {rate:.4} ({accepted}/{total}) is below the minimum {min_rate:.4}; \
         increase the number of prior samples, widen the KDE bandwidth, or tighten the prior"
    )]
    LowAcceptance {
        accepted: usize,
        total: usize,
        rate: f64,
        min_rate: f64,
    },

    /// The regression design restricted to the surviving terms is not full rank.
    #[error("rank-deficient design; colinear terms: {}", terms.join(", "))]
    RankDeficient { terms: Vec<String> },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
