use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum CoreError {
    /// An input value was non-finite or otherwise outside the domain an
    /// operation is defined on.
    #[error("input domain error: {0}")]
    InputDomain(String),

    /// A link function failed certification against its declared
    /// regularity constants.
    #[error("link assumption violated: {0}")]
    AssumptionViolation(String),

    /// A value lies outside the range of an invertible map.
    #[error("range error: {0}")]
    Range(String),

    /// An environment produced an invalid transition or reward.
    #[error("environment fault: {0}")]
    EnvironmentFault(String),

    /// A per-episode reward left the normalized range.
    #[error("normalization violated: {0}")]
    NormalizationViolation(String),

    /// The exact dynamic-programming oracle does not support this
    /// environment.
    #[error("oracle unsupported: {0}")]
    UnsupportedOracle(String),

    /// Environment construction failed (bad parameters or sampling gave
    /// up after the attempt budget).
    #[error("construction error: {0}")]
    Construction(String),

    /// A deterministic invariant (potential bound, closure residual,
    /// lemma slack) was breached.
    #[error("invariant breach: {0}")]
    InvariantBreach(String),
}
