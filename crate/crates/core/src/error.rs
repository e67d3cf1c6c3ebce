use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A voltage of zero modulus was passed where a logarithm is required.
    #[error("zero voltage at index {index}: complex angle is undefined")]
    ZeroVoltage { index: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("eliminated block is singular (condition number {condition:.3e})")]
    SingularBlock { condition: f64 },

    #[error("dominant eigenvalue is ambiguous: spectral gap {gap:.3e} below tolerance")]
    DominanceAmbiguous { gap: f64 },

    #[error("rank deficient equilibrium system: {0}")]
    RankDeficient(String),

    #[error("degenerate network: {0}")]
    Degenerate(String),

    #[error("indeterminate winding number: {0}")]
    Indeterminate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}
