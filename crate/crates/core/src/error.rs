use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid increment model: {0}")]
    InvalidModel(String),

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("root bracket diverged: {0}")]
    Divergence(String),

    #[error("perturbation outside the asymptotic regime: {0}")]
    PerturbationTooLarge(String),

    #[error("regime error: {0}")]
    Regime(String),

    #[error("path step cap exceeded: {capped} of {n_samples} paths hit {cap} steps")]
    CapExceeded {
        capped: u64,
        n_samples: u64,
        cap: u64,
    },

    #[error("oracle work budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("oracle truncation too lossy: {0}")]
    TruncationTooLossy(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
