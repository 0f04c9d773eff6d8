use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty batch")]
    EmptyBatch,
    #[error("probability level {0} outside (0, 1)")]
    InvalidLevel(f64),
    #[error("all importance weights are zero")]
    ZeroWeights,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("batch invariant violated: {0}")]
    InvalidBatch(String),
    #[error("product distribution would have {count} atoms, above the bound of {bound}")]
    TooManyAtoms { count: u128, bound: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("empty tail event")]
    EmptyTail,
    #[error("no atom at VaR level {0}")]
    NoAtomAtVar(f64),
    #[error("non-finite risk value at weights {0:?}")]
    NonFinite(Vec<f64>),
    #[error("band [{lo}, {hi}] does not fit in 0..{m}")]
    BandOutOfRange { lo: i64, hi: i64, m: usize },
    #[error("zero portfolio total in band at sorted position {0}")]
    ZeroTotalInBand(usize),
    #[error("ES total is zero")]
    ZeroEs,
    #[error("portfolio risk is zero")]
    ZeroRisk,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("Pareto tail index {0} <= 1 gives an infinite mean")]
    InfiniteMean(f64),
    #[error("degenerate importance weights: effective sample size {ess:.1} < 10, use a smaller shift")]
    DegenerateWeights { ess: f64 },
    #[error("chain stuck: no acceptance in {0} consecutive steps")]
    ChainStuck(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
