use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("singular symbol at lattice index k={k}")]
    SingularSymbol { k: i64 },
    #[error("non-finite value at sample index {index}")]
    NonFinite { index: usize },
    #[error("time step {dt} exceeds the stability limit {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("neutrality violated: mean(n-1) = {0:e}")]
    Neutrality(f64),
    #[error("time {t} is not after the last sample time {last}")]
    Ordering { t: f64, last: f64 },
    #[error("cost guard: {0}")]
    CostGuard(String),
    #[error("analysis error: {0}")]
    Analysis(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
