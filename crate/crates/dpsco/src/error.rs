use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] dpsco_core::Error),
    #[error("run metric={metric} d={d} seed={seed}: {source}")]
    Run {
        metric: String,
        d: usize,
        seed: u64,
        #[source]
        source: dpsco_core::Error,
    },
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
