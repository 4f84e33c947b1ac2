use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("station {0} is not covered by any collaboration space")]
    Coverage(u32),

    #[error("{path}: line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("zero rate: {0}")]
    InfeasibleRate(String),

    #[error("task {task} has no feasible initial decision: {reason}")]
    Infeasible { task: usize, reason: String },

    #[error("solver: {0}")]
    Solver(String),

    #[error("content {content} ({size_bits} bits) exceeds cache capacity {capacity_bits} bits at station {bs}")]
    TooLarge { bs: usize, content: usize, size_bits: f64, capacity_bits: f64 },

    #[error("enumeration of {0} combinations exceeds the brute-force limit")]
    TooLargeInstance(u128),

    #[error("config: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn at(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }

    /// The innermost error, with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
