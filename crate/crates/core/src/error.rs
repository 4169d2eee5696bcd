use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("unknown vertex id {0}")]
    UnknownVertex(usize),

    #[error("vertex {0} appears in more than one query set")]
    OverlappingSets(usize),

    #[error("vertex {0} is latent; queries range over observed vertices only")]
    LatentQuery(usize),

    #[error("vertex {0} is not a foreground vertex")]
    NotForeground(usize),

    #[error("relation queried between vertex {0} and itself")]
    SelfPair(usize),

    #[error("witness {0} is not a member of the conditioning set")]
    WitnessNotInSet(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("{context}: line {line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn json(context: &str, err: serde_json::Error) -> Self {
        Error::Parse {
            context: context.to_string(),
            line: err.line(),
            message: err.to_string(),
        }
    }

    /// True for errors caused by a malformed or inconsistent configuration.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
