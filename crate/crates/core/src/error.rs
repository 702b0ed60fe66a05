use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on the caller's input does not hold.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The estimator needs a capability or datum the provider/trace lacks.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The quantity is mathematically undefined for this input.
    #[error("{0}")]
    Degenerate(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("empty generation")]
    EmptyGeneration,

    #[error("provider error: {0}")]
    Provider(String),

    #[error("sampling failed for indices {indices:?}: {message}")]
    PartialSample { indices: Vec<usize>, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {message}")]
    Validation { message: String, raw: Option<String> },

    #[error("no knowledge for diagnosis: {0}")]
    NoKnowledge(String),

    #[error("config error: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("unknown method: {0}")]
    UnknownMethod(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    /// Wraps an error with the pipeline stage it came from.
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }

    /// Only transport failures are worth retrying.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Transport(_))
    }

    pub fn is_unsupported(&self) -> bool {
        match self {
            Error::Unsupported(_) => true,
            Error::Stage { source, .. } => source.is_unsupported(),
            _ => false,
        }
    }

    /// A copy for reporting a shared failure more than once. I/O and JSON
    /// errors lose their source and keep their message.
    pub fn replicate(&self) -> Error {
        match self {
            Error::InvalidInput(m) => Error::InvalidInput(m.clone()),
            Error::Unsupported(m) => Error::Unsupported(m.clone()),
            Error::Degenerate(m) => Error::Degenerate(m.clone()),
            Error::Transport(m) => Error::Transport(m.clone()),
            Error::EmptyGeneration => Error::EmptyGeneration,
            Error::Provider(m) => Error::Provider(m.clone()),
            Error::PartialSample { indices, message } => {
                Error::PartialSample { indices: indices.clone(), message: message.clone() }
            }
            Error::Parse(m) => Error::Parse(m.clone()),
            Error::Validation { message, raw } => Error::Validation { message: message.clone(), raw: raw.clone() },
            Error::NoKnowledge(m) => Error::NoKnowledge(m.clone()),
            Error::Config(m) => Error::Config(m.clone()),
            Error::UnknownMethod(m) => Error::UnknownMethod(m.clone()),
            Error::Stage { stage, source } => Error::Stage { stage, source: Box::new(source.replicate()) },
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), e.to_string())),
            Error::Json(e) => Error::Parse(e.to_string()),
        }
    }

    /// Stable short code for machine-readable output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Unsupported(_) => "unsupported",
            Error::Degenerate(_) => "degenerate",
            Error::Transport(_) => "transport",
            Error::EmptyGeneration => "empty_generation",
            Error::Provider(_) => "provider",
            Error::PartialSample { .. } => "partial_sample",
            Error::Parse(_) => "parse",
            Error::Validation { .. } => "validation",
            Error::NoKnowledge(_) => "no_knowledge",
            Error::Config(_) => "config",
            Error::UnknownMethod(_) => "unknown_method",
            Error::Stage { source, .. } => source.code(),
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
