use std::path::PathBuf;

use thiserror::Error;

use crate::gateway::GatewayError;

/// Broad failure classes. The CLI maps these onto its exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Config,
    Data,
    Backend,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("insufficient examples: {available} examples for {buckets} nonzero split buckets")]
    InsufficientExamples { available: usize, buckets: usize },

    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),

    #[error("split empty: {0}")]
    SplitEmpty(&'static str),

    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("no critiques to aggregate")]
    NoCritiques,

    #[error("empty updated prompt")]
    EmptyUpdatedPrompt,

    #[error("update produced no prompt")]
    NoUpdatedPrompt,

    #[error("invalid template: {0}")]
    Template(String),

    #[error("critic leak: test pair (agent {agent_index})")]
    CriticLeak { agent_index: usize },

    #[error("no human prompts in task")]
    NoHumanPrompts,

    #[error("scoring pair {pair_index}: {source}")]
    Scoring {
        pair_index: usize,
        #[source]
        source: GatewayError,
    },

    #[error("actor {agent_index}: {source}")]
    Actor {
        agent_index: usize,
        #[source]
        source: GatewayError,
    },

    #[error("critic {agent_index}: {source}")]
    Critic {
        agent_index: usize,
        #[source]
        source: GatewayError,
    },

    #[error("update call {candidate}: {source}")]
    Update {
        candidate: usize,
        #[source]
        source: GatewayError,
    },

    #[error(transparent)]
    Gateway(#[from] GatewayError),

    #[error("artifact: {0}")]
    Artifact(String),

    #[error("mixed schema versions in report input: {0:?}")]
    MixedSchema(Vec<u32>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Template(_) => ErrorKind::Config,
            Error::InvalidTask(_)
            | Error::InsufficientExamples { .. }
            | Error::InvalidRatios(_)
            | Error::SplitEmpty(_)
            | Error::InvalidPrompt(_)
            | Error::NoHumanPrompts
            | Error::CriticLeak { .. }
            | Error::MixedSchema(_)
            | Error::Artifact(_)
            | Error::Io { .. }
            | Error::Parse { .. } => ErrorKind::Data,
            Error::Gateway(e)
            | Error::Scoring { source: e, .. }
            | Error::Actor { source: e, .. }
            | Error::Critic { source: e, .. }
            | Error::Update { source: e, .. } => e.kind(),
            Error::NoCritiques
            | Error::EmptyUpdatedPrompt
            | Error::NoUpdatedPrompt => ErrorKind::Backend,
            Error::Json(_) => ErrorKind::Internal,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
