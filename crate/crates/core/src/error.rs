use std::path::PathBuf;

use crate::ids::{ItemId, SlotId, UserId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("unknown query {0}")]
    UnknownQuery(String),
    #[error("unknown slot {0}")]
    UnknownSlot(String),
    #[error("unknown value {0}")]
    UnknownValue(String),
    #[error("user id {0} out of range")]
    UserOutOfRange(UserId),
    #[error("item id {0} out of range")]
    ItemOutOfRange(ItemId),
    #[error("slot id {0} out of range")]
    SlotOutOfRange(SlotId),
    #[error("query has no words in the vocabulary")]
    EmptyQuery,
    #[error("no question left to ask")]
    PoolExhausted,
    #[error("ranking is not a complete permutation of {expected} items")]
    IncompleteRanking { expected: usize },
    #[error("empty relevant set")]
    EmptyRelevant,
    #[error("{0}")]
    InvalidInput(String),
    #[error("answer for slot {got} but the pending question is {expected:?}")]
    OutOfOrderFeedback { expected: Option<SlotId>, got: SlotId },
    #[error("no pending question to answer")]
    NoPendingQuestion,
    #[error("linear solve failed: {0}")]
    Solve(String),
    #[error("corpus has no training interactions")]
    EmptyTrainingSet,
    #[error("corpus has no test pairs")]
    NoTestPairs,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
