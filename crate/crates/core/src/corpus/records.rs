//! Line records of the four corpus files.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub review_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub title: String,
    pub description: String,
    pub reviews: Vec<String>,
    /// `[slot, value]` annotations.
    pub pairs: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub query_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user_id: String,
    pub query_id: String,
    pub item_id: String,
    pub split: Split,
}

/// The corpus exactly as stored on disk, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawCorpus {
    pub users: Vec<UserRecord>,
    pub items: Vec<ItemRecord>,
    pub queries: Vec<QueryRecord>,
    pub interactions: Vec<InteractionRecord>,
}
