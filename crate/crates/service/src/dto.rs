//! Request and response bodies.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// A corpus user id, or `"anonymous"`.
    pub user_id: String,
    pub query_text: String,
    #[serde(default)]
    pub target_item_id: Option<String>,
}

/// Exactly one of `value` and `not_relevant` must be set. `round` and
/// `slot`, when given, must match the pending question.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Answer {
    #[serde(default)]
    pub value: Option<String>,
    #[serde(default)]
    pub not_relevant: Option<bool>,
    #[serde(default)]
    pub round: Option<usize>,
    #[serde(default)]
    pub slot: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Question {
    pub round: usize,
    pub slot: String,
    pub prompt: String,
    /// Most frequent training values of the slot.
    pub suggestions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedItem {
    pub item_id: String,
    pub title: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub question: Option<Question>,
    pub ranking: Vec<RankedItem>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_rank: Option<usize>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnswerOutcome {
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<&'static str>,
    /// `positive`, `negative` or `invalid`.
    pub feedback: &'static str,
    pub question: Option<Question>,
    pub ranking: Vec<RankedItem>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_rank: Option<usize>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Turn {
    pub round: usize,
    pub slot: String,
    pub prompt: String,
    pub feedback: &'static str,
    /// The answered value for positive feedback, else the raw answer text.
    pub answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub user_id: String,
    pub query_text: String,
    pub strategy: String,
    pub rounds: usize,
    pub transcript: Vec<Turn>,
    pub question: Option<Question>,
    pub ranking: Vec<RankedItem>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_rank: Option<usize>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotInfo {
    pub slot: String,
    pub prompt: String,
    pub examples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotList {
    pub slots: Vec<SlotInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotValue {
    pub slot: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemCard {
    pub item_id: String,
    pub title: String,
    pub description: String,
    pub pairs: Vec<SlotValue>,
}
