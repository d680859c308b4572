//! Conversational product search.
//!
//! Users, queries, items and slot-value pairs are embedded in one latent
//! space by a generative model trained with negative sampling. At search time
//! the system ranks items for a `(user, query)` pair, asks clarifying
//! questions about item slots ("what color would you like?") chosen by one
//! of several strategies, and folds each answer back into the ranking.
//!
//! Module map:
//!
//! * [`corpus`]: on-disk corpus format, vocabularies, train/test split and a
//!   seeded synthetic generator.
//! * [`model`]: parameters, answer composition, query projection, scoring and
//!   ranking, plus the binary checkpoint format.
//! * [`training`]: negative-sampling SGD over the joint objective.
//! * [`ask`]: question selection (random, GBS, LinRel, GP-UCB, GP-EI).
//! * [`dialogue`]: the session state machine and the simulated user.
//! * [`eval`]: ranking metrics, strategy evaluation and sweep reports.

pub mod ask;
pub mod corpus;
pub mod dialogue;
pub mod error;
pub mod eval;
pub mod ids;
pub mod model;
pub mod training;

pub use ask::{AskState, QuestionPool, StrategyConfig, StrategyKind};
pub use corpus::{Corpus, SyntheticConfig};
pub use dialogue::{Feedback, Session, SimulatedUser};
pub use error::{Error, Result};
pub use ids::{ItemId, PairId, QueryId, SlotId, UserId, ValueId, WordId};
pub use model::{ConversationVector, LambdaWeights, Model, ModelParams};
pub use training::TrainConfig;
