//! The conversation loop shared by simulation and the live service.
//!
//! A session holds the cached query projection, the accepted conversation
//! vectors and the current ranking. Each round asks one slot and applies one
//! answer; invalid answers are recorded for the question strategy but leave
//! the ranking untouched.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ask::{next_question, preference_vector, AskState, QuestionPool, StrategyConfig, StrategyKind};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::ids::{ItemId, SlotId, UserId, ValueId, WordId};
use crate::model::{
    compose_negative, compose_positive, project_query, rank_items, ConversationVector,
    LambdaWeights, Model,
};

/// Reciprocal rank and AP cut off at this depth.
const RR_CUTOFF: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Feedback {
    Positive(ValueId),
    Negative,
    Invalid,
}

impl Feedback {
    pub fn name(&self) -> &'static str {
        match self {
            Feedback::Positive(_) => "positive",
            Feedback::Negative => "negative",
            Feedback::Invalid => "invalid",
        }
    }

    /// Strategy reward: `+1` only for a positive answer.
    pub fn reward(&self) -> f64 {
        match self {
            Feedback::Positive(_) => 1.0,
            Feedback::Negative | Feedback::Invalid => -1.0,
        }
    }
}

/// The question shown for a slot.
pub fn question_prompt(slot_name: &str) -> String {
    format!("What {slot_name} would you like?")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackCounts {
    pub positive: usize,
    pub negative: usize,
    pub invalid: usize,
}

impl FeedbackCounts {
    pub fn total(&self) -> usize {
        self.positive + self.negative + self.invalid
    }

    pub fn add(&mut self, f: &Feedback) {
        match f {
            Feedback::Positive(_) => self.positive += 1,
            Feedback::Negative => self.negative += 1,
            Feedback::Invalid => self.invalid += 1,
        }
    }
}

/// One conversation against a fixed model.
#[derive(Debug, Clone)]
pub struct Session {
    user: Option<UserId>,
    query_words: Vec<WordId>,
    query_vec: Vec<f64>,
    lambdas: LambdaWeights,
    ask: AskState,
    accepted: Vec<ConversationVector>,
    transcript: Vec<(SlotId, Feedback)>,
    ranking: Vec<(ItemId, f64)>,
    pending: Option<SlotId>,
}

impl Session {
    /// Projects the query and computes the initial ranking. `user` of `None`
    /// is an anonymous session without a user term.
    pub fn start(
        model: &Model,
        user: Option<UserId>,
        query_words: &[WordId],
        strategy: StrategyKind,
        config: &StrategyConfig,
        lambdas: LambdaWeights,
    ) -> Result<Session> {
        lambdas.validate()?;
        config.validate()?;
        if let Some(u) = user {
            if u.index() >= model.params.user_emb.rows() {
                return Err(Error::UserOutOfRange(u));
            }
        }
        let query_vec = project_query(&model.params, query_words)?;
        let ranking = rank_items(&model.params, user, &query_vec, &[], &lambdas, None)?;
        Ok(Session {
            user,
            query_words: query_words.to_vec(),
            query_vec,
            lambdas,
            ask: AskState::new(strategy, config, model.params.slot_pos_emb.rows()),
            accepted: Vec::new(),
            transcript: Vec::new(),
            ranking,
            pending: None,
        })
    }

    pub fn user(&self) -> Option<UserId> {
        self.user
    }

    pub fn query_words(&self) -> &[WordId] {
        &self.query_words
    }

    pub fn lambdas(&self) -> LambdaWeights {
        self.lambdas
    }

    pub fn ask_state(&self) -> &AskState {
        &self.ask
    }

    pub fn accepted(&self) -> &[ConversationVector] {
        &self.accepted
    }

    pub fn transcript(&self) -> &[(SlotId, Feedback)] {
        &self.transcript
    }

    /// Every item with its score, best first.
    pub fn ranking(&self) -> &[(ItemId, f64)] {
        &self.ranking
    }

    pub fn ranked_items(&self) -> Vec<ItemId> {
        self.ranking.iter().map(|r| r.0).collect()
    }

    /// Questions answered so far.
    pub fn rounds(&self) -> usize {
        self.transcript.len()
    }

    pub fn pending(&self) -> Option<SlotId> {
        self.pending
    }

    pub fn feedback_counts(&self) -> FeedbackCounts {
        let mut c = FeedbackCounts::default();
        self.transcript.iter().for_each(|(_, f)| c.add(f));
        c
    }

    /// Zero-based position of `item` in the current ranking.
    pub fn rank_of(&self, item: ItemId) -> Result<usize> {
        self.ranking
            .iter()
            .position(|r| r.0 == item)
            .ok_or(Error::ItemOutOfRange(item))
    }

    /// The question to ask now. Repeated calls without an answer return the
    /// same slot.
    pub fn next_question(&mut self, pool: &QuestionPool, config: &StrategyConfig) -> Result<SlotId> {
        if let Some(s) = self.pending {
            return Ok(s);
        }
        let ranking = &self.ranking;
        let slot = next_question(
            &mut self.ask,
            pool,
            || {
                let ranked: Vec<ItemId> = ranking.iter().map(|r| r.0).collect();
                preference_vector(&ranked, pool.num_items())
            },
            config,
        )?;
        self.pending = Some(slot);
        Ok(slot)
    }

    /// Applies the answer to the pending question and re-ranks.
    pub fn apply_feedback(&mut self, model: &Model, slot: SlotId, feedback: Feedback) -> Result<()> {
        if self.pending != Some(slot) {
            return Err(Error::OutOfOrderFeedback {
                expected: self.pending,
                got: slot,
            });
        }
        let vector = match feedback {
            Feedback::Positive(value) => Some(compose_positive(&model.params, slot, value)?),
            Feedback::Negative => Some(compose_negative(&model.params, slot)?),
            Feedback::Invalid => None,
        };
        self.ask.record(slot, feedback.reward())?;
        self.pending = None;
        self.transcript.push((slot, feedback));
        if let Some(v) = vector {
            self.accepted.push(v);
            self.ranking = self.recompute_ranking(model)?;
        }
        Ok(())
    }

    /// The ranking implied by the session's inputs, computed from scratch.
    pub fn recompute_ranking(&self, model: &Model) -> Result<Vec<(ItemId, f64)>> {
        rank_items(
            &model.params,
            self.user,
            &self.query_vec,
            &self.accepted,
            &self.lambdas,
            None,
        )
    }
}

/// Answers questions about a target item from its annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedUser {
    target: ItemId,
    num_slots: usize,
    /// Slot to its training value, or `None` when the value has no
    /// embedding.
    answers: HashMap<SlotId, Option<ValueId>>,
}

impl SimulatedUser {
    pub fn new(corpus: &Corpus, target: ItemId) -> Result<SimulatedUser> {
        if target.index() >= corpus.num_items() {
            return Err(Error::ItemOutOfRange(target));
        }
        let item = corpus.item(target);
        if item.annotations.is_empty() {
            return Err(Error::InvalidInput(format!(
                "target item {:?} has no annotations",
                item.key
            )));
        }
        let mut answers: HashMap<SlotId, Option<ValueId>> = HashMap::new();
        for a in &item.annotations {
            if let Some(slot) = a.slot {
                let e = answers.entry(slot).or_insert(None);
                if e.is_none() {
                    *e = a.value;
                }
            }
        }
        Ok(SimulatedUser {
            target,
            num_slots: corpus.vocab.num_slots(),
            answers,
        })
    }

    pub fn target(&self) -> ItemId {
        self.target
    }

    /// Positive with the target's value, negative when the target lacks the
    /// slot, invalid when the value never occurred in training.
    pub fn answer(&self, slot: SlotId) -> Result<Feedback> {
        if slot.index() >= self.num_slots {
            return Err(Error::SlotOutOfRange(slot));
        }
        Ok(match self.answers.get(&slot) {
            Some(Some(v)) => Feedback::Positive(*v),
            Some(None) => Feedback::Invalid,
            None => Feedback::Negative,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    /// 0 is the initial ranking.
    pub round: usize,
    pub slot: Option<SlotId>,
    pub feedback: Option<Feedback>,
    /// Zero-based.
    pub target_rank: usize,
    /// Mean target reciprocal rank (cut off at 100) over rounds `0..=round`.
    pub mrr_so_far: f64,
}

pub fn reciprocal_rank(rank0: usize) -> f64 {
    if rank0 < RR_CUTOFF {
        1.0 / (rank0 as f64 + 1.0)
    } else {
        0.0
    }
}

/// Asks up to `max_rounds` questions, stopping early if the pool runs out.
/// The trajectory has one entry per completed round plus the initial one.
pub fn run_conversation(
    user: &SimulatedUser,
    session: &mut Session,
    max_rounds: usize,
    model: &Model,
    pool: &QuestionPool,
    config: &StrategyConfig,
) -> Result<Vec<Round>> {
    let mut rr_sum = 0.0;
    let mut push = |out: &mut Vec<Round>, slot, feedback, rank: usize| {
        rr_sum += reciprocal_rank(rank);
        out.push(Round {
            round: out.len(),
            slot,
            feedback,
            target_rank: rank,
            mrr_so_far: rr_sum / (out.len() + 1) as f64,
        });
    };
    let mut out = Vec::with_capacity(max_rounds + 1);
    push(&mut out, None, None, session.rank_of(user.target())?);
    for _ in 0..max_rounds {
        let slot = match session.next_question(pool, config) {
            Ok(s) => s,
            Err(Error::PoolExhausted) => break,
            Err(e) => return Err(e),
        };
        let feedback = user.answer(slot)?;
        session.apply_feedback(model, slot, feedback)?;
        push(&mut out, Some(slot), Some(feedback), session.rank_of(user.target())?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
