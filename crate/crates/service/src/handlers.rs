use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::Json;
use serde::de::DeserializeOwned;

use convps::dialogue::question_prompt;
use convps::{Error, Feedback, ItemId, Session, SlotId};

use crate::dto::{
    Answer, AnswerOutcome, CreateSession, ItemCard, Question, RankedItem, SessionCreated,
    SessionView, SlotInfo, SlotList, SlotValue, Turn,
};
use crate::{ApiError, AppState, SessionResource, ANONYMOUS};

/// Value chips offered with a question.
const SUGGESTIONS: usize = 8;

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("malformed_body", e.to_string()))
}

impl AppState {
    fn question(&self, slot: SlotId, round: usize) -> Question {
        let vocab = &self.0.corpus.vocab;
        let name = vocab.slot_name(slot);
        Question {
            round,
            slot: name.to_string(),
            prompt: question_prompt(name),
            suggestions: vocab
                .values_for_slot(slot)
                .into_iter()
                .take(SUGGESTIONS)
                .map(|(v, _)| vocab.value_name(v).to_string())
                .collect(),
        }
    }

    /// Selects the next question, or `None` once every slot was asked.
    fn advance(&self, session: &mut Session) -> Result<Option<Question>, ApiError> {
        match session.next_question(&self.0.pool, &self.0.strategy_config) {
            Ok(slot) => Ok(Some(self.question(slot, session.rounds()))),
            Err(Error::PoolExhausted) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn top(&self, session: &Session) -> Vec<RankedItem> {
        session
            .ranking()
            .iter()
            .take(self.0.top_k)
            .map(|&(item, score)| RankedItem {
                item_id: self.0.corpus.item(item).key.clone(),
                title: self.0.corpus.item(item).title.clone(),
                score,
            })
            .collect()
    }

    fn target_rank(&self, session: &Session, target: Option<ItemId>) -> Result<Option<usize>, ApiError> {
        match target {
            Some(t) if self.0.demo_mode => Ok(Some(session.rank_of(t)?)),
            _ => Ok(None),
        }
    }

    fn pending_question(&self, session: &Session) -> Option<Question> {
        session.pending().map(|s| self.question(s, session.rounds()))
    }
}

fn lock(entry: &crate::Entry) -> Result<std::sync::MutexGuard<'_, SessionResource>, ApiError> {
    entry
        .resource
        .lock()
        .map_err(|_| ApiError::internal("session state poisoned"))
}

pub(crate) async fn create_session(
    State(app): State<AppState>,
    body: Bytes,
) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    app.purge();
    let req: CreateSession = parse(&body)?;
    let corpus = &app.0.corpus;
    let user = if req.user_id == ANONYMOUS {
        None
    } else {
        Some(corpus.user_id(&req.user_id).ok_or_else(|| {
            ApiError::not_found("unknown_user", format!("unknown user {:?}", req.user_id))
        })?)
    };
    let target = req
        .target_item_id
        .as_deref()
        .map(|key| {
            corpus
                .item_id(key)
                .ok_or_else(|| ApiError::not_found("unknown_item", format!("unknown item {key:?}")))
        })
        .transpose()?;
    let words = corpus.words_of(&req.query_text);
    if words.is_empty() {
        return Err(ApiError::bad_request(
            "empty_query",
            "query has no words in the vocabulary",
        ));
    }
    let mut session = Session::start(
        &app.0.model,
        user,
        &words,
        app.0.strategy,
        &app.0.strategy_config,
        app.0.lambdas,
    )?;
    let question = app.advance(&mut session)?;
    let body = SessionCreated {
        session_id: String::new(),
        done: question.is_none(),
        question,
        ranking: app.top(&session),
        target_rank: app.target_rank(&session, target)?,
    };
    let id = app.insert(SessionResource {
        session,
        user_key: req.user_id,
        query_text: req.query_text,
        target,
        answers: Vec::new(),
    });
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            session_id: id.to_string(),
            ..body
        }),
    ))
}

/// Maps the answer body onto a feedback kind for `slot`.
fn interpret(app: &AppState, slot: SlotId, req: &Answer) -> Result<Feedback, ApiError> {
    match (&req.value, req.not_relevant) {
        (None, Some(true)) => Ok(Feedback::Negative),
        (Some(v), None | Some(false)) => {
            let vocab = &app.0.corpus.vocab;
            let candidates = vocab.value_ignore_case(v.trim());
            if candidates.is_empty() {
                return Ok(Feedback::Invalid);
            }
            candidates
                .into_iter()
                .find(|&c| vocab.pair_id(slot, c).is_some())
                .map(Feedback::Positive)
                .ok_or_else(|| {
                    ApiError::bad_request(
                        "value_for_other_slot",
                        format!("{v:?} is not a value of {}", vocab.slot_name(slot)),
                    )
                })
        }
        _ => Err(ApiError::bad_request(
            "malformed_body",
            "give exactly one of value or not_relevant: true",
        )),
    }
}

pub(crate) async fn answer(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<AnswerOutcome>, ApiError> {
    let (_, entry) = app.session(&id)?;
    let req: Answer = parse(&body)?;
    let mut res = lock(&entry)?;
    let round = res.session.rounds();
    let Some(slot) = res.session.pending() else {
        return Err(ApiError::conflict("the session has no open question"));
    };
    if let Some(r) = req.round.filter(|&r| r != round) {
        return Err(ApiError::conflict(format!("round {r} is not open; round {round} is")));
    }
    if let Some(name) = &req.slot {
        if name != app.0.corpus.vocab.slot_name(slot) {
            return Err(ApiError::bad_request(
                "slot_mismatch",
                format!("the open question is about {}", app.0.corpus.vocab.slot_name(slot)),
            ));
        }
    }
    let feedback = interpret(&app, slot, &req)?;
    res.session.apply_feedback(&app.0.model, slot, feedback)?;
    res.answers.push(req.value.clone());
    let question = app.advance(&mut res.session)?;
    let invalid = feedback == Feedback::Invalid;
    Ok(Json(AnswerOutcome {
        accepted: !invalid,
        reason: invalid.then_some("unknown_value"),
        feedback: feedback.name(),
        done: question.is_none(),
        question,
        ranking: app.top(&res.session),
        target_rank: app.target_rank(&res.session, res.target)?,
    }))
}

pub(crate) async fn get_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionView>, ApiError> {
    let (uuid, entry) = app.session(&id)?;
    let res = lock(&entry)?;
    let vocab = &app.0.corpus.vocab;
    let transcript = res
        .session
        .transcript()
        .iter()
        .zip(&res.answers)
        .enumerate()
        .map(|(round, (&(slot, fb), raw))| Turn {
            round,
            slot: vocab.slot_name(slot).to_string(),
            prompt: question_prompt(vocab.slot_name(slot)),
            feedback: fb.name(),
            answer: match fb {
                Feedback::Positive(v) => Some(vocab.value_name(v).to_string()),
                _ => raw.clone(),
            },
        })
        .collect();
    let question = app.pending_question(&res.session);
    Ok(Json(SessionView {
        session_id: uuid.to_string(),
        user_id: res.user_key.clone(),
        query_text: res.query_text.clone(),
        strategy: app.0.strategy.to_string(),
        rounds: res.session.rounds(),
        transcript,
        done: question.is_none(),
        question,
        ranking: app.top(&res.session),
        target_rank: app.target_rank(&res.session, res.target)?,
    }))
}

pub(crate) async fn slots(State(app): State<AppState>) -> Json<SlotList> {
    let vocab = &app.0.corpus.vocab;
    let slots = (0..vocab.num_slots())
        .map(SlotId::from_index)
        .map(|s| {
            let q = app.question(s, 0);
            SlotInfo {
                slot: q.slot,
                prompt: q.prompt,
                examples: q.suggestions,
            }
        })
        .collect();
    Json(SlotList { slots })
}

pub(crate) async fn item(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<ItemCard>, ApiError> {
    let corpus = &app.0.corpus;
    let item = corpus
        .item_id(&id)
        .ok_or_else(|| ApiError::not_found("unknown_item", format!("unknown item {id:?}")))?;
    let record = corpus.item_record(item);
    Ok(Json(ItemCard {
        item_id: record.item_id.clone(),
        title: record.title.clone(),
        description: record.description.clone(),
        pairs: record
            .pairs
            .iter()
            .map(|(slot, value)| SlotValue {
                slot: slot.clone(),
                value: value.clone(),
            })
            .collect(),
    }))
}
