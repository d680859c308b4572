use std::sync::OnceLock;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde::Deserialize;
use serde_json::{json, Value};
use tower::ServiceExt;

use convps::training::train;
use convps::{Corpus, LambdaWeights, Model, Session, StrategyConfig, StrategyKind, SyntheticConfig, TrainConfig};
use convps_service::{router, AppState, ServiceConfig};

// Response schemas, written independently of the service's own types.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct QuestionS {
    round: usize,
    slot: String,
    prompt: String,
    suggestions: Vec<String>,
}

#[derive(Deserialize, PartialEq, Debug)]
#[serde(deny_unknown_fields)]
struct RankedS {
    item_id: String,
    title: String,
    score: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct CreatedS {
    session_id: String,
    question: Option<QuestionS>,
    ranking: Vec<RankedS>,
    target_rank: Option<usize>,
    done: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct AnswerS {
    accepted: bool,
    reason: Option<String>,
    feedback: String,
    question: Option<QuestionS>,
    ranking: Vec<RankedS>,
    target_rank: Option<usize>,
    done: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct TurnS {
    round: usize,
    slot: String,
    prompt: String,
    feedback: String,
    answer: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct ViewS {
    session_id: String,
    user_id: String,
    query_text: String,
    strategy: String,
    rounds: usize,
    transcript: Vec<TurnS>,
    question: Option<QuestionS>,
    ranking: Vec<RankedS>,
    target_rank: Option<usize>,
    done: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct SlotS {
    slot: String,
    prompt: String,
    examples: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotsS {
    slots: Vec<SlotS>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct PairS {
    slot: String,
    value: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct ItemS {
    item_id: String,
    title: String,
    description: String,
    pairs: Vec<PairS>,
}

struct Fixture {
    corpus: Corpus,
    model: Model,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let corpus = convps::corpus::generate_synthetic(&SyntheticConfig {
            num_users: 60,
            num_items: 40,
            num_queries: 3,
            slots_per_topic: 4,
            tail_values: 10,
            vocab_size: 100,
            seed: 8,
            ..Default::default()
        })
        .unwrap();
        let config = TrainConfig {
            dim: 8,
            epochs: 3,
            seed: 1,
            ..Default::default()
        };
        let model = train(&corpus, &config, &LambdaWeights::default(), |_| {}).unwrap();
        Fixture { corpus, model }
    })
}

fn config() -> ServiceConfig {
    ServiceConfig::new("unused", "unused")
}

fn app_with(config: &ServiceConfig) -> Router {
    let f = fixture();
    router(AppState::new(f.model.clone(), f.corpus.clone(), config).unwrap())
}

fn app() -> Router {
    app_with(&config())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, "POST", uri, Some(body.to_string())).await
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, "GET", uri, None).await
}

fn user_key(i: usize) -> String {
    fixture().corpus.users[i].key.clone()
}

fn query_text() -> String {
    fixture().corpus.queries[0].text.clone()
}

async fn start(app: &Router) -> CreatedS {
    let (status, v) = post(app, "/sessions", json!({"user_id": user_key(0), "query_text": query_text()})).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    serde_json::from_value(v).unwrap()
}

#[tokio::test]
async fn create_returns_a_templated_question() {
    let app = app();
    let s = start(&app).await;
    let q = s.question.unwrap();
    assert_eq!(q.prompt, format!("What {} would you like?", q.slot));
    assert_eq!(q.round, 0);
    assert_eq!(s.ranking.len(), 10);
    assert!(s.target_rank.is_none());
    assert!(!s.done);
}

#[tokio::test]
async fn create_errors() {
    let app = app();
    let (st, v) = post(&app, "/sessions", json!({"user_id": "nobody", "query_text": query_text()})).await;
    assert_eq!((st, v["error"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_user")));
    let (st, _) = post(&app, "/sessions", json!({"user_id": user_key(0), "query_text": "qqqq zzzz"})).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) = post(
        &app,
        "/sessions",
        json!({"user_id": user_key(0), "query_text": query_text(), "target_item_id": "nope"}),
    )
    .await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "POST", "/sessions", Some("{not json".into())).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) = post(&app, "/sessions", json!({"user_id": user_key(0)})).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn anonymous_sessions_ignore_the_user_term() {
    let f = fixture();
    let app = app();
    let (st, v) = post(&app, "/sessions", json!({"user_id": "anonymous", "query_text": query_text()})).await;
    assert_eq!(st, StatusCode::CREATED);
    let got: CreatedS = serde_json::from_value(v).unwrap();
    let words = f.corpus.words_of(&query_text());
    let s = Session::start(&f.model, None, &words, StrategyKind::Gbs, &StrategyConfig::default(), LambdaWeights::default())
        .unwrap();
    let want: Vec<String> = s.ranking()[..10].iter().map(|r| f.corpus.item(r.0).key.clone()).collect();
    let ids: Vec<String> = got.ranking.iter().map(|r| r.item_id.clone()).collect();
    assert_eq!(ids, want);
}

#[tokio::test]
async fn demo_mode_reports_the_target_rank() {
    let f = fixture();
    let app = app_with(&ServiceConfig {
        demo_mode: true,
        ..config()
    });
    let target = f.corpus.items[7].key.clone();
    let (st, v) = post(
        &app,
        "/sessions",
        json!({"user_id": user_key(2), "query_text": query_text(), "target_item_id": target}),
    )
    .await;
    assert_eq!(st, StatusCode::CREATED);
    let got: CreatedS = serde_json::from_value(v).unwrap();
    let words = f.corpus.words_of(&query_text());
    let user = f.corpus.user_id(&user_key(2));
    let s = Session::start(&f.model, user, &words, StrategyKind::Gbs, &StrategyConfig::default(), LambdaWeights::default())
        .unwrap();
    assert_eq!(got.target_rank, Some(s.rank_of(convps::ItemId(7)).unwrap()));
}

#[tokio::test]
async fn answers_update_the_session() {
    let app = app();
    let s = start(&app).await;
    let uri = format!("/sessions/{}/answer", s.session_id);
    let q = s.question.unwrap();

    let (st, v) = post(&app, &uri, json!({"value": q.suggestions[0].to_uppercase(), "round": 0})).await;
    assert_eq!(st, StatusCode::OK, "{v}");
    let a: AnswerS = serde_json::from_value(v).unwrap();
    assert!(a.accepted);
    assert_eq!(a.feedback, "positive");
    assert_ne!(a.ranking, s.ranking);

    // Replaying round 0 conflicts.
    let (st, _) = post(&app, &uri, json!({"value": q.suggestions[0], "round": 0})).await;
    assert_eq!(st, StatusCode::CONFLICT);

    let (st, v) = post(&app, &uri, json!({"not_relevant": true})).await;
    assert_eq!(st, StatusCode::OK);
    let b: AnswerS = serde_json::from_value(v).unwrap();
    assert_eq!((b.accepted, b.feedback.as_str()), (true, "negative"));

    let (st, v) = post(&app, &uri, json!({"value": "bluish-greenish"})).await;
    assert_eq!(st, StatusCode::OK);
    let c: AnswerS = serde_json::from_value(v).unwrap();
    assert!(!c.accepted);
    assert_eq!(c.reason.as_deref(), Some("unknown_value"));
    assert_eq!(c.ranking, b.ranking);

    let (st, v) = get(&app, &format!("/sessions/{}", s.session_id)).await;
    assert_eq!(st, StatusCode::OK);
    let view: ViewS = serde_json::from_value(v).unwrap();
    assert_eq!(view.rounds, 3);
    assert_eq!(view.transcript.len(), 3);
    let kinds: Vec<&str> = view.transcript.iter().map(|t| t.feedback.as_str()).collect();
    assert_eq!(kinds, ["positive", "negative", "invalid"]);
    assert_eq!(view.transcript[0].answer.as_deref(), Some(q.suggestions[0].as_str()));
    assert_eq!(view.transcript[2].answer.as_deref(), Some("bluish-greenish"));
    assert_eq!(view.ranking, c.ranking);
}

#[tokio::test]
async fn malformed_answers_are_rejected() {
    let f = fixture();
    let app = app();
    let s = start(&app).await;
    let uri = format!("/sessions/{}/answer", s.session_id);
    let q = s.question.unwrap();
    for body in [
        json!({}),
        json!({"value": "x", "not_relevant": true}),
        json!({"not_relevant": false}),
        json!({"value": 3}),
        json!({"answer": "x"}),
        json!({"slot": "not-the-slot", "not_relevant": true}),
    ] {
        let (st, _) = post(&app, &uri, body.clone()).await;
        assert_eq!(st, StatusCode::BAD_REQUEST, "{body}");
    }

    // A known value of some other slot.
    let slot = f.corpus.vocab.slot(&q.slot).unwrap();
    let other = f
        .corpus
        .vocab
        .pairs()
        .iter()
        .find(|&&(s, v)| s != slot && f.corpus.vocab.pair_id(slot, v).is_none())
        .map(|&(_, v)| f.corpus.vocab.value_name(v).to_string())
        .unwrap();
    let (st, v) = post(&app, &uri, json!({"value": other})).await;
    assert_eq!((st, v["error"].as_str()), (StatusCode::BAD_REQUEST, Some("value_for_other_slot")));

    // Nothing was recorded.
    let (_, v) = get(&app, &format!("/sessions/{}", s.session_id)).await;
    assert_eq!(v["rounds"], 0);
}

#[tokio::test]
async fn sessions_are_isolated() {
    let app = app();
    let a = start(&app).await;
    let b = start(&app).await;
    assert_ne!(a.session_id, b.session_id);
    let view_b = get(&app, &format!("/sessions/{}", b.session_id)).await.1;
    for _ in 0..3 {
        let (_, v) = get(&app, &format!("/sessions/{}", a.session_id)).await;
        let q: QuestionS = serde_json::from_value(v["question"].clone()).unwrap();
        let body = if q.suggestions.is_empty() {
            json!({"not_relevant": true})
        } else {
            json!({"value": q.suggestions[0]})
        };
        let (st, _) = post(&app, &format!("/sessions/{}/answer", a.session_id), body).await;
        assert_eq!(st, StatusCode::OK);
        assert_eq!(get(&app, &format!("/sessions/{}", b.session_id)).await.1, view_b);
    }
    // b answers with its own first question, unaffected by a's history.
    let (st, v) = post(&app, &format!("/sessions/{}/answer", b.session_id), json!({"not_relevant": true, "round": 0})).await;
    assert_eq!(st, StatusCode::OK, "{v}");
}

#[tokio::test]
async fn reads_are_idempotent_and_schema_valid() {
    let f = fixture();
    let app = app();
    let s = start(&app).await;
    let uri = format!("/sessions/{}", s.session_id);
    let first = get(&app, &uri).await;
    assert_eq!(first.0, StatusCode::OK);
    assert_eq!(get(&app, &uri).await, first);
    let _: ViewS = serde_json::from_value(first.1).unwrap();

    let (st, v) = get(&app, "/meta/slots").await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(get(&app, "/meta/slots").await.1, v);
    let slots: SlotsS = serde_json::from_value(v).unwrap();
    assert_eq!(slots.slots.len(), f.corpus.vocab.num_slots());
    assert!(slots.slots.iter().all(|s| s.examples.len() <= 8));

    let key = &f.corpus.items[3].key;
    let (st, v) = get(&app, &format!("/items/{key}")).await;
    assert_eq!(st, StatusCode::OK);
    let card: ItemS = serde_json::from_value(v).unwrap();
    assert_eq!(&card.item_id, key);
    assert_eq!(get(&app, "/items/missing").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn unknown_and_expired_sessions_are_not_found() {
    let app = app_with(&ServiceConfig {
        session_ttl: Duration::ZERO,
        ..config()
    });
    assert_eq!(get(&app, "/sessions/not-a-uuid").await.0, StatusCode::NOT_FOUND);
    assert_eq!(
        get(&app, "/sessions/00000000-0000-0000-0000-000000000000").await.0,
        StatusCode::NOT_FOUND
    );
    let s = start(&app).await;
    tokio::time::sleep(Duration::from_millis(20)).await;
    let (st, v) = get(&app, &format!("/sessions/{}", s.session_id)).await;
    assert_eq!((st, v["error"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_session")));
    let (st, _) = post(&app, &format!("/sessions/{}/answer", s.session_id), json!({"not_relevant": true})).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn exhausting_the_pool_finishes_the_session() {
    let f = fixture();
    let app = app();
    let s = start(&app).await;
    let uri = format!("/sessions/{}/answer", s.session_id);
    let mut last = None;
    for _ in 0..f.corpus.vocab.num_slots() {
        let (st, v) = post(&app, &uri, json!({"not_relevant": true})).await;
        assert_eq!(st, StatusCode::OK);
        last = Some(serde_json::from_value::<AnswerS>(v).unwrap());
    }
    let last = last.unwrap();
    assert!(last.done && last.question.is_none());
    assert_eq!(post(&app, &uri, json!({"not_relevant": true})).await.0, StatusCode::CONFLICT);
}

#[tokio::test]
async fn load_reads_artifacts_from_disk() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = dir.path().join("corpus");
    f.corpus.write(&corpus_dir).unwrap();
    let model_path = dir.path().join("model.bin");
    f.model.save(&model_path).unwrap();
    let state = AppState::load(&ServiceConfig::new(&model_path, &corpus_dir)).unwrap();
    assert_eq!(state.live_sessions(), 0);
    assert!(AppState::load(&ServiceConfig::new(dir.path().join("none.bin"), &corpus_dir)).is_err());
}
