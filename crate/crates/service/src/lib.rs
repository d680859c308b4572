//! HTTP JSON API for live conversational search sessions.
//!
//! The model, corpus and question pool are loaded once and shared read-only;
//! each session sits behind its own lock, so concurrent sessions never wait
//! on each other and never see each other's answers.
//!
//! | method | path | purpose |
//! |---|---|---|
//! | `POST` | `/sessions` | start a session, get the first question |
//! | `POST` | `/sessions/{id}/answer` | answer the pending question |
//! | `GET` | `/sessions/{id}` | transcript and current ranking |
//! | `GET` | `/meta/slots` | every slot with example values |
//! | `GET` | `/items/{id}` | item card |

pub mod dto;
mod error;
mod handlers;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::routing::{get, post};
use axum::Router;
use dashmap::DashMap;
use tracing::info;
use uuid::Uuid;

use convps::{Corpus, ItemId, LambdaWeights, Model, QuestionPool, Session, StrategyConfig, StrategyKind};

pub use error::{ApiError, ServiceError};

pub const ENV_MODEL: &str = "CONVPS_MODEL";
pub const ENV_CORPUS: &str = "CONVPS_CORPUS";
pub const ENV_ADDR: &str = "CONVPS_ADDR";
pub const ENV_STRATEGY: &str = "CONVPS_STRATEGY";

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_TTL: Duration = Duration::from_secs(1800);

/// User id that starts a session without a user term.
pub const ANONYMOUS: &str = "anonymous";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub addr: String,
    pub model_path: PathBuf,
    pub corpus_path: PathBuf,
    pub strategy: StrategyKind,
    pub strategy_config: StrategyConfig,
    pub lambdas: LambdaWeights,
    pub top_k: usize,
    pub session_ttl: Duration,
    /// Report the rank of a caller-chosen target item.
    pub demo_mode: bool,
}

impl ServiceConfig {
    pub fn new(model_path: impl Into<PathBuf>, corpus_path: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            addr: DEFAULT_ADDR.to_string(),
            model_path: model_path.into(),
            corpus_path: corpus_path.into(),
            strategy: StrategyKind::Gbs,
            strategy_config: StrategyConfig::default(),
            lambdas: LambdaWeights::default(),
            top_k: DEFAULT_TOP_K,
            session_ttl: DEFAULT_TTL,
            demo_mode: false,
        }
    }
}

/// A live session plus what the API needs to describe it.
struct SessionResource {
    session: Session,
    user_key: String,
    query_text: String,
    target: Option<ItemId>,
    /// Raw answer text per round.
    answers: Vec<Option<String>>,
}

struct Entry {
    /// Milliseconds since [`AppState::epoch`] of the last request.
    touched: AtomicU64,
    resource: Mutex<SessionResource>,
}

struct Shared {
    model: Model,
    corpus: Corpus,
    pool: QuestionPool,
    top_k: usize,
    strategy: StrategyKind,
    strategy_config: StrategyConfig,
    lambdas: LambdaWeights,
    ttl: Duration,
    demo_mode: bool,
    epoch: Instant,
    sessions: DashMap<Uuid, Arc<Entry>>,
}

/// Everything the handlers share; cheap to clone.
#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    /// Builds the state from loaded artifacts; fails if the model was not
    /// trained on this corpus.
    pub fn new(model: Model, corpus: Corpus, config: &ServiceConfig) -> Result<Self, ServiceError> {
        model.check_compatible(&corpus)?;
        config.strategy_config.validate()?;
        config.lambdas.validate()?;
        if config.top_k == 0 {
            return Err(convps::Error::Config("top_k must be >= 1".into()).into());
        }
        let pool = QuestionPool::from_corpus(&corpus)?;
        Ok(AppState(Arc::new(Shared {
            model,
            corpus,
            pool,
            top_k: config.top_k,
            strategy: config.strategy,
            strategy_config: config.strategy_config.clone(),
            lambdas: config.lambdas,
            ttl: config.session_ttl,
            demo_mode: config.demo_mode,
            epoch: Instant::now(),
            sessions: DashMap::new(),
        })))
    }

    /// Loads the checkpoint and corpus named in the config.
    pub fn load(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let model = Model::load(&config.model_path)?;
        let corpus = Corpus::ingest(&config.corpus_path)?;
        AppState::new(model, corpus, config)
    }

    pub fn live_sessions(&self) -> usize {
        self.0.sessions.len()
    }

    fn now_ms(&self) -> u64 {
        self.0.epoch.elapsed().as_millis() as u64
    }

    fn expired(&self, entry: &Entry, now: u64) -> bool {
        let idle = now.saturating_sub(entry.touched.load(Ordering::Relaxed));
        Duration::from_millis(idle) > self.0.ttl
    }

    /// Drops every session idle for longer than the TTL.
    fn purge(&self) {
        let now = self.now_ms();
        self.0.sessions.retain(|_, e| !self.expired(e, now));
    }

    fn insert(&self, resource: SessionResource) -> Uuid {
        let id = Uuid::new_v4();
        let entry = Entry {
            touched: AtomicU64::new(self.now_ms()),
            resource: Mutex::new(resource),
        };
        self.0.sessions.insert(id, Arc::new(entry));
        id
    }

    fn session(&self, id: &str) -> Result<(Uuid, Arc<Entry>), ApiError> {
        self.purge();
        let missing = || ApiError::not_found("unknown_session", format!("no live session {id}"));
        let uuid = Uuid::parse_str(id).map_err(|_| missing())?;
        let entry = self.0.sessions.get(&uuid).map(|e| Arc::clone(&e)).ok_or_else(missing)?;
        entry.touched.store(self.now_ms(), Ordering::Relaxed);
        Ok((uuid, entry))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(handlers::create_session))
        .route("/sessions/{id}", get(handlers::get_session))
        .route("/sessions/{id}/answer", post(handlers::answer))
        .route("/meta/slots", get(handlers::slots))
        .route("/items/{id}", get(handlers::item))
        .with_state(state)
}

/// Loads the artifacts and serves until `shutdown` resolves.
pub async fn serve(
    config: &ServiceConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let state = AppState::load(config)?;
    let listener = tokio::net::TcpListener::bind(&config.addr)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: config.addr.clone(),
            source,
        })?;
    let local = listener.local_addr().map_err(ServiceError::Serve)?;
    info!(%local, strategy = %config.strategy, "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(ServiceError::Serve)
}
