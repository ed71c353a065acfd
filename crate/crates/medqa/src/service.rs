//! HTTP chat and manager endpoints.
//!
//! | method | path                | body / query                 |
//! |--------|---------------------|------------------------------|
//! | POST   | `/chat`             | `{"text": ...}`              |
//! | GET    | `/kg/entities`      | `?kind=disease`              |
//! | POST   | `/kg/entities`      | entity record                |
//! | POST   | `/kg/relationships` | relationship record          |
//! | GET    | `/qa/records`       | `?offset=0&limit=50`         |
//! | GET    | `/model`            |                              |
//! | POST   | `/model`            | `{"path": "model.json"}`     |
//! | GET    | `/healthz`          |                              |
//!
//! Readers clone the current `Arc<Snapshot>` and never see it change.
//! Writers serialize on a mutex, build a new snapshot and swap it in.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use medqa_core::corpus::QaRecord;
use medqa_core::graph::{EntityKind, EntityRecord, GraphLine, RelRecord};
use medqa_core::router::ChatAnswer;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tower_http::cors::{Any, CorsLayer};

use crate::stack::{load_model_file, Snapshot};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct AppState {
    current: RwLock<Arc<Snapshot>>,
    writer: Mutex<()>,
}

impl AppState {
    pub fn new(snapshot: Snapshot) -> Arc<Self> {
        Arc::new(AppState {
            current: RwLock::new(Arc::new(snapshot)),
            writer: Mutex::new(()),
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn publish(&self, next: Snapshot) -> u64 {
        let version = next.version;
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(next);
        version
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Deserialize)]
pub struct ChatRequest {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ChatResponse {
    #[serde(flatten)]
    pub answer: ChatAnswer,
    pub snapshot: u64,
}

async fn chat(State(state): State<Arc<AppState>>, body: Result<Json<ChatRequest>, JsonRejection>) -> ApiResult<ChatResponse> {
    let Json(req) = body?;
    if req.text.trim().is_empty() {
        return Err(ApiError::bad_request("text must not be empty"));
    }
    let snap = state.snapshot();
    let version = snap.version;
    let answer = tokio::task::spawn_blocking(move || snap.answer(&req.text))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(ChatResponse {
        answer,
        snapshot: version,
    }))
}

#[derive(Debug, Deserialize)]
pub struct EntityQuery {
    pub kind: Option<EntityKind>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EntityList {
    pub snapshot: u64,
    pub entities: Vec<EntityRecord>,
}

async fn list_entities(
    State(state): State<Arc<AppState>>,
    query: Result<Query<EntityQuery>, QueryRejection>,
) -> ApiResult<EntityList> {
    let Query(q) = query?;
    let snap = state.snapshot();
    let entities = snap
        .graph()
        .to_records()
        .into_iter()
        .filter_map(|line| match line {
            GraphLine::Entity(e) if q.kind.is_none_or(|k| k == e.kind) => Some(e),
            _ => None,
        })
        .collect();
    Ok(Json(EntityList {
        snapshot: snap.version,
        entities,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EntityUpdated {
    pub snapshot: u64,
    pub entity: EntityRecord,
}

async fn upsert_entity(
    State(state): State<Arc<AppState>>,
    body: Result<Json<EntityRecord>, JsonRejection>,
) -> ApiResult<EntityUpdated> {
    let Json(record) = body?;
    let _guard = state.writer.lock().await;
    let current = state.snapshot();
    let mut graph = current.graph().clone();
    let id = graph
        .upsert_entity(record)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let e = graph.entity(id).expect("just inserted");
    let entity = EntityRecord {
        kind: e.kind,
        name: e.name.clone(),
        properties: e.properties.clone(),
    };
    let next = tokio::task::spawn_blocking(move || current.with_graph(graph))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let snapshot = state.publish(next);
    Ok(Json(EntityUpdated { snapshot, entity }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RelationshipUpdated {
    pub snapshot: u64,
    pub created: bool,
}

async fn upsert_relationship(
    State(state): State<Arc<AppState>>,
    body: Result<Json<RelRecord>, JsonRejection>,
) -> ApiResult<RelationshipUpdated> {
    let Json(record) = body?;
    let _guard = state.writer.lock().await;
    let current = state.snapshot();
    let mut graph = current.graph().clone();
    let created = graph
        .upsert_relationship(&record)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    if !created {
        return Ok(Json(RelationshipUpdated {
            snapshot: current.version,
            created,
        }));
    }
    let next = tokio::task::spawn_blocking(move || current.with_graph(graph))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let snapshot = state.publish(next);
    Ok(Json(RelationshipUpdated { snapshot, created }))
}

#[derive(Debug, Deserialize)]
pub struct Page {
    #[serde(default)]
    pub offset: usize,
    #[serde(default = "default_limit")]
    pub limit: usize,
}

fn default_limit() -> usize {
    50
}

const MAX_PAGE: usize = 500;

#[derive(Debug, Serialize, Deserialize)]
pub struct RecordPage {
    pub total: usize,
    pub offset: usize,
    pub records: Vec<QaRecord>,
}

async fn list_records(State(state): State<Arc<AppState>>, query: Result<Query<Page>, QueryRejection>) -> ApiResult<RecordPage> {
    let Query(page) = query?;
    let snap = state.snapshot();
    let records = snap
        .records
        .iter()
        .skip(page.offset)
        .take(page.limit.min(MAX_PAGE))
        .cloned()
        .collect();
    Ok(Json(RecordPage {
        total: snap.records.len(),
        offset: page.offset,
        records,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelInfo {
    pub snapshot: u64,
    pub loaded: bool,
    pub embedding_dim: Option<usize>,
    pub hidden: Option<usize>,
    pub max_seq_length: Option<usize>,
    pub qa_records: usize,
    pub qa_indexed: bool,
}

fn model_info(snap: &Snapshot) -> ModelInfo {
    let dims = snap.model.as_ref().map(|m| m.params.dims());
    ModelInfo {
        snapshot: snap.version,
        loaded: snap.model.is_some(),
        embedding_dim: dims.map(|d| d.embedding_dim),
        hidden: dims.map(|d| d.hidden),
        max_seq_length: snap.model.as_ref().map(|m| m.max_len),
        qa_records: snap.records.len(),
        qa_indexed: snap.corpus.is_some(),
    }
}

async fn get_model(State(state): State<Arc<AppState>>) -> Json<ModelInfo> {
    Json(model_info(&state.snapshot()))
}

#[derive(Debug, Deserialize)]
pub struct ModelRequest {
    pub path: PathBuf,
}

async fn load_model(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ModelRequest>, JsonRejection>,
) -> ApiResult<ModelInfo> {
    let Json(req) = body?;
    let _guard = state.writer.lock().await;
    let current = state.snapshot();
    let Some(table) = current.table().cloned() else {
        return Err(ApiError::bad_request("no word vectors loaded; start the service with --vectors"));
    };
    let next = tokio::task::spawn_blocking(move || {
        let model = load_model_file(&req.path, table)?;
        current.with_model(model)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
    .map_err(|e| ApiError::bad_request(format!("{e:#}")))?;
    let info = model_info(&next);
    state.publish(next);
    Ok(Json(info))
}

async fn healthz(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "status": "ok",
        "version": VERSION,
        "snapshot": state.snapshot().version,
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new().allow_origin(Any).allow_methods(Any).allow_headers(Any);
    Router::new()
        .route("/chat", post(chat))
        .route("/kg/entities", get(list_entities).post(upsert_entity))
        .route("/kg/relationships", post(upsert_relationship))
        .route("/qa/records", get(list_records))
        .route("/model", get(get_model).post(load_model))
        .route("/healthz", get(healthz))
        .layer(cors)
        .with_state(state)
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

pub async fn serve(snapshot: Snapshot, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {addr}: {e}"))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(snapshot)))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    Ok(())
}
