//! HTTP front end over a single session.

use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use rulepatch::overlay::RuleId;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::AppError;
use crate::session::{FeedbackRequest, PredictResponse, RuleView, Session};

pub const MAX_PAGE: usize = 1000;

/// Predictions take the read lock; feedback mutations take the write lock and
/// persist the table before releasing it.
pub type Shared = Arc<RwLock<Session>>;

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = match self {
            AppError::Parse { .. } | AppError::Invalid(_) => StatusCode::BAD_REQUEST,
            AppError::Conflict { .. } | AppError::NotFitted(_) => StatusCode::CONFLICT,
            AppError::NotFound(_) => StatusCode::NOT_FOUND,
            AppError::Io { .. } | AppError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(self.body())).into_response()
    }
}

type ApiResult<T> = Result<T, AppError>;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| AppError::Invalid(e.body_text()))
}

fn read(state: &Shared) -> std::sync::RwLockReadGuard<'_, Session> {
    state.read().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn write(state: &Shared) -> std::sync::RwLockWriteGuard<'_, Session> {
    state.write().unwrap_or_else(|poisoned| poisoned.into_inner())
}

#[derive(Debug, Deserialize)]
pub struct PredictRequest {
    pub instance: serde_json::Value,
}

#[derive(Debug, Deserialize)]
pub struct WhatIfRequest {
    pub instance: serde_json::Value,
    pub clause_override: FeedbackRequest,
}

#[derive(Debug, Deserialize)]
pub struct InstancesQuery {
    #[serde(default = "test_split")]
    pub split: String,
    #[serde(default)]
    pub offset: usize,
    #[serde(default = "page")]
    pub limit: usize,
}

fn test_split() -> String {
    "test".into()
}

fn page() -> usize {
    50
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InstanceRow {
    pub index: usize,
    pub instance: serde_json::Value,
    pub label: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InstancePage {
    pub split: String,
    pub total: usize,
    pub offset: usize,
    pub rows: Vec<InstanceRow>,
}

async fn predict(
    State(state): State<Shared>,
    payload: Result<Json<PredictRequest>, JsonRejection>,
) -> ApiResult<Json<PredictResponse>> {
    let req = body(payload)?;
    let session = read(&state);
    let x = session.parse_instance(&req.instance)?;
    Ok(Json(session.respond(&x)))
}

async fn add_feedback(
    State(state): State<Shared>,
    payload: Result<Json<FeedbackRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let req = body(payload)?;
    let id = write(&state).add_feedback(&req, None)?;
    tracing::info!(id, "feedback rule stored");
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

async fn list_rules(State(state): State<Shared>) -> Json<Vec<RuleView>> {
    Json(read(&state).rules())
}

async fn delete_rule(State(state): State<Shared>, Path(id): Path<RuleId>) -> ApiResult<StatusCode> {
    write(&state).remove_feedback(id)?;
    tracing::info!(id, "feedback rule removed");
    Ok(StatusCode::NO_CONTENT)
}

async fn schema(State(state): State<Shared>) -> Json<serde_json::Value> {
    Json(serde_json::to_value(&*read(&state).schema).expect("schema serializes"))
}

async fn instances(
    State(state): State<Shared>,
    Query(q): Query<InstancesQuery>,
) -> ApiResult<Json<InstancePage>> {
    let session = read(&state);
    let ds = match q.split.as_str() {
        "test" => &session.test,
        "train" => &session.train,
        other => return Err(AppError::Invalid(format!("unknown split `{other}`; use test or train"))),
    };
    let end = q.offset.saturating_add(q.limit.min(MAX_PAGE)).min(ds.len());
    let rows = (q.offset.min(end)..end)
        .map(|i| InstanceRow {
            index: i,
            instance: ds.rows[i].to_json(&session.schema),
            label: session.schema.label_name(ds.labels[i]).to_string(),
        })
        .collect();
    Ok(Json(InstancePage {
        split: q.split,
        total: ds.len(),
        offset: q.offset,
        rows,
    }))
}

async fn whatif(
    State(state): State<Shared>,
    payload: Result<Json<WhatIfRequest>, JsonRejection>,
) -> ApiResult<Json<PredictResponse>> {
    let req = body(payload)?;
    let session = read(&state);
    let x = session.parse_instance(&req.instance)?;
    let mut table = session.table.clone();
    session.insert_into(&mut table, &req.clause_override, None)?;
    Ok(Json(session.respond_with(&x, &table)))
}

pub fn router(session: Session) -> Router {
    let state: Shared = Arc::new(RwLock::new(session));
    Router::new()
        .route("/predict", post(predict))
        .route("/feedback", post(add_feedback))
        .route("/rules", get(list_rules))
        .route("/rules/{id}", delete(delete_rule))
        .route("/schema", get(schema))
        .route("/instances", get(instances))
        .route("/whatif", post(whatif))
        .with_state(state)
}

pub async fn serve(session: Session, addr: &str) -> Result<(), AppError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| AppError::io(addr, e))?;
    let local = listener.local_addr().map_err(|e| AppError::io(addr, e))?;
    tracing::info!(%local, session = %session.dir.display(), "listening");
    axum::serve(listener, router(session))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| AppError::io(addr, e))
}
