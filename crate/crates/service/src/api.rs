//! HTTP binding. Bodies are JSON; errors are `{"error": kind, "message": text}`.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::error::ServiceError;
use crate::service::{DecisionInput, EpisodeRequest, OverrideInput, ProposalInput, Service};

pub type Shared = Arc<Service>;

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

fn status_of(e: &ServiceError) -> StatusCode {
    match e.kind() {
        "unknown_episode" | "unknown_node" | "unknown_evaluation" | "unknown_proposal" => StatusCode::NOT_FOUND,
        "already_decided" | "snapshot_stale" => StatusCode::CONFLICT,
        "bad_request" => StatusCode::BAD_REQUEST,
        "storage_error" | "checksum_mismatch" | "gap_in_log" | "log_error" => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.0.kind(), "message": self.0.to_string() });
        (status_of(&self.0), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parse a request body ourselves so malformed JSON gets the same error shape.
fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let text = if body.is_empty() { &b"{}"[..] } else { &body[..] };
    serde_json::from_slice(text).map_err(|e| ApiError(ServiceError::BadRequest(format!("invalid body: {e}"))))
}

/// Run blocking service work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(ServiceError::BadRequest(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

async fn create_episode(State(svc): State<Shared>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let request: EpisodeRequest = parse(&body)?;
    let episode = blocking(move || svc.run_episode(&request)).await?;
    Ok((StatusCode::CREATED, Json(episode)))
}

async fn get_episode(State(svc): State<Shared>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(svc.episode_view(&id)?))
}

async fn post_override(State(svc): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let input: OverrideInput = parse(&body)?;
    let index = blocking(move || svc.record_override(&id, input)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "index": index }))))
}

async fn get_node(State(svc): State<Shared>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(svc.node_view(&id)?))
}

async fn list_proposals(State(svc): State<Shared>) -> impl IntoResponse {
    Json(svc.proposals())
}

async fn post_proposal(State(svc): State<Shared>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let input: ProposalInput = parse(&body)?;
    let proposal = blocking(move || svc.submit_proposal(input)).await?;
    Ok((StatusCode::CREATED, Json(proposal)))
}

async fn decide(State(svc): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let input: DecisionInput = parse(&body)?;
    let outcome = blocking(move || svc.decide(&id, input)).await?;
    Ok(Json(outcome))
}

async fn fit(State(svc): State<Shared>, Query(q): Query<HashMap<String, String>>) -> ApiResult<impl IntoResponse> {
    let human = q.get("human").cloned().unwrap_or_else(|| "ceo".into());
    let machine = q.get("machine").cloned().unwrap_or_else(|| "context_rich".into());
    let report = blocking(move || svc.fit(&human, &machine)).await?;
    Ok(Json(report))
}

async fn health(State(svc): State<Shared>) -> impl IntoResponse {
    Json(json!({
        "snapshot_hash": svc.snapshot_hash(),
        "log_entries": svc.log_len(),
        "config_version": svc.governed_config().version,
    }))
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/episodes", post(create_episode))
        .route("/episodes/{id}", get(get_episode))
        .route("/episodes/{id}/overrides", post(post_override))
        .route("/graph/nodes/{id}", get(get_node))
        .route("/proposals", get(list_proposals).post(post_proposal))
        .route("/proposals/{id}/decision", post(decide))
        .route("/fit", get(fit))
        .with_state(service)
}
