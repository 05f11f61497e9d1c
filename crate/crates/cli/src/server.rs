//! Read-only HTTP front end over a sealed pipeline.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use eegrag::pipeline::EegQuery;
use eegrag::stores::StoreStats;
use eegrag::{Error, MetadataQuery, Pipeline, QueryInput};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub question: String,
    #[serde(default)]
    pub role: Option<String>,
    #[serde(default)]
    pub eeg_recording_id: Option<String>,
}

impl QueryRequest {
    pub fn into_input(self) -> QueryInput {
        let mut query = MetadataQuery::new(self.question);
        query.role = self.role;
        QueryInput {
            query,
            eeg: self.eeg_recording_id.map(EegQuery::StoredId),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub stores: StoreStats,
}

#[derive(Clone)]
struct AppState {
    pipeline: Pipeline,
    in_flight: Arc<Semaphore>,
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: message.into() })).into_response()
}

fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::NotFound { .. } => StatusCode::NOT_FOUND,
        Error::InvalidInput(_) | Error::Embedding { .. } | Error::Incomparable(_) => StatusCode::BAD_REQUEST,
        Error::Generation { .. } => StatusCode::BAD_GATEWAY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

async fn healthz(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".to_string(),
        stores: state.pipeline.stores().stats(),
    })
}

async fn query(State(state): State<AppState>, body: Bytes) -> Response {
    let req: QueryRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    let input = req.into_input();
    let Ok(_permit) = state.in_flight.acquire().await else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "service is shutting down");
    };
    let pipeline = state.pipeline.clone();
    match tokio::task::spawn_blocking(move || pipeline.query(&input)).await {
        Ok(Ok(out)) => Json(out).into_response(),
        Ok(Err(e)) => error(status_for(&e), e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

/// `POST /query` and `GET /healthz` over `pipeline`.
pub fn router(pipeline: Pipeline) -> Router {
    let in_flight = Arc::new(Semaphore::new(pipeline.config().max_in_flight));
    Router::new()
        .route("/healthz", get(healthz))
        .route("/query", post(query))
        .with_state(AppState { pipeline, in_flight })
}

pub async fn serve(pipeline: Pipeline, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(pipeline)).await
}
