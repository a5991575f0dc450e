//! HTTP surface consumed by the triage UI.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query as QueryParams, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::bucket::Bucket;
use crate::service::{InteractionError, KeywordError, Monitor};
use crate::store::{StoreError, DEFAULT_PAGE_SIZE};

type Shared = Arc<Monitor>;

struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl ToString) -> Self {
        Self {
            status,
            body: json!({ "error": message.to_string() }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::InvalidCursor(_) => StatusCode::BAD_REQUEST,
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::Conflict(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e)
    }
}

#[derive(Deserialize)]
struct TabParams {
    cursor: Option<String>,
    limit: Option<usize>,
}

#[derive(Deserialize)]
struct InteractionBody {
    post_id: String,
    operator: String,
}

#[derive(Deserialize)]
struct KeywordBody {
    query: String,
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn status(State(m): State<Shared>) -> Response {
    Json(m.status()).into_response()
}

async fn get_tab(
    State(m): State<Shared>,
    Path(name): Path<String>,
    QueryParams(p): QueryParams<TabParams>,
) -> Result<Response, ApiError> {
    let tab: Bucket = name.parse().map_err(|e| ApiError::new(StatusCode::NOT_FOUND, e))?;
    let page = m.get_tab(tab, p.cursor.as_deref(), p.limit.unwrap_or(DEFAULT_PAGE_SIZE))?;
    Ok(Json(page).into_response())
}

async fn post_interaction(State(m): State<Shared>, Json(body): Json<InteractionBody>) -> Result<Response, ApiError> {
    let result = tokio::task::spawn_blocking(move || m.record_interaction(&body.post_id, &body.operator))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    match result {
        Ok(receipt) => Ok((StatusCode::CREATED, Json(receipt)).into_response()),
        Err(InteractionError::Conflict(prior)) => Err(ApiError {
            status: StatusCode::CONFLICT,
            body: json!({ "error": "interaction already recorded", "record": prior }),
        }),
        Err(InteractionError::NotFound(id)) => Err(ApiError::new(StatusCode::NOT_FOUND, format!("post {id} not found"))),
        Err(e @ InteractionError::MissingOperator) => Err(ApiError::new(StatusCode::BAD_REQUEST, e)),
        Err(InteractionError::Store(e)) => Err(e.into()),
    }
}

async fn get_keywords(State(m): State<Shared>) -> Json<Value> {
    Json(json!({ "query": m.config().keyword_query }))
}

async fn put_keywords(State(m): State<Shared>, Json(body): Json<KeywordBody>) -> Result<Response, ApiError> {
    match m.update_keywords(&body.query) {
        Ok(update) => Ok(Json(update).into_response()),
        Err(KeywordError::Query(e)) => Err(ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "error": e.to_string(), "position": e.position, "query": m.config().keyword_query }),
        }),
        Err(KeywordError::Store(e)) => Err(e.into()),
    }
}

async fn require_token(State(token): State<Arc<str>>, req: Request, next: Next) -> Response {
    let ok = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == &*token);
    if ok {
        next.run(req).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "missing or wrong bearer token").into_response()
    }
}

/// Routes with bearer auth on everything but `/health` when the config
/// sets `api_token`.
pub fn router(monitor: Shared) -> Router {
    let token = monitor.config().api_token;
    let mut protected = Router::new()
        .route("/status", get(status))
        .route("/tabs/{name}", get(get_tab))
        .route("/interactions", post(post_interaction))
        .route("/config/keywords", put(put_keywords).get(get_keywords))
        .with_state(monitor);
    if let Some(t) = token {
        protected = protected.layer(middleware::from_fn_with_state(Arc::<str>::from(t), require_token));
    }
    Router::new().route("/health", get(health)).merge(protected)
}

pub async fn serve(monitor: Shared, addr: SocketAddr, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(monitor)).with_graceful_shutdown(shutdown).await
}
