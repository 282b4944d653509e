//! HTTP API for running a trial: create it, post each cohort's outcome, and read
//! back the recommendation, the decision table and, once stopped, the selection.

pub mod error;
pub mod record;
pub mod store;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use boincomb::Combo;

pub use error::{ErrorBody, ServiceError};
pub use record::{CohortResponse, CreateTrial, DecisionTableView, Recommendation, SelectionView, TrialRecord, TrialView};
pub use store::Store;

#[derive(Debug, Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    /// When set, every request must carry `Authorization: Bearer <token>`.
    pub token: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostCohort {
    pub at: Combo,
    pub dlt: u32,
    #[serde(default, rename = "override")]
    pub allow_override: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TableQuery {
    pub n_max: Option<u32>,
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    let slice: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(slice).map_err(|e| ServiceError::invalid(format!("bad request body: {e}")))
}

async fn create_trial(State(app): State<AppState>, body: Bytes) -> Result<Response, ServiceError> {
    let req: CreateTrial = parse_body(&body)?;
    let record = TrialRecord::create(req, Utc::now())?;
    let lock = app.store.lock(record.trial_id);
    let _guard = lock.lock().await;
    app.store.save(&record)?;
    Ok((StatusCode::CREATED, Json(record.view())).into_response())
}

async fn get_trial(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<TrialView>, ServiceError> {
    let id = Store::parse_id(&id)?;
    Ok(Json(app.store.load(id)?.view()))
}

async fn post_cohort(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<CohortResponse>, ServiceError> {
    let id = Store::parse_id(&id)?;
    let req: PostCohort = parse_body(&body)?;
    let lock = app.store.lock(id);
    let _guard = lock.lock().await;
    let mut record = app.store.load(id)?;
    let decision = record.post_cohort(req.at, req.dlt, req.allow_override, req.note, Utc::now())?;
    app.store.save(&record)?;
    Ok(Json(CohortResponse {
        decision,
        trial: record.view(),
    }))
}

async fn get_recommendation(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<Recommendation>, ServiceError> {
    let id = Store::parse_id(&id)?;
    Ok(Json(app.store.load(id)?.recommendation()))
}

async fn get_selection(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<SelectionView>, ServiceError> {
    let id = Store::parse_id(&id)?;
    Ok(Json(app.store.load(id)?.selection()?))
}

async fn get_decision_table(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<TableQuery>,
) -> Result<Json<DecisionTableView>, ServiceError> {
    let id = Store::parse_id(&id)?;
    Ok(Json(app.store.load(id)?.decision_table(q.n_max)?))
}

async fn require_token(State(app): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &app.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ServiceError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

async fn fallback() -> ServiceError {
    ServiceError::NotFound("route".into())
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/trials", post(create_trial))
        .route("/trials/{id}", get(get_trial))
        .route("/trials/{id}/cohorts", post(post_cohort))
        .route("/trials/{id}/recommendation", get(get_recommendation))
        .route("/trials/{id}/selection", get(get_selection))
        .route("/trials/{id}/decision-table", get(get_decision_table))
        .fallback(fallback)
        .layer(middleware::from_fn_with_state(app.clone(), require_token))
        .with_state(app)
}

/// Bind and serve until Ctrl-C.
pub async fn serve(addr: SocketAddr, data_dir: impl AsRef<Path>, token: Option<String>) -> Result<(), ServiceError> {
    let app = AppState {
        store: Arc::new(Store::open(data_dir)?),
        token,
    };
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
