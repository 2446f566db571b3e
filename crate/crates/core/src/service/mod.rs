//! JSON-over-HTTP API under `/v1`.

mod jobs;

pub use jobs::{JobError, JobKind, JobState, JobStore, VerificationJob};

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::eval::video_verdict;
use crate::model::{ClaimAssessment, VerdictLabel};
use crate::pipeline::{Pipeline, PipelineError};

pub const API_VERSION: &str = "v1";
/// Confidence at or above which a verdict is phrased as "most likely".
pub const MOST_LIKELY_THRESHOLD: f64 = 0.75;

/// Human-readable verdict line, e.g. "Most likely True".
pub fn verdict_phrase(label: VerdictLabel, confidence: f64) -> String {
    let name = match label {
        VerdictLabel::True => "True",
        VerdictLabel::False => "False",
        VerdictLabel::Nei => "Not Enough Information",
    };
    if confidence >= MOST_LIKELY_THRESHOLD {
        format!("Most likely {name}")
    } else {
        format!("Possibly {name}")
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct ClaimRequest {
    #[serde(alias = "text")]
    pub claim: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClaimResponse {
    pub cached: bool,
    pub summary: String,
    pub assessment: ClaimAssessment,
}

#[derive(Debug, Clone, Deserialize)]
pub struct UrlRequest {
    pub url: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::InvalidInput(_) | PipelineError::Model(_) => StatusCode::BAD_REQUEST,
            PipelineError::Config(_) | PipelineError::Corpus(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_GATEWAY,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

#[derive(Clone)]
pub struct AppState {
    pub pipeline: Arc<Pipeline>,
    pub jobs: Arc<JobStore>,
}

impl AppState {
    pub fn new(pipeline: Arc<Pipeline>) -> Self {
        AppState { pipeline, jobs: Arc::new(JobStore::new()) }
    }
}

pub fn router(state: AppState) -> Router {
    let upload_limit = state.pipeline.config().service.max_upload_bytes;
    let static_dir = state.pipeline.config().service.static_dir.clone();
    let api = Router::new()
        .route("/v1/verify/claim", post(verify_claim))
        .route("/v1/verify/url", post(verify_url))
        .route(
            "/v1/verify/video",
            // multipart framing adds a little on top of the file itself
            post(verify_video).layer(DefaultBodyLimit::max(upload_limit.saturating_add(64 * 1024))),
        )
        .route("/v1/jobs/{id}", get(get_job))
        .route("/v1/health", get(health))
        .route("/v1/config", get(config))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(pipeline: Arc<Pipeline>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(AppState::new(pipeline))).await
}

async fn verify_claim(
    State(st): State<AppState>,
    body: Result<Json<ClaimRequest>, JsonRejection>,
) -> Result<Json<ClaimResponse>, ApiError> {
    let Json(req) = body?;
    let (assessment, cached) = st.pipeline.verify_text(&req.claim).await?;
    Ok(Json(ClaimResponse {
        cached,
        summary: verdict_phrase(assessment.label, assessment.confidence),
        assessment,
    }))
}

async fn verify_url(
    State(st): State<AppState>,
    body: Result<Json<UrlRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<VerificationJob>), ApiError> {
    let Json(req) = body?;
    let url = req.url.trim().to_string();
    match reqwest::Url::parse(&url) {
        Ok(u) if matches!(u.scheme(), "http" | "https") => {}
        _ => return Err(ApiError::bad_request(format!("invalid url {url:?}"))),
    }
    let job = st.jobs.create(JobKind::Url, url.clone());
    let id = job.job_id.clone();
    tokio::spawn(async move {
        let _ = st.jobs.start(&id);
        let outcome = st.pipeline.verify_url(&url).await;
        let _ = match outcome {
            Ok(results) => st.jobs.finish(&id, results, None),
            Err(e) => st.jobs.fail(&id, e.to_string()),
        };
    });
    Ok((StatusCode::ACCEPTED, Json(job)))
}

async fn verify_video(
    State(st): State<AppState>,
    mut multipart: Multipart,
) -> Result<(StatusCode, Json<VerificationJob>), ApiError> {
    let limit = st.pipeline.config().service.max_upload_bytes;
    let mut upload = None;
    while let Some(field) = multipart.next_field().await.map_err(|e| ApiError::new(e.status(), e.body_text()))? {
        if field.file_name().is_none() && field.name() != Some("file") {
            continue;
        }
        let name = field.file_name().unwrap_or("upload").to_string();
        let bytes = field.bytes().await.map_err(|e| ApiError::new(e.status(), e.body_text()))?;
        upload = Some((name, bytes));
        break;
    }
    let (name, bytes) = upload.ok_or_else(|| ApiError::bad_request("multipart body has no file field"))?;
    if bytes.len() > limit {
        return Err(ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, format!("upload exceeds {limit} bytes")));
    }
    if bytes.is_empty() {
        return Err(ApiError::bad_request("uploaded file is empty"));
    }
    let job = st.jobs.create(JobKind::Video, name.clone());
    let id = job.job_id.clone();
    tokio::spawn(async move {
        let _ = st.jobs.start(&id);
        let outcome = st.pipeline.verify_media(&bytes, Some(name)).await;
        let _ = match outcome {
            Ok((_, results)) => {
                let verdict = video_verdict(&results);
                st.jobs.finish(&id, results, Some(verdict))
            }
            Err(e) => st.jobs.fail(&id, e.to_string()),
        };
    });
    Ok((StatusCode::ACCEPTED, Json(job)))
}

async fn get_job(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<VerificationJob>, ApiError> {
    st.jobs
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown job {id:?}")))
}

async fn health(State(st): State<AppState>) -> Json<serde_json::Value> {
    let p = &st.pipeline;
    Json(json!({
        "status": "ok",
        "api_version": API_VERSION,
        "version": env!("CARGO_PKG_VERSION"),
        "corpus_docs": p.corpus_len(),
        "fingerprint": p.fingerprint(),
        "mock_backends": p.config().backends.mock,
    }))
}

async fn config(State(st): State<AppState>) -> Json<serde_json::Value> {
    let p = &st.pipeline;
    Json(json!({
        "fingerprint": p.fingerprint(),
        "config_fingerprint": p.config().fingerprint(),
        "config": p.config(),
    }))
}
