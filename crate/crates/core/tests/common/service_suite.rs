#![allow(clippy::cmp_owned)]

//! Endpoint scenarios against in-process mock backends. Everything runs on
//! loopback or through `tower::ServiceExt::oneshot`.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use axum::body::{to_bytes, Body};
use axum::http::{header, Request, StatusCode};
use axum::response::Html;
use axum::routing::get;
use axum::Router;
use cer_core::cache::AssessmentCache;
use cer_core::ingest::{MockSpeech, TranscriptSegment};
use cer_core::llm::MockLlm;
use cer_core::pipeline::{sample_corpus, Backends, Pipeline, PipelineConfig};
use cer_core::service::{router, AppState};
use cer_core::veracity::{ClassifierBackend, VeracityError};
use cer_core::{BackendError, VerdictLabel};
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

use super::{check_schema, spawn_server};

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub type Check = Result<(), String>;

pub const VIDEO_BYTES: &[u8] = b"\x00\x00\x00\x18ftypmp42 synthetic clip";

pub struct Harness {
    pub app: Router,
    pub state: AppState,
    pub dir: TempDir,
}

pub async fn harness_in(dir: TempDir, tweak: impl FnOnce(&mut PipelineConfig, &mut Backends)) -> Harness {
    let mut cfg = PipelineConfig::default();
    cfg.use_mock_backends();
    cfg.cache_path = dir.path().join("cache");
    let mut backends = Backends::mock(&cfg).unwrap();
    backends.speech = Arc::new(MockSpeech::new().register(VIDEO_BYTES, video_segments()));
    tweak(&mut cfg, &mut backends);
    let cache = AssessmentCache::open(cfg.cache_path.join("assessments.jsonl"), cfg.cache_max_entries).ok();
    let pipeline = Pipeline::with_corpus(cfg, backends, sample_corpus(), cache).await.unwrap();
    let state = AppState::new(Arc::new(pipeline));
    Harness { app: router(state.clone()), state, dir }
}

pub async fn harness(tweak: impl FnOnce(&mut PipelineConfig, &mut Backends)) -> Harness {
    harness_in(tempfile::tempdir().unwrap(), tweak).await
}

pub fn video_segments() -> Vec<TranscriptSegment> {
    let seg = |a: f64, b: f64, t: &str| TranscriptSegment { start_sec: a, end_sec: b, text: t.into() };
    vec![
        seg(0.0, 3.5, "Hi everyone, thanks for watching."),
        seg(3.5, 9.0, "Vitamin C cures the common cold within a day."),
        seg(9.0, 14.2, "Smoking causes lung cancer."),
    ]
}

pub struct Reply {
    pub status: StatusCode,
    pub json: Value,
}

pub async fn call(app: &Router, req: Request<Body>) -> Reply {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let json = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    Reply { status, json }
}

pub fn post_json(uri: &str, body: &str) -> Request<Body> {
    Request::post(uri).header(header::CONTENT_TYPE, "application/json").body(Body::from(body.to_string())).unwrap()
}

pub fn get_req(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

pub fn multipart(field: &str, filename: Option<&str>, data: &[u8]) -> Request<Body> {
    let boundary = "cer-test-boundary-7d1f";
    let disposition = match filename {
        Some(f) => format!("form-data; name=\"{field}\"; filename=\"{f}\""),
        None => format!("form-data; name=\"{field}\""),
    };
    let mut body = format!(
        "--{boundary}\r\nContent-Disposition: {disposition}\r\nContent-Type: application/octet-stream\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(data);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    Request::post("/v1/verify/video")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap()
}

async fn verify(app: &Router, claim: &str) -> Reply {
    call(app, post_json("/v1/verify/claim", &json!({ "claim": claim }).to_string())).await
}

/// Polls until the job is terminal; returns it with the sequence of states seen.
pub async fn poll_job(app: &Router, id: &str) -> Result<(Value, Vec<String>), String> {
    let mut seen: Vec<String> = Vec::new();
    for _ in 0..500 {
        let r = call(app, get_req(&format!("/v1/jobs/{id}"))).await;
        ensure!(r.status == StatusCode::OK, "job poll returned {}", r.status);
        check_schema("VerificationJob", &r.json)?;
        let state = r.json["state"].as_str().unwrap_or_default().to_string();
        if seen.last() != Some(&state) {
            seen.push(state.clone());
        }
        if state == "done" || state == "failed" {
            return Ok((r.json, seen));
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    Err(format!("job {id} did not finish; states {seen:?}"))
}

fn states_are_ordered(seen: &[String]) -> bool {
    let rank = |s: &str| match s {
        "queued" => 0,
        "running" => 1,
        _ => 2,
    };
    seen.windows(2).all(|w| rank(&w[0]) < rank(&w[1]))
}

struct FailingClassifier;

#[async_trait]
impl ClassifierBackend for FailingClassifier {
    async fn score(&self, _: &[String], _: &[VerdictLabel]) -> Result<Vec<Vec<f64>>, VeracityError> {
        Err(VeracityError::Backend(BackendError::Unavailable {
            backend: "classifier".into(),
            detail: "connection refused".into(),
            attempts: 3,
        }))
    }

    fn model_id(&self) -> &str {
        "failing"
    }
}

pub async fn claim_happy_path() -> Check {
    let h = harness(|_, _| {}).await;
    let r = verify(&h.app, "COVID-19 is deadly").await;
    ensure!(r.status == StatusCode::OK, "status {}", r.status);
    check_schema("ClaimResponse", &r.json)?;
    let a = &r.json["assessment"];
    ensure!(r.json["cached"] == false, "first call flagged cached");
    ensure!(a["evidence"].as_array().is_some_and(|e| !e.is_empty() && e.len() <= 3), "evidence count");
    ensure!(!a["justification"]["text"].as_str().unwrap_or("").is_empty(), "empty justification");
    ensure!(a["degraded"] == false, "unexpected degraded flag");
    let health = call(&h.app, get_req("/v1/health")).await;
    ensure!(a["config_fingerprint"] == health.json["fingerprint"], "fingerprint differs from /v1/health");
    Ok(())
}

pub async fn claim_validation() -> Check {
    let h = harness(|_, _| {}).await;
    for body in [r#"{"claim":""}"#, r#"{"claim":"   "}"#, r#"{"claim":42}"#, "not json", "{}"] {
        let r = call(&h.app, post_json("/v1/verify/claim", body)).await;
        ensure!(r.status == StatusCode::BAD_REQUEST, "{body:?} gave {}", r.status);
        check_schema("Error", &r.json)?;
    }
    let at_limit = format!("Aspirin reduces fever {}", "x".repeat(1978));
    ensure!(at_limit.chars().count() == 2000, "fixture length");
    ensure!(verify(&h.app, &at_limit).await.status == StatusCode::OK, "2000 chars rejected");
    let over = format!("{at_limit}y");
    ensure!(verify(&h.app, &over).await.status == StatusCode::BAD_REQUEST, "2001 chars accepted");
    Ok(())
}

pub async fn claim_cache() -> Check {
    let claim = "Vitamin C prevents the common cold.";
    let h = harness(|_, _| {}).await;
    let first = verify(&h.app, claim).await;
    let second = verify(&h.app, claim).await;
    ensure!(first.json["cached"] == false && second.json["cached"] == true, "cached flags");
    let (a, b) = (first.json["assessment"].to_string(), second.json["assessment"].to_string());
    ensure!(a == b, "cached assessment differs");
    // whitespace and compatibility forms normalize to the same key
    let spaced = verify(&h.app, "  Vitamin C   prevents the common cold.").await;
    ensure!(spaced.json["cached"] == true, "normalized text missed the cache");

    // survives a restart
    let dir = h.dir;
    drop(h.state);
    let h2 = harness_in(dir, |_, _| {}).await;
    let third = verify(&h2.app, claim).await;
    ensure!(third.json["cached"] == true, "cache did not survive restart");
    ensure!(third.json["assessment"].to_string() == a, "restarted cache returned a different assessment");

    // a different fingerprint misses
    let dir = h2.dir;
    let h3 = harness_in(dir, |cfg, _| cfg.retrieval.top_k = 19).await;
    let fourth = verify(&h3.app, claim).await;
    ensure!(fourth.status == StatusCode::OK && fourth.json["cached"] == false, "fingerprint change still hit");
    ensure!(fourth.json["assessment"]["config_fingerprint"] != first.json["assessment"]["config_fingerprint"], "same fp");
    Ok(())
}

pub async fn cache_corruption() -> Check {
    let claim = "Smoking causes lung cancer.";
    let h = harness(|_, _| {}).await;
    ensure!(verify(&h.app, claim).await.status == StatusCode::OK, "seed request");
    let log = h.dir.path().join("cache/assessments.jsonl");
    let raw = std::fs::read_to_string(&log).map_err(|e| e.to_string())?;
    let rec: Value = serde_json::from_str(raw.lines().next().ok_or("empty cache log")?).map_err(|e| e.to_string())?;
    let key = rec["k"].as_str().ok_or("no key")?.to_string();
    let damaged = format!("{}\n{{\"k\":\"trunc", json!({"k": key, "v": {"label": "maybe"}}));
    std::fs::write(&log, damaged).map_err(|e| e.to_string())?;
    let dir = h.dir;
    drop(h.state);
    let h2 = harness_in(dir, |_, _| {}).await;
    let r = verify(&h2.app, claim).await;
    ensure!(r.status == StatusCode::OK, "corrupt cache broke the service: {}", r.status);
    ensure!(r.json["cached"] == false, "corrupt record served as a hit");
    ensure!(verify(&h2.app, claim).await.json["cached"] == true, "fresh record not cached");
    Ok(())
}

pub async fn degraded_mode() -> Check {
    let h = harness(|_, b| b.llm = Arc::new(MockLlm::unavailable())).await;
    let r = verify(&h.app, "Garlic lowers blood pressure.").await;
    ensure!(r.status == StatusCode::OK, "status {}", r.status);
    check_schema("ClaimResponse", &r.json)?;
    ensure!(r.json["assessment"]["degraded"] == true, "degraded flag not set");
    ensure!(r.json["assessment"]["justification"]["text"] == "", "degraded justification not empty");
    Ok(())
}

pub async fn backend_failure_is_502() -> Check {
    let h = harness(|_, b| {
        b.llm = Arc::new(MockLlm::unavailable());
        b.classifier = Arc::new(FailingClassifier);
    })
    .await;
    let r = verify(&h.app, "Garlic lowers blood pressure.").await;
    ensure!(r.status == StatusCode::BAD_GATEWAY, "status {}", r.status);
    check_schema("Error", &r.json)?;
    Ok(())
}

pub async fn url_job() -> Check {
    let page = "<html><head><title>Blog</title><script>var x = 'Aspirin cures cancer.';</script></head>\
                <body><h1>Health news</h1><p>Welcome to our blog!</p>\
                <p>Vitamin C cures the common cold. Smoking causes lung cancer.</p></body></html>";
    let site = Router::new().route("/post", get(move || async move { Html(page) }));
    let addr = spawn_server(site).await;
    let h = harness(|_, _| {}).await;
    let url = format!("http://{addr}/post");
    let r = call(&h.app, post_json("/v1/verify/url", &json!({ "url": url }).to_string())).await;
    ensure!(r.status == StatusCode::ACCEPTED, "status {}", r.status);
    check_schema("VerificationJob", &r.json)?;
    ensure!(r.json["state"] == "queued" && r.json["kind"] == "url", "initial job {}", r.json);
    let (job, seen) = poll_job(&h.app, r.json["job_id"].as_str().unwrap_or_default()).await?;
    ensure!(job["state"] == "done", "job {}", job);
    ensure!(states_are_ordered(&seen), "states out of order: {seen:?}");
    let results = job["results"].as_array().ok_or("no results")?;
    ensure!(results.len() == 2, "expected 2 assessments, got {}", results.len());
    ensure!(results[0]["claim"]["text"] == "Vitamin C cures the common cold.", "claim order");
    ensure!(results[0]["claim"]["source"] == "web_page", "claim source");
    Ok(())
}

pub async fn url_timeout() -> Check {
    // accepts connections and never answers
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        let mut held = Vec::new();
        while let Ok((sock, _)) = listener.accept().await {
            held.push(sock);
        }
    });
    let h = harness(|cfg, _| cfg.fetch.timeout_ms = 300).await;
    let r = call(&h.app, post_json("/v1/verify/url", &json!({ "url": format!("http://{addr}/") }).to_string())).await;
    ensure!(r.status == StatusCode::ACCEPTED, "status {}", r.status);
    let (job, seen) = poll_job(&h.app, r.json["job_id"].as_str().unwrap_or_default()).await?;
    ensure!(job["state"] == "failed", "job {}", job);
    ensure!(states_are_ordered(&seen), "states out of order: {seen:?}");
    ensure!(job["results"].as_array().is_some_and(|r| r.is_empty()), "failed job has results");
    let err = job["error"].as_str().unwrap_or_default();
    ensure!(err.contains("timed out"), "error {err:?} does not mention the fetch timeout");
    Ok(())
}

pub async fn url_validation() -> Check {
    let h = harness(|_, _| {}).await;
    for body in [r#"{"url":"ftp://example.org/x"}"#, r#"{"url":"not a url"}"#, r#"{"link":"http://x"}"#] {
        let r = call(&h.app, post_json("/v1/verify/url", body)).await;
        ensure!(r.status == StatusCode::BAD_REQUEST, "{body} gave {}", r.status);
    }
    ensure!(h.state.jobs.is_empty(), "rejected input created a job");
    Ok(())
}

pub async fn video_job() -> Check {
    let h = harness(|_, _| {}).await;
    let r = call(&h.app, multipart("file", Some("clip.mp4"), VIDEO_BYTES)).await;
    ensure!(r.status == StatusCode::ACCEPTED, "status {}", r.status);
    ensure!(r.json["kind"] == "video", "kind");
    let (job, seen) = poll_job(&h.app, r.json["job_id"].as_str().unwrap_or_default()).await?;
    ensure!(job["state"] == "done", "job {}", job);
    ensure!(states_are_ordered(&seen), "states out of order: {seen:?}");
    let results = job["results"].as_array().ok_or("no results")?;
    ensure!(results.len() == 2, "expected 2 assessments, got {}", results.len());
    let ts: Vec<Value> = results.iter().map(|a| a["claim"]["timestamp"].clone()).collect();
    ensure!(ts == vec![json!([3.5, 9.0]), json!([9.0, 14.2])], "timestamps {ts:?}");
    ensure!(results.iter().all(|a| a["claim"]["source"] == "video"), "claim source");
    let verdict = job["video_verdict"]["verdict"].as_str().unwrap_or_default();
    let any_false = results.iter().any(|a| a["label"] == "false");
    ensure!(verdict == if any_false { "fake" } else { "real" }, "verdict {verdict} vs labels");
    Ok(())
}

pub async fn video_limits() -> Check {
    let h = harness(|cfg, _| cfg.service.max_upload_bytes = 1024).await;
    let r = call(&h.app, multipart("file", Some("big.mp4"), &vec![7u8; 4096])).await;
    ensure!(r.status == StatusCode::PAYLOAD_TOO_LARGE, "4 KiB upload gave {}", r.status);
    let r = call(&h.app, multipart("file", Some("huge.mp4"), &vec![7u8; 256 * 1024])).await;
    ensure!(r.status == StatusCode::PAYLOAD_TOO_LARGE, "256 KiB upload gave {}", r.status);
    let r = call(&h.app, multipart("note", None, b"hello")).await;
    ensure!(r.status == StatusCode::BAD_REQUEST, "missing file gave {}", r.status);
    let r = call(&h.app, multipart("file", Some("empty.mp4"), b"")).await;
    ensure!(r.status == StatusCode::BAD_REQUEST, "empty file gave {}", r.status);
    ensure!(h.state.jobs.is_empty(), "rejected upload created a job");
    Ok(())
}

pub async fn unknown_job() -> Check {
    let h = harness(|_, _| {}).await;
    let r = call(&h.app, get_req("/v1/jobs/job-0000000000000000")).await;
    ensure!(r.status == StatusCode::NOT_FOUND, "status {}", r.status);
    check_schema("Error", &r.json)
}

pub async fn health_and_config() -> Check {
    let h = harness(|_, _| {}).await;
    let r = call(&h.app, get_req("/v1/health")).await;
    ensure!(r.status == StatusCode::OK, "health {}", r.status);
    check_schema("Health", &r.json)?;
    ensure!(r.json["corpus_docs"] == 30 && r.json["mock_backends"] == true, "health body {}", r.json);
    let c = call(&h.app, get_req("/v1/config")).await;
    ensure!(c.status == StatusCode::OK, "config {}", c.status);
    check_schema("ConfigResponse", &c.json)?;
    ensure!(c.json["fingerprint"] == r.json["fingerprint"], "fingerprints disagree");
    ensure!(c.json["config"]["retrieval"]["top_k"] == 20, "config body");
    ensure!(!c.json.to_string().contains("api_key"), "config leaks credentials");
    Ok(())
}

pub async fn deterministic_across_instances() -> Check {
    let a = harness(|_, _| {}).await;
    let b = harness(|_, _| {}).await;
    for claim in ["Zinc shortens colds.", "Homeopathy cures asthma.", "Masks stop respiratory viruses."] {
        let (x, y) = (verify(&a.app, claim).await, verify(&b.app, claim).await);
        ensure!(x.json["assessment"].to_string() == y.json["assessment"].to_string(), "{claim:?} differs");
    }
    Ok(())
}

pub async fn concurrent_requests() -> Check {
    let h = harness(|cfg, _| cfg.backends.max_in_flight = 2).await;
    let claims: Vec<String> = (0..12).map(|i| format!("Claim number {i} says coffee reduces mortality.")).collect();
    let replies = futures::future::join_all(claims.iter().map(|c| verify(&h.app, c))).await;
    for (c, r) in claims.iter().zip(&replies) {
        ensure!(r.status == StatusCode::OK, "{c:?} gave {}", r.status);
        ensure!(r.json["assessment"]["claim"]["text"] == c.as_str(), "response mismatched to request");
    }
    Ok(())
}

/// Every scenario, in a fixed order.
pub async fn run_all() -> Vec<(&'static str, Check)> {
    vec![
        ("claim_happy_path", claim_happy_path().await),
        ("claim_validation", claim_validation().await),
        ("claim_cache", claim_cache().await),
        ("cache_corruption", cache_corruption().await),
        ("degraded_mode", degraded_mode().await),
        ("backend_failure_is_502", backend_failure_is_502().await),
        ("url_job", url_job().await),
        ("url_timeout", url_timeout().await),
        ("url_validation", url_validation().await),
        ("video_job", video_job().await),
        ("video_limits", video_limits().await),
        ("unknown_job", unknown_job().await),
        ("health_and_config", health_and_config().await),
        ("deterministic_across_instances", deterministic_across_instances().await),
        ("concurrent_requests", concurrent_requests().await),
    ]
}
