use std::time::Duration;

use futures::StreamExt;
use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FetchConfig {
    pub timeout_ms: u64,
    pub max_body_bytes: usize,
    pub max_redirects: usize,
}

impl Default for FetchConfig {
    fn default() -> Self {
        FetchConfig { timeout_ms: 15_000, max_body_bytes: 5 * 1024 * 1024, max_redirects: 5 }
    }
}

/// Single-URL HTML fetcher with bounded redirects, time and body size.
#[derive(Clone)]
pub struct Fetcher {
    client: reqwest::Client,
    cfg: FetchConfig,
}

impl Fetcher {
    pub fn new(cfg: FetchConfig) -> Self {
        let client = reqwest::Client::builder()
            .redirect(reqwest::redirect::Policy::limited(cfg.max_redirects))
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .user_agent(concat!("cer/", env!("CARGO_PKG_VERSION")))
            .build()
            .expect("static client configuration");
        Fetcher { client, cfg }
    }

    pub fn config(&self) -> &FetchConfig {
        &self.cfg
    }

    pub async fn fetch_url(&self, url: &str) -> Result<String, IngestError> {
        let parsed = reqwest::Url::parse(url).map_err(|_| IngestError::InvalidUrl(url.to_string()))?;
        if !matches!(parsed.scheme(), "http" | "https") {
            return Err(IngestError::InvalidUrl(url.to_string()));
        }
        let deadline = Duration::from_millis(self.cfg.timeout_ms);
        // the client timeout covers the whole exchange; this guards the body stream too
        match tokio::time::timeout(deadline, self.fetch_inner(parsed)).await {
            Ok(r) => r,
            Err(_) => Err(IngestError::FetchTimeout(self.cfg.timeout_ms)),
        }
    }

    async fn fetch_inner(&self, url: reqwest::Url) -> Result<String, IngestError> {
        let resp = self.client.get(url).send().await.map_err(|e| self.map_err(e))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(IngestError::HttpError(status.as_u16()));
        }
        let limit = self.cfg.max_body_bytes;
        if resp.content_length().is_some_and(|n| n as usize > limit) {
            return Err(IngestError::TooLarge { limit });
        }
        let mut body = Vec::new();
        let mut stream = resp.bytes_stream();
        while let Some(chunk) = stream.next().await {
            let chunk = chunk.map_err(|e| self.map_err(e))?;
            if body.len() + chunk.len() > limit {
                return Err(IngestError::TooLarge { limit });
            }
            body.extend_from_slice(&chunk);
        }
        Ok(String::from_utf8_lossy(&body).into_owned())
    }

    fn map_err(&self, e: reqwest::Error) -> IngestError {
        if e.is_timeout() {
            IngestError::FetchTimeout(self.cfg.timeout_ms)
        } else if e.is_redirect() {
            IngestError::TooManyRedirects(self.cfg.max_redirects)
        } else {
            IngestError::Transport(e.to_string())
        }
    }
}
