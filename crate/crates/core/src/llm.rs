//! LLM backend contract shared by claim detection and reasoning.
//!
//! Requests are `{model_id, system_prompt, user_prompt, temperature,
//! max_tokens}` and responses `{text}`. The HTTP transport speaks a
//! chat-completions style wire format; the mock maps prompt hashes to canned
//! responses and otherwise synthesizes a deterministic answer.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cache::LogStore;
use crate::error::BackendError;
use crate::util::{backoff, sha256_hex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model_id: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl LlmRequest {
    /// Key used by the mock and the response cache.
    pub fn prompt_hash(&self) -> String {
        prompt_hash(&self.prompt_text(), &self.model_id)
    }

    pub fn prompt_text(&self) -> String {
        if self.system_prompt.is_empty() {
            self.user_prompt.clone()
        } else {
            format!("{}\n\n{}", self.system_prompt, self.user_prompt)
        }
    }
}

pub fn prompt_hash(prompt_text: &str, model_id: &str) -> String {
    let mut buf = prompt_text.as_bytes().to_vec();
    buf.extend_from_slice(model_id.as_bytes());
    sha256_hex(&buf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
}

#[async_trait]
pub trait LlmBackend: Send + Sync {
    async fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, BackendError>;
}

#[async_trait]
impl<T: LlmBackend + ?Sized> LlmBackend for Arc<T> {
    async fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, BackendError> {
        (**self).complete(req).await
    }
}

/// What the mock does for prompts it has no canned response for.
#[derive(Clone)]
pub enum MockFallback {
    /// Always answer with this text.
    Fixed(String),
    /// Structured `JUDGMENT`/`JUSTIFICATION` answer derived from the prompt hash.
    Synthesize,
    /// Fail as if the backend were down.
    Unavailable,
    Script(Arc<dyn Fn(&LlmRequest) -> String + Send + Sync>),
}

#[derive(Clone)]
pub struct MockLlm {
    canned: HashMap<String, String>,
    fallback: MockFallback,
}

impl MockLlm {
    pub fn new(fallback: MockFallback) -> Self {
        MockLlm { canned: HashMap::new(), fallback }
    }

    pub fn synthesizing() -> Self {
        Self::new(MockFallback::Synthesize)
    }

    pub fn fixed(text: impl Into<String>) -> Self {
        Self::new(MockFallback::Fixed(text.into()))
    }

    pub fn unavailable() -> Self {
        Self::new(MockFallback::Unavailable)
    }

    pub fn scripted(f: impl Fn(&LlmRequest) -> String + Send + Sync + 'static) -> Self {
        Self::new(MockFallback::Script(Arc::new(f)))
    }

    /// Registers a canned response under a prompt hash (see [`LlmRequest::prompt_hash`]).
    pub fn with_canned(mut self, hash: impl Into<String>, text: impl Into<String>) -> Self {
        self.canned.insert(hash.into(), text.into());
        self
    }

    /// Loads `{"<prompt hash>": "<response>", ...}` from a JSON file.
    pub fn load_canned(mut self, path: &Path) -> std::io::Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let table: HashMap<String, String> = serde_json::from_str(&raw)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        self.canned.extend(table);
        Ok(self)
    }
}

fn synthesize(req: &LlmRequest) -> String {
    let h = req.prompt_hash();
    let judgment = if u8::from_str_radix(&h[..2], 16).unwrap_or(0).is_multiple_of(2) {
        "true"
    } else {
        "false"
    };
    let cites = req.user_prompt.matches("\n[").count();
    let basis = if cites == 0 {
        "No scientific evidence was provided, so the judgment relies on general knowledge.".to_string()
    } else {
        let refs = (1..=cites).map(|i| format!("[{i}]")).collect::<Vec<_>>().join(", ");
        format!("The judgment is grounded in the retrieved evidence {refs}.")
    };
    format!("JUDGMENT: {judgment}\nJUSTIFICATION: {basis} (ref {})", &h[..8])
}

#[async_trait]
impl LlmBackend for MockLlm {
    async fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, BackendError> {
        if let Some(text) = self.canned.get(&req.prompt_hash()) {
            return Ok(LlmResponse { text: text.clone() });
        }
        let text = match &self.fallback {
            MockFallback::Fixed(t) => t.clone(),
            MockFallback::Synthesize => synthesize(req),
            MockFallback::Unavailable => {
                return Err(BackendError::Unavailable {
                    backend: "mock-llm".into(),
                    detail: "configured to fail".into(),
                    attempts: 1,
                })
            }
            MockFallback::Script(f) => f(req),
        };
        Ok(LlmResponse { text })
    }
}

#[derive(Debug, Clone)]
pub struct HttpOptions {
    pub timeout: Duration,
    pub retries: u32,
    pub backoff: Duration,
}

impl Default for HttpOptions {
    fn default() -> Self {
        HttpOptions {
            timeout: Duration::from_secs(60),
            retries: 2,
            backoff: Duration::from_millis(500),
        }
    }
}

/// Posts JSON with retries on transport errors and 5xx responses.
pub(crate) async fn post_json_with_retry(
    client: &reqwest::Client,
    backend: &str,
    url: &str,
    bearer: Option<&str>,
    body: &serde_json::Value,
    opts: &HttpOptions,
) -> Result<serde_json::Value, BackendError> {
    let mut attempt = 0u32;
    loop {
        let mut rb = client.post(url).timeout(opts.timeout).json(body);
        if let Some(token) = bearer {
            rb = rb.bearer_auth(token);
        }
        let outcome = rb.send().await;
        let retryable_detail = match outcome {
            Ok(resp) if resp.status().is_success() => {
                return resp.json::<serde_json::Value>().await.map_err(|e| {
                    BackendError::InvalidResponse { backend: backend.into(), detail: e.to_string() }
                });
            }
            Ok(resp) if resp.status().is_server_error() => format!("HTTP {}", resp.status()),
            Ok(resp) => {
                return Err(BackendError::Status { backend: backend.into(), status: resp.status().as_u16() })
            }
            Err(e) => e.to_string(),
        };
        attempt += 1;
        if attempt > opts.retries {
            return Err(BackendError::Unavailable {
                backend: backend.into(),
                detail: retryable_detail,
                attempts: attempt,
            });
        }
        tokio::time::sleep(backoff(opts.backoff, attempt - 1)).await;
    }
}

/// Chat-completions client (`POST {endpoint}` with `messages`).
pub struct HttpLlm {
    client: reqwest::Client,
    endpoint: String,
    api_key: Option<String>,
    opts: HttpOptions,
}

impl HttpLlm {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, opts: HttpOptions) -> Self {
        HttpLlm { client: reqwest::Client::new(), endpoint: endpoint.into(), api_key, opts }
    }
}

#[async_trait]
impl LlmBackend for HttpLlm {
    async fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, BackendError> {
        let mut messages = Vec::new();
        if !req.system_prompt.is_empty() {
            messages.push(json!({"role": "system", "content": req.system_prompt}));
        }
        messages.push(json!({"role": "user", "content": req.user_prompt}));
        let body = json!({
            "model": req.model_id,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "seed": 0,
        });
        let v = post_json_with_retry(
            &self.client,
            "llm",
            &self.endpoint,
            self.api_key.as_deref(),
            &body,
            &self.opts,
        )
        .await?;
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .or_else(|| v["text"].as_str())
            .ok_or_else(|| BackendError::InvalidResponse {
                backend: "llm".into(),
                detail: "missing choices[0].message.content".into(),
            })?;
        Ok(LlmResponse { text: text.to_string() })
    }
}

/// Persistent response cache keyed by SHA-256(prompt text + model id).
pub struct CachedLlm<B> {
    inner: B,
    store: Arc<LogStore>,
}

impl<B> CachedLlm<B> {
    pub fn new(inner: B, store: Arc<LogStore>) -> Self {
        CachedLlm { inner, store }
    }
}

#[async_trait]
impl<B: LlmBackend> LlmBackend for CachedLlm<B> {
    async fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, BackendError> {
        let key = req.prompt_hash();
        if let Some(hit) = self.store.get_as::<LlmResponse>(&key) {
            return Ok(hit);
        }
        let resp = self.inner.complete(req).await?;
        if let Err(e) = self.store.put_as(&key, &resp) {
            tracing::warn!(error = %e, "llm response cache write failed");
        }
        Ok(resp)
    }
}
