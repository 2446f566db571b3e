use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::RetrievalError;
use crate::corpus::preprocess;
use crate::error::BackendError;
use crate::llm::{post_json_with_retry, HttpOptions};
use crate::util::sha256_hex;

pub const DEFAULT_DIM: usize = 384;
pub const NORM_TOLERANCE: f64 = 1e-6;

/// Unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// L2-normalizes `values`. Fails on empty, zero or non-finite input.
    pub fn normalized(values: Vec<f32>) -> Result<Self, RetrievalError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::InvalidVector);
        }
        let norm = values.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(RetrievalError::InvalidVector);
        }
        Ok(EmbeddingVector(values.into_iter().map(|v| (v as f64 / norm) as f32).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        dot_f64(&self.0, &other.0)
    }
}

/// Dot product accumulated in f64, in index order.
pub fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        s += *x as f64 * *y as f64;
    }
    s
}

#[async_trait]
pub trait EmbeddingBackend: Send + Sync {
    fn dim(&self) -> usize;
    fn model_id(&self) -> &str;
    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RetrievalError>;

    async fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let mut out = self.embed_batch(&[text.to_string()]).await?;
        out.pop().ok_or(RetrievalError::Backend(BackendError::InvalidResponse {
            backend: "embedding".into(),
            detail: "empty vector list".into(),
        }))
    }
}

/// Deterministic hashed projection of the token multiset. Each distinct
/// token owns a seeded pseudo-random direction; a text is the normalized sum.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
    seed: u64,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        MockEmbedder { dim, seed }
    }

    fn direction(&self, token: &str, acc: &mut [f32]) {
        let h = sha256_hex(format!("{}\u{0}{token}", self.seed).as_bytes());
        let mut seed = [0u8; 32];
        hex::decode_to_slice(&h, &mut seed).expect("sha256 hex is 64 chars");
        let mut rng = ChaCha8Rng::from_seed(seed);
        for a in acc.iter_mut() {
            *a += rng.random_range(-1.0f32..1.0);
        }
    }

    pub fn embed_sync(&self, text: &str) -> EmbeddingVector {
        let mut acc = vec![0f32; self.dim];
        let tokens = preprocess(text).tokens;
        if tokens.is_empty() {
            self.direction(&format!("\u{1}raw:{text}"), &mut acc);
        }
        for t in &tokens {
            self.direction(t, &mut acc);
        }
        EmbeddingVector::normalized(acc)
            .or_else(|_| {
                let mut fallback = vec![0f32; self.dim];
                fallback[0] = 1.0;
                EmbeddingVector::normalized(fallback)
            })
            .expect("unit basis vector is valid")
    }
}

#[async_trait]
impl EmbeddingBackend for MockEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn model_id(&self) -> &str {
        "mock-hash-projection"
    }

    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        Ok(texts.iter().map(|t| self.embed_sync(t)).collect())
    }
}

/// `POST {endpoint}` with `{model_id, texts}` returning `{vectors}`.
pub struct HttpEmbedder {
    client: reqwest::Client,
    endpoint: String,
    model_id: String,
    dim: usize,
    opts: HttpOptions,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, model_id: impl Into<String>, dim: usize, opts: HttpOptions) -> Self {
        HttpEmbedder {
            client: reqwest::Client::new(),
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            dim,
            opts,
        }
    }
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

#[async_trait]
impl EmbeddingBackend for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        let body = json!({"model_id": self.model_id, "texts": texts});
        let v = post_json_with_retry(&self.client, "embedding", &self.endpoint, None, &body, &self.opts).await?;
        let resp: EmbedResponse = serde_json::from_value(v).map_err(|e| BackendError::InvalidResponse {
            backend: "embedding".into(),
            detail: e.to_string(),
        })?;
        if resp.vectors.len() != texts.len() {
            return Err(BackendError::InvalidResponse {
                backend: "embedding".into(),
                detail: format!("expected {} vectors, got {}", texts.len(), resp.vectors.len()),
            }
            .into());
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(RetrievalError::DimensionMismatch { expected: self.dim, got: v.len() });
                }
                EmbeddingVector::normalized(v)
            })
            .collect()
    }
}
