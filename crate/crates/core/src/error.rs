use thiserror::Error;

/// Failure talking to an external model backend (LLM, embedder, classifier,
/// speech-to-text).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("{backend} backend unavailable after {attempts} attempt(s): {detail}")]
    Unavailable { backend: String, detail: String, attempts: u32 },
    #[error("{backend} backend returned HTTP {status}")]
    Status { backend: String, status: u16 },
    #[error("{backend} backend returned an invalid response: {detail}")]
    InvalidResponse { backend: String, detail: String },
}
