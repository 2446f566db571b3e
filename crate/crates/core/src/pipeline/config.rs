use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::PubMedConfig;
use crate::detect::{DetectionConfig, DetectionMode};
use crate::ingest::FetchConfig;
use crate::reasoning::PromptConfig;
use crate::retrieval::{Bm25Params, DenseMode, HnswParams, RetrievalConfig, DEFAULT_DIM};
use crate::util::sha256_hex;
use crate::veracity::{ClassifierBackendSpec, ClassifierKind};

pub const CONFIG_ENV: &str = "CER_CONFIG";
pub const LLM_ENDPOINT_ENV: &str = "CER_LLM_ENDPOINT";
pub const EMBED_ENDPOINT_ENV: &str = "CER_EMBED_ENDPOINT";
pub const CLASSIFIER_ENDPOINT_ENV: &str = "CER_CLASSIFIER_ENDPOINT";
pub const LLM_API_KEY_ENV: &str = "CER_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub model_id: String,
    pub dim: usize,
    pub mode: DenseMode,
    pub hnsw: HnswParams,
    pub mock_seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            model_id: "sentence-transformers/multi-qa-MiniLM-L6-cos-v1".into(),
            dim: DEFAULT_DIM,
            mode: DenseMode::ExactFlat,
            hnsw: HnswParams::default(),
            mock_seed: 0,
        }
    }
}

/// Endpoints, timeouts and concurrency limits for external model backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    /// Use deterministic in-process mocks for every model backend.
    pub mock: bool,
    pub llm_endpoint: Option<String>,
    pub embed_endpoint: Option<String>,
    pub speech_endpoint: Option<String>,
    /// Run the external decoder (ffmpeg) before speech-to-text.
    pub decode_media: bool,
    pub llm_timeout_ms: u64,
    pub embed_timeout_ms: u64,
    pub classifier_timeout_ms: u64,
    pub speech_timeout_ms: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    /// Mock LLM: JSON table of prompt hash to canned response.
    pub mock_llm_responses: Option<PathBuf>,
    /// Mock speech: JSON table of media SHA-256 to transcript segments.
    pub mock_transcripts: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            mock: false,
            llm_endpoint: None,
            embed_endpoint: None,
            speech_endpoint: None,
            decode_media: false,
            llm_timeout_ms: 60_000,
            embed_timeout_ms: 10_000,
            classifier_timeout_ms: 60_000,
            speech_timeout_ms: 300_000,
            retries: 2,
            backoff_ms: 500,
            max_in_flight: 4,
            mock_llm_responses: None,
            mock_transcripts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    pub max_claim_chars: usize,
    pub max_upload_bytes: usize,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            max_claim_chars: 2_000,
            max_upload_bytes: 100 * 1024 * 1024,
            static_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub retrieval: RetrievalConfig,
    pub detection: DetectionConfig,
    pub prompt: PromptConfig,
    pub classifier: ClassifierBackendSpec,
    pub embedding: EmbeddingConfig,
    pub bm25: Bm25Params,
    pub corpus_path: PathBuf,
    pub index_path: PathBuf,
    pub cache_path: PathBuf,
    pub cache_max_entries: usize,
    pub backends: BackendConfig,
    pub fetch: FetchConfig,
    pub pubmed: PubMedConfig,
    pub service: ServiceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            retrieval: RetrievalConfig::default(),
            detection: DetectionConfig::default(),
            prompt: PromptConfig::default(),
            classifier: ClassifierBackendSpec::default(),
            embedding: EmbeddingConfig::default(),
            bm25: Bm25Params::default(),
            corpus_path: PathBuf::from("data/corpus.jsonl"),
            index_path: PathBuf::from("data/index"),
            cache_path: PathBuf::from("data/cache"),
            cache_max_entries: 100_000,
            backends: BackendConfig::default(),
            fetch: FetchConfig::default(),
            pubmed: PubMedConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

fn env_nonempty(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.trim().is_empty())
}

impl PipelineConfig {
    /// Parses TOML, resolving relative paths against the file's directory.
    pub fn from_toml_file(path: &Path) -> Result<Self, PipelineError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&raw)?;
        if let Some(base) = path.parent() {
            for p in [&mut cfg.corpus_path, &mut cfg.index_path, &mut cfg.cache_path] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            for p in [&mut cfg.backends.mock_llm_responses, &mut cfg.backends.mock_transcripts, &mut cfg.service.static_dir]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_toml_str(raw: &str) -> Result<Self, PipelineError> {
        toml::from_str(raw).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Endpoint overrides from `CER_*_ENDPOINT` variables.
    pub fn apply_env(&mut self) {
        if let Some(v) = env_nonempty(LLM_ENDPOINT_ENV) {
            self.backends.llm_endpoint = Some(v);
        }
        if let Some(v) = env_nonempty(EMBED_ENDPOINT_ENV) {
            self.backends.embed_endpoint = Some(v);
        }
        if let Some(v) = env_nonempty(CLASSIFIER_ENDPOINT_ENV) {
            self.classifier.endpoint = Some(v);
            if self.classifier.kind == ClassifierKind::Mock && !self.backends.mock {
                self.classifier.kind = ClassifierKind::FinetunedEndpoint;
            }
        }
    }

    /// Forces in-process mocks for all model backends.
    pub fn use_mock_backends(&mut self) {
        self.backends.mock = true;
        self.classifier.kind = ClassifierKind::Mock;
        self.classifier.endpoint = None;
        if self.detection.mode != DetectionMode::RuleBased && self.backends.mock_llm_responses.is_none() {
            self.detection.mode = DetectionMode::RuleBased;
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |e: String| PipelineError::Config(e);
        self.retrieval.validate().map_err(|e| bad(e.to_string()))?;
        self.detection.validate().map_err(|e| bad(e.to_string()))?;
        self.prompt.validate().map_err(|e| bad(e.to_string()))?;
        self.classifier.validate().map_err(|e| bad(e.to_string()))?;
        if self.embedding.dim == 0 {
            return Err(bad("embedding.dim must be positive".into()));
        }
        if self.backends.max_in_flight == 0 {
            return Err(bad("backends.max_in_flight must be positive".into()));
        }
        if self.cache_max_entries == 0 {
            return Err(bad("cache_max_entries must be positive".into()));
        }
        if !self.backends.mock {
            if self.backends.llm_endpoint.is_none() {
                return Err(bad(format!("no LLM endpoint (set backends.llm_endpoint or {LLM_ENDPOINT_ENV})")));
            }
            if self.retrieval.retriever == crate::model::Retriever::Dense && self.backends.embed_endpoint.is_none() {
                return Err(bad(format!(
                    "dense retrieval needs an embedding endpoint (set backends.embed_endpoint or {EMBED_ENDPOINT_ENV})"
                )));
            }
        }
        Ok(())
    }

    /// Canonical JSON (keys sorted) of the settings that influence verdicts.
    /// Paths, timeouts and service limits are left out.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::json!({
            "retrieval": self.retrieval,
            "detection": self.detection,
            "prompt": self.prompt,
            "classifier": self.classifier,
            "embedding": self.embedding,
            "bm25": self.bm25,
            "mock_backends": self.backends.mock,
        });
        let v = sorted(v);
        serde_json::to_string(&v).expect("value serializes")
    }

    /// SHA-256 of [`Self::canonical_json`].
    pub fn fingerprint(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }
}

fn sorted(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Object(m) => {
            let ordered: std::collections::BTreeMap<String, Value> = m.into_iter().map(|(k, v)| (k, sorted(v))).collect();
            Value::Object(ordered.into_iter().collect())
        }
        Value::Array(a) => Value::Array(a.into_iter().map(sorted).collect()),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = PipelineConfig::default();
        let back = PipelineConfig::from_toml_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.fingerprint(), c.fingerprint());
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let c = PipelineConfig::from_toml_str("[retrieval]\nretriever = \"sparse\"\ntop_k = 10\n").unwrap();
        assert_eq!(c.retrieval.top_k, 10);
        assert_eq!(c.retrieval.evidence_m, 3);
        assert_eq!(c.backends.llm_timeout_ms, 60_000);
    }

    #[test]
    fn fingerprint_tracks_changes() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.retrieval.top_k = 19;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
        let mut c = a.clone();
        c.cache_path = "elsewhere".into();
        c.backends.llm_timeout_ms = 1;
        assert_eq!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn live_mode_requires_endpoints() {
        let mut c = PipelineConfig::default();
        assert!(c.validate().is_err());
        c.use_mock_backends();
        c.validate().unwrap();
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("cer.toml");
        std::fs::write(&p, "corpus_path = \"corpus.jsonl\"\n").unwrap();
        let c = PipelineConfig::from_toml_file(&p).unwrap();
        assert_eq!(c.corpus_path, d.path().join("corpus.jsonl"));
    }
}
