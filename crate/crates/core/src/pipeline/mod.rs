//! End-to-end orchestration: ingest, detect, retrieve, reason, classify.

mod config;

pub use config::{
    BackendConfig, EmbeddingConfig, PipelineConfig, ServiceConfig, CLASSIFIER_ENDPOINT_ENV, CONFIG_ENV,
    EMBED_ENDPOINT_ENV, LLM_API_KEY_ENV, LLM_ENDPOINT_ENV,
};

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use futures::future::try_join_all;
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::cache::{AssessmentCache, LogStore};
use crate::corpus::{Corpus, CorpusError};
use crate::detect::{detect_claims, DetectError};
use crate::ingest::{
    extract_web_text, CommandDecoder, Fetcher, HttpSpeech, IngestError, MockSpeech, SourceDocument, SpeechBackend,
    DEFAULT_LANG_HINT,
};
use crate::llm::{CachedLlm, HttpLlm, HttpOptions, LlmBackend, MockLlm};
use crate::model::{Claim, ClaimAssessment, ModelError, VerdictLabel};
use crate::reasoning::reason;
use crate::retrieval::{
    build_indexes, EmbeddingBackend, HttpEmbedder, IndexBundle, MockEmbedder, RetrievalEngine, RetrievalError,
};
use crate::util::{sha256_hex, SnapshotCell};
use crate::veracity::{assess, ClassifierBackend, ClassifierKind, HttpClassifier, MockClassifier, VeracityError};

const SAMPLE_CORPUS: &str = include_str!("../../data/fixtures/corpus_sample.jsonl");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Veracity(#[from] VeracityError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// The built-in 30-abstract sample corpus used by demos and tests.
pub fn sample_corpus() -> Corpus {
    let docs = SAMPLE_CORPUS
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("sample corpus line parses"))
        .collect();
    Corpus::from_docs(docs).expect("sample corpus is valid")
}

/// Model backends used by one pipeline instance.
#[derive(Clone)]
pub struct Backends {
    pub llm: Arc<dyn LlmBackend>,
    pub embedder: Arc<dyn EmbeddingBackend>,
    pub classifier: Arc<dyn ClassifierBackend>,
    pub speech: Arc<dyn SpeechBackend>,
}

fn opts(timeout_ms: u64, b: &BackendConfig) -> HttpOptions {
    HttpOptions {
        timeout: Duration::from_millis(timeout_ms),
        retries: b.retries,
        backoff: Duration::from_millis(b.backoff_ms),
    }
}

impl Backends {
    /// Deterministic in-process backends, honouring any fixture tables in
    /// the configuration.
    pub fn mock(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let mut llm = MockLlm::synthesizing();
        if let Some(p) = &cfg.backends.mock_llm_responses {
            llm = llm
                .load_canned(p)
                .map_err(|e| PipelineError::Config(format!("mock LLM table {}: {e}", p.display())))?;
        }
        let speech = match &cfg.backends.mock_transcripts {
            Some(p) => MockSpeech::load(p)?,
            None => MockSpeech::new(),
        };
        Ok(Backends {
            llm: Arc::new(llm),
            embedder: Arc::new(MockEmbedder::new(cfg.embedding.dim, cfg.embedding.mock_seed)),
            classifier: Arc::new(MockClassifier::new(cfg.classifier.seed)),
            speech: Arc::new(speech),
        })
    }

    /// HTTP backends, or mocks when `backends.mock` is set. LLM responses
    /// are cached under `cache_path` when `cache` is true.
    pub fn from_config(cfg: &PipelineConfig, cache: bool) -> Result<Self, PipelineError> {
        if cfg.backends.mock {
            return Self::mock(cfg);
        }
        cfg.validate()?;
        let b = &cfg.backends;
        let llm_endpoint = b.llm_endpoint.clone().ok_or_else(|| PipelineError::Config("no LLM endpoint".into()))?;
        let api_key = std::env::var(LLM_API_KEY_ENV).ok().filter(|k| !k.is_empty());
        let http_llm = HttpLlm::new(llm_endpoint, api_key, opts(b.llm_timeout_ms, b));
        let llm: Arc<dyn LlmBackend> = if cache {
            let store = LogStore::open(cfg.cache_path.join("llm.jsonl"), cfg.cache_max_entries)
                .map_err(|e| PipelineError::Config(format!("LLM cache {}: {e}", cfg.cache_path.display())))?;
            Arc::new(CachedLlm::new(http_llm, Arc::new(store)))
        } else {
            Arc::new(http_llm)
        };
        let embedder: Arc<dyn EmbeddingBackend> = match &b.embed_endpoint {
            Some(ep) => Arc::new(HttpEmbedder::new(
                ep.clone(),
                cfg.embedding.model_id.clone(),
                cfg.embedding.dim,
                opts(b.embed_timeout_ms, b),
            )),
            // sparse-only deployments never embed; the mock keeps the type total
            None => Arc::new(MockEmbedder::new(cfg.embedding.dim, cfg.embedding.mock_seed)),
        };
        let classifier: Arc<dyn ClassifierBackend> = match cfg.classifier.kind {
            ClassifierKind::Mock => Arc::new(MockClassifier::new(cfg.classifier.seed)),
            _ => Arc::new(HttpClassifier::new(&cfg.classifier, opts(b.classifier_timeout_ms, b))?),
        };
        let speech: Arc<dyn SpeechBackend> = match &b.speech_endpoint {
            Some(ep) => Arc::new(HttpSpeech::new(
                ep.clone(),
                b.decode_media.then(CommandDecoder::ffmpeg),
                opts(b.speech_timeout_ms, b),
            )),
            None => Arc::new(MockSpeech::new()),
        };
        Ok(Backends { llm, embedder, classifier, speech })
    }
}

struct Snapshot {
    engine: RetrievalEngine,
    fingerprint: String,
}

/// Fingerprint of the configuration and the corpus snapshot it serves.
pub fn snapshot_fingerprint(config_fingerprint: &str, corpus_hash: &str) -> String {
    sha256_hex(format!("{config_fingerprint}:{corpus_hash}").as_bytes())
}

pub struct Pipeline {
    config: PipelineConfig,
    backends: Backends,
    snapshot: SnapshotCell<Snapshot>,
    fetcher: Fetcher,
    limiter: Semaphore,
    cache: Option<AssessmentCache>,
}

impl Pipeline {
    /// Assembles a pipeline from ready-made parts.
    pub fn new(
        config: PipelineConfig,
        backends: Backends,
        corpus: Corpus,
        bundle: IndexBundle,
        cache: Option<AssessmentCache>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        let fingerprint = snapshot_fingerprint(&config.fingerprint(), &bundle.meta.corpus_hash);
        let engine = RetrievalEngine::new(Arc::new(corpus), bundle, backends.embedder.clone())?;
        Ok(Pipeline {
            fetcher: Fetcher::new(config.fetch.clone()),
            limiter: Semaphore::new(config.backends.max_in_flight),
            snapshot: SnapshotCell::new(Snapshot { engine, fingerprint }),
            config,
            backends,
            cache,
        })
    }

    /// Builds in-memory indexes over `corpus` and assembles a pipeline.
    pub async fn with_corpus(
        config: PipelineConfig,
        backends: Backends,
        corpus: Corpus,
        cache: Option<AssessmentCache>,
    ) -> Result<Self, PipelineError> {
        let bundle = index_corpus(&config, &backends, &corpus).await?;
        Self::new(config, backends, corpus, bundle, cache)
    }

    /// Loads the corpus, indexes and cache named by the configuration.
    /// Missing indexes are built in memory; in mock mode a missing corpus
    /// falls back to the sample corpus.
    pub async fn open(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let backends = Backends::from_config(&config, true)?;
        let corpus = if !config.corpus_path.exists() && config.backends.mock {
            tracing::warn!(path = %config.corpus_path.display(), "corpus not found; using the built-in sample corpus");
            sample_corpus()
        } else {
            Corpus::load(&config.corpus_path)?
        };
        let bundle = if config.index_path.join("meta.json").exists() {
            let b = IndexBundle::load(&config.index_path)?;
            if b.meta.corpus_hash == corpus.content_hash() {
                Some(b)
            } else {
                tracing::warn!("index on disk does not match the corpus; rebuilding in memory");
                None
            }
        } else {
            None
        };
        let bundle = match bundle {
            Some(b) => b,
            None => index_corpus(&config, &backends, &corpus).await?,
        };
        let cache = match AssessmentCache::open(config.cache_path.join("assessments.jsonl"), config.cache_max_entries) {
            Ok(c) => Some(c),
            Err(e) => {
                tracing::warn!(error = %e, "assessment cache disabled");
                None
            }
        };
        Self::new(config, backends, corpus, bundle, cache)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    /// Fingerprint stamped on assessments from the current snapshot.
    pub fn fingerprint(&self) -> String {
        self.snapshot.load().fingerprint.clone()
    }

    pub fn corpus_len(&self) -> usize {
        self.snapshot.load().engine.corpus().len()
    }

    pub fn index_meta(&self) -> crate::retrieval::IndexMeta {
        self.snapshot.load().engine.bundle().meta.clone()
    }

    /// Replaces the corpus and index snapshot. In-flight requests finish on
    /// the snapshot they started with.
    pub fn swap_snapshot(&self, corpus: Corpus, bundle: IndexBundle) -> Result<(), PipelineError> {
        let fingerprint = snapshot_fingerprint(&self.config.fingerprint(), &bundle.meta.corpus_hash);
        let engine = RetrievalEngine::new(Arc::new(corpus), bundle, self.backends.embedder.clone())?;
        self.snapshot.swap(Snapshot { engine, fingerprint });
        Ok(())
    }

    /// Verifies one claim without consulting the cache. `label_space`
    /// overrides the configured classifier label space.
    pub async fn verify_claim(
        &self,
        claim: &Claim,
        label_space: Option<&[VerdictLabel]>,
    ) -> Result<ClaimAssessment, PipelineError> {
        let _permit = self.limiter.acquire().await.expect("limiter is never closed");
        let snap = self.snapshot.load();
        let cfg = &self.config;
        let evidence = snap.engine.retrieve(&claim.text, &cfg.retrieval).await?;
        let justification = match reason(claim, &evidence, &cfg.prompt, self.backends.llm.as_ref()).await {
            Ok(r) => Some(r.justification),
            Err(e) => {
                tracing::warn!(claim = %claim.id, error = %e, "reasoning failed; classifying the claim alone");
                None
            }
        };
        let degraded = justification.is_none();
        let spec = match label_space {
            Some(ls) => cfg.classifier.with_label_space(ls),
            None => cfg.classifier.clone(),
        };
        let mut a = assess(
            claim,
            evidence,
            justification,
            &spec,
            self.backends.classifier.as_ref(),
            &snap.fingerprint,
            &cfg.retrieval.separator,
        )
        .await?;
        if degraded {
            a.justification.model_id = cfg.prompt.model_id.clone();
        }
        Ok(a)
    }

    /// Cache-aware verification. Returns the assessment and whether it was
    /// served from the cache.
    pub async fn verify_cached(&self, claim: &Claim) -> Result<(ClaimAssessment, bool), PipelineError> {
        let fp = self.fingerprint();
        if let Some(cache) = &self.cache {
            if let Some(mut hit) = cache.get(&claim.text, &fp) {
                hit.claim = claim.clone();
                return Ok((hit, true));
            }
        }
        let a = self.verify_claim(claim, None).await?;
        if let Some(cache) = &self.cache {
            if let Err(e) = cache.put(&a) {
                tracing::warn!(error = %e, "could not persist assessment");
            }
        }
        Ok((a, false))
    }

    /// Verifies a single user-entered claim.
    pub async fn verify_text(&self, text: &str) -> Result<(ClaimAssessment, bool), PipelineError> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(PipelineError::InvalidInput("claim text is empty".into()));
        }
        let max = self.config.service.max_claim_chars;
        if trimmed.chars().count() > max {
            return Err(PipelineError::InvalidInput(format!("claim text exceeds {max} characters")));
        }
        self.verify_cached(&Claim::direct(trimmed)?).await
    }

    /// Detects claims in a document and verifies each, in document order.
    pub async fn verify_document(&self, doc: &SourceDocument) -> Result<Vec<ClaimAssessment>, PipelineError> {
        let claims = detect_claims(doc, &self.config.detection, Some(self.backends.llm.as_ref())).await?;
        let results = try_join_all(claims.iter().map(|c| self.verify_cached(c))).await?;
        Ok(results.into_iter().map(|(a, _)| a).collect())
    }

    pub async fn verify_url(&self, url: &str) -> Result<Vec<ClaimAssessment>, PipelineError> {
        let html = self.fetcher.fetch_url(url).await?;
        let text = extract_web_text(&html)?;
        self.verify_document(&SourceDocument::from_web_page(url, text)).await
    }

    /// Transcribes media and verifies the claims found in the transcript.
    pub async fn verify_media(
        &self,
        media: &[u8],
        uri: Option<String>,
    ) -> Result<(SourceDocument, Vec<ClaimAssessment>), PipelineError> {
        let segments = self.backends.speech.transcribe(media, DEFAULT_LANG_HINT).await?;
        let doc = SourceDocument::from_transcript(uri, segments)?;
        let assessments = self.verify_document(&doc).await?;
        Ok((doc, assessments))
    }
}

/// Builds indexes for `corpus` with the configured embedder. Sparse-only
/// configurations without an embedding endpoint skip the dense index.
pub async fn index_corpus(
    config: &PipelineConfig,
    backends: &Backends,
    corpus: &Corpus,
) -> Result<IndexBundle, PipelineError> {
    let dense = config.backends.mock || config.backends.embed_endpoint.is_some();
    let embedder = dense.then_some(backends.embedder.as_ref());
    Ok(build_indexes(corpus, embedder, config.embedding.mode, config.embedding.hnsw, config.bm25).await?)
}

/// Builds indexes for the configured corpus and writes them to `index_path`.
pub async fn build_and_save_index(config: &PipelineConfig, backends: &Backends) -> Result<IndexBundle, PipelineError> {
    let corpus = Corpus::load(&config.corpus_path)?;
    let bundle = index_corpus(config, backends, &corpus).await?;
    bundle.save(&config.index_path)?;
    Ok(bundle)
}

/// Mock-backed pipeline over the sample corpus, with no on-disk state.
pub async fn mock_pipeline(mut config: PipelineConfig) -> Result<Pipeline, PipelineError> {
    config.use_mock_backends();
    let backends = Backends::mock(&config)?;
    Pipeline::with_corpus(config, backends, sample_corpus(), None).await
}

/// Loads the configuration from `path`, or defaults when `None`, then applies
/// environment overrides.
pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::from_toml_file(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_env();
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::TranscriptSegment;
    use crate::model::Retriever;
    use crate::veracity::BINARY;

    #[test]
    fn sample_corpus_loads() {
        let c = sample_corpus();
        assert_eq!(c.len(), 30);
        assert!(c.get("fx-0011").unwrap().abstract_text.contains("MMR"));
    }

    #[tokio::test]
    async fn verify_text_end_to_end() {
        let p = mock_pipeline(PipelineConfig::default()).await.unwrap();
        let (a, cached) = p.verify_text("Vitamin C prevents the common cold.").await.unwrap();
        assert!(!cached);
        assert!(a.check_invariants());
        assert_eq!(a.evidence.len(), 3);
        assert!(a.evidence.iter().all(|e| e.retriever == Retriever::Dense));
        assert!(!a.degraded);
        assert_eq!(a.config_fingerprint, p.fingerprint());
    }

    #[tokio::test]
    async fn input_limits() {
        let p = mock_pipeline(PipelineConfig::default()).await.unwrap();
        assert!(matches!(p.verify_text("   ").await, Err(PipelineError::InvalidInput(_))));
        let long = "a".repeat(2001);
        assert!(matches!(p.verify_text(&long).await, Err(PipelineError::InvalidInput(_))));
    }

    #[tokio::test]
    async fn cache_hits_are_identical() {
        let d = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.use_mock_backends();
        let cache = AssessmentCache::open(d.path().join("a.jsonl"), 100).unwrap();
        let p = Pipeline::with_corpus(cfg.clone(), Backends::mock(&cfg).unwrap(), sample_corpus(), Some(cache))
            .await
            .unwrap();
        let (a, c1) = p.verify_text("Smoking causes lung cancer.").await.unwrap();
        let (b, c2) = p.verify_text("Smoking causes lung cancer.").await.unwrap();
        assert!(!c1 && c2);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[tokio::test]
    async fn reasoning_failure_degrades() {
        let mut cfg = PipelineConfig::default();
        cfg.use_mock_backends();
        let mut backends = Backends::mock(&cfg).unwrap();
        backends.llm = Arc::new(MockLlm::unavailable());
        let p = Pipeline::with_corpus(cfg, backends, sample_corpus(), None).await.unwrap();
        let (a, _) = p.verify_text("Garlic lowers blood pressure.").await.unwrap();
        assert!(a.degraded);
        assert!(a.justification.text.is_empty());
    }

    #[tokio::test]
    async fn binary_label_space_override() {
        let p = mock_pipeline(PipelineConfig::default()).await.unwrap();
        let claim = Claim::direct("Metformin lowers blood glucose.").unwrap();
        let a = p.verify_claim(&claim, Some(&BINARY)).await.unwrap();
        assert!(BINARY.contains(&a.label));
    }

    #[tokio::test]
    async fn sparse_retriever() {
        let mut cfg = PipelineConfig::default();
        cfg.retrieval.retriever = Retriever::Sparse;
        let p = mock_pipeline(cfg).await.unwrap();
        let (a, _) = p.verify_text("Does zinc shorten the common cold?").await.unwrap();
        assert!(a.evidence.iter().all(|e| e.retriever == Retriever::Sparse));
        assert_eq!(a.evidence[0].doc_id, "fx-0009");
    }

    #[tokio::test]
    async fn media_with_transcript() {
        let mut cfg = PipelineConfig::default();
        cfg.use_mock_backends();
        let mut backends = Backends::mock(&cfg).unwrap();
        let seg = |s: f64, t: &str| TranscriptSegment { start_sec: s, end_sec: s + 4.0, text: t.into() };
        backends.speech = Arc::new(MockSpeech::new().register(
            b"video",
            vec![seg(0.0, "Welcome back to the channel."), seg(4.0, "Vitamin C cures the common cold in every patient.")],
        ));
        let p = Pipeline::with_corpus(cfg, backends, sample_corpus(), None).await.unwrap();
        let (doc, out) = p.verify_media(b"video", None).await.unwrap();
        assert_eq!(doc.segments.as_ref().unwrap().len(), 2);
        assert_eq!(out.len(), 1);
        assert!(out[0].claim.timestamp.is_some());
        let (_, none) = p.verify_media(b"", None).await.unwrap();
        assert!(none.is_empty());
    }

    #[tokio::test]
    async fn swap_changes_fingerprint() {
        let p = mock_pipeline(PipelineConfig::default()).await.unwrap();
        let before = p.fingerprint();
        let docs: Vec<_> = sample_corpus().docs()[..10].to_vec();
        let small = Corpus::from_docs(docs).unwrap();
        let bundle = index_corpus(p.config(), p.backends(), &small).await.unwrap();
        p.swap_snapshot(small, bundle).unwrap();
        assert_ne!(p.fingerprint(), before);
        assert_eq!(p.corpus_len(), 10);
    }
}
