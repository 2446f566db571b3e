//! Dense and sparse ranking of corpus abstracts, evidence selection and the
//! claim/evidence concatenation used downstream.

mod dense;
mod embed;
mod hnsw;
mod persist;
mod sparse;

pub use dense::{DenseIndex, DenseMode};
pub use embed::{dot_f64, EmbeddingBackend, EmbeddingVector, HttpEmbedder, MockEmbedder, DEFAULT_DIM, NORM_TOLERANCE};
pub use hnsw::{Hnsw, HnswParams};
pub use persist::{DenseMeta, IndexBundle, IndexMeta, SparseMeta, FORMAT_VERSION};
pub use sparse::{bm25_idf, bm25_term, Bm25Params, SparseIndex};

use std::io;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{preprocess, Corpus, ProcessedDoc, STOPWORDS_VERSION};
use crate::error::BackendError;
use crate::model::{EvidencePassage, Retriever};
use crate::util::collapse_whitespace;

pub const DEFAULT_SEPARATOR: &str = "[SEP]";
const EMBED_BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("index is empty")]
    EmptyIndex,
    #[error("dimension mismatch: index has {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("duplicate doc_id {0:?}")]
    DuplicateDocId(String),
    #[error("vector is empty, zero or non-finite")]
    InvalidVector,
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error("no {0:?} index was built")]
    MissingIndex(Retriever),
    #[error("index was built from a different corpus snapshot")]
    StaleIndex,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("index format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub top_k: usize,
    pub evidence_m: usize,
    pub retriever: Retriever,
    pub separator: String,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { top_k: 20, evidence_m: 3, retriever: Retriever::Dense, separator: DEFAULT_SEPARATOR.into() }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.top_k == 0 || self.evidence_m == 0 {
            return Err(RetrievalError::InvalidConfig("top_k and evidence_m must be positive".into()));
        }
        if self.evidence_m > self.top_k {
            return Err(RetrievalError::InvalidConfig("evidence_m must not exceed top_k".into()));
        }
        if self.separator.trim().is_empty() {
            return Err(RetrievalError::InvalidConfig("separator must be non-empty".into()));
        }
        Ok(())
    }
}

/// First `evidence_m` ranked hits, materialized from the corpus.
pub fn select_evidence(
    ranked: &[(String, f64)],
    corpus: &Corpus,
    cfg: &RetrievalConfig,
    retriever: Retriever,
) -> Vec<EvidencePassage> {
    ranked
        .iter()
        .filter_map(|(id, score)| {
            let doc = corpus.get(id);
            if doc.is_none() {
                tracing::warn!(doc_id = %id, "ranked doc missing from corpus snapshot");
            }
            doc.map(|d| EvidencePassage {
                doc_id: d.doc_id.clone(),
                title: d.title.clone(),
                text: d.abstract_text.clone(),
                score: *score,
                retriever,
            })
        })
        .take(cfg.evidence_m)
        .collect()
}

/// Removes separator occurrences so the joined string carries only the
/// separators inserted here.
pub fn strip_separator(text: &str, sep: &str) -> String {
    if sep.is_empty() || !text.contains(sep) {
        return text.to_string();
    }
    collapse_whitespace(&text.replace(sep, " "))
}

/// `claim [SEP] e1 [SEP] e2 ...`
pub fn format_claim_evidence(claim_text: &str, evidence: &[EvidencePassage], sep: &str) -> String {
    let glue = format!(" {sep} ");
    std::iter::once(strip_separator(claim_text, sep))
        .chain(evidence.iter().map(|e| strip_separator(&e.text, sep)))
        .collect::<Vec<_>>()
        .join(&glue)
}

/// Builds the requested indexes for one corpus snapshot.
pub async fn build_indexes(
    corpus: &Corpus,
    embedder: Option<&dyn EmbeddingBackend>,
    mode: DenseMode,
    hnsw_params: HnswParams,
    bm25: Bm25Params,
) -> Result<IndexBundle, RetrievalError> {
    let dense = match embedder {
        None => None,
        Some(e) => {
            let mut entries = Vec::with_capacity(corpus.len());
            for chunk in corpus.docs().chunks(EMBED_BATCH) {
                let texts: Vec<String> = chunk.iter().map(|d| d.embedding_text()).collect();
                let vectors = e.embed_batch(&texts).await?;
                if vectors.len() != chunk.len() {
                    return Err(RetrievalError::Format("embedder returned a short batch".into()));
                }
                for (d, v) in chunk.iter().zip(vectors) {
                    if v.dim() != e.dim() {
                        return Err(RetrievalError::DimensionMismatch { expected: e.dim(), got: v.dim() });
                    }
                    entries.push((d.doc_id.clone(), v));
                }
            }
            Some((DenseIndex::build(entries, mode, hnsw_params)?, e.dim(), e.model_id().to_string()))
        }
    };
    let processed: Vec<ProcessedDoc> =
        corpus.docs().iter().map(|d| ProcessedDoc::new(d.doc_id.clone(), &d.embedding_text())).collect();
    let sparse = SparseIndex::build(&processed, bm25)?;
    let meta = IndexMeta {
        format_version: FORMAT_VERSION,
        doc_count: corpus.len(),
        corpus_hash: corpus.content_hash(),
        dense: dense.as_ref().map(|(_, dim, model)| DenseMeta {
            dim: *dim,
            mode,
            hnsw_params,
            embed_model_id: model.clone(),
        }),
        sparse: Some(SparseMeta {
            params: bm25,
            avg_doc_len: sparse.avg_doc_len(),
            stopwords_version: STOPWORDS_VERSION.into(),
        }),
    };
    Ok(IndexBundle { meta, dense: dense.map(|d| d.0), sparse: Some(sparse) })
}

/// Corpus snapshot plus its indexes and the query embedder.
pub struct RetrievalEngine {
    corpus: Arc<Corpus>,
    bundle: IndexBundle,
    embedder: Arc<dyn EmbeddingBackend>,
}

impl RetrievalEngine {
    pub fn new(
        corpus: Arc<Corpus>,
        bundle: IndexBundle,
        embedder: Arc<dyn EmbeddingBackend>,
    ) -> Result<Self, RetrievalError> {
        if bundle.meta.corpus_hash != corpus.content_hash() {
            return Err(RetrievalError::StaleIndex);
        }
        if let Some(d) = &bundle.dense {
            if d.dim() != embedder.dim() {
                return Err(RetrievalError::DimensionMismatch { expected: d.dim(), got: embedder.dim() });
            }
        }
        Ok(RetrievalEngine { corpus, bundle, embedder })
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn bundle(&self) -> &IndexBundle {
        &self.bundle
    }

    /// Ranked `(doc_id, score)` list of length ≤ `top_k`.
    pub async fn rank(&self, claim_text: &str, cfg: &RetrievalConfig) -> Result<Vec<(String, f64)>, RetrievalError> {
        match cfg.retriever {
            Retriever::Dense => {
                let idx = self.bundle.dense.as_ref().ok_or(RetrievalError::MissingIndex(Retriever::Dense))?;
                let q = self.embedder.embed(claim_text).await?;
                idx.search(&q, cfg.top_k)
            }
            Retriever::Sparse => {
                let idx = self.bundle.sparse.as_ref().ok_or(RetrievalError::MissingIndex(Retriever::Sparse))?;
                idx.search(&preprocess(claim_text).tokens, cfg.top_k)
            }
        }
    }

    pub async fn retrieve(
        &self,
        claim_text: &str,
        cfg: &RetrievalConfig,
    ) -> Result<Vec<EvidencePassage>, RetrievalError> {
        let ranked = self.rank(claim_text, cfg).await?;
        Ok(select_evidence(&ranked, &self.corpus, cfg, cfg.retriever))
    }
}
