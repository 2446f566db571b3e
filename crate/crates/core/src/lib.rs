//! Evidence-based verification of biomedical claims.
//!
//! Claims are detected in text, web pages or video transcripts, matched
//! against a corpus of scientific abstracts (dense or BM25 retrieval), judged
//! by an LLM that writes a justification, and labelled by a veracity
//! classifier over the claim and that justification.

pub mod cache;
pub mod corpus;
pub mod detect;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod llm;
pub mod model;
pub mod pipeline;
pub mod reasoning;
pub mod retrieval;
pub mod service;
pub mod util;
pub mod veracity;

pub use corpus::{Corpus, CorpusDoc};
pub use error::BackendError;
pub use eval::{BaselineKind, DatasetName, LabeledClaim, MetricReport, VideoLabel, VideoVerdict};
pub use ingest::{SourceDocument, TranscriptSegment};
pub use model::{
    Claim, ClaimAssessment, ClaimSource, EvidencePassage, Judgment, Justification, Retriever, VerdictLabel,
};
pub use pipeline::{Pipeline, PipelineConfig, PipelineError};
pub use retrieval::{DenseMode, RetrievalConfig};
pub use service::{JobKind, JobState, VerificationJob};
