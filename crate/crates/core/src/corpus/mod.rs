//! Scientific abstract corpus: storage, preprocessing and PubMed acquisition.
//!
//! On disk a corpus is JSON-Lines, one `{"doc_id","title","abstract","fetched_at"}`
//! object per line, UTF-8 without BOM.

mod preprocess;
mod pubmed;

pub use preprocess::{is_stopword, preprocess, Processed, ProcessedDoc, STOPWORDS_VERSION};
pub use pubmed::{parse_efetch, parse_esearch, PubMedClient, PubMedConfig, PubMedError};

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::sha256_hex;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("duplicate doc_id {0:?}")]
    DuplicateDocId(String),
    #[error("line {line}: {detail}")]
    Format { line: usize, detail: String },
    #[error("document {0:?} has an empty abstract")]
    EmptyAbstract(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub fetched_at: DateTime<Utc>,
}

impl CorpusDoc {
    /// Surface text used for dense embedding.
    pub fn embedding_text(&self) -> String {
        if self.title.is_empty() {
            self.abstract_text.clone()
        } else {
            format!("{} {}", self.title, self.abstract_text)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    docs: Vec<CorpusDoc>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_docs(docs: Vec<CorpusDoc>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if d.abstract_text.trim().is_empty() {
                return Err(CorpusError::EmptyAbstract(d.doc_id.clone()));
            }
            if by_id.insert(d.doc_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateDocId(d.doc_id.clone()));
            }
        }
        Ok(Corpus { docs, by_id })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&CorpusDoc> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn docs(&self) -> &[CorpusDoc] {
        &self.docs
    }

    /// New snapshot with the incoming documents whose ids are not yet present.
    pub fn merged(&self, incoming: Vec<CorpusDoc>) -> Result<Corpus, CorpusError> {
        let mut docs = self.docs.clone();
        let mut seen: std::collections::HashSet<String> = self.by_id.keys().cloned().collect();
        for d in incoming {
            if seen.insert(d.doc_id.clone()) {
                docs.push(d);
            }
        }
        Corpus::from_docs(docs)
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for d in &self.docs {
            serde_json::to_writer(&mut out, d).expect("corpus docs always serialize");
            out.push(b'\n');
        }
        out
    }

    /// SHA-256 of the canonical JSON-Lines serialization.
    pub fn content_hash(&self) -> String {
        sha256_hex(&self.to_jsonl())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let io_err = |source| CorpusError::Io { path: path.display().to_string(), source };
        let reader = BufReader::new(fs::File::open(path).map_err(io_err)?);
        let mut docs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io_err)?;
            let line = if i == 0 { line.trim_start_matches('\u{feff}') } else { &line };
            if line.trim().is_empty() {
                continue;
            }
            let doc: CorpusDoc = serde_json::from_str(line)
                .map_err(|e| CorpusError::Format { line: i + 1, detail: e.to_string() })?;
            docs.push(doc);
        }
        Corpus::from_docs(docs)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let io_err = |source| CorpusError::Io { path: path.display().to_string(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        let tmp = path.with_extension("jsonl.tmp");
        let mut f = fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(&self.to_jsonl()).map_err(io_err)?;
        f.sync_all().map_err(io_err)?;
        fs::rename(&tmp, path).map_err(io_err)
    }
}
