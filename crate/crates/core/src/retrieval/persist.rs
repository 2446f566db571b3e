//! On-disk index layout:
//!
//! ```text
//! meta.json          dims, mode, parameters, doc count, corpus hash
//! vectors.f32        little-endian f32, row-major, rows in doc_ids.json order
//! doc_ids.json       ["id", ...]
//! hnsw.json          graph links (approx mode only)
//! postings.jsonl     {"token": "...", "postings": [["doc_id", tf], ...]}
//! doc_lengths.json   {"doc_id": token_count, ...}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::dense::{DenseIndex, DenseMode};
use super::hnsw::{Hnsw, HnswParams};
use super::sparse::{Bm25Params, SparseIndex};
use super::RetrievalError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMeta {
    pub dim: usize,
    pub mode: DenseMode,
    pub hnsw_params: HnswParams,
    pub embed_model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMeta {
    pub params: Bm25Params,
    pub avg_doc_len: f64,
    pub stopwords_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub format_version: u32,
    pub doc_count: usize,
    pub corpus_hash: String,
    pub dense: Option<DenseMeta>,
    pub sparse: Option<SparseMeta>,
}

/// Dense and sparse indexes built from one corpus snapshot.
#[derive(Debug, Clone)]
pub struct IndexBundle {
    pub meta: IndexMeta,
    pub dense: Option<DenseIndex>,
    pub sparse: Option<SparseIndex>,
}

#[derive(Serialize, Deserialize)]
struct PostingLine {
    token: String,
    postings: Vec<(String, u32)>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RetrievalError + '_ {
    move |source| RetrievalError::Io { path: path.display().to_string(), source }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RetrievalError> {
    let bytes = serde_json::to_vec_pretty(value).map_err(|e| RetrievalError::Format(e.to_string()))?;
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, RetrievalError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| RetrievalError::Format(format!("{}: {e}", path.display())))
}

impl IndexBundle {
    pub fn save(&self, dir: &Path) -> Result<(), RetrievalError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_json(&dir.join("meta.json"), &self.meta)?;
        if let Some(d) = &self.dense {
            let p = dir.join("vectors.f32");
            let mut bytes = Vec::with_capacity(d.raw_vectors().len() * 4);
            for v in d.raw_vectors() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            fs::write(&p, bytes).map_err(io_err(&p))?;
            write_json(&dir.join("doc_ids.json"), &d.doc_ids())?;
            if let Some(g) = d.graph() {
                write_json(&dir.join("hnsw.json"), g)?;
            }
        }
        if let Some(s) = &self.sparse {
            let p = dir.join("postings.jsonl");
            let mut w = BufWriter::new(fs::File::create(&p).map_err(io_err(&p))?);
            for (token, list) in s.postings() {
                let line = PostingLine {
                    token: token.clone(),
                    postings: list.iter().map(|&(row, tf)| (s.doc_ids()[row as usize].clone(), tf)).collect(),
                };
                serde_json::to_writer(&mut w, &line).map_err(|e| RetrievalError::Format(e.to_string()))?;
                w.write_all(b"\n").map_err(io_err(&p))?;
            }
            w.flush().map_err(io_err(&p))?;
            let lengths: BTreeMap<&str, u32> =
                s.doc_ids().iter().map(String::as_str).zip(s.doc_lengths().iter().copied()).collect();
            write_json(&dir.join("doc_lengths.json"), &lengths)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, RetrievalError> {
        let meta: IndexMeta = read_json(&dir.join("meta.json"))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(RetrievalError::Format(format!("unsupported index format {}", meta.format_version)));
        }
        let dense = match &meta.dense {
            None => None,
            Some(dm) => {
                let doc_ids: Vec<String> = read_json(&dir.join("doc_ids.json"))?;
                let p = dir.join("vectors.f32");
                let bytes = fs::read(&p).map_err(io_err(&p))?;
                if bytes.len() % 4 != 0 {
                    return Err(RetrievalError::Format("vectors.f32 length is not a multiple of 4".into()));
                }
                let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
                let graph_path = dir.join("hnsw.json");
                let graph: Option<Hnsw> = match dm.mode {
                    DenseMode::ApproxHnsw if graph_path.exists() => Some(read_json(&graph_path)?),
                    _ => None,
                };
                Some(DenseIndex::from_parts(dm.mode, dm.dim, doc_ids, data, dm.hnsw_params, graph)?)
            }
        };
        let sparse = match &meta.sparse {
            None => None,
            Some(sm) => {
                let lengths: BTreeMap<String, u32> = read_json(&dir.join("doc_lengths.json"))?;
                let row_of: BTreeMap<&str, u32> =
                    lengths.keys().enumerate().map(|(i, k)| (k.as_str(), i as u32)).collect();
                let p = dir.join("postings.jsonl");
                let reader = BufReader::new(fs::File::open(&p).map_err(io_err(&p))?);
                let mut postings = BTreeMap::new();
                for (n, line) in reader.lines().enumerate() {
                    let line = line.map_err(io_err(&p))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let pl: PostingLine = serde_json::from_str(&line)
                        .map_err(|e| RetrievalError::Format(format!("postings line {}: {e}", n + 1)))?;
                    let mut list = Vec::with_capacity(pl.postings.len());
                    for (doc, tf) in pl.postings {
                        let row = row_of
                            .get(doc.as_str())
                            .ok_or_else(|| RetrievalError::Format(format!("posting for unknown doc {doc:?}")))?;
                        list.push((*row, tf));
                    }
                    list.sort_unstable();
                    postings.insert(pl.token, list);
                }
                let ids: Vec<String> = lengths.keys().cloned().collect();
                let lens: Vec<u32> = lengths.values().copied().collect();
                Some(SparseIndex::from_parts(sm.params, ids, lens, postings)?)
            }
        };
        Ok(IndexBundle { meta, dense, sparse })
    }
}
