use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::embed::{dot_f64, EmbeddingVector};
use super::hnsw::{Hnsw, HnswParams};
use super::RetrievalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DenseMode {
    #[default]
    ExactFlat,
    ApproxHnsw,
}

/// Vectors stored row-major in ascending `doc_id` order, so row index order
/// doubles as the tie-break order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    mode: DenseMode,
    dim: usize,
    doc_ids: Vec<String>,
    data: Vec<f32>,
    hnsw: Option<Hnsw>,
}

/// Sort by descending score, then ascending row (= ascending doc_id).
pub(crate) fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Top `k` of `scored` in rank order.
pub(crate) fn top_k(mut scored: Vec<(usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    if scored.len() > k && k > 0 {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_by(rank_order);
    scored.truncate(k);
    scored
}

impl DenseIndex {
    pub fn build(
        entries: Vec<(String, EmbeddingVector)>,
        mode: DenseMode,
        params: HnswParams,
    ) -> Result<Self, RetrievalError> {
        let mut entries = entries;
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let dim = entries.first().map(|e| e.1.dim()).unwrap_or(0);
        let mut seen = HashSet::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len() * dim);
        let mut doc_ids = Vec::with_capacity(entries.len());
        for (id, v) in entries {
            if v.dim() != dim {
                return Err(RetrievalError::DimensionMismatch { expected: dim, got: v.dim() });
            }
            if !seen.insert(id.clone()) {
                return Err(RetrievalError::DuplicateDocId(id));
            }
            data.extend_from_slice(v.as_slice());
            doc_ids.push(id);
        }
        Self::from_parts(mode, dim, doc_ids, data, params, None)
    }

    /// Assembles an index from persisted parts; rebuilds the graph when
    /// `hnsw` is absent or inconsistent with the vectors.
    pub(crate) fn from_parts(
        mode: DenseMode,
        dim: usize,
        doc_ids: Vec<String>,
        data: Vec<f32>,
        params: HnswParams,
        hnsw: Option<Hnsw>,
    ) -> Result<Self, RetrievalError> {
        if data.len() != doc_ids.len() * dim {
            return Err(RetrievalError::Format(format!(
                "{} floats for {} docs of dim {dim}",
                data.len(),
                doc_ids.len()
            )));
        }
        if doc_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RetrievalError::Format("doc ids must be unique and sorted".into()));
        }
        let hnsw = match mode {
            DenseMode::ExactFlat => None,
            DenseMode::ApproxHnsw => Some(match hnsw {
                Some(g) if g.params == params && g.is_consistent(doc_ids.len()) => g,
                _ => Hnsw::build(&data, dim, params),
            }),
        };
        Ok(DenseIndex { mode, dim, doc_ids, data, hnsw })
    }

    pub fn mode(&self) -> DenseMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub(crate) fn raw_vectors(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn graph(&self) -> Option<&Hnsw> {
        self.hnsw.as_ref()
    }

    pub fn hnsw_params(&self) -> Option<HnswParams> {
        self.hnsw.as_ref().map(|g| g.params)
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn check_query(&self, query: &EmbeddingVector) -> Result<(), RetrievalError> {
        if self.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        if query.dim() != self.dim {
            return Err(RetrievalError::DimensionMismatch { expected: self.dim, got: query.dim() });
        }
        Ok(())
    }

    fn materialize(&self, hits: Vec<(usize, f64)>) -> Vec<(String, f64)> {
        hits.into_iter().map(|(i, s)| (self.doc_ids[i].clone(), s)).collect()
    }

    /// Brute-force cosine top-k regardless of mode.
    pub fn search_exact(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<(String, f64)>, RetrievalError> {
        self.check_query(query)?;
        let q = query.as_slice();
        let scored: Vec<(usize, f64)> = (0..self.len()).map(|i| (i, dot_f64(self.row(i), q))).collect();
        Ok(self.materialize(top_k(scored, k)))
    }

    /// Top-k by cosine; approximate when the index carries a graph.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<(String, f64)>, RetrievalError> {
        let Some(g) = &self.hnsw else {
            return self.search_exact(query, k);
        };
        self.check_query(query)?;
        let q = query.as_slice();
        let ids = g.search(&self.data, self.dim, q, k, g.params.ef_search);
        let scored = ids.into_iter().map(|i| (i as usize, dot_f64(self.row(i as usize), q))).collect();
        Ok(self.materialize(top_k(scored, k)))
    }
}
