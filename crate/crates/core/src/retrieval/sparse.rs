use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::dense::top_k;
use super::RetrievalError;
use crate::corpus::ProcessedDoc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// `ln((N - df + 0.5) / (df + 0.5) + 1)`
pub fn bm25_idf(n: usize, df: usize) -> f64 {
    ((n as f64 - df as f64 + 0.5) / (df as f64 + 0.5) + 1.0).ln()
}

/// Contribution of one query term to one document.
pub fn bm25_term(params: Bm25Params, idf: f64, tf: u32, doc_len: u32, avg_doc_len: f64) -> f64 {
    let tf = tf as f64;
    let norm = if avg_doc_len > 0.0 { doc_len as f64 / avg_doc_len } else { 0.0 };
    idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm))
}

/// Okapi BM25 inverted index. Rows are in ascending `doc_id` order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseIndex {
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_len: f64,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

impl SparseIndex {
    pub fn build(docs: &[ProcessedDoc], params: Bm25Params) -> Result<Self, RetrievalError> {
        let mut order: Vec<&ProcessedDoc> = docs.iter().collect();
        order.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        let mut seen = HashSet::with_capacity(order.len());
        let mut doc_ids = Vec::with_capacity(order.len());
        let mut doc_lengths = Vec::with_capacity(order.len());
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        for (row, d) in order.iter().enumerate() {
            if !seen.insert(d.doc_id.as_str()) {
                return Err(RetrievalError::DuplicateDocId(d.doc_id.clone()));
            }
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in &d.tokens {
                *tf.entry(t.as_str()).or_default() += 1;
            }
            for (t, c) in tf {
                postings.entry(t.to_string()).or_default().push((row as u32, c));
            }
            doc_ids.push(d.doc_id.clone());
            doc_lengths.push(d.tokens.len() as u32);
        }
        Self::from_parts(params, doc_ids, doc_lengths, postings)
    }

    pub(crate) fn from_parts(
        params: Bm25Params,
        doc_ids: Vec<String>,
        doc_lengths: Vec<u32>,
        postings: BTreeMap<String, Vec<(u32, u32)>>,
    ) -> Result<Self, RetrievalError> {
        let n = doc_ids.len();
        if doc_lengths.len() != n {
            return Err(RetrievalError::Format("doc_lengths and doc_ids differ in length".into()));
        }
        let mut sums = vec![0u64; n];
        for list in postings.values() {
            for &(row, tf) in list {
                let slot = sums
                    .get_mut(row as usize)
                    .ok_or_else(|| RetrievalError::Format(format!("posting row {row} out of range")))?;
                *slot += tf as u64;
            }
        }
        if sums.iter().zip(&doc_lengths).any(|(s, &l)| *s != l as u64) {
            return Err(RetrievalError::Format("doc lengths disagree with postings".into()));
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_len = if n == 0 { 0.0 } else { total as f64 / n as f64 };
        Ok(SparseIndex { params, doc_ids, doc_lengths, avg_doc_len, postings })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn postings(&self) -> &BTreeMap<String, Vec<(u32, u32)>> {
        &self.postings
    }

    /// BM25 top-k. Repeated query tokens count once; unmatched docs are
    /// omitted.
    pub fn search(&self, query_tokens: &[String], k: usize) -> Result<Vec<(String, f64)>, RetrievalError> {
        if self.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let n = self.len();
        let mut scores = vec![0f64; n];
        let mut touched = vec![false; n];
        let unique: BTreeSet<&str> = query_tokens.iter().map(String::as_str).collect();
        for t in unique {
            let Some(list) = self.postings.get(t) else { continue };
            let idf = bm25_idf(n, list.len());
            for &(row, tf) in list {
                let r = row as usize;
                scores[r] += bm25_term(self.params, idf, tf, self.doc_lengths[r], self.avg_doc_len);
                touched[r] = true;
            }
        }
        let scored: Vec<(usize, f64)> = scores
            .into_iter()
            .enumerate()
            .filter(|&(i, s)| touched[i] && s > 0.0)
            .collect();
        Ok(top_k(scored, k)
            .into_iter()
            .map(|(i, s)| (self.doc_ids[i].clone(), s))
            .collect())
    }
}
