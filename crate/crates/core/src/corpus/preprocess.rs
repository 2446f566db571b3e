use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

const STOPWORDS: &str = include_str!("../../data/lexicons/stopwords_en_v1.txt");
pub const STOPWORDS_VERSION: &str = "en_v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Processed {
    pub tokens: Vec<String>,
    pub norm_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessedDoc {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub norm_text: String,
}

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

/// NFKC → lowercase → split on non-alphanumerics → drop stopwords → drop
/// tokens shorter than 2 bytes of UTF-8.
pub fn preprocess(text: &str) -> Processed {
    let lowered = text.nfkc().collect::<String>().to_lowercase();
    // lowercasing can leave a few compatibility forms behind
    let norm_text: String = lowered.nfkc().collect();
    let tokens = norm_text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.len() >= 2 && !is_stopword(t))
        .map(String::from)
        .collect();
    Processed { tokens, norm_text }
}

impl ProcessedDoc {
    pub fn new(doc_id: impl Into<String>, text: &str) -> Self {
        let p = preprocess(text);
        ProcessedDoc { doc_id: doc_id.into(), tokens: p.tokens, norm_text: p.norm_text }
    }
}
