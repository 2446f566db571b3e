//! NCBI E-utilities client: `esearch.fcgi` for PMIDs, then `efetch.fcgi`
//! for the abstracts as PubMed XML.

use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Mutex;
use tokio::time::Instant;

use super::CorpusDoc;
use crate::util::backoff;

pub const DEFAULT_EUTILS_BASE: &str = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils";
pub const API_KEY_ENV: &str = "CER_PUBMED_API_KEY";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PubMedError {
    #[error("rate limited by upstream")]
    RateLimited,
    #[error("upstream returned HTTP {0}")]
    UpstreamError(u16),
    #[error("malformed E-utilities XML: {0}")]
    ParseError(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("query must be non-empty and max_docs positive")]
    InvalidRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PubMedConfig {
    pub base_url: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub requests_per_sec: f64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for PubMedConfig {
    fn default() -> Self {
        PubMedConfig {
            base_url: DEFAULT_EUTILS_BASE.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            requests_per_sec: 3.0,
            retries: 2,
            backoff_ms: 500,
            timeout_ms: 15_000,
        }
    }
}

pub struct PubMedClient {
    http: reqwest::Client,
    cfg: PubMedConfig,
    next_slot: Mutex<Option<Instant>>,
}

impl PubMedClient {
    pub fn new(cfg: PubMedConfig) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .expect("static client configuration");
        PubMedClient { http, cfg, next_slot: Mutex::new(None) }
    }

    /// Waits for the next request slot. Holding the lock while sleeping
    /// serializes callers so the configured rate is never exceeded.
    async fn pace(&self) {
        let interval = Duration::from_secs_f64(1.0 / self.cfg.requests_per_sec.max(1e-3));
        let mut slot = self.next_slot.lock().await;
        let now = Instant::now();
        if let Some(at) = *slot {
            if at > now {
                tokio::time::sleep_until(at).await;
            }
        }
        *slot = Some(Instant::now() + interval);
    }

    async fn get(&self, endpoint: &str, params: &[(&str, String)]) -> Result<String, PubMedError> {
        let url = format!("{}/{endpoint}", self.cfg.base_url.trim_end_matches('/'));
        let mut query: Vec<(&str, String)> = params.to_vec();
        if let Some(key) = &self.cfg.api_key {
            query.push(("api_key", key.clone()));
        }
        let mut attempt = 0;
        loop {
            self.pace().await;
            let resp = self
                .http
                .get(&url)
                .query(&query)
                .send()
                .await
                .map_err(|e| PubMedError::Transport(e.to_string()))?;
            let status = resp.status();
            if status.is_success() {
                return resp.text().await.map_err(|e| PubMedError::Transport(e.to_string()));
            }
            if status.as_u16() == 429 {
                return Err(PubMedError::RateLimited);
            }
            if status.is_server_error() && attempt < self.cfg.retries {
                tokio::time::sleep(backoff(Duration::from_millis(self.cfg.backoff_ms), attempt)).await;
                attempt += 1;
                continue;
            }
            return Err(PubMedError::UpstreamError(status.as_u16()));
        }
    }

    pub async fn esearch(&self, query: &str, max_docs: usize) -> Result<Vec<String>, PubMedError> {
        let xml = self
            .get(
                "esearch.fcgi",
                &[
                    ("db", "pubmed".into()),
                    ("term", query.into()),
                    ("retmax", max_docs.to_string()),
                    ("retmode", "xml".into()),
                ],
            )
            .await?;
        parse_esearch(&xml)
    }

    pub async fn efetch(&self, pmids: &[String]) -> Result<Vec<CorpusDoc>, PubMedError> {
        if pmids.is_empty() {
            return Ok(Vec::new());
        }
        let xml = self
            .get(
                "efetch.fcgi",
                &[
                    ("db", "pubmed".into()),
                    ("id", pmids.join(",")),
                    ("rettype", "abstract".into()),
                    ("retmode", "xml".into()),
                ],
            )
            .await?;
        parse_efetch(&xml, Utc::now())
    }

    /// esearch then efetch; returns at most `max_docs` documents with abstracts.
    pub async fn search_fetch(&self, query: &str, max_docs: usize) -> Result<Vec<CorpusDoc>, PubMedError> {
        if query.trim().is_empty() || max_docs == 0 {
            return Err(PubMedError::InvalidRequest);
        }
        let ids = self.esearch(query, max_docs).await?;
        let mut docs = self.efetch(&ids).await?;
        docs.truncate(max_docs);
        Ok(docs)
    }
}

fn parse_doc(xml: &str) -> Result<roxmltree::Document<'_>, PubMedError> {
    let opts = roxmltree::ParsingOptions { allow_dtd: true, ..Default::default() };
    roxmltree::Document::parse_with_options(xml, opts).map_err(|e| PubMedError::ParseError(e.to_string()))
}

fn all_text(node: roxmltree::Node<'_, '_>) -> String {
    let raw: String = node.descendants().filter(|n| n.is_text()).filter_map(|n| n.text()).collect();
    crate::util::collapse_whitespace(&raw)
}

pub fn parse_esearch(xml: &str) -> Result<Vec<String>, PubMedError> {
    let doc = parse_doc(xml)?;
    let root = doc.root_element();
    if root.tag_name().name() != "eSearchResult" {
        return Err(PubMedError::ParseError(format!("unexpected root <{}>", root.tag_name().name())));
    }
    Ok(root
        .children()
        .filter(|n| n.has_tag_name("IdList"))
        .flat_map(|list| list.children().filter(|n| n.has_tag_name("Id")))
        .map(|n| all_text(n))
        .filter(|id| !id.is_empty())
        .collect())
}

/// Parses a `PubmedArticleSet`; articles without an abstract are skipped.
pub fn parse_efetch(xml: &str, fetched_at: DateTime<Utc>) -> Result<Vec<CorpusDoc>, PubMedError> {
    let doc = parse_doc(xml)?;
    let root = doc.root_element();
    if root.tag_name().name() != "PubmedArticleSet" {
        return Err(PubMedError::ParseError(format!("unexpected root <{}>", root.tag_name().name())));
    }
    let mut out = Vec::new();
    for article in root.children().filter(|n| n.has_tag_name("PubmedArticle")) {
        let Some(citation) = article.children().find(|n| n.has_tag_name("MedlineCitation")) else {
            continue;
        };
        let Some(pmid) = citation.children().find(|n| n.has_tag_name("PMID")).map(all_text) else {
            return Err(PubMedError::ParseError("article without PMID".into()));
        };
        let art = citation.children().find(|n| n.has_tag_name("Article"));
        let title = art
            .and_then(|a| a.children().find(|n| n.has_tag_name("ArticleTitle")))
            .map(all_text)
            .unwrap_or_default();
        let abstract_text = art
            .and_then(|a| a.children().find(|n| n.has_tag_name("Abstract")))
            .map(|abs| {
                abs.children()
                    .filter(|n| n.has_tag_name("AbstractText"))
                    .map(all_text)
                    .filter(|t| !t.is_empty())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .unwrap_or_default();
        if abstract_text.is_empty() {
            continue;
        }
        out.push(CorpusDoc { doc_id: pmid, title, abstract_text, fetched_at });
    }
    Ok(out)
}
