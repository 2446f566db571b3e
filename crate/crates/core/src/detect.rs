//! Sentence segmentation and check-worthy claim detection.

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::BackendError;
use crate::ingest::{SourceDocument, SourceKind};
use crate::llm::{LlmBackend, LlmRequest};
use crate::model::{Claim, ClaimSource};
use crate::util::char_slice;

const DETECTION_PROMPT: &str = include_str!("../data/prompts/detection_v1.txt");
const ASSERTIVE_VERBS: &str = include_str!("../data/lexicons/assertive_verbs_v1.txt");
const NON_CLAIM_OPENERS: &str = include_str!("../data/lexicons/non_claim_openers_v1.txt");

/// Sentences per LLM classification call.
pub const LLM_BATCH: usize = 20;

const ABBREVIATIONS: &[&str] = &[
    "dr.", "mr.", "mrs.", "ms.", "prof.", "e.g.", "i.e.", "fig.", "figs.", "vs.", "approx.", "no.",
    "st.", "jr.", "sr.", "cf.", "ca.", "eq.", "vol.", "inc.", "ltd.", "dept.", "resp.", "ref.",
];

const ANAPHORIC_OPENERS: &[&str] = &["This", "It", "That"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("invalid detection config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    /// Character offsets into the segmented text.
    pub span: (usize, usize),
    pub doc_ref: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMode {
    ZeroShot,
    FewShot,
    RuleBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    pub mode: DetectionMode,
    #[serde(default)]
    pub few_shot_examples: Vec<(String, bool)>,
    pub max_claims: usize,
    pub model_id: String,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            mode: DetectionMode::ZeroShot,
            few_shot_examples: Vec::new(),
            max_claims: 25,
            model_id: "meta/llama-3.1-405b-instruct".into(),
        }
    }
}

impl DetectionConfig {
    pub fn rule_based() -> Self {
        DetectionConfig { mode: DetectionMode::RuleBased, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        if self.max_claims == 0 {
            return Err(DetectError::InvalidConfig("max_claims must be positive".into()));
        }
        let few = self.mode == DetectionMode::FewShot;
        if few == self.few_shot_examples.is_empty() {
            return Err(DetectError::InvalidConfig(
                "few_shot_examples must be non-empty exactly when mode is few_shot".into(),
            ));
        }
        Ok(())
    }
}

fn is_abbreviation(chars: &[char], start: usize, dot: usize) -> bool {
    let mut w0 = dot;
    while w0 > start && !chars[w0 - 1].is_whitespace() {
        w0 -= 1;
    }
    let word: String = chars[w0..=dot]
        .iter()
        .skip_while(|c| matches!(c, '(' | '[' | '"' | '\'' | '“' | '‘'))
        .collect::<String>()
        .to_lowercase();
    if ABBREVIATIONS.contains(&word.as_str()) {
        return true;
    }
    if word == "al." {
        // "et al."
        let mut p = w0;
        while p > start && chars[p - 1].is_whitespace() {
            p -= 1;
        }
        return p >= 2 && chars[p - 2..p].iter().collect::<String>().eq_ignore_ascii_case("et");
    }
    false
}

/// Splits text into sentences on `.`, `!` or `?` followed by whitespace or the
/// end of input, keeping common abbreviations intact. Spans are character
/// offsets; the text between consecutive spans is whitespace only.
pub fn segment(text: &str) -> Vec<Sentence> {
    segment_with_ref(text, "")
}

pub fn segment_with_ref(text: &str, doc_ref: &str) -> Vec<Sentence> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let emit = |s: usize, e: usize, out: &mut Vec<Sentence>| {
        out.push(Sentence {
            text: chars[s..e].iter().collect(),
            span: (s, e),
            doc_ref: doc_ref.to_string(),
        })
    };
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if start.is_none() {
            if !c.is_whitespace() {
                start = Some(i);
            } else {
                i += 1;
                continue;
            }
        }
        let s = start.unwrap();
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < n && matches!(chars[j], '.' | '!' | '?' | '"' | '\'' | '”' | '’' | ')' | ']') {
                j += 1;
            }
            let at_boundary = j == n || chars[j].is_whitespace();
            let abbreviated = c == '.' && j == i + 1 && is_abbreviation(&chars, s, i);
            if at_boundary && !abbreviated {
                emit(s, j, &mut out);
                start = None;
            }
            i = j;
            continue;
        }
        i += 1;
    }
    if let Some(s) = start {
        let mut e = n;
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        emit(s, e, &mut out);
    }
    out
}

fn word_list(raw: &'static str) -> HashSet<&'static str> {
    raw.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect()
}

fn assertive_verbs() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| word_list(ASSERTIVE_VERBS))
}

fn non_claim_openers() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| word_list(NON_CLAIM_OPENERS))
}

fn word_tokens(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Deterministic check-worthiness heuristic: at least three word tokens, at
/// least one assertive verb, and no greeting/imperative opener.
pub fn is_rule_based_claim(sentence: &str) -> bool {
    let tokens = word_tokens(sentence);
    if tokens.len() < 3 {
        return false;
    }
    if non_claim_openers().contains(tokens[0].as_str()) {
        return false;
    }
    tokens.iter().any(|t| assertive_verbs().contains(t.as_str()))
}

/// Prompt pair for one batch of sentences.
pub fn classification_request(batch: &[Sentence], cfg: &DetectionConfig) -> LlmRequest {
    let mut user = String::new();
    if cfg.mode == DetectionMode::FewShot {
        user.push_str("Examples:\n");
        for (s, is_claim) in &cfg.few_shot_examples {
            user.push_str(&format!("\"{s}\" -> {}\n", if *is_claim { "CLAIM" } else { "OTHER" }));
        }
        user.push('\n');
    }
    user.push_str("Sentences:\n");
    for (i, s) in batch.iter().enumerate() {
        user.push_str(&format!("{}. {}\n", i + 1, s.text.replace('\n', " ")));
    }
    LlmRequest {
        model_id: cfg.model_id.clone(),
        system_prompt: DETECTION_PROMPT.trim().to_string(),
        user_prompt: user,
        temperature: 0.0,
        max_tokens: (8 * batch.len() as u32).max(64),
    }
}

/// Per-sentence flags from a `"<n>: CLAIM|OTHER"` response. Missing lines count as OTHER.
pub fn parse_classification(text: &str, batch_len: usize) -> Vec<bool> {
    static NUMBERED: OnceLock<Regex> = OnceLock::new();
    static BARE: OnceLock<Regex> = OnceLock::new();
    let numbered = NUMBERED.get_or_init(|| {
        Regex::new(r"(?im)^\s*\[?(\d+)\]?\s*[:.)\-]\s*\**\s*(CLAIM|OTHER)\b").unwrap()
    });
    let bare = BARE.get_or_init(|| Regex::new(r"(?im)^\s*\**\s*(CLAIM|OTHER)\b").unwrap());

    let mut flags = vec![false; batch_len];
    let mut any = false;
    for cap in numbered.captures_iter(text) {
        any = true;
        if let Ok(idx) = cap[1].parse::<usize>() {
            if (1..=batch_len).contains(&idx) {
                flags[idx - 1] = cap[2].eq_ignore_ascii_case("claim");
            }
        }
    }
    if !any {
        let tokens: Vec<bool> = bare.captures_iter(text).map(|c| c[1].eq_ignore_ascii_case("claim")).collect();
        if tokens.len() == batch_len {
            flags = tokens;
        }
    }
    flags
}

fn starts_anaphoric(s: &str) -> bool {
    ANAPHORIC_OPENERS.iter().any(|w| {
        s.strip_prefix(w)
            .is_some_and(|rest| rest.chars().next().is_none_or(|c| !c.is_alphanumeric()))
    })
}

/// Selects check-worthy claims from a document, in document order.
pub async fn detect_claims(
    doc: &SourceDocument,
    cfg: &DetectionConfig,
    llm: Option<&dyn LlmBackend>,
) -> Result<Vec<Claim>, DetectError> {
    cfg.validate()?;
    let sentences = segment_with_ref(&doc.raw_text, &doc.id);
    if sentences.is_empty() {
        return Ok(Vec::new());
    }

    // runs of (first, last) sentence indices
    let mut picks: Vec<(usize, usize)> = Vec::new();
    match cfg.mode {
        DetectionMode::RuleBased => {
            for (i, s) in sentences.iter().enumerate() {
                if is_rule_based_claim(&s.text) {
                    picks.push((i, i));
                }
            }
        }
        DetectionMode::ZeroShot | DetectionMode::FewShot => {
            let llm = llm.ok_or_else(|| {
                DetectError::Backend(BackendError::Unavailable {
                    backend: "llm".into(),
                    detail: "no LLM backend configured for detection".into(),
                    attempts: 0,
                })
            })?;
            let mut flags = Vec::with_capacity(sentences.len());
            for batch in sentences.chunks(LLM_BATCH) {
                let req = classification_request(batch, cfg);
                let resp = llm.complete(&req).await?;
                flags.extend(parse_classification(&resp.text, batch.len()));
            }
            let mut i = 0;
            while i < sentences.len() {
                if flags[i] {
                    if i + 1 < sentences.len() && flags[i + 1] && starts_anaphoric(&sentences[i + 1].text) {
                        picks.push((i, i + 1));
                        i += 2;
                        continue;
                    }
                    picks.push((i, i));
                }
                i += 1;
            }
        }
    }
    picks.truncate(cfg.max_claims);

    let source = match doc.kind {
        SourceKind::Text => ClaimSource::Direct,
        SourceKind::WebPage => ClaimSource::WebPage,
        SourceKind::Video => ClaimSource::Video,
    };
    Ok(picks
        .into_iter()
        .map(|(a, b)| {
            let (start, end) = (sentences[a].span.0, sentences[b].span.1);
            Claim {
                id: format!("{}:{start}-{end}", doc.id),
                text: char_slice(&doc.raw_text, start, end).to_string(),
                source,
                origin_ref: doc.uri.clone(),
                span: Some((start, end)),
                timestamp: if source == ClaimSource::Video { doc.timestamp_for_span(start, end) } else { None },
            }
        })
        .collect())
}
