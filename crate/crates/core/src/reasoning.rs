//! Structured verification prompt, LLM call and judgment/justification parse.

use std::sync::OnceLock;
use std::time::Instant;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::BackendError;
use crate::llm::{LlmBackend, LlmRequest};
use crate::model::{Claim, EvidencePassage, Judgment, Justification};

const ROLE_TEXT: &str = include_str!("../data/prompts/role_v1.txt");
pub const DEFAULT_REASONING_MODEL: &str = "meta-llama/Meta-Llama-3.1-405B-Instruct";
pub const REPAIR_INSTRUCTION: &str = "Respond only in the required format.";
pub const MAX_ATTEMPTS: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReasoningError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("unparseable response after {attempts} attempt(s)")]
    UnparseableResponse { attempts: u32, raw: String },
    #[error("invalid prompt config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub include_role: bool,
    pub include_evidence: bool,
    pub require_justification: bool,
    pub role_text: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model_id: String,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            include_role: true,
            include_evidence: true,
            require_justification: true,
            role_text: ROLE_TEXT.trim().to_string(),
            temperature: 0.0,
            max_tokens: 512,
            model_id: DEFAULT_REASONING_MODEL.into(),
        }
    }
}

impl PromptConfig {
    pub fn validate(&self) -> Result<(), ReasoningError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ReasoningError::InvalidConfig("temperature must be in [0, 2]".into()));
        }
        if self.max_tokens < 64 {
            return Err(ReasoningError::InvalidConfig("max_tokens must be at least 64".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(ReasoningError::InvalidConfig("model_id is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningResult {
    pub justification: Justification,
    pub prompt_text: String,
    pub latency_ms: u64,
    pub attempts: u32,
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn evidence_line(i: usize, e: &EvidencePassage) -> String {
    let title = one_line(e.title.trim_end_matches('.'));
    let text = one_line(&e.text);
    if title.is_empty() {
        format!("[{i}] {text}")
    } else {
        format!("[{i}] {title}. {text}")
    }
}

/// Role paragraph (system part) and the remaining sections (user part).
fn prompt_parts(claim: &Claim, evidence: &[EvidencePassage], cfg: &PromptConfig) -> (String, String) {
    let role = if cfg.include_role { cfg.role_text.trim().to_string() } else { String::new() };
    let mut body = String::new();
    if cfg.include_evidence && !evidence.is_empty() {
        body.push_str("Scientific evidence:");
        for (i, e) in evidence.iter().enumerate() {
            body.push('\n');
            body.push_str(&evidence_line(i + 1, e));
        }
        body.push_str("\n\n");
    }
    body.push_str(&format!("Claim: {}\n\n", one_line(&claim.text)));
    if cfg.require_justification {
        body.push_str(
            "Decide whether the claim is true or false. Answer in exactly this format:\n\
             JUDGMENT: true or false\n\
             JUSTIFICATION: a detailed explanation that cites the evidence by its number",
        );
    } else {
        body.push_str(
            "Decide whether the claim is true or false. Answer in exactly this format:\n\
             JUDGMENT: true or false",
        );
    }
    (role, body)
}

pub fn build_prompt(claim: &Claim, evidence: &[EvidencePassage], cfg: &PromptConfig) -> String {
    request_for(claim, evidence, cfg).prompt_text()
}

fn request_for(claim: &Claim, evidence: &[EvidencePassage], cfg: &PromptConfig) -> LlmRequest {
    let (system_prompt, user_prompt) = prompt_parts(claim, evidence, cfg);
    LlmRequest {
        model_id: cfg.model_id.clone(),
        system_prompt,
        user_prompt,
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
    }
}

/// Extracts `JUDGMENT:` and `JUSTIFICATION:` (case-insensitive, line-anchored,
/// fences and emphasis markers tolerated).
pub fn parse_response(text: &str) -> Result<(Judgment, String), ReasoningError> {
    static JUDGMENT: OnceLock<Regex> = OnceLock::new();
    static JUSTIFICATION: OnceLock<Regex> = OnceLock::new();
    let judgment_re = JUDGMENT
        .get_or_init(|| Regex::new(r"(?im)^[\s>*_#]*judge?ment[\s*_]*:[\s*_]*([a-z]+)").unwrap());
    let justification_re =
        JUSTIFICATION.get_or_init(|| Regex::new(r"(?im)^[\s>*_#]*justification[\s*_]*:[\s*_]*").unwrap());

    let cleaned: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n");
    let unparseable = || ReasoningError::UnparseableResponse { attempts: 1, raw: text.to_string() };

    let cap = judgment_re.captures(&cleaned).ok_or_else(unparseable)?;
    let judgment = match cap[1].to_ascii_lowercase().as_str() {
        "true" => Judgment::True,
        "false" => Judgment::False,
        _ => return Err(unparseable()),
    };
    let justification = match justification_re.find(&cleaned) {
        None => String::new(),
        Some(m) => {
            let rest = &cleaned[m.end()..];
            let end = judgment_re.find(rest).map(|j| j.start()).unwrap_or(rest.len());
            rest[..end].trim().to_string()
        }
    };
    Ok((judgment, justification))
}

/// Prompts the backend and parses the answer, with one format-repair retry.
pub async fn reason(
    claim: &Claim,
    evidence: &[EvidencePassage],
    cfg: &PromptConfig,
    llm: &dyn LlmBackend,
) -> Result<ReasoningResult, ReasoningError> {
    cfg.validate()?;
    let start = Instant::now();
    let base = request_for(claim, evidence, cfg);
    let prompt_text = base.prompt_text();
    let mut last_raw = String::new();
    for attempt in 1..=MAX_ATTEMPTS {
        let req = if attempt == 1 {
            base.clone()
        } else {
            LlmRequest { user_prompt: format!("{}\n\n{REPAIR_INSTRUCTION}", base.user_prompt), ..base.clone() }
        };
        let resp = llm.complete(&req).await?;
        match parse_response(&resp.text) {
            Ok((judgment, text)) => {
                return Ok(ReasoningResult {
                    justification: Justification {
                        text,
                        preliminary_judgment: Some(judgment),
                        model_id: cfg.model_id.clone(),
                        raw_response: resp.text,
                    },
                    prompt_text,
                    latency_ms: start.elapsed().as_millis() as u64,
                    attempts: attempt,
                });
            }
            Err(_) => last_raw = resp.text,
        }
    }
    Err(ReasoningError::UnparseableResponse { attempts: MAX_ATTEMPTS, raw: last_raw })
}
