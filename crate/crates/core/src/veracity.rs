//! Final verdict from claim text plus justification.
//!
//! The classifier sees only `claim [SEP] justification`; the reasoning
//! model's preliminary judgment never reaches it.

use std::collections::{BTreeMap, HashMap};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::error::BackendError;
use crate::llm::{post_json_with_retry, HttpOptions};
use crate::model::{Claim, ClaimAssessment, EvidencePassage, Justification, VerdictLabel};
use crate::retrieval::{strip_separator, DEFAULT_SEPARATOR};
use crate::util::sha256_hex;

pub const TERNARY: [VerdictLabel; 3] = [VerdictLabel::True, VerdictLabel::False, VerdictLabel::Nei];
pub const BINARY: [VerdictLabel; 2] = [VerdictLabel::True, VerdictLabel::False];
pub const PROB_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VeracityError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("label space mismatch: expected {expected} scores, got {got}")]
    LabelSpaceMismatch { expected: usize, got: usize },
    #[error("classifier returned invalid scores: {0}")]
    InvalidScores(String),
    #[error("invalid classifier config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierInput {
    pub text: String,
}

impl ClassifierInput {
    /// `claim [SEP] justification`, or the claim alone when the
    /// justification is empty.
    pub fn new(claim_text: &str, justification_text: &str, sep: &str) -> Self {
        let claim = strip_separator(claim_text.trim(), sep);
        let just = strip_separator(justification_text.trim(), sep);
        let text = if just.is_empty() { claim } else { format!("{claim} {sep} {just}") };
        ClassifierInput { text }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutput {
    pub probs: BTreeMap<VerdictLabel, f64>,
    pub label: VerdictLabel,
}

impl ClassifierOutput {
    /// Renormalizes raw non-negative scores aligned with `label_space` and
    /// takes the argmax, ties resolved True > False > Nei.
    pub fn from_scores(label_space: &[VerdictLabel], scores: &[f64]) -> Result<Self, VeracityError> {
        if scores.len() != label_space.len() {
            return Err(VeracityError::LabelSpaceMismatch { expected: label_space.len(), got: scores.len() });
        }
        if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(VeracityError::InvalidScores(format!("{scores:?}")));
        }
        let total: f64 = scores.iter().sum();
        if total <= 0.0 {
            return Err(VeracityError::InvalidScores("scores sum to zero".into()));
        }
        let probs: BTreeMap<VerdictLabel, f64> =
            label_space.iter().zip(scores).map(|(l, s)| (*l, s / total)).collect();
        let mut best: Option<(VerdictLabel, f64)> = None;
        // BTreeMap iterates in True, False, Nei order; strict > keeps the earlier label on ties
        for (&l, &p) in &probs {
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((l, p));
            }
        }
        let (label, _) = best.expect("label space is non-empty");
        Ok(ClassifierOutput { probs, label })
    }

    pub fn confidence(&self) -> f64 {
        self.probs[&self.label]
    }

    pub fn check_invariants(&self) -> bool {
        let sum: f64 = self.probs.values().sum();
        (sum - 1.0).abs() <= PROB_TOLERANCE
            && self.probs.values().all(|p| (0.0..=1.0).contains(p))
            && self.probs.iter().all(|(l, p)| *p < self.probs[&self.label] || (*p == self.probs[&self.label] && *l >= self.label))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    ZeroShotNli,
    FinetunedEndpoint,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierBackendSpec {
    pub kind: ClassifierKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_label_space")]
    pub label_space: Vec<VerdictLabel>,
    #[serde(default)]
    pub model_id: Option<String>,
    /// Seed for the mock backend.
    #[serde(default)]
    pub seed: u64,
}

fn default_label_space() -> Vec<VerdictLabel> {
    TERNARY.to_vec()
}

impl Default for ClassifierBackendSpec {
    fn default() -> Self {
        ClassifierBackendSpec {
            kind: ClassifierKind::Mock,
            endpoint: None,
            label_space: default_label_space(),
            model_id: None,
            seed: 0,
        }
    }
}

impl ClassifierBackendSpec {
    pub fn validate(&self) -> Result<(), VeracityError> {
        if self.label_space != TERNARY && self.label_space != BINARY {
            return Err(VeracityError::InvalidConfig(
                "label_space must be [true, false, nei] or [true, false]".into(),
            ));
        }
        if self.kind != ClassifierKind::Mock && self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
            return Err(VeracityError::InvalidConfig(format!("{:?} classifier needs an endpoint", self.kind)));
        }
        Ok(())
    }

    pub fn with_label_space(&self, label_space: &[VerdictLabel]) -> Self {
        ClassifierBackendSpec { label_space: label_space.to_vec(), ..self.clone() }
    }
}

/// Scores texts over a label space. Output rows align with `label_space`.
#[async_trait]
pub trait ClassifierBackend: Send + Sync {
    async fn score(&self, texts: &[String], label_space: &[VerdictLabel]) -> Result<Vec<Vec<f64>>, VeracityError>;

    fn model_id(&self) -> &str;
}

/// Seeded deterministic scores keyed by input hash. Overrides pin the
/// distribution for inputs whose claim part equals a registered text.
#[derive(Debug, Clone, Default)]
pub struct MockClassifier {
    seed: u64,
    overrides: HashMap<String, BTreeMap<VerdictLabel, f64>>,
}

impl MockClassifier {
    pub fn new(seed: u64) -> Self {
        MockClassifier { seed, overrides: HashMap::new() }
    }

    pub fn with_override(mut self, claim_text: impl Into<String>, probs: BTreeMap<VerdictLabel, f64>) -> Self {
        self.overrides.insert(claim_text.into(), probs);
        self
    }

    /// Forces `label` with probability `p`, the rest spread evenly.
    pub fn force(self, claim_text: impl Into<String>, label: VerdictLabel, p: f64) -> Self {
        let rest = (1.0 - p) / 2.0;
        let probs = TERNARY.iter().map(|&l| (l, if l == label { p } else { rest })).collect();
        self.with_override(claim_text, probs)
    }

    fn lookup(&self, text: &str) -> Option<&BTreeMap<VerdictLabel, f64>> {
        if let Some(p) = self.overrides.get(text) {
            return Some(p);
        }
        let claim_part = text.split_once(&format!(" {DEFAULT_SEPARATOR} ")).map(|(c, _)| c)?;
        self.overrides.get(claim_part)
    }

    fn scores_for(&self, text: &str, label_space: &[VerdictLabel]) -> Vec<f64> {
        if let Some(p) = self.lookup(text) {
            let row: Vec<f64> = label_space.iter().map(|l| p.get(l).copied().unwrap_or(0.0)).collect();
            if row.iter().sum::<f64>() > 0.0 {
                return row;
            }
        }
        let h = sha256_hex(format!("{}\u{0}{text}", self.seed).as_bytes());
        let bytes = hex::decode(&h).expect("valid hex");
        label_space.iter().enumerate().map(|(i, _)| 1.0 + bytes[i] as f64).collect()
    }
}

#[async_trait]
impl ClassifierBackend for MockClassifier {
    async fn score(&self, texts: &[String], label_space: &[VerdictLabel]) -> Result<Vec<Vec<f64>>, VeracityError> {
        Ok(texts.iter().map(|t| self.scores_for(t, label_space)).collect())
    }

    fn model_id(&self) -> &str {
        "mock-classifier"
    }
}

/// NLI hypothesis used for a label in zero-shot mode.
pub fn nli_hypothesis(label: VerdictLabel) -> &'static str {
    match label {
        VerdictLabel::True => "This claim is true given the evidence.",
        VerdictLabel::False => "This claim is false given the evidence.",
        VerdictLabel::Nei => "This claim is unverifiable given the evidence.",
    }
}

/// `POST {endpoint}` with `{texts, label_space}` returning `{probs}`.
/// Zero-shot mode sends NLI hypotheses in place of label names.
pub struct HttpClassifier {
    client: reqwest::Client,
    endpoint: String,
    kind: ClassifierKind,
    model_id: String,
    opts: HttpOptions,
}

impl HttpClassifier {
    pub fn new(spec: &ClassifierBackendSpec, opts: HttpOptions) -> Result<Self, VeracityError> {
        spec.validate()?;
        let endpoint = spec
            .endpoint
            .clone()
            .ok_or_else(|| VeracityError::InvalidConfig("endpoint required".into()))?;
        Ok(HttpClassifier {
            client: reqwest::Client::new(),
            endpoint,
            kind: spec.kind,
            model_id: spec.model_id.clone().unwrap_or_else(|| format!("{:?}", spec.kind).to_lowercase()),
            opts,
        })
    }
}

#[derive(Deserialize)]
struct ScoreResponse {
    probs: Vec<Vec<f64>>,
}

#[async_trait]
impl ClassifierBackend for HttpClassifier {
    async fn score(&self, texts: &[String], label_space: &[VerdictLabel]) -> Result<Vec<Vec<f64>>, VeracityError> {
        let labels: Vec<&str> = match self.kind {
            ClassifierKind::ZeroShotNli => label_space.iter().map(|l| nli_hypothesis(*l)).collect(),
            _ => label_space.iter().map(|l| l.as_str()).collect(),
        };
        let body = json!({"texts": texts, "label_space": labels});
        let v = post_json_with_retry(&self.client, "classifier", &self.endpoint, None, &body, &self.opts).await?;
        let resp: ScoreResponse = serde_json::from_value(v).map_err(|e| BackendError::InvalidResponse {
            backend: "classifier".into(),
            detail: e.to_string(),
        })?;
        if resp.probs.len() != texts.len() {
            return Err(VeracityError::LabelSpaceMismatch { expected: texts.len(), got: resp.probs.len() });
        }
        Ok(resp.probs)
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

pub async fn classify(
    input: &ClassifierInput,
    label_space: &[VerdictLabel],
    backend: &dyn ClassifierBackend,
) -> Result<ClassifierOutput, VeracityError> {
    let mut rows = backend.score(std::slice::from_ref(&input.text), label_space).await?;
    let row = rows.pop().ok_or(VeracityError::LabelSpaceMismatch { expected: 1, got: 0 })?;
    ClassifierOutput::from_scores(label_space, &row)
}

/// Builds the assessment. `justification = None` means reasoning failed and
/// the verdict is computed from the claim alone (`degraded`).
pub async fn assess(
    claim: &Claim,
    evidence: Vec<EvidencePassage>,
    justification: Option<Justification>,
    spec: &ClassifierBackendSpec,
    backend: &dyn ClassifierBackend,
    fingerprint: &str,
    separator: &str,
) -> Result<ClaimAssessment, VeracityError> {
    let degraded = justification.is_none();
    let justification = justification.unwrap_or_else(|| Justification::absent(""));
    let input = ClassifierInput::new(&claim.text, &justification.text, separator);
    let out = classify(&input, &spec.label_space, backend).await?;
    Ok(ClaimAssessment {
        claim: claim.clone(),
        label: out.label,
        confidence: out.confidence(),
        evidence,
        justification,
        config_fingerprint: fingerprint.to_string(),
        degraded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Judgment;

    fn out(scores: &[f64]) -> ClassifierOutput {
        ClassifierOutput::from_scores(&TERNARY, scores).unwrap()
    }

    #[test]
    fn argmax_and_ties() {
        assert_eq!(out(&[0.2, 0.5, 0.3]).label, VerdictLabel::False);
        assert_eq!(out(&[0.5, 0.5, 0.0]).label, VerdictLabel::True);
        assert_eq!(out(&[0.0, 0.5, 0.5]).label, VerdictLabel::False);
        assert_eq!(out(&[1.0, 1.0, 1.0]).label, VerdictLabel::True);
        assert!(out(&[2.0, 6.0, 2.0]).check_invariants());
        assert!((out(&[2.0, 6.0, 2.0]).confidence() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn bad_scores_rejected() {
        assert!(matches!(ClassifierOutput::from_scores(&TERNARY, &[f64::NAN, 1.0, 1.0]), Err(VeracityError::InvalidScores(_))));
        assert!(matches!(ClassifierOutput::from_scores(&TERNARY, &[1.0, 1.0]), Err(VeracityError::LabelSpaceMismatch { .. })));
        assert!(ClassifierOutput::from_scores(&TERNARY, &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn input_separator_rules() {
        assert_eq!(ClassifierInput::new("C", "J", "[SEP]").text, "C [SEP] J");
        assert_eq!(ClassifierInput::new("C", "", "[SEP]").text, "C");
        assert_eq!(ClassifierInput::new("C [SEP] x", "J [SEP] y", "[SEP]").text.matches("[SEP]").count(), 1);
    }

    #[tokio::test]
    async fn mock_is_deterministic() {
        let m = MockClassifier::new(3);
        let i = ClassifierInput::new("Aspirin reduces fever.", "Because [1].", "[SEP]");
        let a = classify(&i, &TERNARY, &m).await.unwrap();
        assert_eq!(a, classify(&i, &TERNARY, &m).await.unwrap());
        assert!(a.check_invariants());
    }

    fn claim(text: &str) -> Claim {
        Claim::direct(text).unwrap()
    }

    #[tokio::test]
    async fn forced_nei_passthrough() {
        let m = MockClassifier::new(0).force("Vitamin C cures colds.", VerdictLabel::Nei, 0.7);
        let spec = ClassifierBackendSpec::default();
        let j = Justification {
            text: "Mixed evidence.".into(),
            preliminary_judgment: Some(Judgment::False),
            model_id: "m".into(),
            raw_response: String::new(),
        };
        let a = assess(&claim("Vitamin C cures colds."), vec![], Some(j), &spec, &m, "fp", "[SEP]").await.unwrap();
        assert_eq!(a.label, VerdictLabel::Nei);
        assert!((a.confidence - 0.7).abs() < 1e-12);
        assert!(!a.degraded);
        assert_eq!(a.config_fingerprint, "fp");
    }

    #[tokio::test]
    async fn degraded_without_justification() {
        let m = MockClassifier::new(0);
        let spec = ClassifierBackendSpec::default();
        let a = assess(&claim("Coffee causes cancer."), vec![], None, &spec, &m, "fp", "[SEP]").await.unwrap();
        assert!(a.degraded);
        assert!(a.justification.text.is_empty());
    }

    #[tokio::test]
    async fn binary_space_never_yields_nei() {
        let spec = ClassifierBackendSpec::default().with_label_space(&BINARY);
        for seed in 0..50 {
            let m = MockClassifier::new(seed).force("x y z", VerdictLabel::Nei, 0.9);
            let a = assess(&claim(&format!("claim number {seed}")), vec![], None, &spec, &m, "", "[SEP]")
                .await
                .unwrap();
            assert_ne!(a.label, VerdictLabel::Nei);
            let forced = assess(&claim("x y z"), vec![], None, &spec, &m, "", "[SEP]").await.unwrap();
            assert_ne!(forced.label, VerdictLabel::Nei);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(ClassifierBackendSpec::default().validate().is_ok());
        let s = ClassifierBackendSpec { kind: ClassifierKind::ZeroShotNli, ..Default::default() };
        assert!(s.validate().is_err());
        let s = ClassifierBackendSpec { label_space: vec![VerdictLabel::Nei], ..Default::default() };
        assert!(s.validate().is_err());
    }
}
