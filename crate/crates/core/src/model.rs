//! Domain types shared by every stage of the verification pipeline.
//!
//! Every type serializes to a flat JSON object whose field names are the
//! canonical wire names used by the service, the trace files and the CLI.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown label: {0:?}")]
    UnknownLabel(String),
    #[error("claim text is empty")]
    EmptyClaim,
    #[error("span {start}..{end} is not a valid range of the source text ({len} chars)")]
    InvalidSpan { start: usize, end: usize, len: usize },
    #[error("timestamps are only allowed on video claims")]
    TimestampOnNonVideo,
    #[error("invalid timestamp {0}..{1}")]
    InvalidTimestamp(f64, f64),
}

/// Final three-way verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictLabel {
    True,
    False,
    Nei,
}

/// Dataset label vocabularies normalized onto [`VerdictLabel`].
///
/// Covers the plain labels, the SciFact `SUPPORT`/`CONTRADICT`/`NEI` family,
/// FEVER-style `SUPPORTS`/`REFUTES`/`NOT ENOUGH INFO` and BioASQ `yes`/`no`.
pub const LABEL_VOCABULARY: &[(&str, VerdictLabel)] = &[
    ("true", VerdictLabel::True),
    ("supports", VerdictLabel::True),
    ("support", VerdictLabel::True),
    ("supported", VerdictLabel::True),
    ("yes", VerdictLabel::True),
    ("false", VerdictLabel::False),
    ("refutes", VerdictLabel::False),
    ("refute", VerdictLabel::False),
    ("refuted", VerdictLabel::False),
    ("contradict", VerdictLabel::False),
    ("contradicts", VerdictLabel::False),
    ("contradicted", VerdictLabel::False),
    ("contradiction", VerdictLabel::False),
    ("no", VerdictLabel::False),
    ("nei", VerdictLabel::Nei),
    ("not enough info", VerdictLabel::Nei),
    ("not enough information", VerdictLabel::Nei),
    ("not_enough_info", VerdictLabel::Nei),
    ("notenoughinfo", VerdictLabel::Nei),
];

impl VerdictLabel {
    pub const ALL: [VerdictLabel; 3] = [VerdictLabel::True, VerdictLabel::False, VerdictLabel::Nei];

    /// Case-insensitive parse through [`LABEL_VOCABULARY`].
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        let norm = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        LABEL_VOCABULARY
            .iter()
            .find(|(k, _)| *k == norm)
            .map(|(_, l)| *l)
            .ok_or_else(|| ModelError::UnknownLabel(s.to_string()))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VerdictLabel::True => "true",
            VerdictLabel::False => "false",
            VerdictLabel::Nei => "nei",
        }
    }
}

impl fmt::Display for VerdictLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VerdictLabel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

/// Binary judgment emitted by the reasoning model. Advisory only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Judgment {
    True,
    False,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimSource {
    Direct,
    WebPage,
    Video,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub text: String,
    pub source: ClaimSource,
    #[serde(default)]
    pub origin_ref: Option<String>,
    /// Character offsets `(start, end)` into the source text.
    #[serde(default)]
    pub span: Option<(usize, usize)>,
    /// `(start_sec, end_sec)` of the covering transcript segment(s).
    #[serde(default)]
    pub timestamp: Option<(f64, f64)>,
}

impl Claim {
    /// A claim entered directly by a user; the id is derived from the text.
    pub fn direct(text: impl Into<String>) -> Result<Self, ModelError> {
        let text = text.into();
        let id = format!("claim-{}", &crate::util::sha256_hex(text.trim().as_bytes())[..16]);
        let claim = Claim {
            id,
            text,
            source: ClaimSource::Direct,
            origin_ref: None,
            span: None,
            timestamp: None,
        };
        claim.validate(None)?;
        Ok(claim)
    }

    /// Checks the invariants; `source_text` enables the span check.
    pub fn validate(&self, source_text: Option<&str>) -> Result<(), ModelError> {
        if self.text.trim().is_empty() {
            return Err(ModelError::EmptyClaim);
        }
        if let Some((start, end)) = self.span {
            if let Some(src) = source_text {
                let len = src.chars().count();
                if start > end || end > len {
                    return Err(ModelError::InvalidSpan { start, end, len });
                }
            } else if start > end {
                return Err(ModelError::InvalidSpan { start, end, len: 0 });
            }
        }
        if let Some((s, e)) = self.timestamp {
            if self.source != ClaimSource::Video {
                return Err(ModelError::TimestampOnNonVideo);
            }
            if !(s.is_finite() && e.is_finite() && s >= 0.0 && e >= s) {
                return Err(ModelError::InvalidTimestamp(s, e));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Retriever {
    Dense,
    Sparse,
}

impl FromStr for Retriever {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dense" => Ok(Retriever::Dense),
            "sparse" => Ok(Retriever::Sparse),
            other => Err(format!("unknown retriever {other:?} (expected dense|sparse)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidencePassage {
    pub doc_id: String,
    pub title: String,
    pub text: String,
    pub score: f64,
    pub retriever: Retriever,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Justification {
    pub text: String,
    #[serde(default)]
    pub preliminary_judgment: Option<Judgment>,
    pub model_id: String,
    #[serde(default)]
    pub raw_response: String,
}

impl Justification {
    /// Placeholder used when reasoning failed and the verdict is degraded.
    pub fn absent(model_id: impl Into<String>) -> Self {
        Justification {
            text: String::new(),
            preliminary_judgment: None,
            model_id: model_id.into(),
            raw_response: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimAssessment {
    pub claim: Claim,
    pub label: VerdictLabel,
    pub confidence: f64,
    pub evidence: Vec<EvidencePassage>,
    pub justification: Justification,
    pub config_fingerprint: String,
    /// Set when the verdict was produced without a justification.
    #[serde(default)]
    pub degraded: bool,
}

/// Upper bound on evidence passages attached to an assessment.
pub const MAX_EVIDENCE: usize = 3;

impl ClaimAssessment {
    pub fn check_invariants(&self) -> bool {
        (0.0..=1.0).contains(&self.confidence) && self.evidence.len() <= MAX_EVIDENCE
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_is_case_insensitive() {
        assert_eq!(VerdictLabel::parse("TRUE").unwrap(), VerdictLabel::True);
        assert_eq!(VerdictLabel::parse(" Nei ").unwrap(), VerdictLabel::Nei);
        assert_eq!(VerdictLabel::parse("Not Enough  Info").unwrap(), VerdictLabel::Nei);
    }

    #[test]
    fn dataset_vocabularies_map_onto_three_labels() {
        assert_eq!(VerdictLabel::parse("supports").unwrap(), VerdictLabel::True);
        assert_eq!(VerdictLabel::parse("SUPPORT").unwrap(), VerdictLabel::True);
        assert_eq!(VerdictLabel::parse("refutes").unwrap(), VerdictLabel::False);
        assert_eq!(VerdictLabel::parse("CONTRADICT").unwrap(), VerdictLabel::False);
        assert_eq!(VerdictLabel::parse("yes").unwrap(), VerdictLabel::True);
        assert_eq!(VerdictLabel::parse("no").unwrap(), VerdictLabel::False);
    }

    #[test]
    fn unknown_label_is_rejected() {
        assert_eq!(
            VerdictLabel::parse("maybe"),
            Err(ModelError::UnknownLabel("maybe".into()))
        );
    }

    #[test]
    fn every_vocabulary_entry_serializes_to_canonical_form() {
        for (word, _) in LABEL_VOCABULARY {
            let l = VerdictLabel::parse(word).unwrap();
            let s = serde_json::to_string(&l).unwrap();
            assert!(["\"true\"", "\"false\"", "\"nei\""].contains(&s.as_str()));
            assert_eq!(VerdictLabel::parse(&word.to_uppercase()).unwrap(), l);
        }
    }

    #[test]
    fn claim_invariants() {
        assert_eq!(Claim::direct("   ").unwrap_err(), ModelError::EmptyClaim);
        let mut c = Claim::direct("Aspirin reduces fever.").unwrap();
        c.timestamp = Some((0.0, 1.0));
        assert_eq!(c.validate(None), Err(ModelError::TimestampOnNonVideo));
        c.timestamp = None;
        c.span = Some((0, 40));
        assert!(matches!(
            c.validate(Some("Aspirin reduces fever.")),
            Err(ModelError::InvalidSpan { .. })
        ));
    }

    #[test]
    fn assessment_json_is_flat_and_lossless() {
        let a = ClaimAssessment {
            claim: Claim {
                id: "c1".into(),
                text: "COVID-19 is deadly.".into(),
                source: ClaimSource::Video,
                origin_ref: Some("clip.mp4".into()),
                span: Some((0, 19)),
                timestamp: Some((0.0, 2.5)),
            },
            label: VerdictLabel::Nei,
            confidence: 0.7,
            evidence: vec![EvidencePassage {
                doc_id: "123".into(),
                title: "T".into(),
                text: "Abstract.".into(),
                score: 0.25,
                retriever: Retriever::Sparse,
            }],
            justification: Justification {
                text: "Because.".into(),
                preliminary_judgment: Some(Judgment::False),
                model_id: "m".into(),
                raw_response: "JUDGMENT: false".into(),
            },
            config_fingerprint: "abc".into(),
            degraded: false,
        };
        let json = serde_json::to_value(&a).unwrap();
        assert_eq!(json["label"], "nei");
        assert_eq!(json["claim"]["source"], "video");
        assert_eq!(json["evidence"][0]["retriever"], "sparse");
        let back: ClaimAssessment = serde_json::from_value(json).unwrap();
        assert_eq!(back, a);
    }
}
