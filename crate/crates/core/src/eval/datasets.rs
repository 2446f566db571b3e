//! Benchmark loaders for the public release formats plus a plain JSON-Lines
//! format.
//!
//! * HealthFC: CSV with an `en_claim` (or `claim`) column and a `label`
//!   column holding `0` (supported), `1` (not enough information),
//!   `2` (refuted) or a textual label.
//! * BioASQ-7b: `{"questions": [{"body", "type", "exact_answer", "snippets"}]}`;
//!   only `yesno` questions are kept.
//! * SciFact: claims JSON-Lines with `{"id", "claim", "evidence": {doc: [{"label"}]}}`;
//!   empty evidence means NEI.
//! * custom: JSON-Lines `{"claim", "label"}` with optional `split` and
//!   `gold_evidence`.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::VerdictLabel;
use crate::veracity::{BINARY, TERNARY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Healthfc,
    Bioasq7b,
    Scifact,
    Custom,
}

impl DatasetName {
    pub fn label_space(self) -> &'static [VerdictLabel] {
        match self {
            DatasetName::Bioasq7b => &BINARY,
            _ => &TERNARY,
        }
    }

    /// Environment variable that may point at the dataset file.
    pub fn path_env(self) -> Option<&'static str> {
        match self {
            DatasetName::Healthfc => Some("CER_HEALTHFC_PATH"),
            DatasetName::Bioasq7b => Some("CER_BIOASQ_PATH"),
            DatasetName::Scifact => Some("CER_SCIFACT_PATH"),
            DatasetName::Custom => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::Healthfc => "healthfc",
            DatasetName::Bioasq7b => "bioasq7b",
            DatasetName::Scifact => "scifact",
            DatasetName::Custom => "custom",
        }
    }
}

impl FromStr for DatasetName {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "healthfc" => Ok(DatasetName::Healthfc),
            "bioasq" | "bioasq7b" => Ok(DatasetName::Bioasq7b),
            "scifact" => Ok(DatasetName::Scifact),
            "custom" => Ok(DatasetName::Custom),
            _ => Err(EvalError::UnknownDataset(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    #[default]
    Test,
}

impl FromStr for Split {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "validation" | "val" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(EvalError::Format { line: 0, detail: format!("unknown split {other:?}") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledClaim {
    pub claim_text: String,
    pub gold: VerdictLabel,
    pub dataset: DatasetName,
    pub split: Split,
    #[serde(default)]
    pub gold_evidence: Option<Vec<String>>,
}

fn read(path: &Path) -> Result<String, EvalError> {
    let s = fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.display().to_string(), source })?;
    Ok(s.trim_start_matches('\u{feff}').to_string())
}

fn split_from_path(path: &Path) -> Split {
    let name = path.file_name().map(|n| n.to_string_lossy().to_lowercase()).unwrap_or_default();
    if name.contains("train") {
        Split::Train
    } else if name.contains("dev") || name.contains("valid") {
        Split::Dev
    } else {
        Split::Test
    }
}

fn label(raw: &str) -> Result<VerdictLabel, EvalError> {
    VerdictLabel::parse(raw).map_err(|_| EvalError::UnknownLabel(raw.to_string()))
}

pub fn load_dataset(name: DatasetName, path: &Path) -> Result<Vec<LabeledClaim>, EvalError> {
    let claims = match name {
        DatasetName::Healthfc => load_healthfc(path)?,
        DatasetName::Bioasq7b => load_bioasq(path)?,
        DatasetName::Scifact => load_scifact(path)?,
        DatasetName::Custom => load_custom(path)?,
    };
    if claims.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(claims)
}

fn healthfc_label(raw: &str) -> Result<VerdictLabel, EvalError> {
    match raw.trim() {
        "0" => Ok(VerdictLabel::True),
        "1" => Ok(VerdictLabel::Nei),
        "2" => Ok(VerdictLabel::False),
        other => label(other),
    }
}

fn load_healthfc(path: &Path) -> Result<Vec<LabeledClaim>, EvalError> {
    let text = read(path)?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| EvalError::Format { line: 1, detail: e.to_string() })?.clone();
    let col = |names: &[&str]| headers.iter().position(|h| names.contains(&h.trim().to_lowercase().as_str()));
    let claim_col = col(&["en_claim", "claim"])
        .ok_or_else(|| EvalError::Format { line: 1, detail: "no en_claim/claim column".into() })?;
    let label_col = col(&["label", "verdict"])
        .ok_or_else(|| EvalError::Format { line: 1, detail: "no label column".into() })?;
    let split_col = col(&["split"]);
    let evidence_col = col(&["en_top_sentences"]);
    let default_split = split_from_path(path);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| EvalError::Format { line, detail: e.to_string() })?;
        let claim = rec.get(claim_col).unwrap_or("").trim();
        if claim.is_empty() {
            return Err(EvalError::Format { line, detail: "empty claim".into() });
        }
        let split = match split_col.and_then(|c| rec.get(c)).filter(|s| !s.trim().is_empty()) {
            Some(s) => s.parse()?,
            None => default_split,
        };
        out.push(LabeledClaim {
            claim_text: claim.to_string(),
            gold: healthfc_label(rec.get(label_col).unwrap_or(""))?,
            dataset: DatasetName::Healthfc,
            split,
            gold_evidence: evidence_col
                .and_then(|c| rec.get(c))
                .filter(|s| !s.trim().is_empty())
                .map(|s| vec![s.to_string()]),
        });
    }
    Ok(out)
}

#[derive(Deserialize)]
struct BioAsqFile {
    questions: Vec<BioAsqQuestion>,
}

#[derive(Deserialize)]
struct BioAsqQuestion {
    body: String,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    exact_answer: Option<serde_json::Value>,
    #[serde(default)]
    snippets: Vec<BioAsqSnippet>,
}

#[derive(Deserialize)]
struct BioAsqSnippet {
    text: String,
}

fn load_bioasq(path: &Path) -> Result<Vec<LabeledClaim>, EvalError> {
    let text = read(path)?;
    let file: BioAsqFile =
        serde_json::from_str(&text).map_err(|e| EvalError::Format { line: e.line(), detail: e.to_string() })?;
    let split = split_from_path(path);
    let mut out = Vec::new();
    for q in file.questions.into_iter().filter(|q| q.kind.eq_ignore_ascii_case("yesno")) {
        let answer = match &q.exact_answer {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Array(a)) => a.first().and_then(|v| v.as_str()).unwrap_or("").to_string(),
            _ => String::new(),
        };
        let gold = label(&answer)?;
        if gold == VerdictLabel::Nei {
            return Err(EvalError::UnknownLabel(answer));
        }
        out.push(LabeledClaim {
            claim_text: q.body.trim().to_string(),
            gold,
            dataset: DatasetName::Bioasq7b,
            split,
            gold_evidence: (!q.snippets.is_empty()).then(|| q.snippets.into_iter().map(|s| s.text).collect()),
        });
    }
    Ok(out)
}

#[derive(Deserialize)]
struct SciFactClaim {
    claim: String,
    #[serde(default)]
    evidence: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    label: Option<String>,
}

fn load_scifact(path: &Path) -> Result<Vec<LabeledClaim>, EvalError> {
    let text = read(path)?;
    let split = split_from_path(path);
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c: SciFactClaim =
            serde_json::from_str(line).map_err(|e| EvalError::Format { line: i + 1, detail: e.to_string() })?;
        let labels: Vec<&str> = c
            .evidence
            .values()
            .filter_map(|sets| sets.as_array())
            .flatten()
            .filter_map(|set| set.get("label").and_then(|l| l.as_str()))
            .collect();
        let gold = match (&c.label, labels.first()) {
            (Some(l), _) => label(l)?,
            (None, Some(l)) => {
                let g = label(l)?;
                if labels.iter().any(|x| label(x).ok() != Some(g)) {
                    return Err(EvalError::Format { line: i + 1, detail: "conflicting evidence labels".into() });
                }
                g
            }
            (None, None) => VerdictLabel::Nei,
        };
        out.push(LabeledClaim {
            claim_text: c.claim.trim().to_string(),
            gold,
            dataset: DatasetName::Scifact,
            split,
            gold_evidence: None,
        });
    }
    Ok(out)
}

#[derive(Deserialize)]
struct CustomLine {
    claim: String,
    label: String,
    #[serde(default)]
    split: Option<String>,
    #[serde(default)]
    gold_evidence: Option<Vec<String>>,
}

fn load_custom(path: &Path) -> Result<Vec<LabeledClaim>, EvalError> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c: CustomLine =
            serde_json::from_str(line).map_err(|e| EvalError::Format { line: i + 1, detail: e.to_string() })?;
        if c.claim.trim().is_empty() {
            return Err(EvalError::Format { line: i + 1, detail: "empty claim".into() });
        }
        out.push(LabeledClaim {
            claim_text: c.claim.trim().to_string(),
            gold: label(&c.label)?,
            dataset: DatasetName::Custom,
            split: c.split.as_deref().map(str::parse).transpose()?.unwrap_or_default(),
            gold_evidence: c.gold_evidence,
        });
    }
    Ok(out)
}
