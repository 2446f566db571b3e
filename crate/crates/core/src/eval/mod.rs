//! Benchmark loading, trivial baselines, metrics and the video-level rule.

mod datasets;
mod metrics;
mod run;
mod video;

pub use datasets::{load_dataset, DatasetName, LabeledClaim, Split};
pub use metrics::{metrics, percent, percent_str, ClassMetrics, MacroMetrics, MetricReport};
pub use run::{evaluate_pipeline, EvalOutcome, TraceLine};
pub use video::{
    load_video_cases, save_video_cases, synthetic_video_cases, verdict_from_labels, video_metrics, video_verdict,
    VideoCase, VideoClaim, VideoLabel, VideoMetrics, VideoVerdict,
};

use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::VerdictLabel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {detail}")]
    Format { line: usize, detail: String },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("unknown dataset {0:?} (expected healthfc|bioasq7b|scifact|custom)")]
    UnknownDataset(String),
    #[error("golds ({golds}) and preds ({preds}) differ in length")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("label {0} is outside the label space")]
    LabelOutsideSpace(VerdictLabel),
    #[error("baseline {0:?} cannot be applied to a binary label space")]
    InvalidForLabelSpace(BaselineKind),
    #[error("unknown baseline {0:?} (expected all_true|all_false|all_nei)")]
    UnknownBaseline(String),
    #[error("pipeline configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    AllTrue,
    AllFalse,
    AllNei,
}

impl BaselineKind {
    pub fn label(self) -> VerdictLabel {
        match self {
            BaselineKind::AllTrue => VerdictLabel::True,
            BaselineKind::AllFalse => VerdictLabel::False,
            BaselineKind::AllNei => VerdictLabel::Nei,
        }
    }
}

impl FromStr for BaselineKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "all_true" => Ok(BaselineKind::AllTrue),
            "all_false" => Ok(BaselineKind::AllFalse),
            "all_nei" => Ok(BaselineKind::AllNei),
            _ => Err(EvalError::UnknownBaseline(s.to_string())),
        }
    }
}

/// Constant prediction list of length `n`.
pub fn baseline_predict(
    kind: BaselineKind,
    n: usize,
    label_space: &[VerdictLabel],
) -> Result<Vec<VerdictLabel>, EvalError> {
    if n == 0 {
        return Err(EvalError::EmptyInput);
    }
    if !label_space.contains(&kind.label()) {
        return Err(EvalError::InvalidForLabelSpace(kind));
    }
    Ok(vec![kind.label(); n])
}

/// Baseline report over a loaded dataset.
pub fn evaluate_baseline(claims: &[LabeledClaim], kind: BaselineKind) -> Result<MetricReport, EvalError> {
    let space = claims.first().ok_or(EvalError::EmptyInput)?.dataset.label_space();
    let golds: Vec<VerdictLabel> = claims.iter().map(|c| c.gold).collect();
    let preds = baseline_predict(kind, golds.len(), space)?;
    metrics(&golds, &preds, space)
}
