use std::fs;
use std::io::Write;
use std::path::Path;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, MetricReport};
use super::{EvalError, LabeledClaim};
use crate::model::{Claim, ClaimAssessment, VerdictLabel};
use crate::pipeline::Pipeline;

/// One line of the evaluation trace: the assessment (when one was produced)
/// plus the gold label and any error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub index: usize,
    pub gold: VerdictLabel,
    #[serde(flatten)]
    pub assessment: Option<ClaimAssessment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub report: MetricReport,
    pub total: usize,
    /// Claims without a prediction; excluded from the metrics.
    pub failed: usize,
    /// Predictions made without a justification.
    pub degraded: usize,
    #[serde(skip)]
    pub trace: Vec<TraceLine>,
}

/// Runs the pipeline over labelled claims and scores the predictions.
/// Claims are processed concurrently up to the backend in-flight limit;
/// the trace keeps input order.
pub async fn evaluate_pipeline(
    claims: &[LabeledClaim],
    pipeline: &Pipeline,
    trace_path: Option<&Path>,
) -> Result<EvalOutcome, EvalError> {
    let space = claims.first().ok_or(EvalError::EmptyInput)?.dataset.label_space();
    let width = pipeline.config().backends.max_in_flight.max(1);
    let trace: Vec<TraceLine> = stream::iter(claims.iter().enumerate())
        .map(|(index, lc)| async move {
            let result = match Claim::direct(lc.claim_text.clone()) {
                Ok(claim) => pipeline.verify_claim(&claim, Some(space)).await.map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            match result {
                Ok(a) => TraceLine { index, gold: lc.gold, assessment: Some(a), error: None },
                Err(e) => TraceLine { index, gold: lc.gold, assessment: None, error: Some(e) },
            }
        })
        .buffered(width)
        .collect()
        .await;

    if let Some(path) = trace_path {
        write_trace(&trace, path)?;
    }
    let (mut golds, mut preds, mut degraded) = (Vec::new(), Vec::new(), 0);
    for t in &trace {
        if let Some(a) = &t.assessment {
            golds.push(t.gold);
            preds.push(a.label);
            degraded += usize::from(a.degraded);
        }
    }
    let failed = trace.len() - golds.len();
    if failed > 0 {
        tracing::warn!(failed, total = trace.len(), "claims without a prediction were excluded from the metrics");
    }
    let report = metrics(&golds, &preds, space)?;
    Ok(EvalOutcome { report, total: trace.len(), failed, degraded, trace })
}

fn write_trace(trace: &[TraceLine], path: &Path) -> Result<(), EvalError> {
    let io = |source| EvalError::Io { path: path.display().to_string(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for t in trace {
        let line = serde_json::to_string(t).expect("trace line serializes");
        writeln!(f, "{line}").map_err(io)?;
    }
    f.flush().map_err(io)
}
