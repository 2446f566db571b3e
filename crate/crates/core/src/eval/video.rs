use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{class_metrics, ClassMetrics};
use super::EvalError;
use crate::model::{ClaimAssessment, VerdictLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VideoLabel {
    Real,
    Fake,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoClaim {
    pub claim_text: String,
    pub label: VerdictLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assessment: Option<ClaimAssessment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoCase {
    pub video_id: String,
    pub gold: VideoLabel,
    pub claims: Vec<VideoClaim>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoVerdict {
    pub verdict: VideoLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Fake iff at least one claim is labelled False.
pub fn verdict_from_labels<I: IntoIterator<Item = VerdictLabel>>(labels: I) -> VideoVerdict {
    let mut any = false;
    for l in labels {
        any = true;
        if l == VerdictLabel::False {
            return VideoVerdict { verdict: VideoLabel::Fake, warning: None };
        }
    }
    VideoVerdict {
        verdict: VideoLabel::Real,
        warning: (!any).then(|| "no claims detected; video classified as real by default".to_string()),
    }
}

pub fn video_verdict(assessments: &[ClaimAssessment]) -> VideoVerdict {
    verdict_from_labels(assessments.iter().map(|a| a.label))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMetrics {
    pub real: ClassMetrics,
    pub fake: ClassMetrics,
    pub n: usize,
    /// `confusion[gold][pred]` in (real, fake) order.
    pub confusion: [[usize; 2]; 2],
    pub warnings: Vec<String>,
}

/// Per-class P/R/F1 for the real and fake classes (not macro-averaged).
pub fn video_metrics(cases: &[VideoCase]) -> Result<VideoMetrics, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let idx = |v: VideoLabel| match v {
        VideoLabel::Real => 0,
        VideoLabel::Fake => 1,
    };
    let mut confusion = vec![vec![0usize; 2]; 2];
    let mut warnings = Vec::new();
    for c in cases {
        let v = verdict_from_labels(c.claims.iter().map(|x| x.label));
        if let Some(w) = v.warning {
            warnings.push(format!("{}: {w}", c.video_id));
        }
        confusion[idx(c.gold)][idx(v.verdict)] += 1;
    }
    let per = class_metrics(&confusion);
    Ok(VideoMetrics {
        real: per[0],
        fake: per[1],
        n: cases.len(),
        confusion: [[confusion[0][0], confusion[0][1]], [confusion[1][0], confusion[1][1]]],
        warnings,
    })
}

pub fn load_video_cases(path: &Path) -> Result<Vec<VideoCase>, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.display().to_string(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| EvalError::Format { line: i + 1, detail: e.to_string() }))
        .collect()
}

pub fn save_video_cases(cases: &[VideoCase], path: &Path) -> Result<(), EvalError> {
    let io = |source| EvalError::Io { path: path.display().to_string(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    for c in cases {
        let line = serde_json::to_string(c).expect("video case serializes");
        writeln!(f, "{line}").map_err(io)?;
    }
    Ok(())
}

/// Forty injected-verdict cases: 20 real videos (one carries a false claim)
/// and 20 fake videos (two carry no false claim). Claim counts cycle 0..=4.
pub fn synthetic_video_cases() -> Vec<VideoCase> {
    use VerdictLabel::{False as F, Nei as N, True as T};
    let benign = [T, N, T, T];
    let mut cases = Vec::with_capacity(40);
    for i in 0..20 {
        let n = i % 5;
        let mut labels: Vec<VerdictLabel> = benign.iter().copied().cycle().skip(i).take(n).collect();
        if i == 7 {
            labels = vec![T, F, T];
        }
        cases.push(case(format!("real-{i:02}"), VideoLabel::Real, labels));
    }
    for i in 0..20 {
        let n = 1 + i % 4;
        let mut labels: Vec<VerdictLabel> = benign.iter().copied().cycle().skip(i).take(n).collect();
        labels[i % n] = F;
        if i == 4 || i == 13 {
            labels = vec![T, N];
        }
        cases.push(case(format!("fake-{i:02}"), VideoLabel::Fake, labels));
    }
    cases
}

fn case(video_id: String, gold: VideoLabel, labels: Vec<VerdictLabel>) -> VideoCase {
    let claims = labels
        .into_iter()
        .enumerate()
        .map(|(j, label)| VideoClaim { claim_text: format!("{video_id} claim {j}"), label, assessment: None })
        .collect();
    VideoCase { video_id, gold, claims }
}
