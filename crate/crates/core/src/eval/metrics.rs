use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::EvalError;
use crate::model::VerdictLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class and macro metrics. Values are fractions in [0, 1]; rendering
/// converts to percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub label_space: Vec<VerdictLabel>,
    pub per_class: BTreeMap<VerdictLabel, ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
    pub n: usize,
    /// `confusion[gold][pred]`, both indexed in `label_space` order.
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class metrics from a square confusion matrix, 0/0 taken as 0.
pub(crate) fn class_metrics(confusion: &[Vec<usize>]) -> Vec<ClassMetrics> {
    let k = confusion.len();
    (0..k)
        .map(|c| {
            let tp = confusion[c][c];
            let gold: usize = confusion[c].iter().sum();
            let pred: usize = (0..k).map(|g| confusion[g][c]).sum();
            let precision = ratio(tp, pred);
            let recall = ratio(tp, gold);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            ClassMetrics { precision, recall, f1, support: gold }
        })
        .collect()
}

pub fn metrics(
    golds: &[VerdictLabel],
    preds: &[VerdictLabel],
    label_space: &[VerdictLabel],
) -> Result<MetricReport, EvalError> {
    if golds.len() != preds.len() {
        return Err(EvalError::LengthMismatch { golds: golds.len(), preds: preds.len() });
    }
    if golds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let index = |l: VerdictLabel| {
        label_space
            .iter()
            .position(|&x| x == l)
            .ok_or(EvalError::LabelOutsideSpace(l))
    };
    let k = label_space.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (&g, &p) in golds.iter().zip(preds) {
        confusion[index(g)?][index(p)?] += 1;
    }
    let per = class_metrics(&confusion);
    let mean = |f: fn(&ClassMetrics) -> f64| per.iter().map(f).sum::<f64>() / k as f64;
    let macro_avg = MacroMetrics {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    };
    Ok(MetricReport {
        label_space: label_space.to_vec(),
        per_class: label_space.iter().copied().zip(per).collect(),
        macro_avg,
        n: golds.len(),
        confusion,
    })
}

/// `x` as a percentage with two decimals, rounding half up.
pub fn percent(x: f64) -> f64 {
    ((x * 10_000.0) + 0.5 + 1e-7).floor() / 100.0
}

pub fn percent_str(x: f64) -> String {
    format!("{:.2}", percent(x))
}

impl MetricReport {
    pub fn class(&self, label: VerdictLabel) -> Option<&ClassMetrics> {
        self.per_class.get(&label)
    }

    /// Report JSON with raw fractions plus a `percent` block rounded for display.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        let per: serde_json::Map<String, serde_json::Value> = self
            .per_class
            .iter()
            .map(|(l, m)| {
                (
                    l.as_str().to_string(),
                    json!({"precision": percent(m.precision), "recall": percent(m.recall), "f1": percent(m.f1)}),
                )
            })
            .collect();
        v["percent"] = json!({
            "per_class": per,
            "macro": {
                "precision": percent(self.macro_avg.precision),
                "recall": percent(self.macro_avg.recall),
                "f1": percent(self.macro_avg.f1),
            }
        });
        v
    }

    /// Aligned plain-text table in percentages.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>9} {:>9} {:>9} {:>8}", "class", "P", "R", "F1", "support");
        for (l, m) in &self.per_class {
            let _ = writeln!(
                s,
                "{:<8} {:>9} {:>9} {:>9} {:>8}",
                l.as_str(),
                percent_str(m.precision),
                percent_str(m.recall),
                percent_str(m.f1),
                m.support
            );
        }
        let _ = writeln!(
            s,
            "{:<8} {:>9} {:>9} {:>9} {:>8}",
            "macro",
            percent_str(self.macro_avg.precision),
            percent_str(self.macro_avg.recall),
            percent_str(self.macro_avg.f1),
            self.n
        );
        s
    }
}
