//! Evaluation metrics and seed aggregation.
//!
//! `roc_auc` uses the rank (Mann-Whitney) formulation with ties counted as
//! one half; the `agreement` submodule holds the inter-annotator statistics.

mod agreement;

pub use agreement::{
    fleiss_kappa, human_auc, krippendorff_alpha, majority_vote, AgreementError, AnnotationMatrix,
    HumanAuc, VoteOutcome,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("length mismatch: {left} scores vs {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("labels contain a single class only; AUC is undefined")]
    SingleClass,
    #[error("unknown metric name `{0}` (expected `f1` or `roc_auc`)")]
    UnknownMetric(String),
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
}

/// Metric selector used by the threshold sweep and the experiment runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    F1,
    RocAuc,
}

impl Metric {
    pub fn from_name(name: &str) -> Result<Self, MetricError> {
        match name {
            "f1" => Ok(Metric::F1),
            "roc_auc" | "roc-auc" | "auc" => Ok(Metric::RocAuc),
            other => Err(MetricError::UnknownMetric(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::F1 => "f1",
            Metric::RocAuc => "roc_auc",
        }
    }

    /// Evaluate the metric on scores in [0, 1] against binary labels.
    ///
    /// For F1 the scores are thresholded at 0.5.
    pub fn evaluate(&self, scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
        match self {
            Metric::RocAuc => roc_auc(scores, labels),
            Metric::F1 => {
                let preds: Vec<bool> = scores.iter().map(|&s| s >= 0.5).collect();
                Ok(binary_f1(&preds, labels)?.value)
            }
        }
    }
}

/// ROC-AUC by the rank method: the probability that a uniformly random
/// positive outscores a uniformly random negative, ties counting one half.
///
/// Errors when the labels contain only one class.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    if scores.is_empty() {
        return Err(MetricError::Empty("scores"));
    }
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Midranks over tied groups, 1-based.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }

    let n_pos = n_pos as f64;
    let n_neg = n_neg as f64;
    Ok((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Binary F1 on the positive class, with the zero-denominator case defined
/// as 0 and flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub value: f64,
    /// True when 2TP + FP + FN = 0 and the value was defined as 0.
    pub degenerate: bool,
}

pub fn binary_f1(predictions: &[bool], labels: &[bool]) -> Result<F1Score, MetricError> {
    if predictions.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        Ok(F1Score {
            value: 0.0,
            degenerate: true,
        })
    } else {
        Ok(F1Score {
            value: 2.0 * tp as f64 / denom as f64,
            degenerate: false,
        })
    }
}

/// Arithmetic mean and population standard deviation over per-seed values.
pub fn aggregate_seeds(values: &[f64]) -> Result<(f64, f64), MetricError> {
    if values.is_empty() {
        return Err(MetricError::Empty("per-seed values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Plain metric record consumed by the experiment runner and reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRecord {
    pub name: String,
    pub value: f64,
    pub std: f64,
    pub n_seeds: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl MetricRecord {
    pub fn new(name: impl Into<String>, value: f64, std: f64, n_seeds: usize) -> Self {
        MetricRecord {
            name: name.into(),
            value,
            std,
            n_seeds,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_note(mut self, key: &str, value: impl Into<String>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }
}

#[cfg(test)]
pub(crate) mod test_oracles {
    /// O(n^2) pair-counting AUC, ties counted one half. Kept independent of
    /// the rank-method implementation.
    pub fn pair_counting_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }
}
