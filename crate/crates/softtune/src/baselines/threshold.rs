//! Attribute threshold sweep over a file-backed score table: for every
//! (attribute, threshold) cell, predict positive when score >= threshold,
//! and report the best cell under the chosen metric.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::Deserialize;

use super::BaselineError;
use crate::metrics::{binary_f1, Metric};

/// The §5.2-style grid: 0.0, 0.1, ..., 0.9.
pub const DEFAULT_THRESHOLDS: [f64; 10] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Per-example attribute scores in [0, 1], keyed by example id.
#[derive(Debug, Clone, Default)]
pub struct AttributeScoreTable {
    rows: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Deserialize)]
struct TableRow {
    id: String,
    scores: BTreeMap<String, f64>,
}

impl AttributeScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: &str, scores: BTreeMap<String, f64>) {
        self.rows.insert(id.to_string(), scores);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Attribute names, from the union over rows, in lexicographic order.
    pub fn attributes(&self) -> Vec<String> {
        let mut set = std::collections::BTreeSet::new();
        for scores in self.rows.values() {
            set.extend(scores.keys().cloned());
        }
        set.into_iter().collect()
    }

    /// JSONL rows of the form `{"id": ..., "scores": {attribute: value}}`.
    pub fn load_jsonl(path: &Path) -> Result<Self, BaselineError> {
        let file = std::fs::File::open(path).map_err(|source| BaselineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut table = AttributeScoreTable::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| BaselineError::Io {
                path: path.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let row: TableRow =
                serde_json::from_str(&line).map_err(|e| BaselineError::TableSchema {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            table.rows.insert(row.id, row.scores);
        }
        Ok(table)
    }

    fn score(&self, id: &str, attribute: &str) -> Result<f64, BaselineError> {
        let row = self.rows.get(id).ok_or_else(|| BaselineError::MissingId {
            id: id.to_string(),
        })?;
        let value = *row
            .get(attribute)
            .ok_or_else(|| BaselineError::MissingAttribute {
                id: id.to_string(),
                attribute: attribute.to_string(),
            })?;
        if !(0.0..=1.0).contains(&value) {
            return Err(BaselineError::ScoreOutOfRange {
                id: id.to_string(),
                attribute: attribute.to_string(),
                value,
            });
        }
        Ok(value)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepCell {
    pub attribute: String,
    pub threshold: f64,
    pub value: f64,
    /// Zero-denominator F1 convention was applied.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub best: SweepCell,
    /// Every (attribute, threshold) cell, attributes lexicographic within
    /// ascending thresholds.
    pub grid: Vec<SweepCell>,
}

/// Evaluate the full grid and return its maximum. Ties break toward the
/// lower threshold, then the lexicographically first attribute — realized
/// by scanning thresholds ascending, attributes lexicographic, and
/// replacing the incumbent only on a strict improvement.
pub fn threshold_sweep(
    table: &AttributeScoreTable,
    labeled: &[(String, bool)],
    metric: Metric,
    thresholds: &[f64],
) -> Result<SweepResult, BaselineError> {
    if labeled.is_empty() {
        return Err(BaselineError::NoLabels);
    }
    let attributes = table.attributes();
    if attributes.is_empty() {
        return Err(BaselineError::EmptyScoreTable);
    }
    let labels: Vec<bool> = labeled.iter().map(|(_, l)| *l).collect();
    let mut grid = Vec::with_capacity(thresholds.len() * attributes.len());
    let mut best: Option<SweepCell> = None;
    for &threshold in thresholds {
        for attribute in &attributes {
            let mut scores = Vec::with_capacity(labeled.len());
            for (id, _) in labeled {
                scores.push(table.score(id, attribute)?);
            }
            let (value, degenerate) = match metric {
                Metric::F1 => {
                    let preds: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
                    let f1 = binary_f1(&preds, &labels)?;
                    (f1.value, f1.degenerate)
                }
                Metric::RocAuc => (crate::metrics::roc_auc(&scores, &labels)?, false),
            };
            let cell = SweepCell {
                attribute: attribute.clone(),
                threshold,
                value,
                degenerate,
            };
            if best.as_ref().is_none_or(|b| cell.value > b.value) {
                best = Some(cell.clone());
            }
            grid.push(cell);
        }
    }
    Ok(SweepResult {
        best: best.expect("grid is nonempty"),
        grid,
    })
}
