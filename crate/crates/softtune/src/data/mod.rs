//! Dataset schema and plumbing: JSONL loading with validation, conversation
//! truncation, balanced/stratified subsampling, and synthetic task
//! generation.

mod sample;
mod synthetic;

pub use sample::{sample_balanced, sample_stratified};
pub use synthetic::{
    bayes_optimal_auc, make_pretraining_corpus, make_synthetic_task, render_question,
    render_shot, render_target, PretrainCorpusConfig, SyntheticTaskConfig, LABEL_NEGATIVE,
    LABEL_POSITIVE, QUESTION_PATTERN,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: duplicate example id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("dataset contains no examples")]
    Empty,
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("conversation has no turns")]
    EmptyConversation,
    #[error("truncation window k must be >= 1")]
    ZeroTruncation,
    #[error("sample size {n} must be even for balanced sampling")]
    OddSampleSize { n: usize },
    #[error("insufficient {class} examples: need {need}, have {have}")]
    InsufficientClass {
        class: String,
        need: usize,
        have: usize,
    },
    #[error("sample size {n} exceeds dataset size {available}")]
    SampleTooLarge { n: usize, available: usize },
    #[error("stratum `{stratum}` allocation {need} exceeds its {have} examples")]
    StratumOverflow {
        stratum: String,
        need: usize,
        have: usize,
    },
    #[error("positive rate {0} must lie strictly inside (0, 1)")]
    InvalidPositiveRate(f64),
    #[error("probability {name} = {value} must lie in [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

/// One labeled example. Content is exactly one of `text` (flat) or `turns`
/// (conversational); labels are binary per attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turns: Option<Vec<String>>,
    pub labels: BTreeMap<String, u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_labels: Option<BTreeMap<String, u8>>,
    pub split: Split,
}

impl Example {
    pub fn validate(&self) -> Result<(), String> {
        match (&self.text, &self.turns) {
            (Some(_), Some(_)) => return Err("ambiguous content: both text and turns present".into()),
            (None, None) => return Err("missing content: neither text nor turns present".into()),
            (None, Some(turns)) if turns.is_empty() => return Err("turns list is empty".into()),
            _ => {}
        }
        if self.labels.is_empty() {
            return Err("no labels".into());
        }
        for (attr, &v) in &self.labels {
            if v > 1 {
                return Err(format!("label `{attr}` = {v} is not binary"));
            }
        }
        if let Some(ann) = &self.annotator_labels {
            for (who, &v) in ann {
                if v > 1 {
                    return Err(format!("annotator label `{who}` = {v} is not binary"));
                }
            }
        }
        Ok(())
    }

    pub fn label(&self, attribute: &str) -> Option<bool> {
        self.labels.get(attribute).map(|&v| v == 1)
    }

    /// Classifier input text: flat text as-is, conversations truncated to
    /// the manifest's window (all turns when unset).
    pub fn rendered_text(&self, truncation_k: Option<usize>) -> Result<String, DataError> {
        match (&self.text, &self.turns) {
            (Some(t), None) => Ok(t.clone()),
            (None, Some(turns)) => match truncation_k {
                Some(k) => truncate_conversation(turns, k),
                None => truncate_conversation(turns, turns.len()),
            },
            _ => unreachable!("validated on load"),
        }
    }
}

/// Last `min(k, |turns|)` utterances in original order, newline-joined.
pub fn truncate_conversation(turns: &[String], k: usize) -> Result<String, DataError> {
    if turns.is_empty() {
        return Err(DataError::EmptyConversation);
    }
    if k == 0 {
        return Err(DataError::ZeroTruncation);
    }
    let start = turns.len().saturating_sub(k);
    Ok(turns[start..].join("\n"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    /// The attribute under evaluation, a key into every example's labels.
    pub attribute: String,
    /// Last-k utterance window for conversational data (BAD-2/BAD-4 style).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_k: Option<usize>,
    /// (positive word, negative word); both must be single backend tokens.
    pub label_words: (String, String),
    /// Question appended after the target text; `{class}` is replaced with
    /// the class description.
    pub question_pattern: String,
    /// Class description substituted into the question pattern.
    pub class_description: String,
    /// Recorded sizes, informational only (not enforced on load).
    #[serde(default)]
    pub split_sizes: BTreeMap<String, usize>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), DataError> {
        if let Some(k) = self.truncation_k {
            if k != 2 && k != 4 {
                return Err(DataError::InvalidManifest(format!(
                    "truncation_k must be 2 or 4 when set, got {k}"
                )));
            }
        }
        if self.label_words.0 == self.label_words.1 {
            return Err(DataError::InvalidManifest("label words must differ".into()));
        }
        if !self.question_pattern.contains("{class}") {
            return Err(DataError::InvalidManifest(
                "question pattern must contain a {class} placeholder".into(),
            ));
        }
        Ok(())
    }

    pub fn question(&self) -> String {
        self.question_pattern.replace("{class}", &self.class_description)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub examples: Vec<Example>,
}

/// Per-split class-balance row: total examples, positives, positive share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalanceRow {
    pub total: usize,
    pub positives: usize,
    pub positive_share: f64,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&Example> {
        self.examples.iter().filter(|e| e.split == split).collect()
    }

    /// Appendix-style class balance report: count and share of positives
    /// per split for the manifest attribute.
    pub fn class_balance(&self) -> BTreeMap<Split, BalanceRow> {
        let mut out = BTreeMap::new();
        for split in [Split::Train, Split::Validation, Split::Test] {
            let members: Vec<&Example> = self.split(split);
            if members.is_empty() {
                continue;
            }
            let positives = members
                .iter()
                .filter(|e| e.label(&self.manifest.attribute) == Some(true))
                .count();
            out.insert(
                split,
                BalanceRow {
                    total: members.len(),
                    positives,
                    positive_share: positives as f64 / members.len() as f64,
                },
            );
        }
        out
    }
}

/// Load and schema-check a JSONL dataset. Errors carry 1-based line numbers.
pub fn load_dataset(path: &Path, manifest: DatasetManifest) -> Result<Dataset, DataError> {
    manifest.validate()?;
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut examples = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let example: Example = serde_json::from_str(&line).map_err(|e| DataError::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        example.validate().map_err(|message| DataError::Schema {
            line: line_no,
            message,
        })?;
        if !example.labels.contains_key(&manifest.attribute) {
            return Err(DataError::Schema {
                line: line_no,
                message: format!("missing label for attribute `{}`", manifest.attribute),
            });
        }
        if !seen.insert(example.id.clone()) {
            return Err(DataError::DuplicateId {
                line: line_no,
                id: example.id,
            });
        }
        examples.push(example);
    }
    if examples.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(Dataset { manifest, examples })
}

/// One example per line, field order fixed by the schema.
pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<(), DataError> {
    let mut file = std::fs::File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    for example in &dataset.examples {
        let line = serde_json::to_string(example)?;
        writeln!(file, "{line}").map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}
