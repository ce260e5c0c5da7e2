//! The paper-shaped experimental protocol: train-size sweeps crossed with
//! seeds, in-context and threshold baselines, aggregation, and table/curve
//! artifacts.

mod report;
mod sweep;

pub use report::{load_aggregate_rows, render_report, ReportColumn, ReportOutput};
pub use sweep::{
    run_baselines, run_sweep, CellFailure, CellResult, SizeSkip, SweepConfig, SweepOutcome,
    DEFAULT_SIZES,
};

use crate::data::{DatasetManifest, Example};
use crate::lm::Vocabulary;
use crate::tuning::LabeledExample;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Lm(#[from] crate::lm::LmError),
    #[error(transparent)]
    Tune(#[from] crate::tuning::TuneError),
    #[error(transparent)]
    Baseline(#[from] crate::baselines::BaselineError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Tokenize one example into the classification form the tuner consumes:
/// rendered target text plus question, and the label word's token id.
pub fn tokenize_example(
    example: &Example,
    manifest: &DatasetManifest,
    vocab: &Vocabulary,
) -> Result<LabeledExample, ExperimentError> {
    let text = example.rendered_text(manifest.truncation_k)?;
    let rendered = crate::data::render_target(&text, &manifest.question());
    let ids = vocab.tokenize(&rendered)?;
    let positive = example.label(&manifest.attribute) == Some(true);
    let word = if positive {
        &manifest.label_words.0
    } else {
        &manifest.label_words.1
    };
    Ok((ids, vocab.label_id(word)?))
}

/// Word counts for a model vocabulary that covers a pretraining corpus and,
/// optionally, a task dataset (including its question and label words).
pub fn build_vocabulary(
    corpus: &[String],
    dataset: Option<&crate::data::Dataset>,
) -> Result<Vocabulary, ExperimentError> {
    let mut counts: std::collections::BTreeMap<String, u64> = Default::default();
    let mut add_text = |text: &str| {
        for word in text.split_whitespace() {
            *counts.entry(word.to_lowercase()).or_default() += 1;
        }
    };
    for seq in corpus {
        add_text(seq);
    }
    if let Some(ds) = dataset {
        for example in &ds.examples {
            add_text(&example.rendered_text(ds.manifest.truncation_k)?);
        }
        add_text(&ds.manifest.question());
        add_text(&ds.manifest.label_words.0);
        add_text(&ds.manifest.label_words.1);
        add_text(&crate::data::render_target("", &ds.manifest.question()));
    }
    Ok(Vocabulary::from_counts(&counts, &[])?)
}

/// Tokenize a whole set, preserving order.
pub fn tokenize_set(
    examples: &[Example],
    manifest: &DatasetManifest,
    vocab: &Vocabulary,
) -> Result<Vec<LabeledExample>, ExperimentError> {
    examples
        .iter()
        .map(|e| tokenize_example(e, manifest, vocab))
        .collect()
}
