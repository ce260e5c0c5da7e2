//! Baselines the tuned prompt competes against: in-context-learning
//! templates (zero/6/12-shot) and the file-backed attribute threshold
//! sweep.

mod icl;
mod threshold;

pub use icl::{build_icl_template, evaluate_icl, IclEvaluation, IclTemplate};
pub use threshold::{
    threshold_sweep, AttributeScoreTable, SweepCell, SweepResult, DEFAULT_THRESHOLDS,
};

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("shot count {k} must be zero or even")]
    OddShotCount { k: usize },
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Lm(#[from] crate::lm::LmError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error("score table is missing example id `{id}`")]
    MissingId { id: String },
    #[error("score table entry `{id}` is missing attribute `{attribute}`")]
    MissingAttribute { id: String, attribute: String },
    #[error("score {value} for id `{id}`, attribute `{attribute}` is outside [0, 1]")]
    ScoreOutOfRange {
        id: String,
        attribute: String,
        value: f64,
    },
    #[error("score table has no attributes")]
    EmptyScoreTable,
    #[error("no labeled examples to sweep over")]
    NoLabels,
    #[error("line {line}: {message}")]
    TableSchema { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
