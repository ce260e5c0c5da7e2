//! Soft-prompt training against a frozen backend: vocabulary-sampled
//! initialization, Adam/Adafactor updates, seeded shuffling and validation
//! subsampling, and best-checkpoint selection (earliest minimum validation
//! loss).

mod checkpoint;
mod optim;
mod tune;

pub use checkpoint::{PromptCheckpoint, RunManifest, CHECKPOINT_FORMAT_VERSION};
pub use optim::{
    adafactor_step, adam_step, AdafactorState, AdamState, OptimizerKind,
    ADAFACTOR_CLIP_THRESHOLD, ADAFACTOR_DECAY_EXPONENT, ADAFACTOR_EPS1,
};
pub use tune::{init_prompt, tune, Checkpoint, LabeledExample, Schedule, TuneConfig, TuneOutcome};

#[derive(Debug, thiserror::Error)]
pub enum TuneError {
    #[error("invalid tuning config: {0}")]
    InvalidConfig(String),
    #[error("prompt length {p} exceeds the {k} most frequent vocabulary tokens")]
    PromptLongerThanVocabulary { p: usize, k: usize },
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("gradient contains non-finite values")]
    NonFiniteGradient,
    #[error("gradient shape {got:?} does not match prompt shape {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error(transparent)]
    Lm(#[from] crate::lm::LmError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
