//! A small frozen decoder-only transformer with a word-level tokenizer,
//! forward passes that accept a prepended soft prompt, and exact gradients
//! of the classification loss with respect to the prompt.

mod backend;
mod config;
mod model;
mod pretrain;
mod vocab;
mod weights;

pub use backend::{LmBackend, ToyLm};
pub use config::ModelConfig;
pub use model::{
    backward, class_logits, class_loss_grad, forward, logits_all, logits_at, next_token_loss,
    next_token_loss_grad, Dropout, ForwardCache,
};
pub use pretrain::{perplexity, pretrain_toy, PretrainConfig, PretrainOutcome};
pub use vocab::{TokenId, Vocabulary, UNK_TOKEN};
pub use weights::{LayerWeights, ModelBundle, ModelWeights, BUNDLE_FORMAT_VERSION};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum LmError {
    #[error("input is empty after normalization")]
    EmptyInput,
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("context overflow: sequence needs {needed} positions but max_context is {max} (over by {overflow})")]
    ContextOverflow {
        needed: usize,
        max: usize,
        overflow: usize,
    },
    #[error("non-finite loss{}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    NonFiniteLoss { step: Option<usize> },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("label word `{0}` is not a single vocabulary token")]
    MultiTokenLabel(String),
    #[error("label word `{0}` is not in the vocabulary")]
    LabelWordNotInVocabulary(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("soft prompt must have at least one row")]
    EmptyPrompt,
    #[error("model fingerprint mismatch: checkpoint was trained against {expected}, backend is {got}")]
    FingerprintMismatch { expected: String, got: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Final-position logits of the two class label tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassLogitPair {
    pub positive: f64,
    pub negative: f64,
}

/// Two-way softmax score of the positive class, computed stably so large
/// logits cannot overflow. `score_positive(a, b) + score_positive(b, a) = 1`.
pub fn score_positive(pair: &ClassLogitPair) -> Result<f64, LmError> {
    if !pair.positive.is_finite() || !pair.negative.is_finite() {
        return Err(LmError::NonFinite("class logits"));
    }
    // sigmoid of the logit difference, evaluated on the non-overflowing side
    let d = pair.positive - pair.negative;
    if d >= 0.0 {
        Ok(1.0 / (1.0 + (-d).exp()))
    } else {
        let e = d.exp();
        Ok(e / (1.0 + e))
    }
}

/// The p x d learnable embedding matrix prepended to the model input. The
/// only parameters a tuning run updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftPrompt {
    rows: Array2<f64>,
}

impl SoftPrompt {
    pub fn new(rows: Array2<f64>) -> Result<Self, LmError> {
        if rows.nrows() == 0 {
            return Err(LmError::EmptyPrompt);
        }
        if !rows.iter().all(|v| v.is_finite()) {
            return Err(LmError::NonFinite("soft prompt"));
        }
        Ok(SoftPrompt { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // construction enforces p >= 1
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Tunable parameter count: p x d_model, and nothing else.
    pub fn param_count(&self) -> usize {
        self.rows.nrows() * self.rows.ncols()
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut Array2<f64> {
        &mut self.rows
    }
}
