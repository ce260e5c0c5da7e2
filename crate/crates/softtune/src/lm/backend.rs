//! Language-model backend abstraction.
//!
//! Tuning and evaluation code talks to this trait rather than to the toy
//! model directly, so an evaluation-only stand-in (e.g. a file-backed score
//! table) can replace the model where no gradients are needed.

use ndarray::Array2;

use super::{
    class_logits, class_loss_grad, score_positive, ClassLogitPair, Dropout, LmError, ModelBundle,
    SoftPrompt, TokenId, Vocabulary,
};

pub trait LmBackend: Sync {
    fn vocab(&self) -> &Vocabulary;

    fn max_context(&self) -> usize;

    /// Identifies the frozen weights; prompt checkpoints record it and
    /// refuse to load against anything else.
    fn fingerprint(&self) -> &str;

    /// Full-vocabulary logits at the final position, inference mode.
    fn final_logits(
        &self,
        prompt: Option<&SoftPrompt>,
        ids: &[TokenId],
    ) -> Result<Vec<f64>, LmError>;

    /// Mean label cross-entropy over the batch and its exact gradient with
    /// respect to the prompt. The frozen weights receive no gradient.
    fn loss_and_prompt_grad(
        &self,
        prompt: &SoftPrompt,
        batch: &[(Vec<TokenId>, TokenId)],
        dropout: Option<Dropout>,
    ) -> Result<(f64, Array2<f64>), LmError>;

    fn class_logit_pair(
        &self,
        prompt: Option<&SoftPrompt>,
        ids: &[TokenId],
        positive: TokenId,
        negative: TokenId,
    ) -> Result<ClassLogitPair, LmError> {
        let logits = self.final_logits(prompt, ids)?;
        Ok(ClassLogitPair {
            positive: logits[positive],
            negative: logits[negative],
        })
    }

    /// Positive-class probability from the two-way softmax over the label
    /// token logits.
    fn score(
        &self,
        prompt: Option<&SoftPrompt>,
        ids: &[TokenId],
        positive: TokenId,
        negative: TokenId,
    ) -> Result<f64, LmError> {
        let pair = self.class_logit_pair(prompt, ids, positive, negative)?;
        score_positive(&pair)
    }
}

/// The pretrained toy transformer as a backend.
pub struct ToyLm {
    bundle: ModelBundle,
    fingerprint: String,
}

impl ToyLm {
    pub fn new(bundle: ModelBundle) -> Result<Self, LmError> {
        bundle.validate()?;
        let fingerprint = bundle.fingerprint();
        Ok(ToyLm {
            bundle,
            fingerprint,
        })
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }
}

impl LmBackend for ToyLm {
    fn vocab(&self) -> &Vocabulary {
        &self.bundle.vocab
    }

    fn max_context(&self) -> usize {
        self.bundle.weights.config.max_context
    }

    fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    fn final_logits(
        &self,
        prompt: Option<&SoftPrompt>,
        ids: &[TokenId],
    ) -> Result<Vec<f64>, LmError> {
        Ok(class_logits(&self.bundle.weights, prompt, ids)?.to_vec())
    }

    fn loss_and_prompt_grad(
        &self,
        prompt: &SoftPrompt,
        batch: &[(Vec<TokenId>, TokenId)],
        dropout: Option<Dropout>,
    ) -> Result<(f64, Array2<f64>), LmError> {
        class_loss_grad(&self.bundle.weights, prompt, batch, dropout)
    }
}
