//! The tuning loop: seeded shuffling, optimizer steps over prompt
//! gradients, periodic validation, and earliest-minimum checkpoint
//! selection.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{adafactor_step, adam_step, AdafactorState, AdamState, OptimizerKind, TuneError};
use crate::lm::{Dropout, LmBackend, SoftPrompt, TokenId, Vocabulary};

/// Tokenized classification example: input ids and the label token id.
pub type LabeledExample = (Vec<TokenId>, TokenId);

/// Step mode validates every this many steps (and at the final step); the
/// epoch-mode analogue validates after every epoch.
pub const STEP_VALIDATION_INTERVAL: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Validate after each epoch.
    Epochs(usize),
    /// Fixed number of optimizer steps; validate every
    /// [`STEP_VALIDATION_INTERVAL`] steps.
    Steps(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    pub prompt_length: usize,
    pub schedule: Schedule,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Validation subsamples to min(this, |val|) examples.
    pub val_subset_size: usize,
    /// Resample the validation subset at every validation point instead of
    /// fixing it once per run.
    pub resample_validation: bool,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            prompt_length: 10,
            schedule: Schedule::Epochs(20),
            learning_rate: 0.1,
            weight_decay: 1e-5,
            batch_size: 4,
            optimizer: OptimizerKind::Adam,
            val_subset_size: 500,
            resample_validation: false,
            dropout_rate: 0.0,
            seed: 0,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<(), TuneError> {
        if self.prompt_length == 0 {
            return Err(TuneError::InvalidConfig("prompt_length must be >= 1".into()));
        }
        match self.schedule {
            Schedule::Epochs(0) | Schedule::Steps(0) => {
                return Err(TuneError::InvalidConfig("schedule must cover at least one unit".into()))
            }
            _ => {}
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(TuneError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(TuneError::InvalidConfig("weight_decay must be nonnegative".into()));
        }
        if self.batch_size == 0 {
            return Err(TuneError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout_rate) {
            return Err(TuneError::InvalidConfig("dropout_rate must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Initialize a soft prompt from `p` distinct embedding rows drawn uniformly
/// without replacement from the `min(5000, vocab)` most frequent tokens.
pub fn init_prompt(
    embedding: &Array2<f64>,
    vocab: &Vocabulary,
    p: usize,
    seed: u64,
) -> Result<SoftPrompt, TuneError> {
    let k = vocab.len().min(5000);
    if p > k {
        return Err(TuneError::PromptLongerThanVocabulary { p, k });
    }
    if embedding.nrows() != vocab.len() {
        return Err(TuneError::ShapeMismatch {
            expected: (vocab.len(), embedding.ncols()),
            got: embedding.dim(),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let ranks = rand::seq::index::sample(&mut rng, k, p);
    let mut rows = Array2::zeros((p, embedding.ncols()));
    for (slot, rank) in ranks.iter().enumerate() {
        let id = vocab.id_at_rank(rank);
        rows.row_mut(slot).assign(&embedding.row(id));
    }
    Ok(SoftPrompt::new(rows)?)
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub prompt: SoftPrompt,
    /// Zero-based epoch index, or step count in step mode.
    pub index: usize,
    pub val_loss: f64,
}

#[derive(Debug)]
pub struct TuneOutcome {
    pub best: Checkpoint,
    /// Validation loss at each validation point, in order.
    pub history: Vec<f64>,
    /// Validation loss of the initial prompt, before any update.
    pub initial_val_loss: Option<f64>,
    pub warnings: Vec<String>,
}

/// Earliest index attaining the minimum. `[0.9, 0.4, 0.4, 0.7]` -> 1.
pub(crate) fn argmin_earliest(losses: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &l) in losses.iter().enumerate() {
        if best.is_none_or(|(_, b)| l < b) {
            best = Some((i, l));
        }
    }
    best.map(|(i, _)| i)
}

/// Mean label cross-entropy over `set` in inference mode.
fn eval_loss(
    backend: &dyn LmBackend,
    prompt: &SoftPrompt,
    set: &[&LabeledExample],
) -> Result<f64, TuneError> {
    let mut total = 0.0;
    for (ids, label) in set.iter().copied() {
        let logits = backend.final_logits(Some(prompt), ids)?;
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        total += lse - logits[*label];
    }
    Ok(total / set.len() as f64)
}

enum OptState {
    Adam(AdamState),
    Adafactor(AdafactorState),
}

impl OptState {
    fn apply(
        &mut self,
        prompt: &mut SoftPrompt,
        grad: &Array2<f64>,
        cfg: &TuneConfig,
    ) -> Result<(), TuneError> {
        match self {
            OptState::Adam(s) => adam_step(s, prompt, grad, cfg.learning_rate, cfg.weight_decay),
            OptState::Adafactor(s) => {
                adafactor_step(s, prompt, grad, cfg.learning_rate)?;
                // Adafactor itself carries no decay term; honor a nonzero
                // config value with the same decoupled rescaling Adam uses.
                if cfg.weight_decay > 0.0 {
                    prompt
                        .rows_mut()
                        .mapv_inplace(|w| w - cfg.learning_rate * cfg.weight_decay * w);
                }
                Ok(())
            }
        }
    }
}

/// Train `init` against the frozen backend. All randomness (shuffles,
/// validation subsampling, dropout masks) derives from `config.seed`.
///
/// With an empty validation set the run cannot rank checkpoints; it returns
/// the final prompt, scores it on a training subsample instead, and records
/// a warning.
pub fn tune(
    backend: &dyn LmBackend,
    train: &[LabeledExample],
    val: &[LabeledExample],
    init: SoftPrompt,
    config: &TuneConfig,
) -> Result<TuneOutcome, TuneError> {
    config.validate()?;
    if train.is_empty() {
        return Err(TuneError::EmptyTrainSet);
    }

    let mut shuffle_rng = ChaCha12Rng::seed_from_u64(config.seed ^ 0x53_48_55_46); // "SHUF"
    let mut val_rng = ChaCha12Rng::seed_from_u64(config.seed ^ 0x56_41_4c_53); // "VALS"
    let mut dropout_rng = ChaCha12Rng::seed_from_u64(config.seed ^ 0x44_52_4f_50); // "DROP"

    let mut warnings = Vec::new();
    let fixed_val_subset: Option<Vec<&LabeledExample>> = if val.is_empty() {
        warnings.push(
            "validation set is empty: falling back to the final checkpoint, \
             scored on a training subsample"
                .to_string(),
        );
        None
    } else if config.resample_validation {
        None
    } else {
        Some(sample_subset(val, config.val_subset_size, &mut val_rng))
    };
    let validate = |prompt: &SoftPrompt, val_rng: &mut ChaCha12Rng| -> Result<Option<f64>, TuneError> {
        if val.is_empty() {
            return Ok(None);
        }
        let subset = match &fixed_val_subset {
            Some(s) => s.clone(),
            None => sample_subset(val, config.val_subset_size, val_rng),
        };
        Ok(Some(eval_loss(backend, prompt, &subset)?))
    };

    let mut prompt = init;
    let initial_val_loss = validate(&prompt, &mut val_rng)?;

    let mut opt = match config.optimizer {
        OptimizerKind::Adam => OptState::Adam(AdamState::new(prompt.len(), prompt.dim())),
        OptimizerKind::Adafactor => {
            OptState::Adafactor(AdafactorState::new(prompt.len(), prompt.dim()))
        }
    };

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    // (validation point index units, prompt snapshot)
    let mut checkpoints: Vec<(usize, SoftPrompt)> = Vec::new();

    let run_batch = |prompt: &mut SoftPrompt,
                         opt: &mut OptState,
                         idxs: &[usize],
                         dropout_rng: &mut ChaCha12Rng|
     -> Result<(), TuneError> {
        let batch: Vec<LabeledExample> = idxs.iter().map(|&i| train[i].clone()).collect();
        let dropout = (config.dropout_rate > 0.0).then(|| Dropout {
            rate: config.dropout_rate,
            seed: dropout_rng.random::<u64>(),
        });
        let (loss, grad) = backend.loss_and_prompt_grad(prompt, &batch, dropout)?;
        if !loss.is_finite() {
            return Err(TuneError::Lm(crate::lm::LmError::NonFiniteLoss { step: None }));
        }
        opt.apply(prompt, &grad, config)
    };

    match config.schedule {
        Schedule::Epochs(epochs) => {
            for epoch in 0..epochs {
                order.shuffle(&mut shuffle_rng);
                for chunk in order.chunks(config.batch_size) {
                    run_batch(&mut prompt, &mut opt, chunk, &mut dropout_rng)?;
                }
                if let Some(loss) = validate(&prompt, &mut val_rng)? {
                    history.push(loss);
                    checkpoints.push((epoch, prompt.clone()));
                }
            }
        }
        Schedule::Steps(total_steps) => {
            let mut step = 0usize;
            'outer: loop {
                order.shuffle(&mut shuffle_rng);
                for chunk in order.chunks(config.batch_size) {
                    run_batch(&mut prompt, &mut opt, chunk, &mut dropout_rng)?;
                    step += 1;
                    if step.is_multiple_of(STEP_VALIDATION_INTERVAL) || step == total_steps {
                        if let Some(loss) = validate(&prompt, &mut val_rng)? {
                            history.push(loss);
                            checkpoints.push((step, prompt.clone()));
                        }
                    }
                    if step == total_steps {
                        break 'outer;
                    }
                }
            }
        }
    }

    let best = match argmin_earliest(&history) {
        Some(i) => {
            let (index, snapshot) = checkpoints[i].clone();
            Checkpoint {
                prompt: snapshot,
                index,
                val_loss: history[i],
            }
        }
        None => {
            // empty validation set: final prompt, scored on training data
            let subset = sample_subset(train, config.val_subset_size, &mut val_rng);
            let loss = eval_loss(backend, &prompt, &subset)?;
            let index = match config.schedule {
                Schedule::Epochs(e) => e.saturating_sub(1),
                Schedule::Steps(s) => s,
            };
            Checkpoint {
                prompt,
                index,
                val_loss: loss,
            }
        }
    };

    Ok(TuneOutcome {
        best,
        history,
        initial_val_loss,
        warnings,
    })
}

fn sample_subset<'a>(
    set: &'a [LabeledExample],
    size: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<&'a LabeledExample> {
    let n = size.min(set.len());
    rand::seq::index::sample(rng, set.len(), n)
        .iter()
        .map(|i| &set[i])
        .collect()
}
