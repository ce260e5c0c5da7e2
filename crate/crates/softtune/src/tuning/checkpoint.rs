//! On-disk formats for tuned prompts and run manifests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Checkpoint, TuneConfig, TuneError, TuneOutcome};
use crate::lm::{LmError, SoftPrompt};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// A tuned prompt bound to the frozen model it was trained against.
/// Loading verifies the fingerprint so a prompt can never silently run on
/// different weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptCheckpoint {
    pub format_version: u32,
    pub model_fingerprint: String,
    pub seed: u64,
    /// Epoch index (or step count in step mode) of the snapshot.
    pub index: usize,
    pub val_loss: f64,
    pub prompt: SoftPrompt,
}

impl PromptCheckpoint {
    pub fn from_checkpoint(ckpt: &Checkpoint, model_fingerprint: &str, seed: u64) -> Self {
        PromptCheckpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model_fingerprint: model_fingerprint.to_string(),
            seed,
            index: ckpt.index,
            val_loss: ckpt.val_loss,
            prompt: ckpt.prompt.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), TuneError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|source| TuneError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Load and verify against the fingerprint of the backend about to use
    /// the prompt.
    pub fn load(path: &Path, expected_fingerprint: &str) -> Result<Self, TuneError> {
        let bytes = std::fs::read(path).map_err(|source| TuneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let ckpt: PromptCheckpoint = serde_json::from_slice(&bytes)?;
        if ckpt.model_fingerprint != expected_fingerprint {
            return Err(TuneError::Lm(LmError::FingerprintMismatch {
                expected: ckpt.model_fingerprint,
                got: expected_fingerprint.to_string(),
            }));
        }
        Ok(ckpt)
    }
}

/// Everything needed to reproduce (and audit) a tuning run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub library_version: String,
    pub config: TuneConfig,
    pub per_point_val_losses: Vec<f64>,
    pub initial_val_loss: Option<f64>,
    pub best_index: usize,
    pub best_val_loss: f64,
    pub warnings: Vec<String>,
    /// Fixed optimizer constants the config does not expose, recorded so a
    /// manifest fully determines the run.
    pub optimizer_constants: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(config: &TuneConfig, outcome: &TuneOutcome) -> Self {
        let mut constants = BTreeMap::new();
        constants.insert("adam_beta1".to_string(), 0.9);
        constants.insert("adam_beta2".to_string(), 0.999);
        constants.insert("adam_eps".to_string(), 1e-8);
        constants.insert(
            "adafactor_decay_exponent".to_string(),
            super::ADAFACTOR_DECAY_EXPONENT,
        );
        constants.insert(
            "adafactor_clip_threshold".to_string(),
            super::ADAFACTOR_CLIP_THRESHOLD,
        );
        constants.insert("adafactor_eps1".to_string(), super::ADAFACTOR_EPS1);
        RunManifest {
            library_version: crate::VERSION.to_string(),
            config: config.clone(),
            per_point_val_losses: outcome.history.clone(),
            initial_val_loss: outcome.initial_val_loss,
            best_index: outcome.best.index,
            best_val_loss: outcome.best.val_loss,
            warnings: outcome.warnings.clone(),
            optimizer_constants: constants,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), TuneError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|source| TuneError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn checkpoint() -> Checkpoint {
        Checkpoint {
            prompt: SoftPrompt::new(Array2::from_elem((2, 3), 0.5)).unwrap(),
            index: 4,
            val_loss: 0.25,
        }
    }

    #[test]
    fn checkpoint_round_trips_and_verifies_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prompt.json");
        let pc = PromptCheckpoint::from_checkpoint(&checkpoint(), "abc123", 7);
        pc.save(&path).unwrap();
        let loaded = PromptCheckpoint::load(&path, "abc123").unwrap();
        assert_eq!(loaded.prompt, pc.prompt);
        assert_eq!(loaded.index, 4);
        assert!(matches!(
            PromptCheckpoint::load(&path, "different"),
            Err(TuneError::Lm(LmError::FingerprintMismatch { .. }))
        ));
    }

    #[test]
    fn manifest_records_optimizer_constants() {
        let outcome = TuneOutcome {
            best: checkpoint(),
            history: vec![0.5, 0.25],
            initial_val_loss: Some(0.9),
            warnings: vec![],
        };
        let m = RunManifest::new(&TuneConfig::default(), &outcome);
        assert_eq!(m.best_index, 4);
        assert!(m.optimizer_constants.contains_key("adafactor_clip_threshold"));
        let json = serde_json::to_string(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back.per_point_val_losses, m.per_point_val_losses);
    }
}
