//! Model parameters and their serialized container.
//!
//! Weights are plain `ndarray` matrices in f64. After `pretrain_toy` they
//! are frozen: the tuning loop never touches them, and tests compare
//! bit-level snapshots to prove it.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LmError, ModelConfig, Vocabulary};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    pub w_ff1: Array2<f64>,
    pub b_ff1: Array1<f64>,
    pub w_ff2: Array2<f64>,
    pub b_ff2: Array1<f64>,
}

/// All transformer parameters. The output projection is tied to the input
/// embedding matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    pub config: ModelConfig,
    /// vocab_size x d_model; also the tied output projection.
    pub embedding: Array2<f64>,
    /// max_context x d_model learned position table.
    pub position: Array2<f64>,
    pub layers: Vec<LayerWeights>,
    pub ln_f_gain: Array1<f64>,
    pub ln_f_bias: Array1<f64>,
}

impl ModelWeights {
    pub fn random_init(config: &ModelConfig, seed: u64) -> Result<Self, LmError> {
        config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let d = config.d_model;
        let mut mat = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| normal.sample(&mut rng))
        };
        let embedding = mat(config.vocab_size, d);
        let position = mat(config.max_context, d);
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            layers.push(LayerWeights {
                ln1_gain: Array1::ones(d),
                ln1_bias: Array1::zeros(d),
                wq: mat(d, d),
                wk: mat(d, d),
                wv: mat(d, d),
                wo: mat(d, d),
                ln2_gain: Array1::ones(d),
                ln2_bias: Array1::zeros(d),
                w_ff1: mat(d, config.d_ff),
                b_ff1: Array1::zeros(config.d_ff),
                w_ff2: mat(config.d_ff, d),
                b_ff2: Array1::zeros(d),
            });
        }
        Ok(ModelWeights {
            config: config.clone(),
            embedding,
            position,
            layers,
            ln_f_gain: Array1::ones(d),
            ln_f_bias: Array1::zeros(d),
        })
    }

    /// Same shapes, every entry zero. Used as the gradient and optimizer
    /// state container during pretraining.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for mut t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// All parameter tensors in a fixed order. The order is part of the
    /// reproducibility contract for optimizer updates.
    pub fn tensors(&self) -> Vec<ArrayViewD<'_, f64>> {
        let mut v: Vec<ArrayViewD<'_, f64>> =
            vec![self.embedding.view().into_dyn(), self.position.view().into_dyn()];
        for l in &self.layers {
            v.push(l.ln1_gain.view().into_dyn());
            v.push(l.ln1_bias.view().into_dyn());
            v.push(l.wq.view().into_dyn());
            v.push(l.wk.view().into_dyn());
            v.push(l.wv.view().into_dyn());
            v.push(l.wo.view().into_dyn());
            v.push(l.ln2_gain.view().into_dyn());
            v.push(l.ln2_bias.view().into_dyn());
            v.push(l.w_ff1.view().into_dyn());
            v.push(l.b_ff1.view().into_dyn());
            v.push(l.w_ff2.view().into_dyn());
            v.push(l.b_ff2.view().into_dyn());
        }
        v.push(self.ln_f_gain.view().into_dyn());
        v.push(self.ln_f_bias.view().into_dyn());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut v: Vec<ArrayViewMutD<'_, f64>> = vec![
            self.embedding.view_mut().into_dyn(),
            self.position.view_mut().into_dyn(),
        ];
        for l in &mut self.layers {
            v.push(l.ln1_gain.view_mut().into_dyn());
            v.push(l.ln1_bias.view_mut().into_dyn());
            v.push(l.wq.view_mut().into_dyn());
            v.push(l.wk.view_mut().into_dyn());
            v.push(l.wv.view_mut().into_dyn());
            v.push(l.wo.view_mut().into_dyn());
            v.push(l.ln2_gain.view_mut().into_dyn());
            v.push(l.ln2_bias.view_mut().into_dyn());
            v.push(l.w_ff1.view_mut().into_dyn());
            v.push(l.b_ff1.view_mut().into_dyn());
            v.push(l.w_ff2.view_mut().into_dyn());
            v.push(l.b_ff2.view_mut().into_dyn());
        }
        v.push(self.ln_f_gain.view_mut().into_dyn());
        v.push(self.ln_f_bias.view_mut().into_dyn());
        v
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Exact bit-level equality, the frozen-weight invariant check.
    pub fn bit_identical(&self, other: &Self) -> bool {
        if self.config != other.config {
            return false;
        }
        self.tensors()
            .iter()
            .zip(other.tensors())
            .all(|(a, b)| {
                a.len() == b.len()
                    && a.iter()
                        .zip(b.iter())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    pub fn validate(&self) -> Result<(), LmError> {
        self.config.validate()?;
        let d = self.config.d_model;
        let checks: &[(&str, bool)] = &[
            (
                "embedding",
                self.embedding.dim() == (self.config.vocab_size, d),
            ),
            (
                "position",
                self.position.dim() == (self.config.max_context, d),
            ),
            ("layer count", self.layers.len() == self.config.n_layers),
            ("ln_f", self.ln_f_gain.len() == d && self.ln_f_bias.len() == d),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(LmError::ShapeMismatch(name.to_string()));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            let ok = l.ln1_gain.len() == d
                && l.ln1_bias.len() == d
                && l.wq.dim() == (d, d)
                && l.wk.dim() == (d, d)
                && l.wv.dim() == (d, d)
                && l.wo.dim() == (d, d)
                && l.ln2_gain.len() == d
                && l.ln2_bias.len() == d
                && l.w_ff1.dim() == (d, self.config.d_ff)
                && l.b_ff1.len() == self.config.d_ff
                && l.w_ff2.dim() == (self.config.d_ff, d)
                && l.b_ff2.len() == d;
            if !ok {
                return Err(LmError::ShapeMismatch(format!("layer {i}")));
            }
        }
        if !self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite())) {
            return Err(LmError::NonFinite("model weights"));
        }
        Ok(())
    }
}

/// Versioned container for frozen weights plus the vocabulary and the seed
/// that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub seed: u64,
    pub vocab: Vocabulary,
    pub weights: ModelWeights,
}

impl ModelBundle {
    pub fn new(seed: u64, vocab: Vocabulary, weights: ModelWeights) -> Result<Self, LmError> {
        let bundle = ModelBundle {
            format_version: BUNDLE_FORMAT_VERSION,
            seed,
            vocab,
            weights,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<(), LmError> {
        if self.format_version != BUNDLE_FORMAT_VERSION {
            return Err(LmError::InvalidConfig(format!(
                "unsupported bundle format version {}",
                self.format_version
            )));
        }
        self.weights.validate()?;
        if self.vocab.len() != self.weights.config.vocab_size {
            return Err(LmError::ShapeMismatch(format!(
                "vocabulary has {} tokens but config says {}",
                self.vocab.len(),
                self.weights.config.vocab_size
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), LmError> {
        let json = serde_json::to_vec(self)?;
        fs::write(path, json).map_err(|source| LmError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, LmError> {
        let bytes = fs::read(path).map_err(|source| LmError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let bundle: ModelBundle = serde_json::from_slice(&bytes)?;
        bundle.validate()?;
        Ok(bundle)
    }

    /// SHA-256 over the canonical serialized form; recorded in prompt
    /// checkpoints so they cannot silently load against another model.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("bundle serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn small_config() -> ModelConfig {
        ModelConfig {
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_ff: 16,
            vocab_size: 5,
            max_context: 12,
            dropout_rate: 0.0,
        }
    }

    fn small_vocab() -> Vocabulary {
        let mut counts = BTreeMap::new();
        for (i, w) in ["a", "b", "yes", "no"].iter().enumerate() {
            counts.insert(w.to_string(), 10 - i as u64);
        }
        Vocabulary::from_counts(&counts, &[]).unwrap()
    }

    #[test]
    fn random_init_is_deterministic_per_seed() {
        let c = small_config();
        let a = ModelWeights::random_init(&c, 3).unwrap();
        let b = ModelWeights::random_init(&c, 3).unwrap();
        assert!(a.bit_identical(&b));
        let other = ModelWeights::random_init(&c, 4).unwrap();
        assert!(!a.bit_identical(&other));
    }

    #[test]
    fn tensor_lists_cover_every_parameter() {
        let w = ModelWeights::random_init(&small_config(), 1).unwrap();
        let c = &w.config;
        let expected = c.vocab_size * c.d_model
            + c.max_context * c.d_model
            + c.n_layers
                * (2 * c.d_model
                    + 4 * c.d_model * c.d_model
                    + 2 * c.d_model
                    + c.d_model * c.d_ff
                    + c.d_ff
                    + c.d_ff * c.d_model
                    + c.d_model)
            + 2 * c.d_model;
        assert_eq!(w.param_count(), expected);
    }

    #[test]
    fn bundle_roundtrip_and_fingerprint() {
        let w = ModelWeights::random_init(&small_config(), 9).unwrap();
        let bundle = ModelBundle::new(9, small_vocab(), w).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        bundle.save(&path).unwrap();
        let loaded = ModelBundle::load(&path).unwrap();
        assert!(loaded.weights.bit_identical(&bundle.weights));
        assert_eq!(loaded.fingerprint(), bundle.fingerprint());
    }

    #[test]
    fn bundle_load_rejects_shape_violations() {
        let mut w = ModelWeights::random_init(&small_config(), 9).unwrap();
        w.config.vocab_size = 7; // embedding no longer matches
        assert!(ModelBundle::new(9, small_vocab(), w).is_err());
    }
}
