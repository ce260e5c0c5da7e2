use serde::{Deserialize, Serialize};

use super::LmError;

/// Architecture of the toy decoder-only model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_context: usize,
    pub dropout_rate: f64,
}

impl ModelConfig {
    /// Default desk-scale configuration: big enough to learn marker-token
    /// tasks, small enough for second-scale tests.
    pub fn toy(vocab_size: usize) -> Self {
        ModelConfig {
            d_model: 64,
            n_layers: 4,
            n_heads: 4,
            d_ff: 256,
            vocab_size,
            max_context: 256,
            dropout_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), LmError> {
        if self.d_model == 0
            || self.n_layers == 0
            || self.n_heads == 0
            || self.d_ff == 0
            || self.vocab_size == 0
            || self.max_context == 0
        {
            return Err(LmError::InvalidConfig("all counts must be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(LmError::InvalidConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..=1.0).contains(&self.dropout_rate) {
            return Err(LmError::InvalidConfig(format!(
                "dropout_rate {} outside [0, 1]",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}
