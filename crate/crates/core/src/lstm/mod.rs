//! Character-level multi-layer LSTM language model.
//!
//! Gate layout inside every `4H` block is input, forget, output, candidate.
//! Training uses truncated backpropagation through time over `seq_length`
//! windows of `batch_size` parallel streams, elementwise gradient clamping and
//! an adaptive-moment optimizer. The recurrent state is zeroed after every EOF
//! input so each document starts from the same zero state generation starts from.

mod cell;
mod checkpoint;
mod gradcheck;
mod optim;
mod params;
mod sample;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cell::{
    forward_sequence, forward_step, loss, loss_and_grad, softmax, step_batch, Batch, CellState,
    LstmState,
};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use optim::{clip_elementwise, AdamState};
pub use params::{LayerParams, LstmParams, ModelDims, Scalar};
pub use sample::{greedy_accuracy, sample, Sample, Sampler};
pub use train::{train, train_step, TrainReport, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub layers: usize,
    pub hidden: usize,
    /// Defaults to `hidden` when `None`.
    pub embed_dim: Option<usize>,
    pub seq_length: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Gradients are clamped to `[-grad_clip, grad_clip]`.
    pub grad_clip: f64,
    pub epochs: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden: 512,
            embed_dim: None,
            seq_length: 50,
            batch_size: 50,
            learning_rate: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            grad_clip: 5.0,
            epochs: 50,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn embed_dim(&self) -> usize {
        self.embed_dim.unwrap_or(self.hidden)
    }

    pub fn dims(&self, vocab_size: usize) -> ModelDims {
        ModelDims {
            vocab: vocab_size,
            embed: self.embed_dim(),
            hidden: self.hidden,
            layers: self.layers,
        }
    }

    pub fn validate(&self) -> Result<(), LstmError> {
        let positive = [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("embed_dim", self.embed_dim()),
            ("seq_length", self.seq_length),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(LstmError::Config(format!("{name} must be positive")));
            }
        }
        let rates = [
            ("learning_rate", self.learning_rate),
            ("epsilon", self.epsilon),
            ("grad_clip", self.grad_clip),
        ];
        for (name, value) in rates {
            if !(value > 0.0 && value.is_finite()) {
                return Err(LstmError::Config(format!("{name} must be positive")));
            }
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(LstmError::Config(format!("{name} must be in [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub temperature: f64,
    pub max_len: usize,
    pub rng_seed: u64,
    pub greedy: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_len: 20_000,
            rng_seed: 0,
            greedy: false,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<(), LstmError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(LstmError::Config("temperature must be positive".into()));
        }
        if self.max_len == 0 {
            return Err(LstmError::Config("max_len must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LstmError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {what} at step {step} in block {block}")]
    NonFinite {
        step: u64,
        block: String,
        what: &'static str,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
