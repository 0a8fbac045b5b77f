use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cell::LstmState;
use super::optim::AdamState;
use super::params::{LstmParams, ModelDims, Scalar};
use super::{LstmError, TrainConfig};
use crate::windowing::CharVocab;

pub const CHECKPOINT_FORMAT: &str = "synthdoc-lstm";
pub(crate) const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing JSON checkpoint. Matrices are stored row-major as
/// `{"v": 1, "dim": [rows, cols], "data": [...]}` in the declared precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Checkpoint<T> {
    pub format: String,
    pub version: u32,
    pub precision: String,
    pub dims: ModelDims,
    pub vocab: CharVocab,
    pub config: TrainConfig,
    pub step: u64,
    pub params: LstmParams<T>,
    pub optimizer: AdamState<T>,
    /// Recurrent state of every training stream at `step`.
    pub carried_state: LstmState<T>,
    pub losses: Vec<f64>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn validate(&self) -> Result<(), LstmError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(LstmError::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(LstmError::Checkpoint(format!("unsupported version {}", self.version)));
        }
        if self.precision != T::PRECISION {
            return Err(LstmError::Checkpoint(format!(
                "stored as {}, loaded as {}",
                self.precision,
                T::PRECISION
            )));
        }
        self.params.check_shapes()?;
        if self.params.dims() != self.dims || self.dims.vocab != self.vocab.len() {
            return Err(LstmError::Checkpoint("dimensions disagree with stored weights".into()));
        }
        if self.optimizer.t != self.step {
            return Err(LstmError::Checkpoint("optimizer step disagrees with step count".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), LstmError> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, self)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LstmError> {
        let ckpt: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        ckpt.validate()?;
        Ok(ckpt)
    }
}
