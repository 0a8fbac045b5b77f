use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cell::{loss_and_grad, Batch, LstmState};
use super::checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
use super::optim::{clip_elementwise, AdamState};
use super::params::{LstmParams, Scalar};
use super::{LstmError, TrainConfig};
use crate::windowing::{build_char_vocab, CharVocab, TrainingSequence};

/// One optimizer step: BPTT over `batch` starting from `state`, elementwise
/// clipping, then an adaptive-moment update. Returns the pre-update batch loss
/// and the recurrent state to carry into the next window.
pub fn train_step<T: Scalar>(
    params: &mut LstmParams<T>,
    batch: &Batch,
    state: &LstmState<T>,
    adam: &mut AdamState<T>,
    cfg: &TrainConfig,
    eof: Option<usize>,
) -> Result<(f64, LstmState<T>), LstmError> {
    let step = adam.t + 1;
    let (loss, mut grads, next) = loss_and_grad(params, batch, state, eof)?;
    if !loss.is_finite() {
        return Err(LstmError::NonFinite { step, block: "loss".into(), what: "loss" });
    }
    if let Some(block) = grads.first_non_finite() {
        return Err(LstmError::NonFinite { step, block, what: "gradient" });
    }
    clip_elementwise(&mut grads, cfg.grad_clip);
    adam.update(params, &grads, cfg);
    if let Some(block) = params.first_non_finite() {
        return Err(LstmError::NonFinite { step, block, what: "parameter" });
    }
    Ok((loss, next))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Pre-update loss of every step.
    pub losses: Vec<f64>,
    pub windows_per_epoch: usize,
}

impl TrainReport {
    fn epoch_mean(&self, epoch: usize) -> Option<f64> {
        let w = self.windows_per_epoch;
        let slice = self.losses.get(epoch * w..(epoch + 1) * w)?;
        Some(slice.iter().sum::<f64>() / w as f64)
    }

    pub fn first_epoch_loss(&self) -> Option<f64> {
        self.epoch_mean(0)
    }

    pub fn last_epoch_loss(&self) -> Option<f64> {
        let epochs = self.losses.len() / self.windows_per_epoch.max(1);
        self.epoch_mean(epochs.checked_sub(1)?)
    }
}

/// Stateful training loop over one encoded sequence.
///
/// The sequence is cut into `min(batch_size, (n - 1) / seq_length)` contiguous
/// streams of equal length (a multiple of `seq_length`; the tail is dropped).
/// Each step consumes the next window of every stream and carries the
/// recurrent state forward; the state is reset at every epoch start.
pub struct Trainer<T: Scalar> {
    cfg: TrainConfig,
    vocab: CharVocab,
    params: LstmParams<T>,
    adam: AdamState<T>,
    streams: Vec<Vec<usize>>,
    windows_per_epoch: usize,
    state: LstmState<T>,
    losses: Vec<f64>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(vocab: CharVocab, data: &[usize], cfg: TrainConfig) -> Result<Self, LstmError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let params = LstmParams::init(cfg.dims(vocab.len()), &mut rng);
        Self::with_params(vocab, data, cfg, params)
    }

    pub fn with_params(
        vocab: CharVocab,
        data: &[usize],
        cfg: TrainConfig,
        params: LstmParams<T>,
    ) -> Result<Self, LstmError> {
        cfg.validate()?;
        params.check_shapes()?;
        if params.dims() != cfg.dims(vocab.len()) {
            return Err(LstmError::Shape("parameters do not match config and vocabulary".into()));
        }
        if let Some(&bad) = data.iter().find(|&&i| i >= vocab.len()) {
            return Err(LstmError::Shape(format!("symbol {bad} outside vocabulary")));
        }
        let predictions = data.len().saturating_sub(1);
        if predictions < cfg.seq_length {
            return Err(LstmError::Config(format!(
                "seq_length {} exceeds the {} predictable characters of the training text",
                cfg.seq_length, predictions
            )));
        }
        let n_streams = cfg.batch_size.min(predictions / cfg.seq_length);
        let stream_len = predictions / n_streams / cfg.seq_length * cfg.seq_length;
        let streams = (0..n_streams)
            .map(|k| data[k * stream_len..=(k + 1) * stream_len].to_vec())
            .collect();
        let state = LstmState::zeros(params.dims(), n_streams);
        Ok(Self {
            adam: AdamState::new(&params),
            windows_per_epoch: stream_len / cfg.seq_length,
            cfg,
            vocab,
            params,
            streams,
            state,
            losses: Vec::new(),
        })
    }

    /// Restores a run from a checkpoint taken on the same data.
    pub fn resume(checkpoint: Checkpoint<T>, data: &[usize]) -> Result<Self, LstmError> {
        checkpoint.validate()?;
        let mut trainer = Self::with_params(
            checkpoint.vocab,
            data,
            checkpoint.config,
            checkpoint.params,
        )?;
        if checkpoint.carried_state.batch() != trainer.streams.len() {
            return Err(LstmError::Checkpoint("carried state does not match data layout".into()));
        }
        trainer.adam = checkpoint.optimizer;
        trainer.state = checkpoint.carried_state;
        trainer.losses = checkpoint.losses;
        Ok(trainer)
    }

    pub fn params(&self) -> &LstmParams<T> {
        &self.params
    }

    pub fn into_params(self) -> LstmParams<T> {
        self.params
    }

    pub fn vocab(&self) -> &CharVocab {
        &self.vocab
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn steps_done(&self) -> u64 {
        self.adam.t
    }

    pub fn windows_per_epoch(&self) -> usize {
        self.windows_per_epoch
    }

    pub fn streams(&self) -> usize {
        self.streams.len()
    }

    pub fn total_steps(&self) -> u64 {
        (self.cfg.epochs * self.windows_per_epoch) as u64
    }

    pub fn is_finished(&self) -> bool {
        self.steps_done() >= self.total_steps()
    }

    pub fn report(&self) -> TrainReport {
        TrainReport {
            losses: self.losses.clone(),
            windows_per_epoch: self.windows_per_epoch,
        }
    }

    fn batch_at(&self, window: usize) -> Batch {
        let t = self.cfg.seq_length;
        let range = window * t..(window + 1) * t;
        Batch {
            inputs: self.streams.iter().map(|s| s[range.clone()].to_vec()).collect(),
            targets: self
                .streams
                .iter()
                .map(|s| s[range.start + 1..range.end + 1].to_vec())
                .collect(),
        }
    }

    /// Runs the next window; returns its pre-update loss.
    pub fn step(&mut self) -> Result<f64, LstmError> {
        let window = (self.steps_done() % self.windows_per_epoch as u64) as usize;
        if window == 0 {
            self.state = LstmState::zeros(self.params.dims(), self.streams.len());
        }
        let batch = self.batch_at(window);
        let eof = Some(self.vocab.eof());
        let (loss, next) = train_step(&mut self.params, &batch, &self.state, &mut self.adam, &self.cfg, eof)?;
        self.state = next;
        self.losses.push(loss);
        let step = self.steps_done();
        if step.is_multiple_of(self.windows_per_epoch as u64) {
            log::info!(
                "epoch {}/{} step {step} loss {loss:.4}",
                step / self.windows_per_epoch as u64,
                self.cfg.epochs
            );
        }
        Ok(loss)
    }

    /// Trains to the end of the epoch budget, calling `on_checkpoint` every
    /// `checkpoint_every` steps (if set) and once at the end.
    pub fn run<F>(&mut self, checkpoint_every: Option<u64>, mut on_checkpoint: F) -> Result<(), LstmError>
    where
        F: FnMut(&Self) -> Result<(), LstmError>,
    {
        while !self.is_finished() {
            self.step()?;
            if checkpoint_every.is_some_and(|n| n > 0 && self.steps_done().is_multiple_of(n)) {
                on_checkpoint(self)?;
            }
        }
        on_checkpoint(self)
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            precision: T::PRECISION.to_string(),
            dims: self.params.dims(),
            vocab: self.vocab.clone(),
            config: self.cfg.clone(),
            step: self.steps_done(),
            params: self.params.clone(),
            optimizer: self.adam.clone(),
            carried_state: self.state.clone(),
            losses: self.losses.clone(),
        }
    }
}

/// Trains a fresh model on one query's sequence for the full epoch budget.
pub fn train<T: Scalar>(
    seq: &TrainingSequence,
    cfg: &TrainConfig,
) -> Result<(LstmParams<T>, CharVocab, TrainReport), LstmError> {
    let vocab = build_char_vocab(seq).map_err(|e| LstmError::Config(e.to_string()))?;
    let data = vocab
        .encode(&seq.chars)
        .map_err(|e| LstmError::Config(e.to_string()))?;
    let mut trainer = Trainer::<T>::new(vocab, &data, cfg.clone())?;
    trainer.run(None, |_| Ok(()))?;
    let report = trainer.report();
    let vocab = trainer.vocab().clone();
    Ok((trainer.into_params(), vocab, report))
}
