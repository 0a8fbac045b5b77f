use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cell::{forward_sequence, forward_step, softmax, LstmState};
use super::params::{LstmParams, Scalar};
use super::{LstmError, SampleConfig};
use crate::windowing::CharVocab;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    /// Generated text, EOF excluded.
    pub text: String,
    /// False when generation stopped at `max_len`.
    pub hit_eof: bool,
}

/// Temperature sampler over a single stream.
pub struct Sampler<'a, T: Scalar> {
    params: &'a LstmParams<T>,
    state: LstmState<T>,
    rng: ChaCha8Rng,
    cfg: SampleConfig,
}

impl<'a, T: Scalar> Sampler<'a, T> {
    pub fn new(params: &'a LstmParams<T>, cfg: SampleConfig) -> Result<Self, LstmError> {
        cfg.validate()?;
        params.check_shapes()?;
        Ok(Self {
            params,
            state: LstmState::zeros(params.dims(), 1),
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            cfg,
        })
    }

    /// Feeds `input` and returns the next-symbol distribution at the
    /// configured temperature.
    pub fn feed(&mut self, input: usize) -> Result<Vec<f64>, LstmError> {
        let (logits, next) = forward_step(self.params, input, &self.state)?;
        self.state = next;
        let tau = self.cfg.temperature;
        let scaled: Vec<f64> = logits
            .iter()
            .map(|z| z.to_f64().expect("float") / tau)
            .collect();
        Ok(softmax(&scaled))
    }

    /// Draws an index from `probs`, or takes the argmax in greedy mode.
    pub fn choose(&mut self, probs: &[f64]) -> usize {
        if self.cfg.greedy {
            return argmax(probs);
        }
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // rounding left u above the final partial sum
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
    }

    pub fn uniform(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Generates one document from the zero state: the first character is drawn
/// uniformly from the non-EOF symbols, then characters are drawn until EOF or
/// `max_len` characters have been produced.
pub fn sample<T: Scalar>(
    params: &LstmParams<T>,
    vocab: &CharVocab,
    cfg: &SampleConfig,
) -> Result<Sample, LstmError> {
    if params.dims().vocab != vocab.len() {
        return Err(LstmError::Shape("model and char vocabulary disagree".into()));
    }
    let eof = vocab.eof();
    if eof == 0 {
        return Ok(Sample { text: String::new(), hit_eof: true });
    }
    let mut sampler = Sampler::new(params, cfg.clone())?;
    let mut current = sampler.uniform(eof);
    let mut text = String::new();
    text.push(vocab.char_at(current).expect("index below eof"));
    let mut produced = 1;
    while produced < cfg.max_len {
        let probs = sampler.feed(current)?;
        let next = sampler.choose(&probs);
        if next == eof {
            return Ok(Sample { text, hit_eof: true });
        }
        text.push(vocab.char_at(next).expect("index inside vocab"));
        produced += 1;
        current = next;
    }
    Ok(Sample { text, hit_eof: false })
}

/// Fraction of positions where the teacher-forced argmax prediction equals
/// the next symbol of `seq`.
pub fn greedy_accuracy<T: Scalar>(
    params: &LstmParams<T>,
    seq: &[usize],
    eof: Option<usize>,
) -> Result<f64, LstmError> {
    if seq.len() < 2 {
        return Err(LstmError::Shape("need at least two symbols".into()));
    }
    let logits = forward_sequence(params, &seq[..seq.len() - 1], eof)?;
    let hits = logits
        .iter()
        .zip(&seq[1..])
        .filter(|(z, &target)| {
            let z: Vec<f64> = z.iter().map(|x| x.to_f64().expect("float")).collect();
            argmax(&z) == target
        })
        .count();
    Ok(hits as f64 / (seq.len() - 1) as f64)
}
