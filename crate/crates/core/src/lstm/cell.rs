use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::params::{LayerParams, LstmParams, ModelDims, Scalar};
use super::LstmError;

/// Hidden and cell vectors of one layer, one row per stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CellState<T> {
    pub h: Array2<T>,
    pub c: Array2<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LstmState<T> {
    pub layers: Vec<CellState<T>>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(dims: ModelDims, batch: usize) -> Self {
        Self {
            layers: (0..dims.layers)
                .map(|_| CellState {
                    h: Array2::zeros((batch, dims.hidden)),
                    c: Array2::zeros((batch, dims.hidden)),
                })
                .collect(),
        }
    }

    pub fn batch(&self) -> usize {
        self.layers.first().map_or(0, |l| l.h.nrows())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.h.iter().chain(l.c.iter()).all(|x| x.is_finite()))
    }

    fn matches(&self, dims: ModelDims, batch: usize) -> bool {
        self.layers.len() == dims.layers
            && self
                .layers
                .iter()
                .all(|l| l.h.dim() == (batch, dims.hidden) && l.c.dim() == (batch, dims.hidden))
    }

    /// Multiplies each stream's row by `keep` (0 resets it to the zero state).
    fn mask_rows(&mut self, keep: &Array2<T>) {
        for layer in &mut self.layers {
            layer.h *= keep;
            layer.c *= keep;
        }
    }
}

/// Parallel windows: `inputs[b][t]` predicts `targets[b][t]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub inputs: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
}

impl Batch {
    /// One stream: predict `seq[t + 1]` from `seq[..=t]`.
    pub fn from_sequence(seq: &[usize]) -> Self {
        let n = seq.len().saturating_sub(1);
        Self {
            inputs: vec![seq[..n].to_vec()],
            targets: vec![seq[1..].to_vec()],
        }
    }

    pub fn streams(&self) -> usize {
        self.inputs.len()
    }

    pub fn steps(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    fn check(&self, vocab: usize) -> Result<(), LstmError> {
        let t = self.steps();
        if self.streams() == 0 || t == 0 || self.targets.len() != self.streams() {
            return Err(LstmError::Shape("empty batch".into()));
        }
        for (inp, tgt) in self.inputs.iter().zip(&self.targets) {
            if inp.len() != t || tgt.len() != t {
                return Err(LstmError::Shape("ragged batch".into()));
            }
            if let Some(&bad) = inp.iter().chain(tgt).find(|&&i| i >= vocab) {
                return Err(LstmError::Shape(format!("symbol {bad} outside vocabulary of {vocab}")));
            }
        }
        Ok(())
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Activations of one layer at one step, kept for the backward pass.
struct LayerCache<T> {
    x: Array2<T>,
    h_prev: Array2<T>,
    c_prev: Array2<T>,
    i: Array2<T>,
    f: Array2<T>,
    o: Array2<T>,
    g: Array2<T>,
    tanh_c: Array2<T>,
}

fn layer_forward<T: Scalar>(
    layer: &LayerParams<T>,
    x: Array2<T>,
    prev: &CellState<T>,
) -> (CellState<T>, LayerCache<T>) {
    let hidden = prev.h.ncols();
    let mut a = x.dot(&layer.w.t());
    a += &prev.h.dot(&layer.u.t());
    a += &layer.b;
    let i = a.slice(s![.., 0..hidden]).mapv(sigmoid);
    let f = a.slice(s![.., hidden..2 * hidden]).mapv(sigmoid);
    let o = a.slice(s![.., 2 * hidden..3 * hidden]).mapv(sigmoid);
    let g = a.slice(s![.., 3 * hidden..]).mapv(T::tanh);
    let c = &f * &prev.c + &i * &g;
    let tanh_c = c.mapv(T::tanh);
    let h = &o * &tanh_c;
    let cache = LayerCache {
        x,
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        i,
        f,
        o,
        g,
        tanh_c,
    };
    (CellState { h, c }, cache)
}

fn embed<T: Scalar>(params: &LstmParams<T>, inputs: impl Iterator<Item = usize>) -> Array2<T> {
    let rows: Vec<_> = inputs.map(|i| params.embedding.row(i)).collect();
    ndarray::stack(Axis(0), &rows).expect("embedding rows share a width")
}

fn project<T: Scalar>(params: &LstmParams<T>, h: ArrayView2<T>) -> Array2<T> {
    let mut logits = h.dot(&params.proj.t());
    logits += &params.proj_bias;
    logits
}

fn step_cached<T: Scalar>(
    params: &LstmParams<T>,
    inputs: impl Iterator<Item = usize>,
    state: &LstmState<T>,
) -> (Array2<T>, LstmState<T>, Vec<LayerCache<T>>) {
    let mut x = embed(params, inputs);
    let mut next = Vec::with_capacity(params.layers.len());
    let mut caches = Vec::with_capacity(params.layers.len());
    for (layer, prev) in params.layers.iter().zip(&state.layers) {
        let (cell, cache) = layer_forward(layer, x, prev);
        x = cell.h.clone();
        next.push(cell);
        caches.push(cache);
    }
    let logits = project(params, x.view());
    (logits, LstmState { layers: next }, caches)
}

/// One step for a batch of streams; returns `[batch × vocab]` logits.
pub fn step_batch<T: Scalar>(
    params: &LstmParams<T>,
    inputs: &[usize],
    state: &LstmState<T>,
) -> Result<(Array2<T>, LstmState<T>), LstmError> {
    let dims = params.dims();
    if !state.matches(dims, inputs.len()) {
        return Err(LstmError::Shape("state does not match model and batch".into()));
    }
    if let Some(&bad) = inputs.iter().find(|&&i| i >= dims.vocab) {
        return Err(LstmError::Shape(format!("symbol {bad} outside vocabulary of {}", dims.vocab)));
    }
    let (logits, next, _) = step_cached(params, inputs.iter().copied(), state);
    Ok((logits, next))
}

/// Feeds one character to a single-stream state.
pub fn forward_step<T: Scalar>(
    params: &LstmParams<T>,
    char_index: usize,
    state: &LstmState<T>,
) -> Result<(Array1<T>, LstmState<T>), LstmError> {
    let (logits, next) = step_batch(params, &[char_index], state)?;
    Ok((logits.row(0).to_owned(), next))
}

/// Runs a whole sequence from `state`, returning the logits after every input.
/// With `eof` set, the state is zeroed after each EOF input.
pub fn forward_sequence<T: Scalar>(
    params: &LstmParams<T>,
    seq: &[usize],
    eof: Option<usize>,
) -> Result<Vec<Array1<T>>, LstmError> {
    let mut state = LstmState::zeros(params.dims(), 1);
    let mut out = Vec::with_capacity(seq.len());
    for &c in seq {
        let (logits, next) = forward_step(params, c, &state)?;
        state = if Some(c) == eof {
            LstmState::zeros(params.dims(), 1)
        } else {
            next
        };
        out.push(logits);
    }
    Ok(out)
}

/// Numerically stable softmax, computed in double precision.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Row-wise softmax in place; returns `-ln p[target]` per row.
fn softmax_rows<T: Scalar>(logits: &mut Array2<T>, targets: impl Iterator<Item = usize>) -> Vec<f64> {
    let mut nll = Vec::with_capacity(logits.nrows());
    for (mut row, target) in logits.rows_mut().into_iter().zip(targets) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row /= sum;
        nll.push(-row[target].to_f64().expect("float").ln());
    }
    nll
}

/// Mean next-character cross-entropy (nats) of `seq` from the zero state.
pub fn loss<T: Scalar>(
    params: &LstmParams<T>,
    seq: &[usize],
    eof: Option<usize>,
) -> Result<f64, LstmError> {
    if seq.len() < 2 {
        return Err(LstmError::Shape("loss needs at least two symbols".into()));
    }
    let logits = forward_sequence(params, &seq[..seq.len() - 1], eof)?;
    let mut total = 0.0;
    for (z, &target) in logits.iter().zip(&seq[1..]) {
        let z: Vec<f64> = z.iter().map(|x| x.to_f64().expect("float")).collect();
        total -= softmax(&z)[target].ln();
    }
    Ok(total / (seq.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) enum Fault {
    #[default]
    None,
    /// Drops half of the forget-gate pre-activation gradient.
    ForgetGate,
}

/// Mean cross-entropy over the batch, its gradient by backpropagation through
/// time, and the state after the last step (to carry into the next window).
pub fn loss_and_grad<T: Scalar>(
    params: &LstmParams<T>,
    batch: &Batch,
    init: &LstmState<T>,
    eof: Option<usize>,
) -> Result<(f64, LstmParams<T>, LstmState<T>), LstmError> {
    loss_and_grad_with(params, batch, init, eof, Fault::None)
}

pub(crate) fn loss_and_grad_with<T: Scalar>(
    params: &LstmParams<T>,
    batch: &Batch,
    init: &LstmState<T>,
    eof: Option<usize>,
    fault: Fault,
) -> Result<(f64, LstmParams<T>, LstmState<T>), LstmError> {
    let dims = params.dims();
    batch.check(dims.vocab)?;
    let streams = batch.streams();
    let steps = batch.steps();
    if !init.matches(dims, streams) {
        return Err(LstmError::Shape("initial state does not match model and batch".into()));
    }
    let scale = T::from_f64(1.0 / (streams * steps) as f64);

    // forward
    let mut state = init.clone();
    let mut caches = Vec::with_capacity(steps);
    let mut probs = Vec::with_capacity(steps);
    let mut keeps = Vec::with_capacity(steps);
    let mut total = 0.0;
    for t in 0..steps {
        let inputs = batch.inputs.iter().map(|s| s[t]);
        let (mut logits, mut next, cache) = step_cached(params, inputs, &state);
        total += softmax_rows(&mut logits, batch.targets.iter().map(|s| s[t]))
            .into_iter()
            .sum::<f64>();
        let keep = Array2::from_shape_fn((streams, 1), |(b, _)| {
            if Some(batch.inputs[b][t]) == eof {
                T::zero()
            } else {
                T::one()
            }
        });
        next.mask_rows(&keep);
        state = next;
        caches.push(cache);
        probs.push(logits);
        keeps.push(keep);
    }
    let loss = total / (streams * steps) as f64;

    // backward
    let hidden = dims.hidden;
    let mut grads = params.zeros_like();
    let mut dh_next: Vec<Array2<T>> = vec![Array2::zeros((streams, hidden)); dims.layers];
    let mut dc_next: Vec<Array2<T>> = vec![Array2::zeros((streams, hidden)); dims.layers];
    for t in (0..steps).rev() {
        let cache = &caches[t];
        let mut dlogits = probs[t].clone();
        for (b, target) in batch.targets.iter().map(|s| s[t]).enumerate() {
            dlogits[[b, target]] -= T::one();
        }
        dlogits *= scale;
        let top = cache.last().expect("at least one layer");
        let h_top = &top.o * &top.tanh_c;
        grads.proj += &dlogits.t().dot(&h_top);
        grads.proj_bias += &dlogits.sum_axis(Axis(0));
        let mut dh = dlogits.dot(&params.proj);

        // gradients flowing into step t's outputs from step t + 1 were
        // already masked where the state was reset
        for l in (0..dims.layers).rev() {
            let c = &cache[l];
            let layer = &params.layers[l];
            dh += &dh_next[l];
            let mut dc = dc_next[l].clone();
            Zip::from(&mut dc)
                .and(&dh)
                .and(&c.o)
                .and(&c.tanh_c)
                .for_each(|dc, &dh, &o, &tc| *dc += dh * o * (T::one() - tc * tc));

            let mut da = Array2::<T>::zeros((streams, 4 * hidden));
            Zip::from(da.slice_mut(s![.., 0..hidden]))
                .and(&dc)
                .and(&c.i)
                .and(&c.g)
                .for_each(|d, &dc, &i, &g| *d = dc * g * i * (T::one() - i));
            Zip::from(da.slice_mut(s![.., hidden..2 * hidden]))
                .and(&dc)
                .and(&c.f)
                .and(&c.c_prev)
                .for_each(|d, &dc, &f, &cp| *d = dc * cp * f * (T::one() - f));
            if fault == Fault::ForgetGate {
                da.slice_mut(s![.., hidden..2 * hidden])
                    .mapv_inplace(|x| x * T::from_f64(0.5));
            }
            Zip::from(da.slice_mut(s![.., 2 * hidden..3 * hidden]))
                .and(&dh)
                .and(&c.o)
                .and(&c.tanh_c)
                .for_each(|d, &dh, &o, &tc| *d = dh * tc * o * (T::one() - o));
            Zip::from(da.slice_mut(s![.., 3 * hidden..]))
                .and(&dc)
                .and(&c.i)
                .and(&c.g)
                .for_each(|d, &dc, &i, &g| *d = dc * i * (T::one() - g * g));

            let gl = &mut grads.layers[l];
            gl.w += &da.t().dot(&c.x);
            gl.u += &da.t().dot(&c.h_prev);
            gl.b += &da.sum_axis(Axis(0));

            let dx = da.dot(&layer.w);
            let mut dh_prev = da.dot(&layer.u);
            let mut dc_prev = &dc * &c.f;
            if t > 0 {
                dh_prev *= &keeps[t - 1];
                dc_prev *= &keeps[t - 1];
            }
            dh_next[l] = dh_prev;
            dc_next[l] = dc_prev;

            if l > 0 {
                dh = dx;
            } else {
                for (b, row) in dx.rows().into_iter().enumerate() {
                    let mut target = grads.embedding.row_mut(batch.inputs[b][t]);
                    target += &row;
                }
                dh = Array2::zeros((0, 0));
            }
        }
    }
    Ok((loss, grads, state))
}
