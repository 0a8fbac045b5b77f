use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::params::{LstmParams, Scalar};
use super::TrainConfig;

/// Clamps every gradient entry into `[-limit, limit]`.
pub fn clip_elementwise<T: Scalar>(grads: &mut LstmParams<T>, limit: f64) {
    let hi = T::from_f64(limit);
    let lo = -hi;
    for (_, mut block) in grads.blocks_mut() {
        block.mapv_inplace(|g| g.max(lo).min(hi));
    }
}

/// First and second moment estimates of the adaptive-moment optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AdamState<T> {
    pub m: LstmParams<T>,
    pub v: LstmParams<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &LstmParams<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// `x -= lr * sqrt(1 - b2^t) / (1 - b1^t) * m / (sqrt(v) + eps)`
    pub fn update(&mut self, params: &mut LstmParams<T>, grads: &LstmParams<T>, cfg: &TrainConfig) {
        self.t += 1;
        let t = self.t as i32;
        let step = cfg.learning_rate * (1.0 - cfg.beta2.powi(t)).sqrt() / (1.0 - cfg.beta1.powi(t));
        let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
        let (step, eps) = (T::from_f64(step), T::from_f64(cfg.epsilon));
        let one = T::one();
        let blocks = params
            .blocks_mut()
            .into_iter()
            .zip(grads.blocks())
            .zip(self.m.blocks_mut())
            .zip(self.v.blocks_mut());
        for ((((_, x), (_, g)), (_, m)), (_, v)) in blocks {
            Zip::from(x).and(&g).and(m).and(v).for_each(|x, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                *x -= step * *m / (v.sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::ModelDims;

    fn dims() -> ModelDims {
        ModelDims { vocab: 3, embed: 2, hidden: 2, layers: 1 }
    }

    #[test]
    fn clipping_clamps_each_entry() {
        let mut g = LstmParams::<f64>::zeros(dims());
        g.proj[[0, 0]] = 12.0;
        g.proj[[1, 1]] = -7.0;
        g.proj[[2, 0]] = 0.25;
        clip_elementwise(&mut g, 5.0);
        assert_eq!(g.proj[[0, 0]], 5.0);
        assert_eq!(g.proj[[1, 1]], -5.0);
        assert_eq!(g.proj[[2, 0]], 0.25);
    }

    #[test]
    fn zero_gradient_from_fresh_state_leaves_params() {
        let cfg = TrainConfig::default();
        let mut p = LstmParams::<f64>::zeros(dims());
        p.proj_bias[1] = 0.7;
        let before = p.clone();
        let zero = p.zeros_like();
        let mut adam = AdamState::new(&p);
        adam.update(&mut p, &zero, &cfg);
        assert_eq!(p, before);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn zero_gradient_with_momentum_keeps_moving() {
        let cfg = TrainConfig::default();
        let mut p = LstmParams::<f64>::zeros(dims());
        let mut adam = AdamState::new(&p);
        let mut g = p.zeros_like();
        g.proj_bias[0] = 1.0;
        adam.update(&mut p, &g, &cfg);
        let after_first = p.proj_bias[0];
        // first bias-corrected step is exactly lr in the gradient's sign
        assert!((after_first + cfg.learning_rate).abs() < 1e-9);
        let zero = p.zeros_like();
        adam.update(&mut p, &zero, &cfg);
        assert!(p.proj_bias[0] < after_first);
        assert!((adam.m.proj_bias[0] - 0.1 * 0.9).abs() < 1e-12);
        // untouched entries stay put
        assert_eq!(p.proj_bias[1], 0.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        // treat proj_bias as the variable of f(x) = |x - 3|^2
        let cfg = TrainConfig { learning_rate: 0.05, ..TrainConfig::default() };
        let mut p = LstmParams::<f64>::zeros(dims());
        let mut adam = AdamState::new(&p);
        for _ in 0..2000 {
            let mut g = p.zeros_like();
            g.proj_bias = p.proj_bias.mapv(|x| 2.0 * (x - 3.0));
            adam.update(&mut p, &g, &cfg);
        }
        assert!(p.proj_bias.iter().all(|x| (x - 3.0).abs() < 1e-3), "{:?}", p.proj_bias);
    }
}
