use std::fmt::Debug;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, LinalgScalar, ScalarOperand};
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::LstmError;

/// Element type of a model. `f32` for training and sampling, `f64` for
/// gradient checking.
pub trait Scalar:
    LinalgScalar
    + Float
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    const PRECISION: &'static str;

    fn from_f64(x: f64) -> Self;
}

impl Scalar for f32 {
    const PRECISION: &'static str = "f32";

    fn from_f64(x: f64) -> Self {
        x as f32
    }
}

impl Scalar for f64 {
    const PRECISION: &'static str = "f64";

    fn from_f64(x: f64) -> Self {
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl ModelDims {
    pub fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.embed
        } else {
            self.hidden
        }
    }
}

/// Weights of one LSTM layer. Rows of `w`, `u` and `b` are laid out as
/// `[input; forget; output; candidate]`, `hidden` rows each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LayerParams<T> {
    /// `[4H × in]`
    pub w: Array2<T>,
    /// `[4H × H]`
    pub u: Array2<T>,
    /// `[4H]`
    pub b: Array1<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LstmParams<T> {
    /// `[V × E]`
    pub embedding: Array2<T>,
    pub layers: Vec<LayerParams<T>>,
    /// `[V × H]`
    pub proj: Array2<T>,
    /// `[V]`
    pub proj_bias: Array1<T>,
}

impl<T: Scalar> LstmParams<T> {
    pub fn zeros(dims: ModelDims) -> Self {
        let h = dims.hidden;
        Self {
            embedding: Array2::zeros((dims.vocab, dims.embed)),
            layers: (0..dims.layers)
                .map(|l| LayerParams {
                    w: Array2::zeros((4 * h, dims.layer_input(l))),
                    u: Array2::zeros((4 * h, h)),
                    b: Array1::zeros(4 * h),
                })
                .collect(),
            proj: Array2::zeros((dims.vocab, h)),
            proj_bias: Array1::zeros(dims.vocab),
        }
    }

    /// Embedding ~ N(0, 1); recurrent weights ~ N(0, 1/sqrt(in + H)) with zero
    /// bias except the forget gate at 1; projection ~ U(±1/sqrt(H)).
    pub fn init<R: Rng>(dims: ModelDims, rng: &mut R) -> Self {
        let mut params = Self::zeros(dims);
        let h = dims.hidden;
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        params.embedding.mapv_inplace(|_| T::from_f64(unit.sample(rng)));
        for (l, layer) in params.layers.iter_mut().enumerate() {
            let std = 1.0 / ((dims.layer_input(l) + h) as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("valid normal");
            layer.w.mapv_inplace(|_| T::from_f64(dist.sample(rng)));
            layer.u.mapv_inplace(|_| T::from_f64(dist.sample(rng)));
            layer.b.slice_mut(ndarray::s![h..2 * h]).fill(T::one());
        }
        let bound = 1.0 / (h as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("valid range");
        params.proj.mapv_inplace(|_| T::from_f64(dist.sample(rng)));
        params.proj_bias.mapv_inplace(|_| T::from_f64(dist.sample(rng)));
        params
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            vocab: self.embedding.nrows(),
            embed: self.embedding.ncols(),
            hidden: self.proj.ncols(),
            layers: self.layers.len(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims())
    }

    /// Checks that every block agrees with the dimensions implied by the
    /// embedding and projection.
    pub fn check_shapes(&self) -> Result<(), LstmError> {
        let d = self.dims();
        if d.layers == 0 || d.hidden == 0 || d.vocab == 0 || d.embed == 0 {
            return Err(LstmError::Shape("empty model".into()));
        }
        let expected = Self::zeros(d);
        for ((name, got), (_, want)) in self.blocks().iter().zip(expected.blocks().iter()) {
            if got.shape() != want.shape() {
                return Err(LstmError::Shape(format!(
                    "{name}: expected {:?}, found {:?}",
                    want.shape(),
                    got.shape()
                )));
            }
        }
        if self.proj_bias.len() != d.vocab || self.proj.nrows() != d.vocab {
            return Err(LstmError::Shape("projection does not match vocabulary".into()));
        }
        Ok(())
    }

    /// Every parameter block with a stable name, in a fixed order.
    pub fn blocks(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        let mut out = vec![("embedding".to_string(), self.embedding.view().into_dyn())];
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.w"), layer.w.view().into_dyn()));
            out.push((format!("layer{l}.u"), layer.u.view().into_dyn()));
            out.push((format!("layer{l}.b"), layer.b.view().into_dyn()));
        }
        out.push(("proj.w".to_string(), self.proj.view().into_dyn()));
        out.push(("proj.b".to_string(), self.proj_bias.view().into_dyn()));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, T>)> {
        let mut out = vec![("embedding".to_string(), self.embedding.view_mut().into_dyn())];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{l}.w"), layer.w.view_mut().into_dyn()));
            out.push((format!("layer{l}.u"), layer.u.view_mut().into_dyn()));
            out.push((format!("layer{l}.b"), layer.b.view_mut().into_dyn()));
        }
        out.push(("proj.w".to_string(), self.proj.view_mut().into_dyn()));
        out.push(("proj.b".to_string(), self.proj_bias.view_mut().into_dyn()));
        out
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    /// Name of the first block holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        self.blocks()
            .into_iter()
            .find(|(_, b)| b.iter().any(|x| !x.is_finite()))
            .map(|(name, _)| name)
    }

    pub fn cast<U: Scalar>(&self) -> LstmParams<U> {
        let c1 = |a: &Array1<T>| a.mapv(|x| U::from_f64(x.to_f64().expect("float")));
        let c2 = |a: &Array2<T>| a.mapv(|x| U::from_f64(x.to_f64().expect("float")));
        LstmParams {
            embedding: c2(&self.embedding),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    w: c2(&l.w),
                    u: c2(&l.u),
                    b: c1(&l.b),
                })
                .collect(),
            proj: c2(&self.proj),
            proj_bias: c1(&self.proj_bias),
        }
    }
}
