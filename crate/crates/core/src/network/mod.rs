//! Fully connected classifier with batch or ghost batch normalization and
//! hand-written gradients.

mod ghost_bn;
mod loss;
mod mlp;

pub use ghost_bn::{
    ghost_bn_forward_eval, ghost_bn_forward_train, ghost_chunks, ChunkStats, GhostBatchNormState, RunningStats,
    RunningStd, DEFAULT_EPSILON, DEFAULT_MOMENTUM,
};
pub use loss::{softmax_cross_entropy, LossValue};
pub use mlp::{glorot_bound, init_glorot, Evaluation, ForwardCache, Layer, Mlp, MlpSpec, Mode, Norm, Statistics};

use crate::error::{Error, Result};
use crate::numerics::{l2_distance, Tensor};

/// The concatenated parameter vector together with its value at
/// initialization.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatParams {
    w: Tensor,
    w0: Tensor,
}

impl FlatParams {
    /// Freezes `w` as the reference point `w₀`.
    pub fn new(w: Tensor) -> Self {
        FlatParams { w0: w.clone(), w }
    }

    pub(crate) fn from_parts(w: Tensor, w0: Tensor) -> Result<Self> {
        if w.len() != w0.len() {
            return Err(Error::Dimension(format!("w has {} entries, w0 has {}", w.len(), w0.len())));
        }
        Ok(FlatParams { w, w0 })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn w(&self) -> &[f64] {
        self.w.data()
    }

    pub fn w_mut(&mut self) -> &mut [f64] {
        self.w.data_mut()
    }

    pub fn w0(&self) -> &[f64] {
        self.w0.data()
    }

    /// `‖w − w₀‖₂`.
    pub fn distance(&self) -> f64 {
        l2_distance(self.w.data(), self.w0.data())
    }
}
