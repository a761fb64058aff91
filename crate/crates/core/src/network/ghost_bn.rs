//! Ghost batch normalization.
//!
//! In training, a batch of `|B_L|` rows is cut into consecutive ghost
//! batches of `|B_S|` rows (the last one may be shorter) and every ghost
//! batch is normalized with its own mean and biased standard deviation
//! `σ = √(var + ε)`. The running statistics absorb the ghost-batch values one
//! after the other as an exponential moving average, so with a single ghost
//! batch the layer is ordinary batch normalization. Inference uses the
//! running statistics only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

/// How ghost-batch deviations enter `σ_run`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunningStd {
    /// Average the standard deviations themselves.
    #[default]
    Std,
    /// Average variances and keep `σ_run` as the square root.
    Variance,
}

/// Running mean and deviation of one normalization layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Ghost batches absorbed so far.
    pub updates: u64,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        RunningStats {
            mu: vec![0.0; dim],
            sigma: vec![1.0; dim],
            updates: 0,
        }
    }

    pub fn is_trained(&self) -> bool {
        self.updates > 0
    }

    /// Sequential EMA over the ghost batches in ascending order.
    pub fn absorb(&mut self, chunks: &[ChunkStats], momentum: f64, mode: RunningStd) {
        for chunk in chunks {
            for j in 0..self.mu.len() {
                self.mu[j] = (1.0 - momentum) * self.mu[j] + momentum * chunk.mu[j];
                self.sigma[j] = match mode {
                    RunningStd::Std => (1.0 - momentum) * self.sigma[j] + momentum * chunk.sigma[j],
                    RunningStd::Variance => ((1.0 - momentum) * self.sigma[j] * self.sigma[j]
                        + momentum * chunk.sigma[j] * chunk.sigma[j])
                        .sqrt(),
                };
            }
            self.updates += 1;
        }
    }
}

/// Per-feature statistics of one ghost batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkStats {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Saved values for the backward pass.
#[derive(Clone, Debug)]
pub struct GhostCache {
    pub(crate) rows: usize,
    pub(crate) ghost: usize,
    pub(crate) xhat: Vec<f64>,
    pub(crate) inv_sigma: Vec<Vec<f64>>,
}

/// Ghost-batch row ranges for a batch of `rows` rows.
pub fn ghost_chunks(rows: usize, ghost: usize) -> impl Iterator<Item = (usize, usize)> {
    let ghost = ghost.max(1);
    (0..rows.div_ceil(ghost)).map(move |l| (l * ghost, ((l + 1) * ghost).min(rows)))
}

/// Training-mode normalization of `x[rows×d]` into `out`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn forward_train(
    x: &[f64],
    rows: usize,
    d: usize,
    ghost: usize,
    epsilon: f64,
    gamma: &[f64],
    beta: &[f64],
    out: &mut [f64],
) -> (GhostCache, Vec<ChunkStats>) {
    let mut xhat = vec![0.0; rows * d];
    let mut inv_sigma = Vec::new();
    let mut stats = Vec::new();
    for (start, end) in ghost_chunks(rows, ghost) {
        let n = (end - start) as f64;
        let mut mu = vec![0.0; d];
        for r in start..end {
            for (m, v) in mu.iter_mut().zip(&x[r * d..(r + 1) * d]) {
                *m += v;
            }
        }
        mu.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in start..end {
            for ((s, v), m) in var.iter_mut().zip(&x[r * d..(r + 1) * d]).zip(&mu) {
                *s += (v - m) * (v - m);
            }
        }
        let sigma: Vec<f64> = var.iter().map(|s| (s / n + epsilon).sqrt()).collect();
        let inv: Vec<f64> = sigma.iter().map(|s| 1.0 / s).collect();
        for r in start..end {
            for j in 0..d {
                let h = (x[r * d + j] - mu[j]) * inv[j];
                xhat[r * d + j] = h;
                out[r * d + j] = gamma[j] * h + beta[j];
            }
        }
        inv_sigma.push(inv);
        stats.push(ChunkStats { mu, sigma });
    }
    (
        GhostCache {
            rows,
            ghost,
            xhat,
            inv_sigma,
        },
        stats,
    )
}

pub(crate) fn forward_eval(
    x: &[f64],
    d: usize,
    running: &RunningStats,
    gamma: &[f64],
    beta: &[f64],
    out: &mut [f64],
) {
    for (xr, or) in x.chunks(d).zip(out.chunks_mut(d)) {
        for j in 0..d {
            or[j] = gamma[j] * (xr[j] - running.mu[j]) / running.sigma[j] + beta[j];
        }
    }
}

/// Gradient through the per-ghost-batch normalization, treating the running
/// statistics as constants. Accumulates into `dgamma`/`dbeta`.
pub(crate) fn backward(
    cache: &GhostCache,
    d: usize,
    gamma: &[f64],
    dy: &[f64],
    dx: &mut [f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) {
    for (l, (start, end)) in ghost_chunks(cache.rows, cache.ghost).enumerate() {
        let n = (end - start) as f64;
        let inv = &cache.inv_sigma[l];
        let mut sum_dxhat = vec![0.0; d];
        let mut sum_dxhat_xhat = vec![0.0; d];
        for r in start..end {
            for j in 0..d {
                let g = dy[r * d + j];
                let h = cache.xhat[r * d + j];
                dgamma[j] += g * h;
                dbeta[j] += g;
                let dh = g * gamma[j];
                sum_dxhat[j] += dh;
                sum_dxhat_xhat[j] += dh * h;
            }
        }
        for r in start..end {
            for j in 0..d {
                let h = cache.xhat[r * d + j];
                let dh = dy[r * d + j] * gamma[j];
                dx[r * d + j] = inv[j] * (dh - sum_dxhat[j] / n - h * sum_dxhat_xhat[j] / n);
            }
        }
    }
}

/// Stand-alone ghost batch normalization layer with its own affine
/// parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GhostBatchNormState {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running: RunningStats,
    pub ghost_size: usize,
    pub momentum: f64,
    pub epsilon: f64,
    pub running_std: RunningStd,
}

impl GhostBatchNormState {
    pub fn new(dim: usize, ghost_size: usize, momentum: f64, epsilon: f64) -> Result<Self> {
        if dim == 0 || ghost_size == 0 {
            return Err(Error::Parameter("dimension and ghost size must be positive".into()));
        }
        if !(momentum > 0.0 && momentum < 1.0) {
            return Err(Error::Parameter(format!("momentum {momentum} outside (0, 1)")));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::Parameter(format!("epsilon {epsilon} is negative")));
        }
        Ok(GhostBatchNormState {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running: RunningStats::new(dim),
            ghost_size,
            momentum,
            epsilon,
            running_std: RunningStd::Std,
        })
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    fn check_width(&self, x: &Tensor) -> Result<(usize, usize)> {
        if x.shape().len() != 2 || x.cols() != self.dim() {
            return Err(Error::Dimension(format!(
                "expected rows of width {}, got shape {:?}",
                self.dim(),
                x.shape()
            )));
        }
        Ok((x.rows(), x.cols()))
    }

    /// Training phase: normalizes each ghost batch and updates the running
    /// statistics.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let (rows, d) = self.check_width(x)?;
        let mut out = vec![0.0; rows * d];
        let (_, stats) = forward_train(
            x.data(),
            rows,
            d,
            self.ghost_size,
            self.epsilon,
            &self.gamma,
            &self.beta,
            &mut out,
        );
        self.running.absorb(&stats, self.momentum, self.running_std);
        Tensor::new(vec![rows, d], out)
    }

    /// Test phase: `γ·(x − μ_run)/σ_run + β`, row by row.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let (rows, d) = self.check_width(x)?;
        if !self.running.is_trained() {
            return Err(Error::State("running statistics are empty; train first".into()));
        }
        let mut out = vec![0.0; rows * d];
        forward_eval(x.data(), d, &self.running, &self.gamma, &self.beta, &mut out);
        Tensor::new(vec![rows, d], out)
    }
}

/// Free-function form of [`GhostBatchNormState::forward_train`].
pub fn ghost_bn_forward_train(state: &mut GhostBatchNormState, x: &Tensor) -> Result<Tensor> {
    state.forward_train(x)
}

/// Free-function form of [`GhostBatchNormState::forward_eval`].
pub fn ghost_bn_forward_eval(state: &GhostBatchNormState, x: &Tensor) -> Result<Tensor> {
    state.forward_eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian, Rng};

    fn column(values: &[f64]) -> Tensor {
        Tensor::new(vec![values.len(), 1], values.to_vec()).unwrap()
    }

    #[test]
    fn hand_computed_ghost_batches() {
        let mut state = GhostBatchNormState::new(1, 2, 0.1, 0.0).unwrap();
        let out = state.forward_train(&column(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(out.data(), &[-1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn constant_ghost_batches_map_to_beta() {
        let mut state = GhostBatchNormState::new(1, 2, 0.1, 1e-5).unwrap();
        state.beta = vec![0.75];
        let out = state.forward_train(&column(&[5.0, 5.0, -2.0, -2.0])).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn sequential_ema_matches_closed_expansion() {
        let eta: f64 = 0.2;
        let mut state = GhostBatchNormState::new(1, 2, eta, 0.0).unwrap();
        state.running.mu = vec![0.5];
        state.running.updates = 1;
        state.forward_train(&column(&[1.0, 2.0, 3.0, 4.0, 10.0, 12.0])).unwrap();
        let means = [1.5, 3.5, 11.0];
        let k = means.len() as i32;
        let expected = (1.0 - eta).powi(k) * 0.5
            + means
                .iter()
                .enumerate()
                .map(|(l, m)| (1.0 - eta).powi(k - 1 - l as i32) * eta * m)
                .sum::<f64>();
        assert!((state.running.mu[0] - expected).abs() < 1e-14);
        assert_eq!(state.running.updates, 4);
    }

    #[test]
    fn remainder_ghost_batch_uses_own_statistics() {
        let mut state = GhostBatchNormState::new(1, 4, 0.1, 0.0).unwrap();
        let out = state
            .forward_train(&column(&[0.0, 1.0, 2.0, 3.0, 7.0, 9.0]))
            .unwrap();
        assert_eq!(&out.data()[4..], &[-1.0, 1.0]);
    }

    #[test]
    fn eval_requires_training() {
        let state = GhostBatchNormState::new(2, 2, 0.1, 1e-5).unwrap();
        assert!(matches!(
            state.forward_eval(&Tensor::zeros(&[3, 2]).unwrap()),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn constant_stream_fixed_point() {
        let mut state = GhostBatchNormState::new(1, 4, 0.1, 1e-5).unwrap();
        state.beta = vec![0.3];
        let c = 2.5;
        for _ in 0..400 {
            state.forward_train(&column(&[c; 8])).unwrap();
        }
        assert!((state.running.mu[0] - c).abs() < 1e-12);
        let out = state.forward_eval(&column(&[c])).unwrap();
        assert!((out.data()[0] - 0.3).abs() < 1e-9);
    }

    #[test]
    fn eval_rows_are_independent() {
        let mut rng = Rng::new(4, 4);
        let mut state = GhostBatchNormState::new(3, 4, 0.1, 1e-5).unwrap();
        state.gamma = vec![1.5, 0.5, -1.0];
        for _ in 0..5 {
            state
                .forward_train(&gaussian(&mut rng, &[16, 3], 1.0, 2.0).unwrap())
                .unwrap();
        }
        let x = gaussian(&mut rng, &[128, 3], 0.0, 1.0).unwrap();
        let all = state.forward_eval(&x).unwrap();
        for r in [0, 17, 127] {
            let one = state.forward_eval(&x.select_rows(&[r]).unwrap()).unwrap();
            assert_eq!(one.data(), all.row(r));
        }
        let at_mean = Tensor::new(vec![1, 3], state.running.mu.clone()).unwrap();
        assert_eq!(state.forward_eval(&at_mean).unwrap().data(), &state.beta[..]);
    }

    #[test]
    fn variance_accumulation_differs_from_std_accumulation() {
        let x = column(&[0.0, 2.0, 0.0, 10.0]);
        let mut a = GhostBatchNormState::new(1, 2, 0.5, 0.0).unwrap();
        let mut b = a.clone();
        b.running_std = RunningStd::Variance;
        a.forward_train(&x).unwrap();
        b.forward_train(&x).unwrap();
        // ghost deviations are 1 and 5 starting from σ_run = 1
        assert!((a.running.sigma[0] - 3.0).abs() < 1e-15);
        assert!((b.running.sigma[0] - (0.5 * 0.5 * 1.0 + 0.25 + 0.5 * 25.0f64).sqrt()).abs() < 1e-15);
    }
}
