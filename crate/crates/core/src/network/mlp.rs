use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ghost_bn::{self, ChunkStats, GhostCache, RunningStats, RunningStd, DEFAULT_EPSILON, DEFAULT_MOMENTUM};
use super::loss::{softmax_cross_entropy, LossValue};
use super::FlatParams;
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::numerics::kernels::{gemm_nn, gemm_nt, gemm_tn};
use crate::numerics::{Rng, Tensor};

/// Normalization placed after every hidden affine layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    None,
    /// Statistics over the whole batch.
    Batch,
    /// Statistics over consecutive ghost batches of the given size.
    Ghost(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width, hidden widths, class count.
    pub dims: Vec<usize>,
    pub norm: Norm,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
    pub running_std: RunningStd,
}

impl MlpSpec {
    pub fn new(dims: Vec<usize>, norm: Norm) -> Self {
        MlpSpec {
            dims,
            norm,
            bn_momentum: DEFAULT_MOMENTUM,
            bn_epsilon: DEFAULT_EPSILON,
            running_std: RunningStd::Std,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return Err(Error::Dimension(format!("invalid layer widths {:?}", self.dims)));
        }
        if self.norm == Norm::Ghost(0) {
            return Err(Error::Parameter("ghost batch size must be positive".into()));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum < 1.0) {
            return Err(Error::Parameter(format!("bn momentum {} outside (0, 1)", self.bn_momentum)));
        }
        if !(self.bn_epsilon >= 0.0) || !self.bn_epsilon.is_finite() {
            return Err(Error::Parameter(format!("bn epsilon {} is invalid", self.bn_epsilon)));
        }
        Ok(())
    }

    /// Layer list and total parameter count. Each layer's parameters are one
    /// contiguous block of the flat vector.
    fn layout(&self) -> Result<(Vec<Layer>, usize)> {
        self.validate()?;
        let mut layers = Vec::new();
        let mut offset = 0;
        let mut slot = 0;
        let last = self.dims.len() - 2;
        for (i, pair) in self.dims.windows(2).enumerate() {
            let (inputs, outputs) = (pair[0], pair[1]);
            layers.push(Layer::Affine {
                inputs,
                outputs,
                weight: offset,
                bias: offset + inputs * outputs,
            });
            offset += inputs * outputs + outputs;
            if i < last {
                if self.norm != Norm::None {
                    layers.push(Layer::Norm {
                        dim: outputs,
                        gamma: offset,
                        beta: offset + outputs,
                        slot,
                    });
                    offset += 2 * outputs;
                    slot += 1;
                }
                layers.push(Layer::Relu { dim: outputs });
            }
        }
        Ok((layers, offset))
    }
}

/// A layer with the offsets of its parameters in the flat vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    /// `y = x·W + b` with `W` stored `inputs × outputs` row-major.
    Affine {
        inputs: usize,
        outputs: usize,
        weight: usize,
        bias: usize,
    },
    Norm {
        dim: usize,
        gamma: usize,
        beta: usize,
        slot: usize,
    },
    Relu {
        dim: usize,
    },
}

impl Layer {
    fn param_range(&self) -> std::ops::Range<usize> {
        match *self {
            Layer::Affine {
                inputs,
                outputs,
                weight,
                ..
            } => weight..weight + inputs * outputs + outputs,
            Layer::Norm { dim, gamma, .. } => gamma..gamma + 2 * dim,
            Layer::Relu { .. } => 0..0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// Which statistics the normalization layers use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Statistics {
    /// Per-ghost-batch statistics of the current input.
    Batch,
    /// The stored running averages.
    Running,
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Affine weights uniform in `±√(6/(fan_in+fan_out))`, biases zero, `γ = 1`,
/// `β = 0`. Weights are drawn layer by layer in row-major order.
pub fn init_glorot(rng: &mut Rng, spec: &MlpSpec) -> Result<FlatParams> {
    let (layers, total) = spec.layout()?;
    let mut w = vec![0.0; total];
    for layer in &layers {
        match *layer {
            Layer::Affine {
                inputs,
                outputs,
                weight,
                ..
            } => {
                let bound = glorot_bound(inputs, outputs);
                for v in &mut w[weight..weight + inputs * outputs] {
                    *v = bound * (2.0 * rng.uniform() - 1.0);
                }
            }
            Layer::Norm { dim, gamma, .. } => w[gamma..gamma + dim].fill(1.0),
            Layer::Relu { .. } => {}
        }
    }
    Ok(FlatParams::new(Tensor::vector(w)?))
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    version: u64,
    train: bool,
    rows: usize,
    inputs: Vec<Vec<f64>>,
    norm: Vec<Option<GhostCache>>,
    logits: Tensor,
}

impl ForwardCache {
    pub fn logits(&self) -> &Tensor {
        &self.logits
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub error_rate: f64,
}

struct Pass {
    output: Vec<f64>,
    inputs: Vec<Vec<f64>>,
    norm: Vec<Option<GhostCache>>,
    chunk_stats: Vec<Vec<ChunkStats>>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    spec: MlpSpec,
    layers: Vec<Layer>,
    mode: Mode,
    w: Vec<f64>,
    w0: Vec<f64>,
    running: Vec<RunningStats>,
}

const EVAL_CHUNK: usize = 1000;

#[derive(Clone, Debug)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
    params: FlatParams,
    running: Vec<RunningStats>,
    mode: Mode,
    version: u64,
}

impl Mlp {
    pub fn new(spec: MlpSpec, rng: &mut Rng) -> Result<Self> {
        let params = init_glorot(rng, &spec)?;
        Mlp::from_params(spec, params)
    }

    pub fn from_params(spec: MlpSpec, params: FlatParams) -> Result<Self> {
        let (layers, total) = spec.layout()?;
        if params.len() != total {
            return Err(Error::Dimension(format!(
                "layout needs {total} parameters, got {}",
                params.len()
            )));
        }
        let running = layers
            .iter()
            .filter_map(|l| match l {
                Layer::Norm { dim, .. } => Some(RunningStats::new(*dim)),
                _ => None,
            })
            .collect();
        Ok(Mlp {
            spec,
            layers,
            params,
            running,
            mode: Mode::Train,
            version: 0,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &FlatParams {
        &self.params
    }

    /// Mutable access to the flat vector. Invalidates earlier forward caches.
    pub fn params_mut(&mut self) -> &mut FlatParams {
        self.version += 1;
        &mut self.params
    }

    pub fn set_weights(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                w.len()
            )));
        }
        self.params_mut().w_mut().copy_from_slice(w);
        Ok(())
    }

    /// Parameters of layer `index` (weights then bias, or γ then β) as a view
    /// into the flat vector.
    pub fn layer_params(&self, index: usize) -> &[f64] {
        &self.params.w()[self.layers[index].param_range()]
    }

    pub fn layer_params_mut(&mut self, index: usize) -> &mut [f64] {
        let range = self.layers[index].param_range();
        &mut self.params_mut().w_mut()[range]
    }

    pub fn running_stats(&self) -> &[RunningStats] {
        &self.running
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Switches between whole-batch and ghost normalization. The parameter
    /// layout is unchanged.
    pub fn set_norm(&mut self, norm: Norm) -> Result<()> {
        if (norm == Norm::None) != (self.spec.norm == Norm::None) {
            return Err(Error::Parameter("cannot add or remove normalization layers".into()));
        }
        let mut spec = self.spec.clone();
        spec.norm = norm;
        spec.validate()?;
        self.spec = spec;
        Ok(())
    }

    /// `‖w − w₀‖₂`.
    pub fn weight_distance(&self) -> f64 {
        self.params.distance()
    }

    fn ghost_size(&self, rows: usize) -> usize {
        match self.spec.norm {
            Norm::Ghost(g) => g,
            _ => rows,
        }
    }

    fn run(&self, w: &[f64], x: &Tensor, stats: Statistics, keep: bool, end: usize) -> Result<Pass> {
        if x.shape().len() != 2 || x.cols() != self.spec.dims[0] {
            return Err(Error::Dimension(format!(
                "input {:?} for a network expecting width {}",
                x.shape(),
                self.spec.dims[0]
            )));
        }
        if w.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                w.len()
            )));
        }
        let rows = x.rows();
        let ghost = self.ghost_size(rows);
        let mut act = x.data().to_vec();
        let mut pass = Pass {
            output: Vec::new(),
            inputs: Vec::new(),
            norm: Vec::new(),
            chunk_stats: Vec::new(),
        };
        for layer in &self.layers[..end] {
            let mut cached = None;
            let next = match *layer {
                Layer::Affine {
                    inputs,
                    outputs,
                    weight,
                    bias,
                } => {
                    let mut out = vec![0.0; rows * outputs];
                    gemm_nn(&act, &w[weight..weight + inputs * outputs], rows, inputs, outputs, &mut out, true);
                    let b = &w[bias..bias + outputs];
                    for row in out.chunks_mut(outputs) {
                        row.iter_mut().zip(b).for_each(|(v, bj)| *v += bj);
                    }
                    out
                }
                Layer::Norm { dim, gamma, beta, slot } => {
                    let mut out = vec![0.0; rows * dim];
                    let (g, b) = (&w[gamma..gamma + dim], &w[beta..beta + dim]);
                    match stats {
                        Statistics::Batch => {
                            let (cache, chunks) =
                                ghost_bn::forward_train(&act, rows, dim, ghost, self.spec.bn_epsilon, g, b, &mut out);
                            cached = Some(cache);
                            pass.chunk_stats.push(chunks);
                        }
                        Statistics::Running => {
                            let running = &self.running[slot];
                            if !running.is_trained() {
                                return Err(Error::State(format!(
                                    "normalization layer {slot} has no running statistics yet"
                                )));
                            }
                            ghost_bn::forward_eval(&act, dim, running, g, b, &mut out);
                        }
                    }
                    out
                }
                Layer::Relu { .. } => act.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            };
            if keep {
                pass.inputs.push(std::mem::replace(&mut act, next));
                pass.norm.push(cached);
            } else {
                act = next;
            }
        }
        if let Some(i) = act.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("activation {i} is {}", act[i])));
        }
        pass.output = act;
        Ok(pass)
    }

    fn logits_tensor(&self, rows: usize, data: Vec<f64>) -> Result<Tensor> {
        Tensor::new(vec![rows, *self.spec.dims.last().unwrap()], data)
    }

    /// Forward pass in the current mode. In training mode the ghost-batch
    /// statistics are folded into the running averages.
    pub fn forward(&mut self, x: &Tensor) -> Result<(Tensor, ForwardCache)> {
        let train = self.mode == Mode::Train;
        let stats = if train { Statistics::Batch } else { Statistics::Running };
        let pass = self.run(self.params.w(), x, stats, true, self.layers.len())?;
        if train {
            for (running, chunks) in self.running.iter_mut().zip(&pass.chunk_stats) {
                running.absorb(chunks, self.spec.bn_momentum, self.spec.running_std);
            }
        }
        let logits = self.logits_tensor(x.rows(), pass.output)?;
        let cache = ForwardCache {
            version: self.version,
            train,
            rows: x.rows(),
            inputs: pass.inputs,
            norm: pass.norm,
            logits: logits.clone(),
        };
        Ok((logits, cache))
    }

    /// Gradient of the batch loss `(1/M)·Σ sₙ·Lₙ` with per-sample weights
    /// `sₙ` (all ones when `weights` is `None`). The returned loss is the
    /// unweighted mean.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        labels: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<(Tensor, LossValue)> {
        if cache.version != self.version {
            return Err(Error::State("forward cache predates a parameter update".into()));
        }
        self.backward_with(self.params.w(), cache, labels, weights)
    }

    fn backward_with(
        &self,
        w: &[f64],
        cache: &ForwardCache,
        labels: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<(Tensor, LossValue)> {
        if !cache.train {
            return Err(Error::State("backward needs a training-mode forward pass".into()));
        }
        let rows = cache.rows;
        if let Some(s) = weights {
            if s.len() != rows {
                return Err(Error::Dimension(format!("{} loss weights for {rows} samples", s.len())));
            }
        }
        let (loss, probs) = softmax_cross_entropy(&cache.logits, labels)?;
        let classes = cache.logits.cols();
        let mut delta = probs;
        for (r, &y) in labels.iter().enumerate() {
            let s = weights.map_or(1.0, |s| s[r]) / rows as f64;
            let row = &mut delta[r * classes..(r + 1) * classes];
            row[y] -= 1.0;
            row.iter_mut().for_each(|v| *v *= s);
        }

        let mut grad = vec![0.0; w.len()];
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[li];
            match *layer {
                Layer::Affine {
                    inputs,
                    outputs,
                    weight,
                    bias,
                } => {
                    gemm_tn(
                        input,
                        &delta,
                        rows,
                        inputs,
                        outputs,
                        &mut grad[weight..weight + inputs * outputs],
                        true,
                    );
                    let db = &mut grad[bias..bias + outputs];
                    for row in delta.chunks(outputs) {
                        db.iter_mut().zip(row).for_each(|(g, d)| *g += d);
                    }
                    if li > 0 {
                        let mut dx = vec![0.0; rows * inputs];
                        gemm_nt(&delta, &w[weight..weight + inputs * outputs], rows, outputs, inputs, &mut dx);
                        delta = dx;
                    }
                }
                Layer::Norm { dim, gamma, .. } => {
                    let norm_cache = cache.norm[li].as_ref().expect("training pass caches every norm layer");
                    let mut dx = vec![0.0; rows * dim];
                    let (dgamma, dbeta) = grad[gamma..gamma + 2 * dim].split_at_mut(dim);
                    ghost_bn::backward(norm_cache, dim, &w[gamma..gamma + dim], &delta, &mut dx, dgamma, dbeta);
                    delta = dx;
                }
                Layer::Relu { .. } => {
                    for (d, &x) in delta.iter_mut().zip(input) {
                        if x <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
            }
        }
        Ok((Tensor::vector(grad)?, loss))
    }

    /// Training-mode forward and backward on one batch, updating the running
    /// statistics.
    pub fn loss_and_gradient(
        &mut self,
        x: &Tensor,
        labels: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<(Tensor, LossValue)> {
        let saved = self.mode;
        self.mode = Mode::Train;
        let result = self.forward(x);
        self.mode = saved;
        let (_, cache) = result?;
        self.backward(&cache, labels, weights)
    }

    /// Loss at an arbitrary parameter vector without touching the model.
    pub fn loss_at(&self, w: &[f64], x: &Tensor, labels: &[usize], stats: Statistics) -> Result<LossValue> {
        let pass = self.run(w, x, stats, false, self.layers.len())?;
        let logits = self.logits_tensor(x.rows(), pass.output)?;
        Ok(softmax_cross_entropy(&logits, labels)?.0)
    }

    /// Batch-statistics loss and gradient at `w` without touching the model.
    pub fn gradient_at(
        &self,
        w: &[f64],
        x: &Tensor,
        labels: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<(Tensor, LossValue)> {
        let pass = self.run(w, x, Statistics::Batch, true, self.layers.len())?;
        let cache = ForwardCache {
            version: self.version,
            train: true,
            rows: x.rows(),
            inputs: pass.inputs,
            norm: pass.norm,
            logits: self.logits_tensor(x.rows(), pass.output)?,
        };
        self.backward_with(w, &cache, labels, weights)
    }

    /// Inference-mode logits.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let pass = self.run(self.params.w(), x, Statistics::Running, false, self.layers.len())?;
        self.logits_tensor(x.rows(), pass.output)
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let logits = self.logits(x)?;
        Ok((0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best })
            })
            .collect())
    }

    /// Inference-mode mean loss and error rate over a dataset.
    pub fn evaluate(&self, data: &Dataset) -> Result<Evaluation> {
        let mut loss = 0.0;
        let mut wrong = 0usize;
        let all: Vec<usize> = (0..data.len()).collect();
        for chunk in all.chunks(EVAL_CHUNK) {
            let (x, labels) = data.batch(chunk)?;
            let logits = self.logits(&x)?;
            let (value, _) = softmax_cross_entropy(&logits, &labels)?;
            loss += value.per_sample.iter().sum::<f64>();
            let predicted = self.predict(&x)?;
            wrong += predicted.iter().zip(&labels).filter(|(p, y)| p != y).count();
        }
        Ok(Evaluation {
            loss: loss / data.len() as f64,
            error_rate: wrong as f64 / data.len() as f64,
        })
    }

    /// Replaces every running average by the exact statistics of `x`,
    /// layer after layer, each computed through the already recalibrated
    /// layers below it.
    pub fn recalibrate(&mut self, x: &Tensor) -> Result<()> {
        let eps = self.spec.bn_epsilon;
        for li in 0..self.layers.len() {
            let Layer::Norm { dim, slot, .. } = self.layers[li] else {
                continue;
            };
            let act = self.run(self.params.w(), x, Statistics::Running, false, li)?.output;
            let rows = x.rows();
            let mut whole = RunningStats::new(dim);
            let (_, chunks) = ghost_bn::forward_train(
                &act,
                rows,
                dim,
                rows,
                eps,
                &vec![1.0; dim],
                &vec![0.0; dim],
                &mut vec![0.0; rows * dim],
            );
            whole.mu.clone_from(&chunks[0].mu);
            whole.sigma.clone_from(&chunks[0].sigma);
            whole.updates = self.running[slot].updates.max(1);
            self.running[slot] = whole;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let checkpoint = Checkpoint {
            spec: self.spec.clone(),
            layers: self.layers.clone(),
            mode: self.mode,
            w: self.params.w().to_vec(),
            w0: self.params.w0().to_vec(),
            running: self.running.clone(),
        };
        serde_json::to_string(&checkpoint).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        let (layers, _) = c.spec.layout()?;
        if layers != c.layers {
            return Err(Error::Consistency("layer list does not match the network spec".into()));
        }
        let params = FlatParams::from_parts(Tensor::vector(c.w)?, Tensor::vector(c.w0)?)?;
        let mut model = Mlp::from_params(c.spec, params)?;
        if c.running.len() != model.running.len()
            || c.running.iter().zip(&model.running).any(|(a, b)| a.mu.len() != b.mu.len() || a.sigma.len() != b.sigma.len())
        {
            return Err(Error::Consistency("running statistics do not match the layers".into()));
        }
        model.running = c.running;
        model.mode = c.mode;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Mlp::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian, matmul};

    fn small(norm: Norm, seed: u64) -> Mlp {
        Mlp::new(MlpSpec::new(vec![3, 5, 4, 3], norm), &mut Rng::new(seed, 0)).unwrap()
    }

    #[test]
    fn glorot_bounds_and_zero_biases() {
        assert_eq!(glorot_bound(3, 3), 1.0);
        assert!((glorot_bound(784, 512) - 0.068041381743977).abs() < 1e-12);
        let model = small(Norm::Batch, 1);
        for (i, layer) in model.layers().iter().enumerate() {
            let p = model.layer_params(i);
            match *layer {
                Layer::Affine { inputs, outputs, .. } => {
                    let bound = glorot_bound(inputs, outputs);
                    let (wts, bias) = p.split_at(inputs * outputs);
                    assert!(wts.iter().all(|v| v.abs() <= bound));
                    assert!(bias.iter().all(|&v| v == 0.0));
                }
                Layer::Norm { dim, .. } => {
                    assert!(p[..dim].iter().all(|&v| v == 1.0));
                    assert!(p[dim..].iter().all(|&v| v == 0.0));
                }
                Layer::Relu { .. } => assert!(p.is_empty()),
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let mut model = small(Norm::Ghost(2), 2);
        let n = model.num_params();
        model.set_weights(&vec![0.0; n]).unwrap();
        let x = gaussian(&mut Rng::new(0, 1), &[4, 3], 0.0, 1.0).unwrap();
        let (logits, _) = model.forward(&x).unwrap();
        assert!(logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_network_is_matmul_plus_bias() {
        let mut model = Mlp::new(MlpSpec::new(vec![4, 3], Norm::None), &mut Rng::new(3, 0)).unwrap();
        let p = model.layer_params_mut(0);
        p[12..].copy_from_slice(&[0.5, -1.0, 2.0]);
        let w = Tensor::new(vec![4, 3], model.layer_params(0)[..12].to_vec()).unwrap();
        let x = gaussian(&mut Rng::new(3, 1), &[6, 4], 0.0, 1.0).unwrap();
        let expected = matmul(&x, &w).unwrap();
        let (logits, _) = model.forward(&x).unwrap();
        for r in 0..6 {
            for (j, b) in [0.5, -1.0, 2.0].iter().enumerate() {
                assert!((logits.row(r)[j] - expected.row(r)[j] - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn hand_computed_two_two_two() {
        let mut model = Mlp::new(MlpSpec::new(vec![2, 2, 2], Norm::None), &mut Rng::new(0, 0)).unwrap();
        // W1 = [[1, -1], [2, 0]], b1 = [0, 1]; W2 = [[1, 2], [3, -1]], b2 = [0.5, 0]
        model.set_weights(&[1.0, -1.0, 2.0, 0.0, 0.0, 1.0, 1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap();
        let x = Tensor::from_rows(&[vec![1.0, 1.0], vec![-1.0, 0.5]]).unwrap();
        let (logits, _) = model.forward(&x).unwrap();
        // row 0: h = relu([3, 0]) = [3, 0]; logits = [3.5, 6]
        // row 1: h = relu([0, 2]) = [0, 2]; logits = [6.5, -2]
        assert_eq!(logits.data(), &[3.5, 6.0, 6.5, -2.0]);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut model = small(Norm::Batch, 4);
        let x = gaussian(&mut Rng::new(4, 1), &[4, 3], 0.0, 1.0).unwrap();
        let (_, cache) = model.forward(&x).unwrap();
        model.params_mut().w_mut()[0] += 0.1;
        assert!(matches!(model.backward(&cache, &[0, 1, 2, 0], None), Err(Error::State(_))));
    }

    #[test]
    fn eval_cache_cannot_backpropagate() {
        let mut model = small(Norm::None, 4);
        model.set_mode(Mode::Eval);
        let x = gaussian(&mut Rng::new(4, 1), &[2, 3], 0.0, 1.0).unwrap();
        let (_, cache) = model.forward(&x).unwrap();
        assert!(matches!(model.backward(&cache, &[0, 1], None), Err(Error::State(_))));
    }

    #[test]
    fn eval_before_training_is_state_error() {
        let model = small(Norm::Batch, 5);
        let x = Tensor::zeros(&[1, 3]).unwrap();
        assert!(matches!(model.logits(&x), Err(Error::State(_))));
    }

    #[test]
    fn loss_weights_scale_gradient() {
        let mut model = small(Norm::Ghost(2), 6);
        let x = gaussian(&mut Rng::new(6, 1), &[4, 3], 0.0, 1.0).unwrap();
        let labels = [0, 2, 1, 1];
        let w = model.params().w().to_vec();
        let (g1, _) = model.gradient_at(&w, &x, &labels, None).unwrap();
        let (g2, _) = model.gradient_at(&w, &x, &labels, Some(&[2.0; 4])).unwrap();
        assert_eq!(g2.data(), g1.scale(2.0).data());
        let (g3, _) = model.loss_and_gradient(&x, &labels, None).unwrap();
        assert_eq!(g3, g1);
    }

    #[test]
    fn whole_batch_ghost_equals_batch_norm() {
        let x = gaussian(&mut Rng::new(7, 1), &[8, 3], 0.5, 2.0).unwrap();
        let mut a = small(Norm::Batch, 7);
        let mut b = small(Norm::Ghost(8), 7);
        let (ga, la) = a.loss_and_gradient(&x, &[0, 1, 2, 0, 1, 2, 0, 1], None).unwrap();
        let (gb, lb) = b.loss_and_gradient(&x, &[0, 1, 2, 0, 1, 2, 0, 1], None).unwrap();
        assert_eq!(ga, gb);
        assert_eq!(la, lb);
        assert_eq!(a.running_stats(), b.running_stats());
    }

    #[test]
    fn symmetric_toy_has_zero_gradient() {
        // identical inputs with opposite labels: zero weights are the exact minimizer
        let mut model = Mlp::new(MlpSpec::new(vec![2, 2], Norm::None), &mut Rng::new(0, 0)).unwrap();
        model.set_weights(&[0.0; 6]).unwrap();
        let x = Tensor::from_rows(&[vec![1.0, -2.0], vec![1.0, -2.0]]).unwrap();
        let (g, loss) = model.loss_and_gradient(&x, &[0, 1], None).unwrap();
        assert!(g.l2_norm() < 1e-8);
        assert!((loss.value - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn weight_distance_tracks_views() {
        let mut model = small(Norm::Batch, 8);
        assert_eq!(model.weight_distance(), 0.0);
        model.layer_params_mut(0)[1] += 1.0;
        assert!((model.weight_distance() - 1.0).abs() < 1e-15);
        let last = model.layers().len() - 1;
        model.layer_params_mut(last)[0] += 1.0;
        let n = model.num_params();
        model.params_mut().w_mut()[n - 1] += 1.0;
        assert!((model.weight_distance() - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let mut model = small(Norm::Ghost(2), 9);
        let x = gaussian(&mut Rng::new(9, 1), &[6, 3], 0.1, 1.3).unwrap();
        let (g, _) = model.loss_and_gradient(&x, &[0, 1, 2, 2, 1, 0], None).unwrap();
        for (w, gi) in model.params_mut().w_mut().iter_mut().zip(g.data()) {
            *w -= 0.37 * gi;
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = Mlp::load(&path).unwrap();
        assert_eq!(back.params(), model.params());
        assert_eq!(back.running_stats(), model.running_stats());
        assert_eq!(back.spec(), model.spec());
        assert_eq!(back.logits(&x).unwrap(), model.logits(&x).unwrap());
    }

    #[test]
    fn recalibration_uses_whole_data_statistics() {
        let mut model = small(Norm::Batch, 10);
        let x = gaussian(&mut Rng::new(10, 1), &[50, 3], 1.0, 3.0).unwrap();
        model.recalibrate(&x).unwrap();
        // the first normalization layer now sees exactly standardized inputs
        let first = model.run(model.params().w(), &x, Statistics::Running, false, 2).unwrap();
        for j in 0..5 {
            let col: Vec<f64> = first.output.iter().skip(j).step_by(5).copied().collect();
            assert!(crate::stats::mean(&col).abs() < 1e-12);
        }
    }
}
