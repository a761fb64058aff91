//! Mini-batch training loop shared by the experiments.

use serde::{Deserialize, Serialize};

use crate::datasets::{BatchSampler, Dataset, SamplingMode};
use crate::diffusion_lab::{DistanceEntry, DistanceSeries};
use crate::error::{Error, Result};
use crate::network::{Mlp, Norm, Statistics};
use crate::numerics::{l2_norm, Rng};
use crate::optimizer::{draw_noise_factors, NoiseConfig, Regime, SgdMomentum};

/// Gradient clipping during the first epochs of a run. The threshold is
/// `factor` times the norm of the full-data gradient at initialization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig {
    pub factor: f64,
    pub epochs: usize,
}

impl Default for ClipConfig {
    fn default() -> Self {
        ClipConfig { factor: 1.0, epochs: 1 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub regime: Regime,
    pub momentum: f64,
    pub sampling: SamplingMode,
    pub noise: NoiseConfig,
    pub clip: ClipConfig,
    /// Record the weight distance every this many iterations of the first
    /// phase; zero disables the series.
    pub distance_stride: usize,
    /// Evaluate on the validation set every this many epochs (and always
    /// after the last one).
    pub eval_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub iteration: usize,
    pub lr: f64,
    /// Mean of the mini-batch losses seen during the epoch.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_error: Option<f64>,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochRecord>,
    pub distance: DistanceSeries,
    pub iterations: usize,
    pub clip_threshold: Option<f64>,
    pub final_val_error: Option<f64>,
}

/// Norm of the gradient of the mean loss over the whole dataset, with
/// normalization statistics of the whole dataset.
pub fn full_gradient_norm(model: &Mlp, data: &Dataset) -> Result<f64> {
    let all: Vec<usize> = (0..data.len()).collect();
    let (x, labels) = data.batch(&all)?;
    let (g, _) = if let Norm::Ghost(_) = model.spec().norm {
        let mut whole = model.clone();
        whole.set_norm(Norm::Batch)?;
        whole.gradient_at(whole.params().w(), &x, &labels, None)?
    } else {
        model.gradient_at(model.params().w(), &x, &labels, None)?
    };
    Ok(l2_norm(g.data()))
}

/// Trains `model` in place. Sampling uses child stream 0 of `rng` and the
/// multiplicative noise child stream 1.
pub fn train(
    model: &mut Mlp,
    train_data: &Dataset,
    val_data: Option<&Dataset>,
    cfg: &TrainConfig,
    rng: &Rng,
) -> Result<TrainOutcome> {
    if cfg.eval_every == 0 {
        return Err(Error::Parameter("eval_every must be positive".into()));
    }
    let mut sampler = BatchSampler::new(cfg.sampling, cfg.batch_size, train_data.len(), rng.child(0))?;
    let mut noise_rng = rng.child(1);
    let per_epoch = sampler.batches_per_epoch();
    let total_epochs = cfg.regime.total_epochs();
    let first_phase_end = cfg.regime.phases()[0].epochs * per_epoch;
    let mut opt = SgdMomentum::new(cfg.regime.lr_at(0, per_epoch), cfg.momentum, model.num_params())?;

    let clip_threshold = if cfg.clip.epochs > 0 && cfg.clip.factor > 0.0 {
        Some(cfg.clip.factor * full_gradient_norm(model, train_data)?)
    } else {
        None
    };

    let mut series = DistanceSeries::default();
    if cfg.distance_stride > 0 {
        series.push(DistanceEntry {
            t: 0,
            distance: model.weight_distance(),
            train_loss: f64::NAN,
            val_error: None,
        })?;
    }

    let mut epochs = Vec::with_capacity(total_epochs);
    let mut t = 0;
    let mut grad = Vec::new();
    for epoch in 0..total_epochs {
        let clip = clip_threshold.filter(|c| epoch < cfg.clip.epochs && *c > 0.0);
        opt.set_clip_norm(clip)?;
        let mut loss_sum = 0.0;
        let mut lr = opt.lr();
        for _ in 0..per_epoch {
            lr = cfg.regime.lr_at(t, per_epoch);
            opt.set_lr(lr)?;
            let batch = sampler.next_batch();
            let (x, labels) = train_data.batch(&batch)?;
            let weights = if cfg.noise.is_silent() {
                None
            } else {
                Some(draw_noise_factors(cfg.noise, batch.len(), &mut noise_rng))
            };
            let (g, loss) = model.loss_and_gradient(&x, &labels, weights.as_deref())?;
            grad.clear();
            grad.extend_from_slice(g.data());
            opt.step(model.params_mut().w_mut(), &grad)?;
            loss_sum += loss.value;
            t += 1;
            if cfg.distance_stride > 0 && t <= first_phase_end && t % cfg.distance_stride == 0 {
                series.push(DistanceEntry {
                    t,
                    distance: model.weight_distance(),
                    train_loss: loss.value,
                    val_error: None,
                })?;
            }
        }
        let evaluate = (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == total_epochs;
        let (val_loss, val_error) = match (evaluate, val_data) {
            (true, Some(v)) => {
                let e = model.evaluate(v)?;
                (Some(e.loss), Some(e.error_rate))
            }
            _ => (None, None),
        };
        epochs.push(EpochRecord {
            epoch: epoch + 1,
            iteration: t,
            lr,
            train_loss: loss_sum / per_epoch as f64,
            val_loss,
            val_error,
            distance: model.weight_distance(),
        });
    }
    let final_val_error = epochs.last().and_then(|e| e.val_error);
    Ok(TrainOutcome {
        epochs,
        distance: series,
        iterations: t,
        clip_threshold,
        final_val_error,
    })
}

/// Loss of `model` at `w` on a fixed evaluation batch using its running
/// statistics when available and batch statistics otherwise.
pub fn loss_on(model: &Mlp, w: &[f64], data: &Dataset) -> Result<f64> {
    let all: Vec<usize> = (0..data.len()).collect();
    let (x, labels) = data.batch(&all)?;
    let trained = model.running_stats().iter().all(|r| r.is_trained());
    let stats = if trained { Statistics::Running } else { Statistics::Batch };
    Ok(model.loss_at(w, &x, &labels, stats)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::make_gaussian_blobs;
    use crate::network::{MlpSpec, Norm};
    use crate::optimizer::Phase;

    fn setup(seed: u64) -> (Mlp, Dataset, Dataset) {
        let data = make_gaussian_blobs(&mut Rng::new(seed, 0), 600, 4, 3, 0.3).unwrap();
        let (tr, va) = data.shuffled_split(&mut Rng::new(seed, 1), 400, 200).unwrap();
        let model = Mlp::new(MlpSpec::new(vec![4, 16, 3], Norm::Batch), &mut Rng::new(seed, 2)).unwrap();
        (model, tr, va)
    }

    fn config() -> TrainConfig {
        TrainConfig {
            batch_size: 32,
            regime: Regime::new(
                vec![
                    Phase { epochs: 4, multiplier: 1.0 },
                    Phase { epochs: 2, multiplier: 0.1 },
                ],
                0.1,
                32,
            )
            .unwrap(),
            momentum: 0.9,
            sampling: SamplingMode::WithoutReplacement,
            noise: NoiseConfig::new(0.0).unwrap(),
            clip: ClipConfig::default(),
            distance_stride: 5,
            eval_every: 1,
        }
    }

    #[test]
    fn full_gradient_ignores_ghost_size() {
        let (model, tr, _) = setup(6);
        let mut ghost = model.clone();
        ghost.set_norm(Norm::Ghost(32)).unwrap();
        let a = full_gradient_norm(&model, &tr).unwrap();
        let b = full_gradient_norm(&ghost, &tr).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn learns_blobs_and_logs_distance() {
        let (mut model, tr, va) = setup(1);
        let out = train(&mut model, &tr, Some(&va), &config(), &Rng::new(1, 3)).unwrap();
        assert_eq!(out.epochs.len(), 6);
        assert_eq!(out.iterations, 6 * 13);
        let err = out.final_val_error.unwrap();
        assert!(err < 0.05, "{err}");
        let entries = out.distance.entries();
        assert_eq!(entries[0].t, 0);
        assert_eq!(entries[0].distance, 0.0);
        assert_eq!(entries.last().unwrap().t, 50);
        assert!(out.clip_threshold.unwrap() > 0.0);
    }

    #[test]
    fn rerun_is_identical() {
        let run = || {
            let (mut model, tr, va) = setup(2);
            let mut cfg = config();
            cfg.noise = NoiseConfig::new(3.0).unwrap();
            let out = train(&mut model, &tr, Some(&va), &cfg, &Rng::new(2, 3)).unwrap();
            (out.epochs, model.params().w().to_vec())
        };
        assert_eq!(run(), run());
    }
}
