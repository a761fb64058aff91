//! Data loading, seeding and single training runs shared by the
//! experiment drivers.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use sdl_core::datasets::{load_mnist_idx, make_gaussian_blobs, read_csv, Dataset};
use sdl_core::network::{Mlp, MlpSpec, Norm};
use sdl_core::numerics::Rng;
use sdl_core::optimizer::{NoiseConfig, Regime};
use sdl_core::training::{train, ClipConfig, TrainConfig, TrainOutcome};

use crate::config::{DataSource, RunConfig};

/// Stream ids under the master seed.
pub const STREAM_DATA: u64 = 1;
pub const STREAM_SPLIT: u64 = 2;
pub const STREAM_INIT: u64 = 3;
pub const STREAM_TRAIN: u64 = 4;
pub const STREAM_RAY: u64 = 5;
pub const STREAM_LOGISTIC: u64 = 6;
pub const STREAM_COVARIANCE: u64 = 7;
pub const STREAM_CONTROL: u64 = 8;

pub const MNIST_IMAGES: &str = "images-idx3-ubyte.gz";
pub const MNIST_LABELS: &str = "labels-idx1-ubyte.gz";

/// Files the dataset is read from, in hashing order.
pub fn data_files(cfg: &RunConfig) -> Vec<PathBuf> {
    match cfg.dataset.source {
        DataSource::Mnist => vec![cfg.dataset.path.join(MNIST_IMAGES), cfg.dataset.path.join(MNIST_LABELS)],
        DataSource::Csv => vec![cfg.dataset.path.clone()],
        DataSource::Blobs => Vec::new(),
    }
}

/// SHA-256 over the effective configuration and every input file.
pub fn input_hash(cfg: &RunConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(cfg.to_toml().as_bytes());
    for path in data_files(cfg) {
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Train and validation splits drawn from the master seed.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let d = &cfg.dataset;
    let all = match d.source {
        DataSource::Mnist => load_mnist_idx(d.path.join(MNIST_IMAGES), d.path.join(MNIST_LABELS))
            .with_context(|| format!("loading MNIST from {}", d.path.display()))?,
        DataSource::Csv => read_csv(&d.path).with_context(|| format!("loading {}", d.path.display()))?,
        DataSource::Blobs => make_gaussian_blobs(
            &mut Rng::new(cfg.seed, STREAM_DATA),
            d.train_size + d.val_size,
            d.dim,
            d.classes,
            d.spread,
        )?,
    };
    if all.len() < d.train_size + d.val_size {
        bail!(
            "dataset holds {} samples, config asks for {} + {}",
            all.len(),
            d.train_size,
            d.val_size
        );
    }
    Ok(all.shuffled_split(&mut Rng::new(cfg.seed, STREAM_SPLIT), d.train_size, d.val_size)?)
}

pub fn network_name(cfg: &RunConfig, data: &Dataset) -> String {
    let mut dims = vec![data.dim()];
    dims.extend(&cfg.model.hidden);
    dims.push(data.num_classes());
    let dims: Vec<String> = dims.iter().map(usize::to_string).collect();
    format!("mlp-{}", dims.join("-"))
}

pub fn dataset_name(cfg: &RunConfig) -> String {
    match cfg.dataset.source {
        DataSource::Mnist => format!("mnist-{}", cfg.dataset.train_size + cfg.dataset.val_size),
        DataSource::Csv => cfg
            .dataset
            .path
            .file_stem()
            .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned()),
        DataSource::Blobs => format!("blobs-{}", cfg.dataset.train_size + cfg.dataset.val_size),
    }
}

pub fn model_spec(cfg: &RunConfig, data: &Dataset, norm: Norm) -> MlpSpec {
    let mut dims = vec![data.dim()];
    dims.extend(&cfg.model.hidden);
    dims.push(data.num_classes());
    let mut spec = MlpSpec::new(dims, norm);
    spec.bn_momentum = cfg.model.bn_momentum;
    spec.bn_epsilon = cfg.model.bn_epsilon;
    spec
}

/// Freshly initialized network; every normalization choice shares the
/// same `w₀` for a given seed.
pub fn init_model(cfg: &RunConfig, data: &Dataset, norm: Norm, seed: u64) -> Result<Mlp> {
    Ok(Mlp::new(model_spec(cfg, data, norm), &mut Rng::new(seed, STREAM_INIT))?)
}

pub fn small_batch_regime(cfg: &RunConfig) -> Result<Regime> {
    Ok(Regime::new(
        cfg.optimizer.schedule.clone(),
        cfg.optimizer.lr,
        cfg.optimizer.batch_small,
    )?)
}

pub fn train_config(cfg: &RunConfig, batch_size: usize, regime: Regime, noise: NoiseConfig) -> TrainConfig {
    TrainConfig {
        batch_size,
        regime,
        momentum: cfg.optimizer.momentum,
        sampling: cfg.optimizer.sampling,
        noise,
        clip: ClipConfig {
            factor: cfg.optimizer.clip_factor,
            epochs: cfg.optimizer.clip_epochs,
        },
        distance_stride: cfg.logging.distance_stride,
        eval_every: cfg.logging.eval_every,
    }
}

pub struct TrainedRun {
    pub model: Mlp,
    pub outcome: TrainOutcome,
    pub train_error: f64,
}

pub fn run_training(
    model: Mlp,
    train_data: &Dataset,
    val_data: &Dataset,
    tc: &TrainConfig,
    seed: u64,
) -> Result<TrainedRun> {
    let mut model = model;
    let outcome = train(&mut model, train_data, Some(val_data), tc, &Rng::new(seed, STREAM_TRAIN))?;
    let train_error = model.evaluate(train_data)?.error_rate;
    Ok(TrainedRun {
        model,
        outcome,
        train_error,
    })
}
