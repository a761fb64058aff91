//! Run configuration: a TOML file with one section per experiment family.
//!
//! Every section has documented defaults (see `sdl --print-defaults`), so a
//! minimal file only names the experiment and the dataset source. Unknown
//! keys are rejected, and errors carry the path of the offending key.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sdl_core::covariance_lab::SelectorMode;
use sdl_core::datasets::SamplingMode;
use sdl_core::network::Norm;
use sdl_core::optimizer::{LrScaling, Phase};
use sdl_core::random_walk_sim::MIN_WALKERS;

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, source: std::io::Error },
    Syntax(String),
    Key { path: String, message: String },
    Invalid { path: String, message: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            ConfigError::Syntax(msg) => write!(f, "config syntax error: {msg}"),
            ConfigError::Key { path, message } => write!(f, "config error at `{path}`: {message}"),
            ConfigError::Invalid { path, message } => write!(f, "invalid value at `{path}`: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Train,
    Ablate,
    CovVerify,
    Walk,
    RayScan,
    Logistic,
    Fit,
    Report,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Train => "train",
            Experiment::Ablate => "ablate",
            Experiment::CovVerify => "cov_verify",
            Experiment::Walk => "walk",
            Experiment::RayScan => "ray_scan",
            Experiment::Logistic => "logistic",
            Experiment::Fit => "fit",
            Experiment::Report => "report",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Mnist,
    Blobs,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DataSource,
    /// Directory holding `images-idx3-ubyte.gz` and `labels-idx1-ubyte.gz`
    /// for MNIST, or a CSV file.
    #[serde(default = "default_data_path")]
    pub path: PathBuf,
    #[serde(default = "default_train_size")]
    pub train_size: usize,
    #[serde(default = "default_val_size")]
    pub val_size: usize,
    /// Blobs only.
    #[serde(default = "default_blob_dim")]
    pub dim: usize,
    #[serde(default = "default_blob_classes")]
    pub classes: usize,
    #[serde(default = "default_blob_spread")]
    pub spread: f64,
}

fn default_data_path() -> PathBuf {
    PathBuf::from("data/mnist-5k")
}
fn default_train_size() -> usize {
    4000
}
fn default_val_size() -> usize {
    1000
}
fn default_blob_dim() -> usize {
    20
}
fn default_blob_classes() -> usize {
    10
}
fn default_blob_spread() -> f64 {
    0.5
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            source: DataSource::Mnist,
            path: default_data_path(),
            train_size: default_train_size(),
            val_size: default_val_size(),
            dim: default_blob_dim(),
            classes: default_blob_classes(),
            spread: default_blob_spread(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    None,
    Batch,
    Ghost,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub norm: NormKind,
    pub ghost_size: usize,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![256, 256],
            norm: NormKind::Batch,
            ghost_size: 128,
            bn_momentum: 0.1,
            bn_epsilon: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn norm(&self) -> Norm {
        match self.norm {
            NormKind::None => Norm::None,
            NormKind::Batch => Norm::Batch,
            NormKind::Ghost => Norm::Ghost(self.ghost_size),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Small-batch learning rate `η_S`.
    pub lr: f64,
    pub momentum: f64,
    pub batch_small: usize,
    pub batch_large: usize,
    pub clip_factor: f64,
    pub clip_epochs: usize,
    pub sampling: SamplingMode,
    /// Small-batch schedule; later phases multiply `η` by `multiplier`.
    pub schedule: Vec<Phase>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 0.1,
            momentum: 0.9,
            batch_small: 64,
            batch_large: 1024,
            clip_factor: 1.0,
            clip_epochs: 1,
            sampling: SamplingMode::WithoutReplacement,
            schedule: vec![
                Phase {
                    epochs: 10,
                    multiplier: 1.0,
                },
                Phase {
                    epochs: 5,
                    multiplier: 0.1,
                },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    /// Ladders are run for master seeds `seed, seed+1, …`.
    pub repeats: usize,
    pub lr_scaling: LrScaling,
    pub gbn: bool,
    pub regime_adapt: bool,
    pub mult_noise: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            repeats: 3,
            lr_scaling: LrScaling::Sqrt,
            gbn: true,
            regime_adapt: true,
            mult_noise: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoggingConfig {
    /// Weight distance is logged every this many iterations of the first
    /// phase; zero disables it.
    pub distance_stride: usize,
    pub eval_every: usize,
}

impl Default for LoggingConfig {
    fn default() -> Self {
        LoggingConfig {
            distance_stride: 10,
            eval_every: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CovarianceConfig {
    pub max_n: usize,
    pub max_m: usize,
    pub max_p: usize,
    pub populations: usize,
    pub modes: Vec<SelectorMode>,
    /// Monte Carlo comparison of large- and small-batch updates.
    pub mc_population: usize,
    pub mc_dim: usize,
    pub mc_small: usize,
    pub mc_large: usize,
    pub mc_draws: usize,
    pub mc_lr: f64,
    pub mc_z_limit: f64,
}

impl Default for CovarianceConfig {
    fn default() -> Self {
        CovarianceConfig {
            max_n: 8,
            max_m: 4,
            max_p: 3,
            populations: 20,
            modes: vec![SelectorMode::Bernoulli, SelectorMode::OrderedDraws, SelectorMode::Subsets],
            mc_population: 256,
            mc_dim: 3,
            mc_small: 4,
            mc_large: 64,
            mc_draws: 100_000,
            mc_lr: 0.1,
            mc_z_limit: 5.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Flat,
    Sinai,
    Fourier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkConfig {
    pub potential: PotentialKind,
    pub n_walkers: usize,
    pub steps: usize,
    pub checkpoints_per_decade: usize,
    pub temperature: f64,
    pub increment_std: f64,
    pub alpha: f64,
    pub dim: usize,
    pub features: usize,
    pub strength: f64,
    pub langevin_step: f64,
    /// Fit window `[t_lo, t_hi]`; empty means the last two decades.
    pub fit_window: Vec<usize>,
    /// Flat-lattice control run alongside every walk.
    pub control_walkers: usize,
    pub control_steps: usize,
    pub control_from: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            potential: PotentialKind::Sinai,
            n_walkers: 1000,
            steps: 10_000_000,
            checkpoints_per_decade: 10,
            temperature: 1.0,
            increment_std: 1.0,
            alpha: 1.0,
            dim: 1,
            features: 48,
            strength: 3.0,
            langevin_step: 0.01,
            fit_window: Vec::new(),
            control_walkers: 10_000,
            control_steps: 100_000,
            control_from: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RayScanConfig {
    pub c: f64,
    pub repeats: usize,
    pub bins: usize,
    /// Training samples on which the loss is evaluated.
    pub eval_samples: usize,
    /// Rays for the synthetic generating-model scan.
    pub synthetic_repeats: usize,
    /// Saved network to scan; when absent one is trained first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
}

impl Default for RayScanConfig {
    fn default() -> Self {
        RayScanConfig {
            c: 10.0,
            repeats: 1000,
            bins: 10,
            eval_samples: 512,
            synthetic_repeats: 10_000,
            model: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticConfig {
    pub n: usize,
    pub dim: usize,
    pub margin: f64,
    pub lr: f64,
    pub steps: usize,
    pub checkpoints_per_decade: usize,
    pub cosine_at: usize,
    pub spread_window: Vec<usize>,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            n: 20,
            dim: 2,
            margin: 0.5,
            lr: 1.0,
            steps: 1_000_000,
            checkpoints_per_decade: 10,
            cosine_at: 100_000,
            spread_window: vec![100_000, 1_000_000],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// CSV with `t` and `distance` columns.
    pub input: PathBuf,
    pub window: Vec<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            input: PathBuf::from("out/distance.csv"),
            window: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub ablation: AblationConfig,
    #[serde(default)]
    pub logging: LoggingConfig,
    #[serde(default)]
    pub covariance: CovarianceConfig,
    #[serde(default)]
    pub walk: WalkConfig,
    #[serde(default)]
    pub ray_scan: RayScanConfig,
    #[serde(default)]
    pub logistic: LogisticConfig,
    #[serde(default)]
    pub fit: FitConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn window(path: &str, values: &[usize]) -> Result<Option<(usize, usize)>, ConfigError> {
    match values {
        [] => Ok(None),
        [lo, hi] if lo < hi => Ok(Some((*lo, *hi))),
        _ => Err(invalid(path, "expected [] or [lo, hi] with lo < hi")),
    }
}

impl RunConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        RunConfig {
            experiment,
            seed: 0,
            out: default_out(),
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
            ablation: AblationConfig::default(),
            logging: LoggingConfig::default(),
            covariance: CovarianceConfig::default(),
            walk: WalkConfig::default(),
            ray_scan: RayScanConfig::default(),
            logistic: LogisticConfig::default(),
            fit: FitConfig::default(),
        }
    }

    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Key {
            path: e.path().to_string(),
            message: e.inner().message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seed > i64::MAX as u64 {
            return Err(invalid("seed", "must fit in a signed 64-bit integer"));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return Err(invalid("optimizer.lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&o.momentum) {
            return Err(invalid("optimizer.momentum", "must lie in [0, 1)"));
        }
        if o.batch_small == 0 || o.batch_large < o.batch_small {
            return Err(invalid("optimizer.batch_large", "need 0 < batch_small <= batch_large"));
        }
        if o.schedule.is_empty() || o.schedule.iter().any(|p| p.epochs == 0) {
            return Err(invalid("optimizer.schedule", "need at least one phase of positive length"));
        }
        if self.model.ghost_size == 0 {
            return Err(invalid("model.ghost_size", "must be positive"));
        }
        if self.model.ghost_size > o.batch_large {
            return Err(invalid(
                "model.ghost_size",
                format!("{} exceeds batch_large {}", self.model.ghost_size, o.batch_large),
            ));
        }
        if self.dataset.train_size == 0 || self.dataset.val_size == 0 {
            return Err(invalid("dataset.train_size", "train and validation sizes must be positive"));
        }
        if o.batch_large > self.dataset.train_size {
            return Err(invalid("optimizer.batch_large", "exceeds dataset.train_size"));
        }
        if self.ablation.repeats == 0 {
            return Err(invalid("ablation.repeats", "must be positive"));
        }
        if self.walk.n_walkers < MIN_WALKERS || self.walk.control_walkers < MIN_WALKERS {
            return Err(invalid("walk.n_walkers", format!("need at least {MIN_WALKERS} walkers")));
        }
        if self.ray_scan.bins < 2 || self.ray_scan.repeats == 0 || self.ray_scan.synthetic_repeats == 0 || !(self.ray_scan.c > 0.0) {
            return Err(invalid("ray_scan", "need c > 0, at least one repeat and two bins"));
        }
        if self.logging.eval_every == 0 {
            return Err(invalid("logging.eval_every", "must be positive"));
        }
        window("walk.fit_window", &self.walk.fit_window)?;
        window("logistic.spread_window", &self.logistic.spread_window)?;
        window("fit.window", &self.fit.window)?;
        Ok(())
    }

    pub fn walk_window(&self) -> Option<(usize, usize)> {
        window("walk.fit_window", &self.walk.fit_window).ok().flatten()
    }

    pub fn spread_window(&self) -> Option<(usize, usize)> {
        window("logistic.spread_window", &self.logistic.spread_window).ok().flatten()
    }

    pub fn fit_window(&self) -> Option<(usize, usize)> {
        window("fit.window", &self.fit.window).ok().flatten()
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::parse_str(&text)
}
