//! The large-batch ladder: SB, LB, +LR, +GBN, +RA.
//!
//! Rungs are cumulative. Each one starts from the same `w₀` and uses the
//! same sampling stream for its master seed, so differences between rungs
//! come only from the technique the rung adds.

use std::fmt;
use std::time::Instant;

use anyhow::Result;

use sdl_core::datasets::Dataset;
use sdl_core::diffusion_lab::DistanceSeries;
use sdl_core::network::Norm;
use sdl_core::optimizer::{match_small_batch_noise, regime_adapt, NoiseConfig, Regime};
use sdl_core::training::EpochRecord;

use crate::config::{NormKind, RunConfig};
use crate::runs::{init_model, run_training, small_batch_regime, train_config};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rung {
    Sb,
    Lb,
    Lr,
    Gbn,
    Ra,
}

impl Rung {
    pub const ALL: [Rung; 5] = [Rung::Sb, Rung::Lb, Rung::Lr, Rung::Gbn, Rung::Ra];

    pub fn label(self) -> &'static str {
        match self {
            Rung::Sb => "SB",
            Rung::Lb => "LB",
            Rung::Lr => "+LR",
            Rung::Gbn => "+GBN",
            Rung::Ra => "+RA",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Rung::Sb => "sb",
            Rung::Lb => "lb",
            Rung::Lr => "lr",
            Rung::Gbn => "gbn",
            Rung::Ra => "ra",
        }
    }
}

impl fmt::Display for Rung {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Everything a rung changes relative to the small-batch baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct RungSetup {
    pub rung: Rung,
    pub batch_size: usize,
    pub lr: f64,
    pub norm: Norm,
    pub regime: Regime,
    pub noise: NoiseConfig,
}

fn base_norm(cfg: &RunConfig) -> Norm {
    match cfg.model.norm {
        NormKind::None => Norm::None,
        NormKind::Batch | NormKind::Ghost => Norm::Batch,
    }
}

pub fn norm_label(norm: Norm) -> String {
    match norm {
        Norm::None => "none".into(),
        Norm::Batch => "batch".into(),
        Norm::Ghost(g) => format!("ghost({g})"),
    }
}

pub fn rung_setup(cfg: &RunConfig, rung: Rung) -> Result<RungSetup> {
    let o = &cfg.optimizer;
    let a = &cfg.ablation;
    let silent = NoiseConfig::new(0.0)?;
    let mut setup = RungSetup {
        rung,
        batch_size: o.batch_small,
        lr: o.lr,
        norm: base_norm(cfg),
        regime: small_batch_regime(cfg)?,
        noise: silent,
    };
    if rung >= Rung::Lb {
        setup.batch_size = o.batch_large;
    }
    if rung >= Rung::Lr {
        setup.lr = a.lr_scaling.apply(o.lr, o.batch_small, o.batch_large)?;
        setup.regime = setup.regime.with_base_lr(setup.lr)?;
        if a.mult_noise {
            setup.noise = match_small_batch_noise(o.batch_small, o.batch_large)?;
        }
    }
    if rung >= Rung::Gbn && a.gbn && setup.norm != Norm::None {
        setup.norm = Norm::Ghost(cfg.model.ghost_size);
    }
    if rung >= Rung::Ra && a.regime_adapt {
        setup.regime = regime_adapt(&setup.regime, o.batch_large)?;
    }
    Ok(setup)
}

/// Outcome of one rung for one master seed.
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub rung: Rung,
    pub seed: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub norm: String,
    pub noise_sigma_sq: f64,
    pub epochs: usize,
    pub iterations: usize,
    pub final_train_loss: f64,
    pub final_train_error: f64,
    pub final_val_error: f64,
    pub epoch_log: Vec<EpochRecord>,
    pub distance: DistanceSeries,
    pub wall_clock_secs: f64,
}

pub fn run_rung(cfg: &RunConfig, train_data: &Dataset, val_data: &Dataset, rung: Rung, seed: u64) -> Result<RunReport> {
    let setup = rung_setup(cfg, rung)?;
    let start = Instant::now();
    let model = init_model(cfg, train_data, setup.norm, seed)?;
    let tc = train_config(cfg, setup.batch_size, setup.regime.clone(), setup.noise);
    let run = run_training(model, train_data, val_data, &tc, seed)?;
    let last = run.outcome.epochs.last().expect("at least one epoch");
    Ok(RunReport {
        rung,
        seed,
        batch_size: setup.batch_size,
        lr: setup.lr,
        norm: norm_label(setup.norm),
        noise_sigma_sq: setup.noise.sigma_sq,
        epochs: setup.regime.total_epochs(),
        iterations: run.outcome.iterations,
        final_train_loss: last.train_loss,
        final_train_error: run.train_error,
        final_val_error: run.outcome.final_val_error.unwrap_or(f64::NAN),
        epoch_log: run.outcome.epochs,
        distance: run.outcome.distance,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// A ladder that stopped early, with the rungs finished before the failure.
#[derive(Debug)]
pub struct AblationError {
    pub partial: Vec<RunReport>,
    pub source: anyhow::Error,
}

impl fmt::Display for AblationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ablation aborted after {} runs: {:#}", self.partial.len(), self.source)
    }
}

impl std::error::Error for AblationError {}

pub fn ablation_seeds(cfg: &RunConfig) -> Vec<u64> {
    (0..cfg.ablation.repeats as u64).map(|i| cfg.seed.wrapping_add(i)).collect()
}

/// Runs every rung for every ladder seed, seed-major in rung order.
pub fn run_ablation(cfg: &RunConfig, train_data: &Dataset, val_data: &Dataset) -> Result<Vec<RunReport>, AblationError> {
    let mut reports = Vec::new();
    for seed in ablation_seeds(cfg) {
        for rung in Rung::ALL {
            match run_rung(cfg, train_data, val_data, rung, seed) {
                Ok(r) => {
                    eprintln!(
                        "seed {seed} {:<4} val error {:.4} ({:.1}s)",
                        rung.label(),
                        r.final_val_error,
                        r.wall_clock_secs
                    );
                    reports.push(r)
                }
                Err(source) => {
                    return Err(AblationError {
                        partial: reports,
                        source,
                    })
                }
            }
        }
    }
    Ok(reports)
}

/// Mean final validation error of each rung over the ladder seeds.
pub fn mean_errors(reports: &[RunReport]) -> Vec<(Rung, Option<f64>)> {
    Rung::ALL
        .iter()
        .map(|&rung| {
            let errs: Vec<f64> = reports.iter().filter(|r| r.rung == rung).map(|r| r.final_val_error).collect();
            let mean = (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64);
            (rung, mean)
        })
        .collect()
}
