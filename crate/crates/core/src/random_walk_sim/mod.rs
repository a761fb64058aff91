//! Walkers on random potentials: Metropolis moves on a one-dimensional
//! lattice with Gaussian bond increments, and overdamped Langevin dynamics
//! on smooth random Fourier fields.

mod fourier;
mod sinai;

pub use fourier::{FourierField, FourierSpec, CALIBRATION_RANGE};
pub use sinai::{hashed_normal, SinaiPotential};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion_lab::{log_checkpoints, random_direction};
use crate::error::{Error, Result};
use crate::numerics::{mix64, Rng};
use crate::stats::linear_fit;
use sinai::BondCache;

pub const DEFAULT_LANGEVIN_STEP: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Flat,
    Sinai { increment_std: f64 },
    Fourier(FourierSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    Metropolis,
    Langevin,
}

impl PotentialSpec {
    pub fn dynamics(&self) -> Dynamics {
        match self {
            PotentialSpec::Fourier(_) => Dynamics::Langevin,
            _ => Dynamics::Metropolis,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub potential: PotentialSpec,
    pub n_walkers: usize,
    pub steps: usize,
    pub checkpoints_per_decade: usize,
    pub temperature: f64,
    pub langevin_step: f64,
    pub seed: u64,
}

impl DiffusionConfig {
    pub fn new(potential: PotentialSpec, n_walkers: usize, steps: usize, seed: u64) -> Self {
        DiffusionConfig {
            potential,
            n_walkers,
            steps,
            checkpoints_per_decade: 10,
            temperature: 1.0,
            langevin_step: DEFAULT_LANGEVIN_STEP,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_walkers == 0 || self.steps == 0 || self.checkpoints_per_decade == 0 {
            return Err(Error::Parameter("walkers, steps and checkpoint density must be positive".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Parameter(format!("temperature {} must be positive", self.temperature)));
        }
        if !(self.langevin_step > 0.0 && self.langevin_step.is_finite()) {
            return Err(Error::Parameter("Langevin step must be positive".into()));
        }
        if let PotentialSpec::Sinai { increment_std } = self.potential {
            if !(increment_std >= 0.0 && increment_std.is_finite()) {
                return Err(Error::Parameter("increment_std must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Seed of walker `i`'s own disorder realization.
    pub fn potential_seed(&self, i: usize) -> u64 {
        mix64(self.seed ^ mix64(i as u64 ^ 0x7075_7465_6e74_6961))
    }
}

#[derive(Clone, Debug)]
enum Walker {
    Lattice {
        x: i64,
        cache: BondCache,
        rng: Rng,
    },
    Continuous {
        w: Vec<f64>,
        field: FourierField,
        grad: Vec<f64>,
        rng: Rng,
        step: f64,
        temperature: f64,
    },
}

impl Walker {
    fn advance(&mut self, steps: usize) {
        match self {
            Walker::Lattice { x, cache, rng } => {
                let mut pos = *x;
                for _ in 0..steps {
                    pos = cache.step(pos, rng.next_u64());
                }
                *x = pos;
            }
            Walker::Continuous {
                w,
                field,
                grad,
                rng,
                step,
                temperature,
            } => {
                for _ in 0..steps {
                    field.langevin_step(w, *step, *temperature, grad, rng);
                }
            }
        }
    }

    fn squared_displacement(&self) -> f64 {
        match self {
            Walker::Lattice { x, .. } => (*x as f64) * (*x as f64),
            Walker::Continuous { w, .. } => w.iter().map(|v| v * v).sum(),
        }
    }

    fn position(&self) -> Vec<f64> {
        match self {
            Walker::Lattice { x, .. } => vec![*x as f64],
            Walker::Continuous { w, .. } => w.clone(),
        }
    }
}

/// Independent walkers started at the origin, each with its own disorder
/// and its own random stream. Lattice walkers consume one `u64` per step.
#[derive(Clone, Debug)]
pub struct WalkerEnsemble {
    config: DiffusionConfig,
    walkers: Vec<Walker>,
    t: usize,
}

impl WalkerEnsemble {
    pub fn new(config: DiffusionConfig) -> Result<Self> {
        config.validate()?;
        let moves = Rng::new(config.seed, 1);
        let walkers = (0..config.n_walkers)
            .into_par_iter()
            .map(|i| {
                let rng = moves.child(i as u64);
                let seed = config.potential_seed(i);
                Ok(match config.potential {
                    PotentialSpec::Flat => Walker::Lattice {
                        x: 0,
                        cache: BondCache::new(SinaiPotential::new(seed, 0.0), config.temperature),
                        rng,
                    },
                    PotentialSpec::Sinai { increment_std } => Walker::Lattice {
                        x: 0,
                        cache: BondCache::new(SinaiPotential::new(seed, increment_std), config.temperature),
                        rng,
                    },
                    PotentialSpec::Fourier(spec) => Walker::Continuous {
                        w: vec![0.0; spec.dim],
                        field: FourierField::new(spec, seed)?,
                        grad: vec![0.0; spec.dim],
                        rng,
                        step: config.langevin_step,
                        temperature: config.temperature,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WalkerEnsemble { config, walkers, t: 0 })
    }

    pub fn config(&self) -> &DiffusionConfig {
        &self.config
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn len(&self) -> usize {
        self.walkers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walkers.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec<f64>> {
        self.walkers.iter().map(Walker::position).collect()
    }

    /// Advances every walker by one move.
    pub fn step(&mut self) {
        self.advance(1);
    }

    pub fn advance(&mut self, steps: usize) {
        self.walkers.par_iter_mut().for_each(|w| w.advance(steps));
        self.t += steps;
    }

    pub fn squared_displacements(&self) -> Vec<f64> {
        self.walkers.iter().map(Walker::squared_displacement).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: usize,
    pub msd: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionCurve {
    pub config: DiffusionConfig,
    pub points: Vec<CurvePoint>,
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean squared displacement at log-spaced checkpoints. Walkers run in
/// parallel and are reduced in index order, so the curve does not depend
/// on the thread count.
pub fn run_diffusion_experiment(config: &DiffusionConfig) -> Result<DiffusionCurve> {
    if config.n_walkers < MIN_WALKERS {
        return Err(Error::Parameter(format!(
            "{} walkers, need at least {MIN_WALKERS}",
            config.n_walkers
        )));
    }
    let mut ensemble = WalkerEnsemble::new(*config)?;
    let checkpoints = log_checkpoints(config.steps, config.checkpoints_per_decade);
    let traces: Vec<Vec<f64>> = ensemble
        .walkers
        .par_iter_mut()
        .map(|w| {
            let mut t = 0;
            checkpoints
                .iter()
                .map(|&c| {
                    w.advance(c - t);
                    t = c;
                    w.squared_displacement()
                })
                .collect()
        })
        .collect();
    ensemble.t = config.steps;
    let mut points = vec![CurvePoint {
        t: 0,
        msd: 0.0,
        stderr: 0.0,
    }];
    for (k, &t) in checkpoints.iter().enumerate() {
        let column: Vec<f64> = traces.iter().map(|tr| tr[k]).collect();
        let (msd, stderr) = mean_and_stderr(&column);
        points.push(CurvePoint { t, msd, stderr });
    }
    Ok(DiffusionCurve { config: *config, points })
}

/// `MSD(t)/t` of unbiased lattice walkers at checkpoints `t ≥ from`.
pub fn flat_control(n_walkers: usize, steps: usize, from: usize, seed: u64) -> Result<Vec<(usize, f64)>> {
    let cfg = DiffusionConfig::new(PotentialSpec::Flat, n_walkers, steps, seed);
    let curve = run_diffusion_experiment(&cfg)?;
    Ok(curve
        .points
        .iter()
        .filter(|p| p.t >= from.max(1))
        .map(|p| (p.t, p.msd / p.t as f64))
        .collect())
}

/// Potentials whose increments can be sampled at a given separation.
pub trait PairSampler {
    /// `L(w₂) − L(w₁)` for a random pair at distance `r`.
    fn pair_difference(&self, r: f64, rng: &mut Rng) -> Result<f64>;
}

const SINAI_PAIR_RANGE: usize = 1_000_000;
const FOURIER_PAIR_BOX: f64 = 1e4;

impl PairSampler for SinaiPotential {
    fn pair_difference(&self, r: f64, rng: &mut Rng) -> Result<f64> {
        if !(r >= 0.0) || r.fract() != 0.0 {
            return Err(Error::Parameter(format!("lattice distance {r} must be a non-negative integer")));
        }
        let x = rng.below(2 * SINAI_PAIR_RANGE + 1) as i64 - SINAI_PAIR_RANGE as i64;
        Ok(self.difference(x, x + r as i64))
    }
}

impl PairSampler for FourierField {
    fn pair_difference(&self, r: f64, rng: &mut Rng) -> Result<f64> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::Parameter(format!("distance {r} must be non-negative")));
        }
        let w1: Vec<f64> = (0..self.dim())
            .map(|_| FOURIER_PAIR_BOX * (2.0 * rng.uniform() - 1.0))
            .collect();
        let u = random_direction(rng, self.dim());
        let w2: Vec<f64> = w1.iter().zip(&u).map(|(a, b)| a + r * b).collect();
        Ok(self.value(&w2) - self.value(&w1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructurePoint {
    pub r: f64,
    pub value: f64,
    pub stderr: f64,
}

pub const MIN_PAIRS: usize = 1000;
pub const MIN_WALKERS: usize = 100;

/// Monte Carlo estimate of `E(L(w₁) − L(w₂))²` at each distance.
pub fn structure_function<P: PairSampler>(
    potential: &P,
    distances: &[f64],
    n_pairs: usize,
    rng: &mut Rng,
) -> Result<Vec<StructurePoint>> {
    if n_pairs < MIN_PAIRS {
        return Err(Error::Parameter(format!("{n_pairs} pairs per distance, need {MIN_PAIRS}")));
    }
    distances
        .iter()
        .map(|&r| {
            let sq = (0..n_pairs)
                .map(|_| potential.pair_difference(r, rng).map(|d| d * d))
                .collect::<Result<Vec<_>>>()?;
            let (value, stderr) = mean_and_stderr(&sq);
            Ok(StructurePoint { r, value, stderr })
        })
        .collect()
}

/// Competing fits of the late MSD: `ln MSD` against `ln ln t` (slope `p`)
/// and against `ln t` (slope `γ`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub p: f64,
    pub p_r_squared: f64,
    pub gamma: f64,
    pub gamma_r_squared: f64,
    pub window: (usize, usize),
    pub points: usize,
}

impl ExponentFit {
    /// True when the power law in `t` fits at least as well as the
    /// power of `ln t`.
    pub fn power_law_preferred(&self) -> bool {
        self.gamma_r_squared >= self.p_r_squared
    }
}

/// Fits the curve over `window` (default: the last two decades). The
/// usable part of the curve (`t ≥ 2`, positive MSD) must hold at least ten
/// checkpoints spanning three decades.
pub fn estimate_diffusion_exponent(curve: &DiffusionCurve, window: Option<(usize, usize)>) -> Result<ExponentFit> {
    let usable: Vec<&CurvePoint> = curve.points.iter().filter(|p| p.t >= 2 && p.msd > 0.0).collect();
    if usable.len() < 10 {
        return Err(Error::Fit(format!("{} usable checkpoints, need 10", usable.len())));
    }
    let (t_min, t_max) = (usable[0].t, usable[usable.len() - 1].t);
    if (t_max as f64) < 1000.0 * t_min as f64 {
        return Err(Error::Fit(format!("checkpoints span {t_min}..{t_max}, need three decades")));
    }
    let window = window.unwrap_or(((t_max / 100).max(2), t_max));
    let inside: Vec<&&CurvePoint> = usable.iter().filter(|p| p.t >= window.0 && p.t <= window.1).collect();
    if inside.len() < 3 {
        return Err(Error::Fit(format!("{} checkpoints inside window {window:?}", inside.len())));
    }
    let y: Vec<f64> = inside.iter().map(|p| p.msd.ln()).collect();
    let ln_t: Vec<f64> = inside.iter().map(|p| (p.t as f64).ln()).collect();
    let ln_ln_t: Vec<f64> = ln_t.iter().map(|v| v.ln()).collect();
    let p_fit = linear_fit(&ln_ln_t, &y)?;
    let g_fit = linear_fit(&ln_t, &y)?;
    Ok(ExponentFit {
        p: p_fit.slope,
        p_r_squared: p_fit.r_squared,
        gamma: g_fit.slope,
        gamma_r_squared: g_fit.r_squared,
        window,
        points: inside.len(),
    })
}
