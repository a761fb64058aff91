use std::f64::consts::TAU;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffusion_lab::random_direction;
use crate::error::{Error, Result};
use crate::numerics::{dot, Rng};
use crate::stats::linear_fit;

/// Distances over which the structure exponent is calibrated.
pub const CALIBRATION_RANGE: (f64, f64) = (0.1, 10.0);
const CALIBRATION_POINTS: usize = 20;
const CALIBRATION_DIRECTIONS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierSpec {
    pub dim: usize,
    pub alpha: f64,
    pub num_features: usize,
    /// `√S(1)`: root structure function at unit distance.
    pub strength: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

impl FourierSpec {
    pub fn new(dim: usize, alpha: f64, num_features: usize) -> Self {
        FourierSpec {
            dim,
            alpha,
            num_features,
            strength: 1.0,
            rho_min: 1e-2,
            rho_max: 20.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.num_features == 0 {
            return Err(Error::Parameter("dimension and feature count must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::Parameter(format!("alpha {} outside (0, 2)", self.alpha)));
        }
        if !(self.strength > 0.0) || !(self.rho_min > 0.0 && self.rho_max > self.rho_min) {
            return Err(Error::Parameter("invalid strength or frequency band".into()));
        }
        Ok(())
    }
}

/// `L(w) = Σₖ a·cos(ωₖ·w + φₖ)` with radial frequencies drawn from a
/// truncated power law `ρ^{−1−β}`. The exponent `β` is tuned so the
/// structure function `E(L(w₁) − L(w₂))²` has log-log slope `α` over
/// [`CALIBRATION_RANGE`].
#[derive(Clone, Debug, PartialEq)]
pub struct FourierField {
    spec: FourierSpec,
    seed: u64,
    amplitude: f64,
    radial_exponent: f64,
    calibrated_slope: f64,
    omegas: Vec<f64>,
    phases: Vec<f64>,
}

/// Inverse CDF of the density `∝ ρ^{−1−β}` on `[lo, hi]`.
fn radial_quantile(u: f64, beta: f64, lo: f64, hi: f64) -> f64 {
    if beta.abs() < 1e-12 {
        return lo * (hi / lo).powf(u);
    }
    let (a, b) = (lo.powf(-beta), hi.powf(-beta));
    (a - u * (a - b)).powf(-1.0 / beta)
}

struct Draws {
    quantiles: Vec<f64>,
    directions: Vec<Vec<f64>>,
    phases: Vec<f64>,
    probes: Vec<Vec<f64>>,
}

fn probe_distances() -> Vec<f64> {
    let (lo, hi) = CALIBRATION_RANGE;
    (0..CALIBRATION_POINTS)
        .map(|i| lo * (hi / lo).powf(i as f64 / (CALIBRATION_POINTS - 1) as f64))
        .collect()
}

impl Draws {
    fn new(spec: &FourierSpec, seed: u64) -> Self {
        let mut rng = Rng::new(seed, 0xf0_0e_1e_d0);
        let k = spec.num_features;
        // stratified radial quantiles
        let quantiles = (0..k).map(|i| (i as f64 + rng.uniform()) / k as f64).collect();
        let directions = (0..k).map(|_| random_direction(&mut rng, spec.dim)).collect();
        let phases = (0..k).map(|_| TAU * rng.uniform()).collect();
        let probes = (0..CALIBRATION_DIRECTIONS)
            .map(|_| random_direction(&mut rng, spec.dim))
            .collect();
        Draws {
            quantiles,
            directions,
            phases,
            probes,
        }
    }

    fn radii(&self, spec: &FourierSpec, beta: f64) -> Vec<f64> {
        self.quantiles
            .iter()
            .map(|&u| radial_quantile(u, beta, spec.rho_min, spec.rho_max))
            .collect()
    }

    /// Direction-averaged `Σₖ (1 − cos(r·ρₖ·uₖ·e))` at unit amplitude.
    fn structure(&self, radii: &[f64], r: f64) -> f64 {
        let mut total = 0.0;
        for (rho, dir) in radii.iter().zip(&self.directions) {
            let avg: f64 = self
                .probes
                .iter()
                .map(|e| (r * rho * dot(dir, e)).cos())
                .sum::<f64>()
                / self.probes.len() as f64;
            total += 1.0 - avg;
        }
        total
    }

    fn slope(&self, spec: &FourierSpec, beta: f64) -> f64 {
        let radii = self.radii(spec, beta);
        let rs = probe_distances();
        let x: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
        let y: Vec<f64> = rs.iter().map(|&r| self.structure(&radii, r).max(1e-300).ln()).collect();
        linear_fit(&x, &y).map_or(f64::NAN, |f| f.slope)
    }
}

impl FourierField {
    pub fn new(spec: FourierSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let draws = Draws::new(&spec, seed);
        let target = spec.alpha;
        // secant on β, safeguarded by a bracket on which the slope rises
        let (mut lo, mut hi) = (-1.0, 3.0);
        let (mut f_lo, mut f_hi) = (draws.slope(&spec, lo) - target, draws.slope(&spec, hi) - target);
        if !(f_lo < 0.0 && f_hi > 0.0) {
            return Err(Error::Fit(format!(
                "structure slope cannot reach {target} (range {:.3}..{:.3})",
                f_lo + target,
                f_hi + target
            )));
        }
        let mut beta = target;
        let mut f = draws.slope(&spec, beta) - target;
        for _ in 0..60 {
            if f.abs() < 1e-4 {
                break;
            }
            if f < 0.0 {
                lo = beta;
                f_lo = f;
            } else {
                hi = beta;
                f_hi = f;
            }
            let secant = lo - f_lo * (hi - lo) / (f_hi - f_lo);
            beta = if secant > lo && secant < hi { secant } else { 0.5 * (lo + hi) };
            f = draws.slope(&spec, beta) - target;
        }
        let radii = draws.radii(&spec, beta);
        let unit = draws.structure(&radii, 1.0);
        let amplitude = spec.strength / unit.sqrt();
        let omegas = radii
            .iter()
            .zip(&draws.directions)
            .flat_map(|(rho, dir)| dir.iter().map(move |u| rho * u))
            .collect();
        Ok(FourierField {
            spec,
            seed,
            amplitude,
            radial_exponent: beta,
            calibrated_slope: f + target,
            omegas,
            phases: draws.phases,
        })
    }

    /// Field with explicit amplitudes-free features, mainly for tests.
    pub fn from_features(amplitude: f64, omegas: Vec<Vec<f64>>, phases: Vec<f64>) -> Result<Self> {
        let dim = omegas.first().map_or(0, Vec::len);
        if dim == 0 || omegas.len() != phases.len() || omegas.iter().any(|o| o.len() != dim) {
            return Err(Error::Dimension("features must share one positive dimension".into()));
        }
        let mut spec = FourierSpec::new(dim, 1.0, omegas.len());
        spec.strength = amplitude;
        Ok(FourierField {
            spec,
            seed: 0,
            amplitude,
            radial_exponent: f64::NAN,
            calibrated_slope: f64::NAN,
            omegas: omegas.concat(),
            phases,
        })
    }

    pub fn spec(&self) -> &FourierSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Tuned `β` of the radial density.
    pub fn radial_exponent(&self) -> f64 {
        self.radial_exponent
    }

    /// Log-log slope of the direction-averaged structure function at `β`.
    pub fn calibrated_slope(&self) -> f64 {
        self.calibrated_slope
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let d = self.dim();
        self.omegas
            .chunks(d)
            .zip(&self.phases)
            .map(|(o, p)| (dot(o, w) + p).cos())
            .sum::<f64>()
            * self.amplitude
    }

    /// Writes `∇L(w)` into `grad`.
    pub fn gradient(&self, w: &[f64], grad: &mut [f64]) {
        let d = self.dim();
        grad.fill(0.0);
        for (o, p) in self.omegas.chunks(d).zip(&self.phases) {
            let s = -self.amplitude * (dot(o, w) + p).sin();
            grad.iter_mut().zip(o).for_each(|(g, oi)| *g += s * oi);
        }
    }

    /// One overdamped Langevin step `w ← w − h·∇L(w) + √(2hT)·ξ`.
    pub fn langevin_step(&self, w: &mut [f64], step: f64, temperature: f64, grad: &mut [f64], rng: &mut Rng) {
        self.gradient(w, grad);
        let noise = (2.0 * step * temperature).sqrt();
        for (wi, g) in w.iter_mut().zip(grad.iter()) {
            let z: f64 = StandardNormal.sample(rng);
            *wi += -step * g + noise * z;
        }
    }
}
