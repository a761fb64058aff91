use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

/// Variance of the multiplicative per-sample gradient noise `zₙ ~ N(1, σ²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma_sq: f64,
}

impl NoiseConfig {
    pub fn new(sigma_sq: f64) -> Result<Self> {
        if !(sigma_sq >= 0.0) || !sigma_sq.is_finite() {
            return Err(Error::Parameter(format!("noise variance {sigma_sq} must be non-negative")));
        }
        Ok(NoiseConfig { sigma_sq })
    }

    pub fn is_silent(&self) -> bool {
        self.sigma_sq == 0.0
    }
}

/// `σ² = |B_L|/|B_S| − 1`, so that `(1 + σ²)/|B_L| = 1/|B_S|`.
pub fn match_small_batch_noise(small: usize, large: usize) -> Result<NoiseConfig> {
    if small == 0 || large < small {
        return Err(Error::Parameter(format!(
            "need 0 < small batch {small} <= large batch {large}"
        )));
    }
    NoiseConfig::new(large as f64 / small as f64 - 1.0)
}

/// One factor `zₙ ~ N(1, σ²)` per sample. With zero variance every factor is
/// exactly one and no randomness is consumed.
pub fn draw_noise_factors(noise: NoiseConfig, count: usize, rng: &mut Rng) -> Vec<f64> {
    if noise.is_silent() {
        return vec![1.0; count];
    }
    let sigma = noise.sigma_sq.sqrt();
    (0..count)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            1.0 + sigma * z
        })
        .collect()
}

/// `(1/M)·Σₙ zₙ·gₙ` over the rows of `per_sample`.
pub fn noisy_gradient(per_sample: &Tensor, noise: NoiseConfig, rng: &mut Rng) -> Result<Tensor> {
    if per_sample.shape().len() != 2 {
        return Err(Error::Dimension(format!(
            "per-sample gradients must be M×P, got {:?}",
            per_sample.shape()
        )));
    }
    let (m, p) = (per_sample.rows(), per_sample.cols());
    let z = draw_noise_factors(noise, m, rng);
    let mut out = vec![0.0; p];
    for (n, zn) in z.iter().enumerate() {
        for (o, g) in out.iter_mut().zip(per_sample.row(n)) {
            *o += zn * g;
        }
    }
    out.iter_mut().for_each(|o| *o /= m as f64);
    Tensor::vector(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gaussian;
    use crate::stats::{mean, variance};

    #[test]
    fn matched_variances() {
        assert_eq!(match_small_batch_noise(128, 4096).unwrap().sigma_sq, 31.0);
        assert_eq!(match_small_batch_noise(128, 512).unwrap().sigma_sq, 3.0);
        assert_eq!(match_small_batch_noise(64, 64).unwrap().sigma_sq, 0.0);
        assert!(match_small_batch_noise(128, 64).is_err());
        let s = match_small_batch_noise(128, 4096).unwrap().sigma_sq;
        assert_eq!((1.0 + s) / 4096.0, 1.0 / 128.0);
    }

    #[test]
    fn silent_noise_is_plain_mean() {
        let g = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, -4.0], vec![5.0, 0.5]]).unwrap();
        let out = noisy_gradient(&g, NoiseConfig::new(0.0).unwrap(), &mut Rng::new(0, 0)).unwrap();
        assert_eq!(out.data(), &[3.0, -0.5]);
    }

    #[test]
    fn unbiased_in_expectation() {
        let mut rng = Rng::new(21, 0);
        let g = gaussian(&mut rng, &[4, 3], 0.0, 1.0).unwrap();
        let plain: Vec<f64> = (0..3).map(|j| (0..4).map(|n| g.row(n)[j]).sum::<f64>() / 4.0).collect();
        let noise = NoiseConfig::new(3.0).unwrap();
        let draws = 100_000;
        let mut samples = vec![Vec::new(); 3];
        for _ in 0..draws {
            let out = noisy_gradient(&g, noise, &mut rng).unwrap();
            for (s, &v) in samples.iter_mut().zip(out.data()) {
                s.push(v);
            }
        }
        for j in 0..3 {
            let se = (variance(&samples[j]) / draws as f64).sqrt();
            assert!((mean(&samples[j]) - plain[j]).abs() < 5.0 * se);
        }
    }

    #[test]
    fn single_sample_variance() {
        let mut rng = Rng::new(22, 0);
        let g = Tensor::from_rows(&[vec![1.0]]).unwrap();
        let noise = NoiseConfig::new(4.0).unwrap();
        let out: Vec<f64> = (0..100_000)
            .map(|_| noisy_gradient(&g, noise, &mut rng).unwrap().data()[0])
            .collect();
        // sample variance of 1e5 normals has relative sd √(2/1e5) ≈ 0.45%
        assert!((variance(&out) - 4.0).abs() < 4.0 * 0.025);
    }
}
