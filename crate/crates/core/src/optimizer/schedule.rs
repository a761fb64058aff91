use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A span of epochs trained at `base_lr · multiplier`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub epochs: usize,
    pub multiplier: f64,
}

/// Piecewise-constant learning-rate schedule defined in epochs of the
/// reference batch size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    phases: Vec<Phase>,
    base_lr: f64,
    base_batch: usize,
}

impl Regime {
    pub fn new(phases: Vec<Phase>, base_lr: f64, base_batch: usize) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::Parameter("a regime needs at least one phase".into()));
        }
        if !(base_lr > 0.0) || !base_lr.is_finite() || base_batch == 0 {
            return Err(Error::Parameter(format!(
                "base learning rate {base_lr} and batch {base_batch} must be positive"
            )));
        }
        for (i, p) in phases.iter().enumerate() {
            if p.epochs == 0 || !(p.multiplier > 0.0) || !p.multiplier.is_finite() {
                return Err(Error::Parameter(format!("phase {i} has invalid span or multiplier")));
            }
            if i > 0 && p.multiplier > phases[i - 1].multiplier {
                return Err(Error::Parameter(format!("multiplier rises at phase {i}")));
            }
        }
        Ok(Regime {
            phases,
            base_lr,
            base_batch,
        })
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn base_lr(&self) -> f64 {
        self.base_lr
    }

    pub fn base_batch(&self) -> usize {
        self.base_batch
    }

    pub fn total_epochs(&self) -> usize {
        self.phases.iter().map(|p| p.epochs).sum()
    }

    /// Same phases with a different base learning rate.
    pub fn with_base_lr(&self, base_lr: f64) -> Result<Regime> {
        Regime::new(self.phases.clone(), base_lr, self.base_batch)
    }

    /// Learning rate at iteration `t`; past the end the last phase holds.
    pub fn lr_at(&self, t: usize, iters_per_epoch: usize) -> f64 {
        let mut end = 0;
        for p in &self.phases {
            end += p.epochs * iters_per_epoch;
            if t < end {
                return self.base_lr * p.multiplier;
            }
        }
        self.base_lr * self.phases.last().map_or(1.0, |p| p.multiplier)
    }
}

/// Stretches every phase by `⌈|B_L|/|B_S|⌉`-fold in epochs so each phase
/// keeps its iteration count at the larger batch.
pub fn regime_adapt(regime: &Regime, large_batch: usize) -> Result<Regime> {
    if large_batch < regime.base_batch {
        return Err(Error::Parameter(format!(
            "large batch {large_batch} is smaller than the base batch {}",
            regime.base_batch
        )));
    }
    let phases = regime
        .phases
        .iter()
        .map(|p| Phase {
            epochs: (p.epochs * large_batch).div_ceil(regime.base_batch),
            multiplier: p.multiplier,
        })
        .collect();
    Regime::new(phases, regime.base_lr, large_batch)
}

/// How the learning rate follows the batch size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrScaling {
    #[default]
    Sqrt,
    Linear,
    None,
}

impl LrScaling {
    pub fn apply(self, lr_small: f64, small: usize, large: usize) -> Result<f64> {
        match self {
            LrScaling::Sqrt => sqrt_lr_scale(lr_small, small, large),
            LrScaling::Linear => linear_lr_scale(lr_small, small, large),
            LrScaling::None => {
                check_batches(small, large)?;
                Ok(lr_small)
            }
        }
    }
}

fn check_batches(small: usize, large: usize) -> Result<()> {
    if small == 0 || large == 0 {
        return Err(Error::Parameter("batch sizes must be positive".into()));
    }
    Ok(())
}

/// `η_L = η_S·√(|B_L|/|B_S|)`.
pub fn sqrt_lr_scale(lr_small: f64, small: usize, large: usize) -> Result<f64> {
    check_batches(small, large)?;
    Ok(lr_small * (large as f64 / small as f64).sqrt())
}

/// `η_L = η_S·|B_L|/|B_S|`.
pub fn linear_lr_scale(lr_small: f64, small: usize, large: usize) -> Result<f64> {
    check_batches(small, large)?;
    Ok(lr_small * large as f64 / small as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_phase() -> Regime {
        Regime::new(
            vec![
                Phase { epochs: 10, multiplier: 1.0 },
                Phase { epochs: 10, multiplier: 0.1 },
            ],
            0.5,
            64,
        )
        .unwrap()
    }

    #[test]
    fn lookup() {
        let r = two_phase();
        let per_epoch = 7;
        assert_eq!(r.lr_at(0, per_epoch), 0.5);
        assert!((r.lr_at(15 * per_epoch + 3, per_epoch) - 0.05).abs() < 1e-15);
        let boundary = 10 * per_epoch;
        assert_eq!(r.lr_at(boundary - 1, per_epoch) * 0.1, r.lr_at(boundary, per_epoch));
        assert_eq!(r.lr_at(10_000, per_epoch), r.lr_at(boundary, per_epoch));
    }

    #[test]
    fn rejects_rising_multipliers() {
        let phases = vec![
            Phase { epochs: 1, multiplier: 0.1 },
            Phase { epochs: 1, multiplier: 1.0 },
        ];
        assert!(Regime::new(phases, 0.1, 1).is_err());
        assert!(Regime::new(vec![Phase { epochs: 0, multiplier: 1.0 }], 0.1, 1).is_err());
    }

    #[test]
    fn adaptation_multiplies_spans() {
        let r = Regime::new(vec![Phase { epochs: 10, multiplier: 1.0 }], 0.1, 128).unwrap();
        assert_eq!(regime_adapt(&r, 4096).unwrap().phases()[0].epochs, 320);
        assert_eq!(regime_adapt(&r, 128).unwrap(), r);
        assert!(regime_adapt(&r, 64).is_err());
    }

    #[test]
    fn adaptation_preserves_iterations() {
        let n: usize = 8192;
        let (small, large) = (64, 1024);
        let r = two_phase();
        let adapted = regime_adapt(&r, large).unwrap();
        for (p, q) in r.phases().iter().zip(adapted.phases()) {
            assert_eq!(n.div_ceil(small) * p.epochs, n.div_ceil(large) * q.epochs);
        }
    }

    #[test]
    fn scaling_rules() {
        assert!((sqrt_lr_scale(0.1, 128, 4096).unwrap() - 0.565685424949238).abs() < 1e-12);
        assert_eq!(sqrt_lr_scale(0.3, 64, 64).unwrap(), 0.3);
        assert!((sqrt_lr_scale(0.05, 64, 256).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(linear_lr_scale(0.1, 64, 256).unwrap(), 0.4);
        assert!(sqrt_lr_scale(0.1, 0, 4).is_err());
    }
}
