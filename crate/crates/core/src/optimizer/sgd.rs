use crate::error::{Error, Result};
use crate::numerics::l2_norm;

/// Heavy-ball SGD on a flat parameter vector: `v ← m·v + ĝ`, `w ← w − η·v`,
/// with `ĝ` the loss gradient after optional global-norm clipping.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdMomentum {
    lr: f64,
    momentum: f64,
    velocity: Vec<f64>,
    clip_norm: Option<f64>,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64, num_params: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Parameter(format!("momentum {momentum} outside [0, 1)")));
        }
        let mut opt = SgdMomentum {
            lr: 0.0,
            momentum,
            velocity: vec![0.0; num_params],
            clip_norm: None,
        };
        opt.set_lr(lr)?;
        Ok(opt)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) -> Result<()> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::Parameter(format!("learning rate {lr} must be positive")));
        }
        self.lr = lr;
        Ok(())
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn clip_norm(&self) -> Option<f64> {
        self.clip_norm
    }

    pub fn set_clip_norm(&mut self, clip: Option<f64>) -> Result<()> {
        if let Some(c) = clip {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::Parameter(format!("clip norm {c} must be positive")));
            }
        }
        self.clip_norm = clip;
        Ok(())
    }

    /// Applies one update in place. Returns the gradient norm before
    /// clipping. A non-finite gradient leaves parameters and velocity
    /// untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<f64> {
        if params.len() != self.velocity.len() || grad.len() != self.velocity.len() {
            return Err(Error::Dimension(format!(
                "optimizer holds {} entries, got params {} and gradient {}",
                self.velocity.len(),
                params.len(),
                grad.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("gradient entry {i} is {}", grad[i])));
        }
        let norm = l2_norm(grad);
        let scale = match self.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        for ((w, v), &g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            let g = if scale == 1.0 { g } else { g * scale };
            *v = self.momentum * *v + g;
            *w -= self.lr * *v;
        }
        Ok(norm)
    }
}
