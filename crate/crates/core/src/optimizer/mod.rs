//! Momentum SGD, learning-rate regimes and the batch-size scaling rules.

mod noise;
mod schedule;
mod sgd;

pub use noise::{draw_noise_factors, match_small_batch_noise, noisy_gradient, NoiseConfig};
pub use schedule::{linear_lr_scale, regime_adapt, sqrt_lr_scale, LrScaling, Phase, Regime};
pub use sgd::SgdMomentum;
