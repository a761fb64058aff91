use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// `M` independent uniform draws per batch (a multiset).
    WithReplacement,
    /// Consecutive slices of a per-epoch uniform permutation.
    WithoutReplacement,
}

/// Draws mini-batch index sets from a population of `N` samples.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    mode: SamplingMode,
    batch_size: usize,
    population: usize,
    rng: Rng,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
}

impl BatchSampler {
    pub fn new(mode: SamplingMode, batch_size: usize, population: usize, rng: Rng) -> Result<Self> {
        if batch_size == 0 || batch_size > population {
            return Err(Error::Parameter(format!(
                "batch size {batch_size} must lie in [1, {population}]"
            )));
        }
        Ok(BatchSampler {
            mode,
            batch_size,
            population,
            rng,
            order: (0..population).collect(),
            cursor: population,
            epoch: 0,
        })
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn population(&self) -> usize {
        self.population
    }

    /// `⌈N/M⌉`; without replacement the last batch of an epoch holds the
    /// `N mod M` leftover indices when `M` does not divide `N`.
    pub fn batches_per_epoch(&self) -> usize {
        self.population.div_ceil(self.batch_size)
    }

    /// Number of epoch permutations drawn so far (without replacement only).
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        match self.mode {
            SamplingMode::WithReplacement => (0..self.batch_size)
                .map(|_| self.rng.below(self.population))
                .collect(),
            SamplingMode::WithoutReplacement => {
                if self.cursor >= self.population {
                    self.rng.shuffle(&mut self.order);
                    self.cursor = 0;
                    self.epoch += 1;
                }
                let end = (self.cursor + self.batch_size).min(self.population);
                let batch = self.order[self.cursor..end].to_vec();
                self.cursor = end;
                batch
            }
        }
    }
}
