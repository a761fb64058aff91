//! Exact and sampled covariance of the mini-batch gradient
//! `ĝ = (1/M)·Σₙ sₙ·gₙ` for a fixed population of per-sample gradients.
//!
//! Three selector models are covered:
//!
//! * [`SelectorMode::Bernoulli`]: every `sₙ` is an independent
//!   Bernoulli(`M/N`) indicator, so `E[sₙsₙ'] = M²/N²` for `n ≠ n'`. The
//!   covariance is exactly `(1/M − 1/N)·C`.
//! * [`SelectorMode::OrderedDraws`]: `M` independent uniform indices with
//!   repeats allowed. The covariance is exactly `(1/M)·(C − g gᵀ)`.
//! * [`SelectorMode::Subsets`]: a uniform `M`-subset. The covariance is
//!   exactly `(N − M)/(M(N − 1))·(C − g gᵀ)`.
//!
//! Here `C = (1/N)·Σ gₙgₙᵀ` and `g` is the population mean.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datasets::SeparableDataset;
use crate::error::{Error, Result};
use crate::numerics::{dot, Rng, Tensor};
use crate::optimizer::{draw_noise_factors, NoiseConfig};

/// Largest number of batches an exact enumeration may visit.
pub const MAX_ENUMERATION: u128 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorMode {
    Bernoulli,
    OrderedDraws,
    Subsets,
}

impl SelectorMode {
    pub fn name(self) -> &'static str {
        match self {
            SelectorMode::Bernoulli => "bernoulli",
            SelectorMode::OrderedDraws => "ordered_draws",
            SelectorMode::Subsets => "subsets",
        }
    }
}

/// Per-sample gradients `gₙ` (rows) with their mean and second moment.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientPopulation {
    grads: Tensor,
    mean: Vec<f64>,
    second: Tensor,
}

impl GradientPopulation {
    pub fn new(grads: Tensor) -> Result<Self> {
        if grads.shape().len() != 2 {
            return Err(Error::Dimension(format!(
                "per-sample gradients must be N×P, got {:?}",
                grads.shape()
            )));
        }
        let (n, p) = (grads.rows(), grads.cols());
        let mut mean = vec![0.0; p];
        let mut second = vec![0.0; p * p];
        for r in 0..n {
            let g = grads.row(r);
            for i in 0..p {
                mean[i] += g[i];
                for j in 0..p {
                    second[i * p + j] += g[i] * g[j];
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        second.iter_mut().for_each(|s| *s /= n as f64);
        Ok(GradientPopulation {
            grads,
            mean,
            second: Tensor::new(vec![p, p], second)?,
        })
    }

    pub fn n(&self) -> usize {
        self.grads.rows()
    }

    pub fn p(&self) -> usize {
        self.grads.cols()
    }

    pub fn grads(&self) -> &Tensor {
        &self.grads
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `C = (1/N)·Σ gₙgₙᵀ`.
    pub fn second_moment(&self) -> &Tensor {
        &self.second
    }

    /// `C − g gᵀ`, the per-sample covariance.
    pub fn centered_second_moment(&self) -> Tensor {
        let p = self.p();
        let mut out = self.second.clone();
        for i in 0..p {
            for j in 0..p {
                out.data_mut()[i * p + j] -= self.mean[i] * self.mean[j];
            }
        }
        out
    }

    fn mean_outer(&self) -> Tensor {
        let p = self.p();
        let data = (0..p * p).map(|k| self.mean[k / p] * self.mean[k % p]).collect();
        Tensor::new(vec![p, p], data).expect("finite mean")
    }
}

/// `N × P` standard normal gradients. With `centered`, the sample mean is
/// subtracted so that `g = 0` up to rounding.
pub fn random_population(rng: &mut Rng, n: usize, p: usize, centered: bool) -> Result<GradientPopulation> {
    if n == 0 || p == 0 {
        return Err(Error::Parameter("population needs N >= 1 and P >= 1".into()));
    }
    let mut data: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(rng)).collect();
    if centered {
        for j in 0..p {
            let m = (0..n).map(|r| data[r * p + j]).sum::<f64>() / n as f64;
            (0..n).for_each(|r| data[r * p + j] -= m);
        }
    }
    GradientPopulation::new(Tensor::new(vec![n, p], data)?)
}

/// Per-sample gradients of the logistic loss `ln(1 + exp(−yₙ·w·xₙ))`.
pub fn logistic_population(data: &SeparableDataset, w: &[f64]) -> Result<GradientPopulation> {
    if w.len() != data.dim() {
        return Err(Error::Dimension(format!("w has {} entries for dimension {}", w.len(), data.dim())));
    }
    let mut grads = Vec::with_capacity(data.len() * data.dim());
    for n in 0..data.len() {
        let x = data.inputs().row(n);
        let y = data.labels()[n];
        let s = 1.0 / (1.0 + (y * dot(w, x)).exp());
        grads.extend(x.iter().map(|xi| -y * s * xi));
    }
    GradientPopulation::new(Tensor::new(vec![data.len(), data.dim()], grads)?)
}

fn check_batch(pop: &GradientPopulation, m: usize) -> Result<()> {
    if m == 0 || m > pop.n() {
        return Err(Error::Parameter(format!("batch size {m} must lie in [1, {}]", pop.n())));
    }
    Ok(())
}

/// `(1/M − 1/N)·C`.
pub fn closed_form_with_replacement(pop: &GradientPopulation, m: usize) -> Result<Tensor> {
    if m == 0 {
        return Err(Error::Parameter("batch size must be positive".into()));
    }
    Ok(pop.second.scale(1.0 / m as f64 - 1.0 / pop.n() as f64))
}

/// `(1/M − 1/(N−1))·C + g gᵀ/(N−1)`, the same-batch covariance formula for
/// sampling without replacement as derived from the pairwise selector
/// probability `M²/(N(N−1))`.
pub fn closed_form_without_replacement_same_batch(pop: &GradientPopulation, m: usize) -> Result<Tensor> {
    check_batch(pop, m)?;
    if pop.n() < 2 {
        return Err(Error::Parameter("need N >= 2".into()));
    }
    let n1 = (pop.n() - 1) as f64;
    pop.second
        .scale(1.0 / m as f64 - 1.0 / n1)
        .add(&pop.mean_outer().scale(1.0 / n1))
}

/// `g gᵀ/(N−1)`, the matching cross-batch formula.
pub fn closed_form_cross_batch(pop: &GradientPopulation) -> Result<Tensor> {
    if pop.n() < 2 {
        return Err(Error::Parameter("need N >= 2".into()));
    }
    Ok(pop.mean_outer().scale(1.0 / (pop.n() - 1) as f64))
}

/// `(1/M)·(C − g gᵀ)`.
pub fn closed_form_ordered_draws(pop: &GradientPopulation, m: usize) -> Result<Tensor> {
    if m == 0 {
        return Err(Error::Parameter("batch size must be positive".into()));
    }
    Ok(pop.centered_second_moment().scale(1.0 / m as f64))
}

/// `(N − M)/(M(N − 1))·(C − g gᵀ)`; zero for `N = 1`.
pub fn closed_form_subsets(pop: &GradientPopulation, m: usize) -> Result<Tensor> {
    check_batch(pop, m)?;
    let n = pop.n();
    if n == 1 {
        return Ok(pop.second.scale(0.0));
    }
    let factor = (n - m) as f64 / (m as f64 * (n - 1) as f64);
    Ok(pop.centered_second_moment().scale(factor))
}

/// `−(C − g gᵀ)/(N − 1)`: covariance between two disjoint consecutive
/// batches of one epoch permutation.
pub fn closed_form_partition_cross(pop: &GradientPopulation) -> Result<Tensor> {
    if pop.n() < 2 {
        return Err(Error::Parameter("need N >= 2".into()));
    }
    Ok(pop.centered_second_moment().scale(-1.0 / (pop.n() - 1) as f64))
}

/// Closed form matching each selector model exactly.
pub fn closed_form(pop: &GradientPopulation, m: usize, mode: SelectorMode) -> Result<Tensor> {
    match mode {
        SelectorMode::Bernoulli => closed_form_with_replacement(pop, m),
        SelectorMode::OrderedDraws => closed_form_ordered_draws(pop, m),
        SelectorMode::Subsets => closed_form_subsets(pop, m),
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn guard(count: u128, what: &str) -> Result<()> {
    if count > MAX_ENUMERATION {
        return Err(Error::Size(format!("{what}: {count} batches exceed {MAX_ENUMERATION}")));
    }
    Ok(())
}

/// Weighted mean and covariance of batch gradients, accumulated in the
/// order the batches are visited.
struct Moments {
    p: usize,
    weight: f64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Moments {
    fn new(p: usize) -> Self {
        Moments {
            p,
            weight: 0.0,
            first: vec![0.0; p],
            second: vec![0.0; p * p],
        }
    }

    /// Accumulates centred at `center` to avoid cancellation.
    fn add(&mut self, prob: f64, g_hat: &[f64], center: &[f64]) {
        self.weight += prob;
        for i in 0..self.p {
            let di = g_hat[i] - center[i];
            self.first[i] += prob * di;
            for j in 0..self.p {
                self.second[i * self.p + j] += prob * di * (g_hat[j] - center[j]);
            }
        }
    }

    fn covariance(&self) -> Result<Tensor> {
        let p = self.p;
        let mean: Vec<f64> = self.first.iter().map(|f| f / self.weight).collect();
        let data = (0..p * p)
            .map(|k| self.second[k] / self.weight - mean[k / p] * mean[k % p])
            .collect();
        Tensor::new(vec![p, p], data)
    }

    fn mean(&self, center: &[f64]) -> Vec<f64> {
        self.first.iter().zip(center).map(|(f, c)| c + f / self.weight).collect()
    }
}

fn batch_mean(pop: &GradientPopulation, indices: &[usize], m: usize, out: &mut [f64]) {
    out.fill(0.0);
    for &i in indices {
        for (o, g) in out.iter_mut().zip(pop.grads.row(i)) {
            *o += g;
        }
    }
    out.iter_mut().for_each(|o| *o /= m as f64);
}

/// Exact mean and covariance of `ĝ` over every batch the selector model can
/// produce, weighted by its probability.
pub fn enumerate_moments(pop: &GradientPopulation, m: usize, mode: SelectorMode) -> Result<(Vec<f64>, Tensor)> {
    let n = pop.n();
    let p = pop.p();
    let center = pop.mean.clone();
    let mut acc = Moments::new(p);
    let mut g_hat = vec![0.0; p];
    match mode {
        SelectorMode::Bernoulli => {
            check_batch(pop, m)?;
            if n >= 64 {
                return Err(Error::Size(format!("2^{n} selector patterns")));
            }
            guard(1u128 << n, "selector patterns")?;
            let q = m as f64 / n as f64;
            let mut members = Vec::with_capacity(n);
            for mask in 0u64..(1u64 << n) {
                members.clear();
                members.extend((0..n).filter(|&i| mask >> i & 1 == 1));
                let k = members.len() as i32;
                let prob = q.powi(k) * (1.0 - q).powi(n as i32 - k);
                batch_mean(pop, &members, m, &mut g_hat);
                acc.add(prob, &g_hat, &center);
            }
        }
        SelectorMode::OrderedDraws => {
            if m == 0 {
                return Err(Error::Parameter("batch size must be positive".into()));
            }
            guard((n as u128).checked_pow(m as u32).unwrap_or(u128::MAX), "ordered draws")?;
            let mut draw = vec![0usize; m];
            loop {
                batch_mean(pop, &draw, m, &mut g_hat);
                acc.add(1.0, &g_hat, &center);
                // odometer increment
                let mut pos = m;
                loop {
                    if pos == 0 {
                        return Ok((acc.mean(&center), acc.covariance()?));
                    }
                    pos -= 1;
                    draw[pos] += 1;
                    if draw[pos] < n {
                        break;
                    }
                    draw[pos] = 0;
                }
            }
        }
        SelectorMode::Subsets => {
            check_batch(pop, m)?;
            guard(binomial(n, m), "subsets")?;
            let mut subset: Vec<usize> = (0..m).collect();
            loop {
                batch_mean(pop, &subset, m, &mut g_hat);
                acc.add(1.0, &g_hat, &center);
                if !next_combination(&mut subset, n) {
                    break;
                }
            }
        }
    }
    Ok((acc.mean(&center), acc.covariance()?))
}

/// Exact covariance of `ĝ` by enumeration.
pub fn enumerate_cov(pop: &GradientPopulation, m: usize, mode: SelectorMode) -> Result<Tensor> {
    Ok(enumerate_moments(pop, m, mode)?.1)
}

/// Lexicographic successor of a sorted `k`-subset of `0..n`.
fn next_combination(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if subset[i] < n - k + i {
            subset[i] += 1;
            for j in i + 1..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact cross-covariance `E[ĝ₁ĝ₂ᵀ] − E ĝ₁ E ĝ₂ᵀ` of two disjoint batches
/// taken consecutively from one uniform permutation.
pub fn enumerate_partition_cross_cov(pop: &GradientPopulation, m: usize) -> Result<Tensor> {
    let n = pop.n();
    if m == 0 || 2 * m > n {
        return Err(Error::Parameter(format!("two disjoint batches of {m} need N >= {}", 2 * m)));
    }
    guard(binomial(n, m).saturating_mul(binomial(n - m, m)), "batch pairs")?;
    let p = pop.p();
    let mut first = vec![0.0; p];
    let mut second = vec![0.0; p];
    let mut cross = vec![0.0; p * p];
    let mut count = 0.0;
    let mut a: Vec<usize> = (0..m).collect();
    loop {
        let rest: Vec<usize> = (0..n).filter(|i| !a.contains(i)).collect();
        batch_mean(pop, &a, m, &mut first);
        let mut b: Vec<usize> = (0..m).collect();
        loop {
            let picked: Vec<usize> = b.iter().map(|&i| rest[i]).collect();
            batch_mean(pop, &picked, m, &mut second);
            for i in 0..p {
                for j in 0..p {
                    cross[i * p + j] += (first[i] - pop.mean[i]) * (second[j] - pop.mean[j]);
                }
            }
            count += 1.0;
            if !next_combination(&mut b, n - m) {
                break;
            }
        }
        if !next_combination(&mut a, n) {
            break;
        }
    }
    Tensor::new(vec![p, p], cross.iter().map(|c| c / count).collect())
}

/// Sampled covariance with the standard error of every entry.
#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloCov {
    pub cov: Tensor,
    pub stderr: Tensor,
    pub draws: usize,
}

fn draw_batch(rng: &mut Rng, mode: SelectorMode, m: usize, scratch: &mut [usize], out: &mut Vec<usize>) {
    let n = scratch.len();
    out.clear();
    match mode {
        SelectorMode::Bernoulli => {
            let q = m as f64 / n as f64;
            out.extend((0..n).filter(|_| rng.uniform() < q));
        }
        SelectorMode::OrderedDraws => out.extend((0..m).map(|_| rng.below(n))),
        SelectorMode::Subsets => {
            // partial Fisher-Yates; `scratch` stays a permutation of 0..n
            for i in 0..m {
                let j = i + rng.below(n - i);
                scratch.swap(i, j);
            }
            out.extend_from_slice(&scratch[..m]);
        }
    }
}

/// Sample covariance of `(1/M)·Σ sₙ·zₙ·gₙ` over `draws` independent
/// batches, with `zₙ ~ N(1, σ²)` when `noise` is given.
pub fn monte_carlo_cov(
    pop: &GradientPopulation,
    m: usize,
    mode: SelectorMode,
    draws: usize,
    noise: Option<NoiseConfig>,
    rng: &mut Rng,
) -> Result<MonteCarloCov> {
    check_batch(pop, m)?;
    if draws < 2 {
        return Err(Error::Parameter("need at least two draws".into()));
    }
    let (n, p) = (pop.n(), pop.p());
    let mut scratch: Vec<usize> = (0..n).collect();
    let mut batch = Vec::with_capacity(m);
    let mut samples = vec![0.0; draws * p];
    for d in 0..draws {
        draw_batch(rng, mode, m, &mut scratch, &mut batch);
        let z = match noise {
            Some(cfg) => draw_noise_factors(cfg, batch.len(), rng),
            None => vec![1.0; batch.len()],
        };
        let row = &mut samples[d * p..(d + 1) * p];
        for (&i, zi) in batch.iter().zip(&z) {
            for (o, g) in row.iter_mut().zip(pop.grads.row(i)) {
                *o += zi * g;
            }
        }
        row.iter_mut().for_each(|o| *o /= m as f64);
    }
    let mean: Vec<f64> = (0..p)
        .map(|j| (0..draws).map(|d| samples[d * p + j]).sum::<f64>() / draws as f64)
        .collect();
    let mut cov = vec![0.0; p * p];
    let mut stderr = vec![0.0; p * p];
    let dn = draws as f64;
    for i in 0..p {
        for j in 0..p {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for d in 0..draws {
                let x = (samples[d * p + i] - mean[i]) * (samples[d * p + j] - mean[j]);
                sum += x;
                sum_sq += x * x;
            }
            let avg = sum / dn;
            cov[i * p + j] = sum / (dn - 1.0);
            let var = (sum_sq / dn - avg * avg).max(0.0) * dn / (dn - 1.0);
            stderr[i * p + j] = (var / dn).sqrt();
        }
    }
    Ok(MonteCarloCov {
        cov: Tensor::new(vec![p, p], cov)?,
        stderr: Tensor::new(vec![p, p], stderr)?,
        draws,
    })
}

/// Largest `|a − b| / √(se_a² + se_b²)` over all entries. Entries where both
/// standard errors vanish count as zero if equal and infinite otherwise.
pub fn max_z_score(a: &MonteCarloCov, b: &MonteCarloCov) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..a.cov.len() {
        let diff = (a.cov.data()[k] - b.cov.data()[k]).abs();
        let se = (a.stderr.data()[k].powi(2) + b.stderr.data()[k].powi(2)).sqrt();
        let z = if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
    }
    worst
}

/// Covariance of the weight update `Δw = −η·ĝ`.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateCovariance {
    /// `η²` times the exact covariance of the selector model.
    pub exact: Tensor,
    /// `(η²/M)·C`.
    pub approximation: Tensor,
    /// `‖exact − approximation‖_F / ‖approximation‖_F`.
    pub relative_gap: f64,
}

pub fn update_covariance(pop: &GradientPopulation, m: usize, lr: f64, mode: SelectorMode) -> Result<UpdateCovariance> {
    let exact = closed_form(pop, m, mode)?.scale(lr * lr);
    let approximation = pop.second.scale(lr * lr / m as f64);
    let gap = exact.sub(&approximation)?.l2_norm();
    let scale = approximation.l2_norm();
    Ok(UpdateCovariance {
        relative_gap: if scale > 0.0 { gap / scale } else { gap },
        exact,
        approximation,
    })
}

/// A closed form checked against an empirical or enumerated covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceReport {
    pub mode: SelectorMode,
    pub m: usize,
    pub n: usize,
    pub closed_form: Tensor,
    pub empirical: Tensor,
    pub max_abs_err: f64,
}

impl CovarianceReport {
    pub fn new(mode: SelectorMode, m: usize, n: usize, closed_form: Tensor, empirical: Tensor) -> Result<Self> {
        let max_abs_err = closed_form.max_abs_diff(&empirical)?;
        Ok(CovarianceReport {
            mode,
            m,
            n,
            closed_form,
            empirical,
            max_abs_err,
        })
    }
}

/// Closed form of the selector model against its exact enumeration.
pub fn verify_by_enumeration(pop: &GradientPopulation, m: usize, mode: SelectorMode) -> Result<CovarianceReport> {
    CovarianceReport::new(
        mode,
        m,
        pop.n(),
        closed_form(pop, m, mode)?,
        enumerate_cov(pop, m, mode)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> GradientPopulation {
        GradientPopulation::new(Tensor::from_rows(&[vec![2.0], vec![0.0]]).unwrap()).unwrap()
    }

    #[test]
    fn two_point_values() {
        let pop = two_point();
        assert_eq!(closed_form_with_replacement(&pop, 1).unwrap().data(), &[1.0]);
        assert_eq!(closed_form_without_replacement_same_batch(&pop, 1).unwrap().data(), &[1.0]);
        for mode in [SelectorMode::Bernoulli, SelectorMode::OrderedDraws, SelectorMode::Subsets] {
            assert_eq!(enumerate_cov(&pop, 1, mode).unwrap().data(), &[1.0], "{mode:?}");
        }
        assert_eq!(closed_form_partition_cross(&pop).unwrap().data(), &[-1.0]);
        assert_eq!(enumerate_partition_cross_cov(&pop, 1).unwrap().data(), &[-1.0]);
        assert_eq!(closed_form_cross_batch(&pop).unwrap().data(), &[1.0]);
    }

    #[test]
    fn full_subset_is_deterministic() {
        let pop = random_population(&mut Rng::new(1, 0), 5, 2, false).unwrap();
        let cov = enumerate_cov(&pop, 5, SelectorMode::Subsets).unwrap();
        assert!(cov.data().iter().all(|v| v.abs() < 1e-15));
        assert!(closed_form_subsets(&pop, 5).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn closed_forms_match_enumeration() {
        let mut rng = Rng::new(2, 0);
        for n in 1..=7 {
            for m in 1..=n.min(4) {
                let pop = random_population(&mut rng, n, 3, false).unwrap();
                for mode in [SelectorMode::Bernoulli, SelectorMode::OrderedDraws, SelectorMode::Subsets] {
                    let report = verify_by_enumeration(&pop, m, mode).unwrap();
                    assert!(report.max_abs_err < 1e-12, "{mode:?} N={n} M={m}: {}", report.max_abs_err);
                }
            }
        }
    }

    #[test]
    fn ordered_draws_differ_from_selector_formula() {
        // N=4, M=2 with a non-centred population
        let pop = GradientPopulation::new(Tensor::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![6.0]]).unwrap())
            .unwrap();
        let ordered = enumerate_cov(&pop, 2, SelectorMode::OrderedDraws).unwrap().data()[0];
        let selector = closed_form_with_replacement(&pop, 2).unwrap().data()[0];
        // C = 12.5, g = 3: (1/2)(12.5 − 9) vs (1/2 − 1/4)·12.5
        assert!((ordered - 1.75).abs() < 1e-14);
        assert!((selector - 3.125).abs() < 1e-14);
    }

    #[test]
    fn enumeration_is_unbiased() {
        let pop = random_population(&mut Rng::new(3, 0), 6, 2, false).unwrap();
        for mode in [SelectorMode::Bernoulli, SelectorMode::OrderedDraws, SelectorMode::Subsets] {
            let (mean, _) = enumerate_moments(&pop, 3, mode).unwrap();
            for (a, b) in mean.iter().zip(pop.mean()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn partition_cross_matches_enumeration() {
        let pop = random_population(&mut Rng::new(4, 0), 6, 2, false).unwrap();
        let exact = enumerate_partition_cross_cov(&pop, 2).unwrap();
        let closed = closed_form_partition_cross(&pop).unwrap();
        assert!(exact.max_abs_diff(&closed).unwrap() < 1e-14);
    }

    #[test]
    fn enumeration_guard() {
        let pop = random_population(&mut Rng::new(5, 0), 40, 1, false).unwrap();
        assert!(matches!(enumerate_cov(&pop, 5, SelectorMode::OrderedDraws), Err(Error::Size(_))));
        assert!(matches!(enumerate_cov(&pop, 20, SelectorMode::Subsets), Err(Error::Size(_))));
        assert!(matches!(enumerate_cov(&pop, 2, SelectorMode::Bernoulli), Err(Error::Size(_))));
    }

    #[test]
    fn same_batch_formula_small_batch_limit() {
        let pop = random_population(&mut Rng::new(6, 0), 10_000, 2, false).unwrap();
        let printed = closed_form_without_replacement_same_batch(&pop, 10).unwrap();
        let approx = pop.second_moment().scale(0.1);
        let rel = printed.sub(&approx).unwrap().l2_norm() / approx.l2_norm();
        assert!(rel < 10.0 / 10_000.0 * 2.0, "{rel}");
    }

    #[test]
    fn cross_batch_values() {
        let mut rows = vec![vec![0.0, 0.0]; 101];
        rows[0] = vec![101.0, 0.0];
        let pop = GradientPopulation::new(Tensor::from_rows(&rows).unwrap()).unwrap();
        let cross = closed_form_cross_batch(&pop).unwrap();
        assert!((cross.data()[0] - 0.01).abs() < 1e-15);
        assert_eq!(&cross.data()[1..], &[0.0, 0.0, 0.0]);
        let centred = random_population(&mut Rng::new(7, 0), 50, 3, true).unwrap();
        assert!(closed_form_cross_batch(&centred).unwrap().l2_norm() < 1e-30);
    }

    #[test]
    fn scaling_population_scales_quadratically() {
        let pop = random_population(&mut Rng::new(8, 0), 7, 2, false).unwrap();
        let scaled = GradientPopulation::new(pop.grads().scale(3.0)).unwrap();
        let a = closed_form_with_replacement(&pop, 2).unwrap().scale(9.0);
        let b = closed_form_with_replacement(&scaled, 2).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-13);
    }

    #[test]
    fn monte_carlo_converges_to_enumeration() {
        let mut rng = Rng::new(9, 0);
        let pop = random_population(&mut rng, 6, 2, false).unwrap();
        for mode in [SelectorMode::Bernoulli, SelectorMode::OrderedDraws, SelectorMode::Subsets] {
            let exact = enumerate_cov(&pop, 2, mode).unwrap();
            let mc = monte_carlo_cov(&pop, 2, mode, 200_000, None, &mut rng).unwrap();
            for k in 0..4 {
                let z = (mc.cov.data()[k] - exact.data()[k]).abs() / mc.stderr.data()[k];
                assert!(z < 5.0, "{mode:?} entry {k}: z = {z}");
            }
        }
    }

    #[test]
    fn constant_population_has_zero_spread() {
        let pop = GradientPopulation::new(Tensor::full(&[5, 2], 1.5).unwrap()).unwrap();
        let mc = monte_carlo_cov(&pop, 2, SelectorMode::Subsets, 1000, None, &mut Rng::new(0, 0)).unwrap();
        assert!(mc.cov.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn update_covariance_scaling() {
        let pop = random_population(&mut Rng::new(10, 0), 10_000, 2, false).unwrap();
        let a = update_covariance(&pop, 10, 0.1, SelectorMode::Bernoulli).unwrap();
        let b = update_covariance(&pop, 10, 0.2, SelectorMode::Bernoulli).unwrap();
        assert!(a.exact.scale(4.0).max_abs_diff(&b.exact).unwrap() < 1e-15);
        assert!(a.relative_gap < 0.002);
        let (lr_s, m_s, m_l) = (0.1f64, 16usize, 256usize);
        let lr_l = lr_s * (m_l as f64 / m_s as f64).sqrt();
        assert!((lr_l * lr_l / m_l as f64 - lr_s * lr_s / m_s as f64).abs() < 1e-15);
    }

    #[test]
    fn logistic_gradients() {
        let data = crate::datasets::make_separable(&mut Rng::new(11, 0), 6, 2, 0.5).unwrap();
        let pop = logistic_population(&data, &[0.0, 0.0]).unwrap();
        for n in 0..6 {
            let y = data.labels()[n];
            for (g, x) in pop.grads().row(n).iter().zip(data.inputs().row(n)) {
                assert!((g + 0.5 * y * x).abs() < 1e-15);
            }
        }
    }
}
