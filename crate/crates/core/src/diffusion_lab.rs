//! Weight-distance diffusion measurements: logarithmic fits of
//! `‖wₜ − w₀‖`, random-ray loss scans around `w₀`, and gradient descent on
//! separable logistic regression against the exact max-margin separator.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, SeparableDataset};
use crate::error::{Error, Result};
use crate::network::Mlp;
use crate::numerics::{dot, l2_norm, Rng};
use crate::stats::{linear_fit, LineFit};
use crate::training::{train, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceEntry {
    pub t: usize,
    pub distance: f64,
    pub train_loss: f64,
    pub val_error: Option<f64>,
}

/// Weight distance from initialization sampled along a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistanceSeries {
    entries: Vec<DistanceEntry>,
}

impl DistanceSeries {
    pub fn push(&mut self, entry: DistanceEntry) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if entry.t <= last.t {
                return Err(Error::Parameter(format!("iteration {} after {}", entry.t, last.t)));
            }
        }
        if !(entry.distance >= 0.0) || !entry.distance.is_finite() {
            return Err(Error::Numeric(format!("distance {} at t={}", entry.distance, entry.t)));
        }
        if entry.t == 0 && entry.distance != 0.0 {
            return Err(Error::Parameter("distance at t=0 must be zero".into()));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn from_points(points: &[(usize, f64)]) -> Result<Self> {
        let mut series = DistanceSeries::default();
        for &(t, distance) in points {
            series.push(DistanceEntry {
                t,
                distance,
                train_loss: f64::NAN,
                val_error: None,
            })?;
        }
        Ok(series)
    }

    pub fn entries(&self) -> &[DistanceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Trains with distance logging and returns only the series.
pub fn track_distance(model: &mut Mlp, data: &Dataset, cfg: &TrainConfig, rng: &Rng) -> Result<DistanceSeries> {
    if cfg.distance_stride == 0 {
        return Err(Error::Parameter("distance stride must be positive".into()));
    }
    Ok(train(model, data, None, cfg, rng)?.distance)
}

/// Distances of a walk with i.i.d. standard normal increments in `dim`
/// dimensions, logged every `stride` steps.
pub fn random_walk_distance(rng: &mut Rng, dim: usize, steps: usize, stride: usize) -> Result<DistanceSeries> {
    if dim == 0 || stride == 0 {
        return Err(Error::Parameter("dimension and stride must be positive".into()));
    }
    let mut w = vec![0.0; dim];
    let mut series = DistanceSeries::default();
    series.push(DistanceEntry {
        t: 0,
        distance: 0.0,
        train_loss: f64::NAN,
        val_error: None,
    })?;
    for t in 1..=steps {
        for v in &mut w {
            let z: f64 = StandardNormal.sample(rng);
            *v += z;
        }
        if t % stride == 0 {
            series.push(DistanceEntry {
                t,
                distance: l2_norm(&w),
                train_loss: f64::NAN,
                val_error: None,
            })?;
        }
    }
    Ok(series)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    /// Intercept of `d ≈ a + b·ln t`.
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
    /// Slope `s` of `ln d` against `ln ln t`.
    pub loglog_slope: f64,
    /// `2/s`, absent when `s ≤ 0`.
    pub alpha_hat: Option<f64>,
    pub fit_window: (usize, usize),
    pub points: usize,
}

type Points = Vec<(f64, f64)>;

fn window_points(series: &DistanceSeries, window: Option<(usize, usize)>) -> Result<(Points, (usize, usize))> {
    let (lo, hi) = window.unwrap_or((2, usize::MAX));
    let points: Vec<(f64, f64)> = series
        .entries
        .iter()
        .filter(|e| e.t >= lo.max(2) && e.t <= hi && e.distance > 0.0)
        .map(|e| (e.t as f64, e.distance))
        .collect();
    if points.len() < 10 {
        return Err(Error::Fit(format!(
            "window [{lo}, {hi}] holds {} usable points, need 10",
            points.len()
        )));
    }
    let t_min = points.first().unwrap().0 as usize;
    let t_max = points.last().unwrap().0 as usize;
    Ok((points, (t_min, t_max)))
}

/// Least squares of `d` on `ln t`, plus `α̂` from `ln d` on `ln ln t`, using
/// entries with `t ≥ 2` and `d > 0` inside the window.
pub fn fit_log_distance(series: &DistanceSeries, window: Option<(usize, usize)>) -> Result<LogFit> {
    let (points, fit_window) = window_points(series, window)?;
    let ln_t: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let d: Vec<f64> = points.iter().map(|p| p.1).collect();
    let linear = linear_fit(&ln_t, &d)?;
    let ln_ln_t: Vec<f64> = ln_t.iter().map(|v| v.ln()).collect();
    let ln_d: Vec<f64> = d.iter().map(|v| v.ln()).collect();
    let loglog = linear_fit(&ln_ln_t, &ln_d)?;
    Ok(LogFit {
        a: linear.intercept,
        b: linear.slope,
        r_squared: linear.r_squared,
        loglog_slope: loglog.slope,
        alpha_hat: (loglog.slope > 0.0).then(|| 2.0 / loglog.slope),
        fit_window,
        points: points.len(),
    })
}

/// Least squares of `ln d` on `ln t`.
pub fn fit_power_law(series: &DistanceSeries, window: Option<(usize, usize)>) -> Result<LineFit> {
    let (points, _) = window_points(series, window)?;
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    linear_fit(&x, &y)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayScanRecord {
    pub distance: f64,
    pub loss: f64,
}

/// Uniform direction on the unit sphere in `dim` dimensions.
pub fn random_direction(rng: &mut Rng, dim: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = l2_norm(&v);
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

/// Evaluates `loss(w₀ + z·v)` for `n_repeats` draws of a unit direction `v`
/// and `z ~ U[0, c]`. Repeat `i` draws from child stream `i` of `rng`, so
/// records do not depend on evaluation order.
pub fn random_ray_scan<F>(w0: &[f64], mut loss: F, c: f64, n_repeats: usize, rng: &Rng) -> Result<Vec<RayScanRecord>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(c > 0.0) || !c.is_finite() || n_repeats == 0 {
        return Err(Error::Parameter(format!("need c > 0 and at least one repeat, got c={c}")));
    }
    let mut w = vec![0.0; w0.len()];
    let mut records = Vec::with_capacity(n_repeats);
    for i in 0..n_repeats {
        let mut stream = rng.child(i as u64);
        let v = random_direction(&mut stream, w0.len());
        let z = c * stream.uniform();
        for ((wi, &w0i), vi) in w.iter_mut().zip(w0).zip(&v) {
            *wi = w0i + z * vi;
        }
        records.push(RayScanRecord { distance: z, loss: loss(&w)? });
    }
    Ok(records)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub center: f64,
    pub std: f64,
    pub count: usize,
}

/// Root-mean-square of `L − L(w₀)` in equal-width distance bins over
/// `[0, upper]`. An empty bin is merged into the following one (the last
/// into the preceding one).
pub fn binned_loss_std(records: &[RayScanRecord], baseline: f64, bins: usize, upper: f64) -> Result<Vec<BinStat>> {
    if bins < 2 {
        return Err(Error::Binning("need at least two bins".into()));
    }
    if !(upper > 0.0) || !upper.is_finite() {
        return Err(Error::Binning(format!("upper edge {upper} must be positive")));
    }
    let first = records.first().ok_or_else(|| Error::Binning("no records".into()))?;
    if records.iter().all(|r| r.distance == first.distance) {
        return Err(Error::Binning("all records share one distance".into()));
    }
    let width = upper / bins as f64;
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); bins];
    for r in records {
        if !(r.distance >= 0.0 && r.distance <= upper) {
            return Err(Error::Binning(format!("distance {} outside [0, {upper}]", r.distance)));
        }
        let k = ((r.distance / width) as usize).min(bins - 1);
        members[k].push(r.loss - baseline);
    }
    // merged groups of consecutive bins: (first bin, last bin, values)
    let mut groups: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    let mut pending: Option<usize> = None;
    for (k, vals) in members.into_iter().enumerate() {
        if vals.is_empty() {
            pending.get_or_insert(k);
            continue;
        }
        groups.push((pending.take().unwrap_or(k), k, vals));
    }
    if let Some(start) = pending {
        let last = groups.last_mut().expect("at least one record");
        last.1 = bins - 1;
        let _ = start;
    }
    Ok(groups
        .into_iter()
        .map(|(lo, hi, mut vals)| {
            vals.sort_by(f64::total_cmp);
            let mean_sq = vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64;
            BinStat {
                center: (lo as f64 + hi as f64 + 1.0) * width / 2.0,
                std: mean_sq.sqrt(),
                count: vals.len(),
            }
        })
        .collect())
}

/// Smallest normalized signed margin `min yₙ·w·xₙ / ‖w‖`.
pub fn margin_of(data: &SeparableDataset, w: &[f64]) -> f64 {
    let norm = l2_norm(w);
    (0..data.len())
        .map(|n| data.labels()[n] * dot(w, data.inputs().row(n)) / norm)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxMargin {
    pub w_hat: Vec<f64>,
    pub margin: f64,
    pub support: Vec<usize>,
}

/// Solves `K·λ = 1` by Gaussian elimination with partial pivoting.
fn solve_ones(k: &mut [Vec<f64>]) -> Option<Vec<f64>> {
    let n = k.len();
    let mut rhs = vec![1.0; n];
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| k[a][col].abs().total_cmp(&k[b][col].abs()))?;
        if k[pivot][col].abs() < 1e-12 {
            return None;
        }
        k.swap(col, pivot);
        rhs.swap(col, pivot);
        let pivot_row = k[col].clone();
        for row in col + 1..n {
            let f = k[row][col] / pivot_row[col];
            for (a, b) in k[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *a -= f * b;
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|j| k[row][j] * x[j]).sum();
        x[row] = (rhs[row] - s) / k[row][row];
    }
    Some(x)
}

fn subsets_up_to(n: usize, max: usize, visit: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, max: usize, current: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        for i in start..n {
            current.push(i);
            visit(current);
            if current.len() < max {
                rec(i + 1, n, max, current, visit);
            }
            current.pop();
        }
    }
    rec(0, n, max, &mut Vec::new(), visit);
}

/// Exact hard-margin separator through the origin: the minimum-norm `w`
/// with `yₙ·w·xₙ ≥ 1`, found by trying every candidate support set of at
/// most `d` points and keeping KKT-feasible solutions.
pub fn max_margin_oracle(data: &SeparableDataset) -> Result<MaxMargin> {
    let d = data.dim();
    let n = data.len();
    let signed: Vec<Vec<f64>> = (0..n)
        .map(|i| data.inputs().row(i).iter().map(|x| data.labels()[i] * x).collect())
        .collect();
    let mut best: Option<(f64, Vec<f64>, Vec<usize>)> = None;
    subsets_up_to(n, d, &mut |support: &[usize]| {
        let mut k: Vec<Vec<f64>> = support
            .iter()
            .map(|&i| support.iter().map(|&j| dot(&signed[i], &signed[j])).collect())
            .collect();
        let Some(lambda) = solve_ones(&mut k) else { return };
        if lambda.iter().any(|&l| l < -1e-12) {
            return;
        }
        let mut w = vec![0.0; d];
        for (&i, l) in support.iter().zip(&lambda) {
            w.iter_mut().zip(&signed[i]).for_each(|(wj, s)| *wj += l * s);
        }
        if signed.iter().any(|s| dot(&w, s) < 1.0 - 1e-9) {
            return;
        }
        let norm = l2_norm(&w);
        if best.as_ref().is_none_or(|(b, _, _)| norm < *b) {
            best = Some((norm, w, support.to_vec()));
        }
    });
    let (norm, w, support) =
        best.ok_or_else(|| Error::Infeasible("no separating hyperplane through the origin".into()))?;
    Ok(MaxMargin {
        w_hat: w.iter().map(|v| v / norm).collect(),
        margin: 1.0 / norm,
        support,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginEntry {
    pub t: usize,
    pub norm: f64,
    pub cosine: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginTrace {
    pub entries: Vec<MarginEntry>,
    pub w_hat: Vec<f64>,
    pub oracle_margin: f64,
    pub w_final: Vec<f64>,
}

/// Logarithmically spaced iterations in `[1, steps]`, `per_decade` per
/// factor of ten, always including `steps`.
pub fn log_checkpoints(steps: usize, per_decade: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if steps == 0 || per_decade == 0 {
        return out;
    }
    let total = ((steps as f64).log10() * per_decade as f64).ceil() as usize;
    for k in 0..=total {
        let t = (10f64.powf(k as f64 / per_decade as f64)).round() as usize;
        let t = t.clamp(1, steps);
        if out.last() != Some(&t) {
            out.push(t);
        }
    }
    if out.last() != Some(&steps) {
        out.push(steps);
    }
    out
}

/// Full-batch gradient descent from `w = 0` on the mean logistic loss
/// `(1/N)·Σ ln(1 + exp(−yₙ·w·xₙ))`, logging at `checkpoints`.
pub fn run_margin_experiment(
    data: &SeparableDataset,
    lr: f64,
    steps: usize,
    checkpoints: &[usize],
) -> Result<MarginTrace> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::Parameter(format!("learning rate {lr} must be positive")));
    }
    let oracle = max_margin_oracle(data)?;
    let (n, d) = (data.len(), data.dim());
    let signed: Vec<f64> = (0..n)
        .flat_map(|i| data.inputs().row(i).iter().map(move |x| (i, *x)))
        .map(|(i, x)| data.labels()[i] * x)
        .collect();
    let mut w = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut entries = Vec::new();
    let mut next = checkpoints.iter().copied().filter(|&t| t >= 1 && t <= steps).peekable();
    for t in 1..=steps {
        grad.fill(0.0);
        for row in signed.chunks(d) {
            let s = 1.0 / (1.0 + dot(&w, row).exp());
            grad.iter_mut().zip(row).for_each(|(g, x)| *g -= s * x);
        }
        for (wj, gj) in w.iter_mut().zip(&grad) {
            *wj -= lr * gj / n as f64;
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("weights diverged at step {t}")));
        }
        if next.peek() == Some(&t) {
            next.next();
            let norm = l2_norm(&w);
            entries.push(MarginEntry {
                t,
                norm,
                cosine: (dot(&w, &oracle.w_hat) / norm).clamp(-1.0, 1.0),
                margin: margin_of(data, &w),
            });
        }
    }
    Ok(MarginTrace {
        entries,
        w_hat: oracle.w_hat,
        oracle_margin: oracle.margin,
        w_final: w,
    })
}

/// `(max − min)/mean` of `‖wₜ‖/ln t` over entries with `t` in `[lo, hi]`.
pub fn norm_log_spread(trace: &MarginTrace, lo: usize, hi: usize) -> Option<f64> {
    let ratios: Vec<f64> = trace
        .entries
        .iter()
        .filter(|e| e.t >= lo && e.t <= hi && e.t >= 2)
        .map(|e| e.norm / (e.t as f64).ln())
        .collect();
    if ratios.len() < 2 {
        return None;
    }
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Some((max - min) / (ratios.iter().sum::<f64>() / ratios.len() as f64))
}
