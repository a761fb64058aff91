use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, SeparableDataset};
use crate::error::{Error, Result};
use crate::numerics::{dot, l2_norm, Rng, Tensor};

const MAX_ATTEMPTS_PER_POINT: usize = 1000;

/// Two Gaussian clusters at `±(margin + 2)·u` for a random unit `u`, with
/// points on the wrong side of the `margin` slab redrawn. Labels alternate
/// `+1, −1, …`.
pub fn make_separable(rng: &mut Rng, n: usize, d: usize, margin: f64) -> Result<SeparableDataset> {
    if n < 2 || d < 2 {
        return Err(Error::Parameter(format!("need N >= 2 and d >= 2, got N={n} d={d}")));
    }
    if !(margin > 0.0) || !margin.is_finite() {
        return Err(Error::Parameter(format!("margin must be positive, got {margin}")));
    }
    let mut u: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = l2_norm(&u);
    u.iter_mut().for_each(|v| *v /= norm);

    let offset = margin + 2.0;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = if i % 2 == 0 { 1.0 } else { -1.0 };
        let mut attempts = 0;
        let point = loop {
            let x: Vec<f64> = u
                .iter()
                .map(|&uj| {
                    let z: f64 = StandardNormal.sample(rng);
                    y * offset * uj + z
                })
                .collect();
            if y * dot(&u, &x) >= margin {
                break x;
            }
            attempts += 1;
            if attempts >= MAX_ATTEMPTS_PER_POINT {
                return Err(Error::Parameter(format!(
                    "could not place point {i} outside margin {margin}"
                )));
            }
        };
        data.extend(point);
        labels.push(y);
    }
    let inputs = Tensor::new(vec![n, d], data)?;
    let dataset = SeparableDataset::new(inputs, labels, u)?;
    // the generating hyperplane is the separability oracle
    debug_assert!(dataset.margin() >= margin);
    Ok(dataset)
}

/// Centre of class `k`: `±(1 + ⌊k/2d⌋)·e_{⌊k/2⌋ mod d}`, positive for even `k`.
fn blob_center(k: usize, d: usize) -> (usize, f64) {
    let axis = (k / 2) % d;
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    let ring = 1.0 + (k / (2 * d)) as f64;
    (axis, sign * ring)
}

/// Class-conditional isotropic Gaussians with balanced labels `n mod K`.
pub fn make_gaussian_blobs(rng: &mut Rng, n: usize, d: usize, num_classes: usize, spread: f64) -> Result<Dataset> {
    if num_classes < 2 {
        return Err(Error::Parameter("need at least two classes".into()));
    }
    if n == 0 || d == 0 || !(spread >= 0.0) {
        return Err(Error::Parameter(format!(
            "invalid blob parameters N={n} d={d} spread={spread}"
        )));
    }
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % num_classes;
        let (axis, value) = blob_center(k, d);
        for j in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            let c = if j == axis { value } else { 0.0 };
            data.push(c + spread * z);
        }
        labels.push(k);
    }
    Dataset::new(Tensor::new(vec![n, d], data)?, labels, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_passes_generator_check() {
        let mut rng = Rng::new(17, 0);
        let data = make_separable(&mut rng, 200, 5, 0.5).unwrap();
        let u = data.separator();
        for n in 0..data.len() {
            assert!(data.labels()[n] * dot(u, data.inputs().row(n)) >= 0.5);
        }
    }

    #[test]
    fn separable_rejects_bad_margin() {
        let mut rng = Rng::new(1, 0);
        assert!(matches!(make_separable(&mut rng, 4, 2, 0.0), Err(Error::Parameter(_))));
        assert!(make_separable(&mut rng, 1, 2, 1.0).is_err());
    }

    #[test]
    fn zero_spread_blobs_sit_on_centres() {
        let data = make_gaussian_blobs(&mut Rng::new(0, 0), 10, 5, 10, 0.0).unwrap();
        let mut per_class = [0; 10];
        for n in 0..10 {
            let k = data.labels()[n];
            per_class[k] += 1;
            let (axis, value) = blob_center(k, 5);
            for (j, &x) in data.inputs().row(n).iter().enumerate() {
                assert_eq!(x, if j == axis { value } else { 0.0 });
            }
        }
        assert!(per_class.iter().all(|&c| c == 1));
    }

    #[test]
    fn two_blobs_bayes_classifier() {
        let data = make_gaussian_blobs(&mut Rng::new(8, 0), 1000, 3, 2, 0.1).unwrap();
        // centres ±e₁ with equal priors: the Bayes rule is the sign of x₁
        let correct = (0..data.len())
            .filter(|&n| {
                let pred = if data.inputs().row(n)[0] >= 0.0 { 0 } else { 1 };
                pred == data.labels()[n]
            })
            .count();
        assert!(correct as f64 / 1000.0 >= 0.99);
    }
}
