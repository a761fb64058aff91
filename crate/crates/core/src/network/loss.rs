use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Mean loss over a batch and the per-sample terms it averages.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub per_sample: Vec<f64>,
}

impl LossValue {
    fn from_per_sample(per_sample: Vec<f64>) -> Self {
        let value = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
        LossValue { value, per_sample }
    }
}

/// Cross-entropy of softmax(logits) against integer labels. Also returns the
/// softmax probabilities, row-major like `logits`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(LossValue, Vec<f64>)> {
    if logits.shape().len() != 2 || logits.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "logits {:?} against {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let c = logits.cols();
    if let Some(bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::Parameter(format!("label {bad} with only {c} classes")));
    }
    let mut probs = vec![0.0; logits.len()];
    let mut per_sample = Vec::with_capacity(labels.len());
    for (r, &y) in labels.iter().enumerate() {
        let z = logits.row(r);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let p = &mut probs[r * c..(r + 1) * c];
        let mut total = 0.0;
        for (pj, zj) in p.iter_mut().zip(z) {
            *pj = (zj - max).exp();
            total += *pj;
        }
        p.iter_mut().for_each(|pj| *pj /= total);
        per_sample.push(total.ln() + max - z[y]);
    }
    Ok((LossValue::from_per_sample(per_sample), probs))
}
