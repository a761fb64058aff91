//! Data ingestion and mini-batch selection.

mod csv_io;
mod idx;
mod sampler;
mod synthetic;

pub use csv_io::{read_csv, write_csv};
pub use idx::{load_mnist_idx, IMAGES_MAGIC, LABELS_MAGIC};
pub use sampler::{BatchSampler, SamplingMode};
pub use synthetic::{make_gaussian_blobs, make_separable};

use crate::error::{Error, Result};
use crate::numerics::{dot, l2_norm, Rng, Tensor};

/// Labelled classification data, one sample per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.shape().len() != 2 {
            return Err(Error::Dimension(format!(
                "inputs must be N×d, got {:?}",
                inputs.shape()
            )));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} input rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::Parameter("num_classes must be positive".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Consistency(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Dataset {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Rows `indices` (in that order) as a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let inputs = self.inputs.select_rows(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(inputs, labels, self.num_classes)
    }

    /// Inputs and labels of a batch.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let inputs = self.inputs.select_rows(indices)?;
        Ok((inputs, indices.iter().map(|&i| self.labels[i]).collect()))
    }

    /// Seeded shuffle, then the first `train` rows for training and the next
    /// `val` rows for validation.
    pub fn shuffled_split(&self, rng: &mut Rng, train: usize, val: usize) -> Result<(Dataset, Dataset)> {
        if train == 0 || val == 0 || train + val > self.len() {
            return Err(Error::Parameter(format!(
                "cannot split {} samples into {train} train + {val} validation",
                self.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        rng.shuffle(&mut order);
        Ok((
            self.subset(&order[..train])?,
            self.subset(&order[train..train + val])?,
        ))
    }
}

/// Binary data with ±1 labels that a hyperplane through the origin separates.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableDataset {
    inputs: Tensor,
    labels: Vec<f64>,
    separator: Vec<f64>,
    margin: f64,
}

impl SeparableDataset {
    /// Checks that `separator` puts every point on its label's side; the
    /// recorded margin is the smallest `y·u·x` with `u` normalized.
    pub fn new(inputs: Tensor, labels: Vec<f64>, separator: Vec<f64>) -> Result<Self> {
        if inputs.shape().len() != 2 || inputs.cols() != separator.len() {
            return Err(Error::Dimension("separator width differs from inputs".into()));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::Consistency("one label per row required".into()));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::Parameter("labels must be +1 or -1".into()));
        }
        let norm = l2_norm(&separator);
        if norm == 0.0 {
            return Err(Error::Parameter("zero separator".into()));
        }
        let unit: Vec<f64> = separator.iter().map(|v| v / norm).collect();
        let margin = (0..labels.len())
            .map(|n| labels[n] * dot(&unit, inputs.row(n)))
            .fold(f64::INFINITY, f64::min);
        if margin <= 0.0 {
            return Err(Error::Infeasible(format!(
                "separator leaves margin {margin}"
            )));
        }
        Ok(SeparableDataset {
            inputs,
            labels,
            separator: unit,
            margin,
        })
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Unit normal of the generating (or supplied) hyperplane.
    pub fn separator(&self) -> &[f64] {
        &self.separator
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_validates_labels() {
        let x = Tensor::zeros(&[2, 3]).unwrap();
        assert!(Dataset::new(x.clone(), vec![0, 2], 2).is_err());
        assert!(Dataset::new(x.clone(), vec![0], 2).is_err());
        assert!(Dataset::new(x, vec![0, 1], 2).is_ok());
    }

    #[test]
    fn symmetric_pair_margin() {
        let x = Tensor::from_rows(&[vec![1.0, 1.0], vec![-1.0, -1.0]]).unwrap();
        let data = SeparableDataset::new(x, vec![1.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert!((data.margin() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn split_is_disjoint() {
        let x = Tensor::new(vec![10, 1], (0..10).map(f64::from).collect()).unwrap();
        let data = Dataset::new(x, (0..10).map(|i| i % 2).collect(), 2).unwrap();
        let (a, b) = data.shuffled_split(&mut Rng::new(1, 0), 6, 4).unwrap();
        let mut seen: Vec<f64> = a.inputs().data().iter().chain(b.inputs().data()).copied().collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..10).map(f64::from).collect::<Vec<_>>());
    }
}
