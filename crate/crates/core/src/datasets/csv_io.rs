//! CSV interchange for synthetic datasets: one header row naming the feature
//! columns `x0..x{d-1}` followed by `label`.

use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut header: Vec<String> = (0..dataset.dim()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    writer.write_record(&header).map_err(|e| csv_err(path, e))?;
    for n in 0..dataset.len() {
        let mut record: Vec<String> = dataset.inputs().row(n).iter().map(f64::to_string).collect();
        record.push(dataset.labels()[n].to_string());
        writer.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Reads a dataset written by [`write_csv`]. The class count is one more than
/// the largest label present.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let width = header.len();
    if width < 2 || &header[width - 1] != "label" {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "last column must be `label`".into(),
        });
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        for field in record.iter().take(width - 1) {
            data.push(field.trim().parse::<f64>().map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: format!("feature `{field}`: {e}"),
            })?);
        }
        let label = &record[width - 1];
        labels.push(label.trim().parse::<usize>().map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: format!("label `{label}`: {e}"),
        })?);
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let inputs = Tensor::new(vec![labels.len(), width - 1], data)?;
    Dataset::new(inputs, labels, num_classes)
}
