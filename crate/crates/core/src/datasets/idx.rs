//! MNIST IDX reader. Files may be raw or gzip-compressed.

use std::fs::File;
use std::io::{self, Read};
use std::path::Path;

use flate2::read::GzDecoder;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

const MNIST_CLASSES: usize = 10;

fn open(path: &Path) -> Result<Box<dyn Read>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = [0u8; 2];
    let n = file.read(&mut head).map_err(|e| Error::io(path, e))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if n == 2 && head == [0x1f, 0x8b] {
        Ok(Box::new(GzDecoder::new(file)))
    } else {
        Ok(Box::new(io::BufReader::new(file)))
    }
}

fn read_u32(reader: &mut dyn Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(u32::from_be_bytes(buf))
}

fn expect_magic(reader: &mut dyn Read, path: &Path, want: u32) -> Result<()> {
    let magic = read_u32(reader, path)?;
    if magic != want {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("magic number {magic:#010x}, expected {want:#010x}"),
        });
    }
    Ok(())
}

fn read_body(reader: &mut dyn Read, path: &Path, len: usize) -> Result<Vec<u8>> {
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).map_err(|e| Error::io(path, e))?;
    Ok(body)
}

/// Loads an IDX image/label pair, scaling pixels to `[0, 1]` and flattening
/// each image into one row.
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();

    let mut images = open(images_path)?;
    expect_magic(&mut images, images_path, IMAGES_MAGIC)?;
    let count = read_u32(&mut images, images_path)? as usize;
    let rows = read_u32(&mut images, images_path)? as usize;
    let cols = read_u32(&mut images, images_path)? as usize;
    if count == 0 || rows == 0 || cols == 0 {
        return Err(Error::Format {
            path: images_path.to_path_buf(),
            reason: format!("degenerate header {count}×{rows}×{cols}"),
        });
    }
    let pixels = read_body(&mut images, images_path, count * rows * cols)?;

    let mut labels = open(labels_path)?;
    expect_magic(&mut labels, labels_path, LABELS_MAGIC)?;
    let label_count = read_u32(&mut labels, labels_path)? as usize;
    if label_count != count {
        return Err(Error::Consistency(format!(
            "{count} images but {label_count} labels"
        )));
    }
    let raw_labels = read_body(&mut labels, labels_path, label_count)?;
    if let Some(bad) = raw_labels.iter().find(|&&l| l as usize >= MNIST_CLASSES) {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            reason: format!("label {bad} is not a digit"),
        });
    }

    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let inputs = Tensor::new(vec![count, rows * cols], data)?;
    Dataset::new(
        inputs,
        raw_labels.into_iter().map(usize::from).collect(),
        MNIST_CLASSES,
    )
}
