use std::fmt;

use rand_distr::{Distribution, StandardNormal};

use super::kernels;
use super::rng::Rng;
use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
///
/// Construction rejects NaN and infinities. Arithmetic re-checks its output
/// when debug assertions are enabled.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::Dimension(format!(
            "shape must be a non-empty list of positive sizes, got {shape:?}"
        )));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if len != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("entry {i} is {}", data[i])));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        })
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        Tensor::new(shape.to_vec(), vec![value; check_shape(shape)?])
    }

    /// One-dimensional tensor.
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Tensor::new(vec![n], data)
    }

    /// Two-dimensional tensor from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the raw storage. Callers are responsible for keeping
    /// entries finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Dimension(format!(
                "expected a matrix, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Width of a matrix (product of the trailing dimensions).
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Tensor> {
        if indices.is_empty() {
            return Err(Error::Dimension("empty row selection".into()));
        }
        let c = self.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= self.rows() {
                return Err(Error::Dimension(format!(
                    "row {i} out of range for {} rows",
                    self.rows()
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Ok(Tensor { shape, data })
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data)
    }

    /// Matrix product with ascending-index accumulation per output entry.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        matmul(self, other)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor {
            shape: vec![c, r],
            data: out,
        })
    }

    fn zip_with(&self, other: &Tensor, op: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| op(a, b))
            .collect();
        let out = Tensor {
            shape: self.shape.clone(),
            data,
        };
        out.debug_check();
        Ok(out)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        let out = Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        };
        out.debug_check();
        out
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.data)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    #[inline]
    fn debug_check(&self) {
        debug_assert!(self.all_finite(), "non-finite entry produced by tensor op");
    }
}

/// Standard matrix product `a[m×k] · b[k×n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::Dimension(format!(
            "inner dimensions differ: {m}x{k} times {k2}x{n}"
        )));
    }
    let mut out = vec![0.0; m * n];
    kernels::gemm_nn(&a.data, &b.data, m, k, n, &mut out, false);
    let out = Tensor {
        shape: vec![m, n],
        data: out,
    };
    out.debug_check();
    Ok(out)
}

/// Tensor of i.i.d. normal samples.
pub fn gaussian(rng: &mut Rng, shape: &[usize], mean: f64, std: f64) -> Result<Tensor> {
    if !(std >= 0.0) || !std.is_finite() || !mean.is_finite() {
        return Err(Error::Parameter(format!(
            "gaussian needs finite mean and std >= 0, got mean={mean} std={std}"
        )));
    }
    let len = check_shape(shape)?;
    let data = (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            mean + std * z
        })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

/// Euclidean norm with sequential summation.
pub fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Euclidean distance between two equal-length slices.
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
