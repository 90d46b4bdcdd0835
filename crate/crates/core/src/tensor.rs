//! Dense real arrays used throughout the crate: latent vectors, row-major
//! matrices, and channel-by-position feature maps.

use crate::error::{Error, Result};

/// Default floor for per-channel standard deviations.
pub const DEFAULT_EPS_STD: f64 = 1e-5;

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// A one-dimensional latent or embedding vector. Never empty, always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidShape(
                "latent vector must have d_z >= 1".into(),
            ));
        }
        check_finite(&data)?;
        Ok(LatentVector(data))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    /// Unit basis vector `e_index` in `dim` dimensions.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidShape(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut v = vec![0.0; dim];
        v[index] = 1.0;
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    fn check_dim(&self, other: &LatentVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &LatentVector) -> Result<f64> {
        self.check_dim(other)?;
        Ok(dot_slices(&self.0, &other.0))
    }

    pub fn norm(&self) -> f64 {
        dot_slices(&self.0, &self.0).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    pub fn scale(&self, factor: f64) -> LatentVector {
        LatentVector(self.0.iter().map(|v| v * factor).collect())
    }

    /// `a * self + b * other`, elementwise.
    pub fn combine(&self, a: f64, other: &LatentVector, b: f64) -> Result<LatentVector> {
        self.check_dim(other)?;
        Ok(LatentVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        ))
    }
}

pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidShape(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidShape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                found: bad.len(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix::from_raw(self.cols, self.rows, out)
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for r in 0..self.rows {
            let dst = &mut out[r * other.cols..(r + 1) * other.cols];
            for (k, a) in self.row(r).iter().enumerate() {
                for (d, b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(Matrix::from_raw(self.rows, other.cols, out))
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.cols,
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Matrix::from_raw(self.rows + other.rows, self.cols, data))
    }

    /// Mean Euclidean norm of the rows.
    pub fn mean_row_norm(&self) -> f64 {
        let norms: Vec<f64> = self.iter_rows().map(|r| dot_slices(r, r).sqrt()).collect();
        norms.iter().sum::<f64>() / self.rows as f64
    }
}

/// Channels × spatial positions activation map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap(Matrix);

impl FeatureMap {
    pub fn new(channels: usize, positions: usize, data: Vec<f64>) -> Result<Self> {
        Matrix::new(channels, positions, data).map(FeatureMap)
    }

    pub fn from_channels(channels: &[Vec<f64>]) -> Result<Self> {
        Matrix::from_rows(channels).map(FeatureMap)
    }

    /// Interprets a matrix's rows as channels.
    pub fn from_matrix(m: Matrix) -> Self {
        FeatureMap(m)
    }

    pub fn channels(&self) -> usize {
        self.0.rows()
    }

    pub fn positions(&self) -> usize {
        self.0.cols()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        self.0.row(c)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// Per-channel population mean and floored standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Euclidean distance between the concatenated (mean, std) vectors.
    pub fn distance(&self, other: &ChannelStats) -> Result<f64> {
        if self.mean.len() != other.mean.len() {
            return Err(Error::ChannelMismatch {
                expected: self.mean.len(),
                found: other.mean.len(),
            });
        }
        let sq = self
            .mean
            .iter()
            .zip(&other.mean)
            .chain(self.std.iter().zip(&other.std))
            .fold(0.0, |acc, (a, b)| acc + (a - b) * (a - b));
        Ok(sq.sqrt())
    }
}

pub(crate) fn slice_stats(values: &[f64], eps_std: f64) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt().max(eps_std))
}

pub fn channel_stats(f: &FeatureMap, eps_std: f64) -> Result<ChannelStats> {
    if eps_std.is_nan() || eps_std <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "eps_std must be positive, got {eps_std}"
        )));
    }
    let (mean, std) = (0..f.channels())
        .map(|c| slice_stats(f.channel(c), eps_std))
        .unzip();
    Ok(ChannelStats { mean, std })
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut data = Vec::with_capacity(m.as_slice().len());
    for row in m.iter_rows() {
        softmax_into(row, &mut data);
    }
    Matrix::from_raw(m.rows(), m.cols(), data)
}

pub(crate) fn softmax_into(row: &[f64], out: &mut Vec<f64>) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = out.len();
    out.extend(row.iter().map(|v| (v - max).exp()));
    let total: f64 = out[start..].iter().sum();
    for v in &mut out[start..] {
        *v /= total;
    }
}
