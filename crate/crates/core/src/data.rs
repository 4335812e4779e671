use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `n × q` matrix of observations stored row-major; rows are observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    /// Requires `n ≥ 2`, `q ≥ 1` and finite entries.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows < 2 || cols < 1 {
            return Err(Error::InvalidInput(format!("need n >= 2 and q >= 1, got {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite entry at row {}, column {}", pos / cols, pos % cols)));
        }
        Ok(DataMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("rows have differing lengths".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Like [`DataMatrix::new`] without the `n ≥ 2` and finiteness checks.
    /// Used for intermediate products (projections, perturbed matrices).
    pub(crate) fn raw(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        DataMatrix { rows, cols, values }
    }

    pub(crate) fn zeros(rows: usize, cols: usize) -> Self {
        DataMatrix { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &DataMatrix) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, c: f64) -> DataMatrix {
        DataMatrix::raw(self.rows, self.cols, self.values.iter().map(|v| v * c).collect())
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &DataMatrix, b: f64) -> DataMatrix {
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        DataMatrix::raw(self.rows, self.cols, values)
    }

    /// `Aᵀv` for an `n`-vector `v`.
    pub fn t_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                for (o, x) in out.iter_mut().zip(self.row(i)) {
                    *o += vi * x;
                }
            }
        }
        out
    }

    /// Per-column `(x − mean) / sd` with the `n − 1` divisor. Columns with zero
    /// spread are only centred.
    pub fn standardized(&self) -> DataMatrix {
        let n = self.rows as f64;
        let mut out = self.clone();
        for j in 0..self.cols {
            let col = self.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            for i in 0..self.rows {
                let centred = self.get(i, j) - mean;
                out.values[i * self.cols + j] = if sd > 0.0 { centred / sd } else { centred };
            }
        }
        out
    }
}

/// A partition of `0..n` into `K` non-empty clusters, labels in `0..K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPartition {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

impl ClusterPartition {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        let mut sizes = vec![0usize; k];
        for &l in &labels {
            if l >= k {
                return Err(Error::InvalidInput(format!("label {l} out of range for K = {k}")));
            }
            sizes[l] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidInput(format!("cluster {empty} is empty")));
        }
        Ok(ClusterPartition { labels, sizes })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, k: usize) -> usize {
        self.sizes[k]
    }

    pub fn members(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels.iter().enumerate().filter(move |(_, &l)| l == k).map(|(i, _)| i)
    }

    /// Per-cluster row means of `a`, as a `K × q` row-major buffer.
    pub fn means(&self, a: &DataMatrix) -> Vec<Vec<f64>> {
        let mut sums = vec![vec![0.0; a.cols()]; self.k()];
        for (i, &l) in self.labels.iter().enumerate() {
            for (s, x) in sums[l].iter_mut().zip(a.row(i)) {
                *s += x;
            }
        }
        for (s, &size) in sums.iter_mut().zip(&self.sizes) {
            s.iter_mut().for_each(|v| *v /= size as f64);
        }
        sums
    }
}
