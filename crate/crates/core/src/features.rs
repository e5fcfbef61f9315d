//! Node feature matrices.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Rows with fewer nonzeros than this fraction use the sparse product path.
const SPARSE_DENSITY_THRESHOLD: f64 = 0.25;

/// Dense `n × d` feature matrix with a cached sparse row index.
///
/// Bag-of-words features are mostly zeros; products against weight matrices
/// walk only the stored nonzeros when the matrix is sparse enough.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    dense: Array2<f64>,
    row_offsets: Vec<usize>,
    columns: Vec<usize>,
    values: Vec<f64>,
}

impl PartialEq for FeatureMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.dense.shape() == other.dense.shape()
            && self
                .dense
                .iter()
                .zip(other.dense.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl FeatureMatrix {
    pub fn new(dense: Array2<f64>) -> Result<Self> {
        if dense.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        let dense = dense.as_standard_layout().into_owned();
        let mut row_offsets = Vec::with_capacity(dense.nrows() + 1);
        let mut columns = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for row in dense.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    columns.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(columns.len());
        }
        Ok(Self {
            dense,
            row_offsets,
            columns,
            values,
        })
    }

    /// Builds from `(row, column, value)` triplets; repeated cells are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut dense = Array2::zeros((rows, cols));
        for &(i, j, v) in triplets {
            if i >= rows {
                return Err(Error::IndexOutOfRange { what: "feature rows", index: i, bound: rows });
            }
            if j >= cols {
                return Err(Error::IndexOutOfRange { what: "feature columns", index: j, bound: cols });
            }
            dense[[i, j]] += v;
        }
        Self::new(dense)
    }

    pub fn num_rows(&self) -> usize {
        self.dense.nrows()
    }

    pub fn dim(&self) -> usize {
        self.dense.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.dense.view()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn density(&self) -> f64 {
        let cells = self.dense.len();
        if cells == 0 {
            0.0
        } else {
            self.nnz() as f64 / cells as f64
        }
    }

    /// Nonzero `(column, value)` pairs of row `i`.
    pub fn row_nonzeros(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        self.columns[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    fn is_sparse(&self) -> bool {
        self.density() < SPARSE_DENSITY_THRESHOLD
    }

    /// `X · W`.
    pub fn matmul(&self, weights: &Array2<f64>) -> Result<Array2<f64>> {
        if weights.nrows() != self.dim() {
            return Err(Error::shape(format!(
                "features have dimension {}, weights have {} rows",
                self.dim(),
                weights.nrows()
            )));
        }
        if !self.is_sparse() {
            return Ok(self.dense.dot(weights));
        }
        let width = weights.ncols();
        let weights = weights.as_standard_layout();
        let w = weights.as_slice().expect("standard layout");
        let mut out = Array2::zeros((self.num_rows(), width));
        for (i, mut out_row) in out.rows_mut().into_iter().enumerate() {
            let out_row = out_row.as_slice_mut().expect("contiguous row");
            for (j, v) in self.row_nonzeros(i) {
                for (o, &wv) in out_row.iter_mut().zip(&w[j * width..(j + 1) * width]) {
                    *o += v * wv;
                }
            }
        }
        Ok(out)
    }

    /// `Xᵀ · G`.
    pub fn transpose_matmul(&self, grad: &Array2<f64>) -> Result<Array2<f64>> {
        if grad.nrows() != self.num_rows() {
            return Err(Error::shape(format!(
                "features have {} rows, gradient has {}",
                self.num_rows(),
                grad.nrows()
            )));
        }
        if !self.is_sparse() {
            return Ok(self.dense.t().dot(grad));
        }
        let width = grad.ncols();
        let grad = grad.as_standard_layout();
        let g = grad.as_slice().expect("standard layout");
        let mut out = vec![0.0; self.dim() * width];
        for i in 0..self.num_rows() {
            let g_row = &g[i * width..(i + 1) * width];
            for (j, v) in self.row_nonzeros(i) {
                for (o, &gv) in out[j * width..(j + 1) * width].iter_mut().zip(g_row) {
                    *o += v * gv;
                }
            }
        }
        Ok(Array2::from_shape_vec((self.dim(), width), out).expect("shape"))
    }

    /// New matrix holding the given rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut dense = Array2::zeros((rows.len(), self.dim()));
        for (new, &old) in rows.iter().enumerate() {
            if old >= self.num_rows() {
                return Err(Error::IndexOutOfRange { what: "feature rows", index: old, bound: self.num_rows() });
            }
            dense.row_mut(new).assign(&self.dense.row(old));
        }
        Self::new(dense)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            FeatureMatrix::new(array![[1.0, f64::NAN]]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        let mut dense = Array2::zeros((5, 8));
        dense[[0, 1]] = 1.0;
        dense[[2, 7]] = 2.5;
        dense[[4, 0]] = -1.0;
        let x = FeatureMatrix::new(dense.clone()).unwrap();
        assert!(x.is_sparse());
        let w = Array2::from_shape_fn((8, 3), |(i, j)| (i * 3 + j) as f64 * 0.1);
        assert_eq!(x.matmul(&w).unwrap(), dense.dot(&w));
        let g = Array2::from_shape_fn((5, 3), |(i, j)| i as f64 - j as f64);
        assert_eq!(x.transpose_matmul(&g).unwrap(), dense.t().dot(&g));
    }

    #[test]
    fn triplets_fill_cells() {
        let x = FeatureMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (1, 0, 4.0)]).unwrap();
        assert_eq!(x.view(), array![[0.0, 0.0, 1.0], [4.0, 0.0, 0.0]].view());
        assert!(FeatureMatrix::from_triplets(2, 3, &[(0, 3, 1.0)]).is_err());
    }
}
