//! Compressed sparse row storage with plain and adjoint matvec.

use super::{czero, CVector, Complex, DenseMatrix, NumericsError};

#[derive(Debug, Clone)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<Complex>,
}

impl SparseMatrix {
    /// Builds from triplets; duplicate entries are summed, explicit zeros kept.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, Complex)],
    ) -> Self {
        let mut per_row: Vec<Vec<(usize, Complex)>> = vec![Vec::new(); n_rows];
        for &(i, j, v) in triplets {
            assert!(i < n_rows && j < n_cols, "triplet out of bounds");
            per_row[i].push((j, v));
        }
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for row in &mut per_row {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, Complex::new(1.0, 0.0))).collect();
        Self::from_triplets(n, n, &t)
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut t = Vec::new();
        for j in 0..m.n_cols() {
            for i in 0..m.n_rows() {
                if m[(i, j)] != czero() {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.n_rows(), m.n_cols(), &t)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex)> + '_ {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        (lo..hi).map(move |p| (self.col_indices[p], self.values[p]))
    }

    pub fn triplets(&self) -> Vec<(usize, usize, Complex)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                out.push((i, j, v));
            }
        }
        out
    }

    /// A + c * B on matching sparsity unions.
    pub fn add_scaled(&self, c: Complex, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let mut t = self.triplets();
        for (i, j, v) in other.triplets() {
            t.push((i, j, c * v));
        }
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, &t)
    }

    pub fn scaled(&self, c: Complex) -> SparseMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= c;
        }
        out
    }

    pub fn infinity_norm(&self) -> f64 {
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Returns A x, or A* x (conjugate transpose) when `adjoint` is set.
    pub fn spmv(&self, x: &[Complex], adjoint: bool) -> Result<CVector, NumericsError> {
        if adjoint {
            if x.len() != self.n_rows {
                return Err(NumericsError::DimensionMismatch(format!(
                    "adjoint spmv: operator is {}x{}, vector has length {}",
                    self.n_rows,
                    self.n_cols,
                    x.len()
                )));
            }
            let mut y = vec![czero(); self.n_cols];
            for (i, &xi) in x.iter().enumerate() {
                if xi == czero() {
                    continue;
                }
                for (j, v) in self.row(i) {
                    y[j] += v.conj() * xi;
                }
            }
            Ok(y)
        } else {
            if x.len() != self.n_cols {
                return Err(NumericsError::DimensionMismatch(format!(
                    "spmv: operator is {}x{}, vector has length {}",
                    self.n_rows,
                    self.n_cols,
                    x.len()
                )));
            }
            let mut y = vec![czero(); self.n_rows];
            for (i, yi) in y.iter_mut().enumerate() {
                let mut s = czero();
                for (j, v) in self.row(i) {
                    s += v * x[j];
                }
                *yi = s;
            }
            Ok(y)
        }
    }
}
