//! Column-major complex dense matrices, sized for recycle bases and small
//! projected problems (a few hundred rows/columns at most).

use super::{czero, dot, norm, CVector, Complex, NumericsError};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    /// Column-major entries, length n_rows * n_cols.
    data: Vec<Complex>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![czero(); n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(
        n_rows: usize,
        n_cols: usize,
        mut f: impl FnMut(usize, usize) -> Complex,
    ) -> Self {
        let mut m = Self::zeros(n_rows, n_cols);
        for j in 0..n_cols {
            for i in 0..n_rows {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_columns(n_rows: usize, cols: &[CVector]) -> Self {
        let mut m = Self::zeros(n_rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            assert_eq!(c.len(), n_rows);
            m.col_mut(j).copy_from_slice(c);
        }
        m
    }

    pub fn diag(values: &[Complex]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0 || self.n_cols == 0
    }

    pub fn col(&self, j: usize) -> &[Complex] {
        &self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [Complex] {
        &mut self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[Complex]> {
        (0..self.n_cols).map(|j| self.col(j))
    }

    /// C = A B
    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n_cols, other.n_rows, "matmul dimension mismatch");
        let mut out = DenseMatrix::zeros(self.n_rows, other.n_cols);
        for j in 0..other.n_cols {
            for l in 0..self.n_cols {
                let b = other[(l, j)];
                if b == czero() {
                    continue;
                }
                let a_col = self.col(l);
                let out_col = out.col_mut(j);
                for i in 0..a_col.len() {
                    out_col[i] += a_col[i] * b;
                }
            }
        }
        out
    }

    /// C = A* B (conjugate-transpose of self times other).
    pub fn adjoint_matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.n_rows, other.n_rows,
            "adjoint_matmul dimension mismatch"
        );
        let mut out = DenseMatrix::zeros(self.n_cols, other.n_cols);
        for j in 0..other.n_cols {
            for i in 0..self.n_cols {
                out[(i, j)] = dot(self.col(i), other.col(j));
            }
        }
        out
    }

    pub fn adjoint(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n_cols, self.n_rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n_cols, self.n_rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, x: &[Complex]) -> CVector {
        assert_eq!(self.n_cols, x.len());
        let mut out = vec![czero(); self.n_rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj == czero() {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.col(j)) {
                *o += a * xj;
            }
        }
        out
    }

    pub fn adjoint_mul_vec(&self, x: &[Complex]) -> CVector {
        assert_eq!(self.n_rows, x.len());
        (0..self.n_cols).map(|j| dot(self.col(j), x)).collect()
    }

    pub fn scaled(&self, a: Complex) -> DenseMatrix {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= a;
        }
        out
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    /// Copies `block` into self with top-left corner at (r, c).
    pub fn set_block(&mut self, r: usize, c: usize, block: &DenseMatrix) {
        assert!(r + block.n_rows <= self.n_rows && c + block.n_cols <= self.n_cols);
        for j in 0..block.n_cols {
            for i in 0..block.n_rows {
                self[(r + i, c + j)] = block[(i, j)];
            }
        }
    }

    pub fn block(&self, r: usize, c: usize, n_rows: usize, n_cols: usize) -> DenseMatrix {
        assert!(r + n_rows <= self.n_rows && c + n_cols <= self.n_cols);
        DenseMatrix::from_fn(n_rows, n_cols, |i, j| self[(r + i, c + j)])
    }

    /// [A B] along columns.
    pub fn hcat(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n_rows, other.n_rows);
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols + other.n_cols);
        out.set_block(0, 0, self);
        out.set_block(0, self.n_cols, other);
        out
    }

    pub fn select_columns(&self, indices: &[usize]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, indices.len());
        for (j, &idx) in indices.iter().enumerate() {
            out.col_mut(j).copy_from_slice(self.col(idx));
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Solves A X = B with partial-pivoted LU; A is self (square).
    pub fn lu_solve(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, NumericsError> {
        assert_eq!(self.n_rows, self.n_cols);
        assert_eq!(self.n_rows, rhs.n_rows);
        let n = self.n_rows;
        let mut a = self.clone();
        let mut x = rhs.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            // partial pivoting
            let (mut pmax, mut prow) = (a[(k, k)].norm(), k);
            for i in k + 1..n {
                let m = a[(i, k)].norm();
                if m > pmax {
                    pmax = m;
                    prow = i;
                }
            }
            if pmax == 0.0 {
                return Err(NumericsError::SingularMatrix(k));
            }
            if prow != k {
                for j in 0..n {
                    let t = a[(k, j)];
                    a[(k, j)] = a[(prow, j)];
                    a[(prow, j)] = t;
                }
                for j in 0..x.n_cols {
                    let t = x[(k, j)];
                    x[(k, j)] = x[(prow, j)];
                    x[(prow, j)] = t;
                }
                perm.swap(k, prow);
            }
            let piv = a[(k, k)];
            for i in k + 1..n {
                let m = a[(i, k)] / piv;
                a[(i, k)] = m;
                if m != czero() {
                    for j in k + 1..n {
                        let akj = a[(k, j)];
                        a[(i, j)] -= m * akj;
                    }
                    for j in 0..x.n_cols {
                        let xkj = x[(k, j)];
                        x[(i, j)] -= m * xkj;
                    }
                }
            }
        }
        // back substitution
        for j in 0..x.n_cols {
            for i in (0..n).rev() {
                let mut s = x[(i, j)];
                for l in i + 1..n {
                    s -= a[(i, l)] * x[(l, j)];
                }
                x[(i, j)] = s / a[(i, i)];
            }
        }
        Ok(x)
    }

    pub fn lu_solve_vec(&self, rhs: &[Complex]) -> Result<CVector, NumericsError> {
        let b = DenseMatrix::from_columns(rhs.len(), &[rhs.to_vec()]);
        Ok(self.lu_solve(&b)?.col(0).to_vec())
    }

    /// Thin QR via modified Gram-Schmidt with one reorthogonalization pass.
    /// Returns (Q, R) with Q having orthonormal columns; columns whose norm
    /// collapses below `rank_tol` times the original column norm are dropped
    /// from Q (R keeps the full column count of self).
    pub fn thin_qr(&self, rank_tol: f64) -> (DenseMatrix, DenseMatrix) {
        let mut q_cols: Vec<CVector> = Vec::new();
        let mut r = DenseMatrix::zeros(self.n_cols, self.n_cols);
        for j in 0..self.n_cols {
            let mut v = self.col(j).to_vec();
            let orig = norm(&v);
            for _pass in 0..2 {
                for (i, q) in q_cols.iter().enumerate() {
                    let h = dot(q, &v);
                    r[(i, j)] += h;
                    for (vl, ql) in v.iter_mut().zip(q) {
                        *vl -= h * ql;
                    }
                }
            }
            let nv = norm(&v);
            if orig > 0.0 && nv > rank_tol * orig {
                let inv = Complex::new(1.0 / nv, 0.0);
                let qn: CVector = v.iter().map(|x| x * inv).collect();
                r[(q_cols.len(), j)] = Complex::new(nv, 0.0);
                q_cols.push(qn);
            }
        }
        let q = if q_cols.is_empty() {
            DenseMatrix::zeros(self.n_rows, 0)
        } else {
            DenseMatrix::from_columns(self.n_rows, &q_cols)
        };
        (q, r)
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = Complex;
    fn index(&self, (i, j): (usize, usize)) -> &Complex {
        debug_assert!(i < self.n_rows && j < self.n_cols);
        &self.data[j * self.n_rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex {
        debug_assert!(i < self.n_rows && j < self.n_cols);
        &mut self.data[j * self.n_rows + i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::creal;

    fn rand_mat(n: usize, m: usize, seed: u64) -> DenseMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(n, m, |_, _| {
            Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn lu_solve_roundtrip() {
        let a = rand_mat(8, 8, 1);
        let b = rand_mat(8, 2, 2);
        let x = a.lu_solve(&b).unwrap();
        let res = a.matmul(&x).sub(&b);
        assert!(res.frobenius_norm() < 1e-12 * b.frobenius_norm().max(1.0));
    }

    #[test]
    fn adjoint_matmul_agrees_with_explicit() {
        let a = rand_mat(6, 3, 3);
        let b = rand_mat(6, 4, 4);
        let lhs = a.adjoint_matmul(&b);
        let rhs = a.adjoint().matmul(&b);
        assert!(lhs.sub(&rhs).frobenius_norm() < 1e-13);
    }

    #[test]
    fn thin_qr_orthonormal() {
        let a = rand_mat(10, 4, 5);
        let (q, r) = a.thin_qr(1e-12);
        let qtq = q.adjoint_matmul(&q);
        assert!(qtq.sub(&DenseMatrix::identity(4)).frobenius_norm() < 1e-12);
        assert!(q.matmul(&r).sub(&a).frobenius_norm() < 1e-12 * a.frobenius_norm());
    }

    #[test]
    fn thin_qr_drops_dependent_column() {
        let c0: CVector = vec![creal(1.0), creal(0.0), creal(0.0)];
        let c1: CVector = vec![creal(2.0), creal(0.0), creal(0.0)];
        let a = DenseMatrix::from_columns(3, &[c0, c1]);
        let (q, _r) = a.thin_qr(1e-10);
        assert_eq!(q.n_cols(), 1);
    }
}
