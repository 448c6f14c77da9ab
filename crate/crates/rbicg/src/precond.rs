//! Crout-style incomplete LU factorization with drop tolerance, and the
//! split-preconditioned operator wrapper realizing L^{-1} A Uf^{-1}.

use crate::numerics::{czero, CVector, Complex, NumericsError, SparseMatrix};
use crate::operator::Operator;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrecondError {
    #[error("zero pivot encountered in ILUT factorization at row {0}")]
    ZeroPivot(usize),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Sparse triangular factors from the Crout ILUT factorization: L unit lower
/// triangular, Uf upper triangular with nonzero diagonal.
#[derive(Debug, Clone)]
pub struct IlutFactors {
    n: usize,
    /// Strictly-lower entries of L, by column: (row, value).
    l_cols: Vec<Vec<(usize, Complex)>>,
    /// Entries of Uf, by row: (col, value), diagonal first.
    u_rows: Vec<Vec<(usize, Complex)>>,
    /// Entries of Uf, by column: (row, value), for adjoint solves.
    u_cols: Vec<Vec<(usize, Complex)>>,
    pub drop_tol: f64,
}

/// Crout ILUT: at step k the k-th row of Uf and the k-th column of L are
/// produced. Entries below drop_tol times the 2-norm of the working row
/// (column) are dropped, and at most `fill_cap` off-diagonal entries are kept
/// per row/column. `fill_cap = None` defaults to 10 + average row nnz;
/// drop_tol = 0 with a large cap yields the exact LU.
pub fn ilut_factor(
    a: &SparseMatrix,
    drop_tol: f64,
    fill_cap: Option<usize>,
) -> Result<IlutFactors, PrecondError> {
    assert_eq!(a.n_rows(), a.n_cols(), "ILUT requires a square matrix");
    assert!(drop_tol >= 0.0);
    let n = a.n_rows();
    let cap = fill_cap.unwrap_or(10 + a.nnz() / n.max(1));

    // column access to A
    let mut a_cols: Vec<Vec<(usize, Complex)>> = vec![Vec::new(); n];
    for i in 0..n {
        for (j, v) in a.row(i) {
            a_cols[j].push((i, v));
        }
    }

    let mut l_cols: Vec<Vec<(usize, Complex)>> = vec![Vec::new(); n];
    let mut l_rows: Vec<Vec<(usize, Complex)>> = vec![Vec::new(); n];
    let mut u_rows: Vec<Vec<(usize, Complex)>> = vec![Vec::new(); n];
    let mut u_cols: Vec<Vec<(usize, Complex)>> = vec![Vec::new(); n];

    // dense accumulators with touched-index lists
    let mut z = vec![czero(); n];
    let mut w = vec![czero(); n];
    let mut z_touch: Vec<usize> = Vec::new();
    let mut w_touch: Vec<usize> = Vec::new();
    let mut z_mark = vec![false; n];
    let mut w_mark = vec![false; n];

    for k in 0..n {
        // z = A(k, k:n) - sum_{i<k} L(k,i) * Uf(i, k:n)
        for (j, v) in a.row(k) {
            if j >= k {
                if !z_mark[j] {
                    z_mark[j] = true;
                    z_touch.push(j);
                }
                z[j] += v;
            }
        }
        for &(i, lki) in &l_rows[k] {
            for &(j, uij) in &u_rows[i] {
                if j >= k {
                    if !z_mark[j] {
                        z_mark[j] = true;
                        z_touch.push(j);
                    }
                    z[j] -= lki * uij;
                }
            }
        }
        // w = A(k+1:n, k) - sum_{i<k} Uf(i,k) * L(k+1:n, i)
        for &(i, v) in &a_cols[k] {
            if i > k {
                if !w_mark[i] {
                    w_mark[i] = true;
                    w_touch.push(i);
                }
                w[i] += v;
            }
        }
        for &(i, uik) in &u_cols[k] {
            if i >= k {
                continue;
            }
            for &(r, lri) in &l_cols[i] {
                if r > k {
                    if !w_mark[r] {
                        w_mark[r] = true;
                        w_touch.push(r);
                    }
                    w[r] -= uik * lri;
                }
            }
        }

        let z_norm = z_touch.iter().map(|&j| z[j].norm_sqr()).sum::<f64>().sqrt();
        let w_norm = w_touch.iter().map(|&i| w[i].norm_sqr()).sum::<f64>().sqrt();

        let pivot = if z_mark[k] { z[k] } else { czero() };
        if pivot.norm() < 1e-14 * z_norm.max(f64::MIN_POSITIVE) || pivot == czero() {
            return Err(PrecondError::ZeroPivot(k));
        }

        // drop and cap the Uf row
        let mut u_kept: Vec<(usize, Complex)> = z_touch
            .iter()
            .filter(|&&j| j > k)
            .map(|&j| (j, z[j]))
            .filter(|(_, v)| v.norm() >= drop_tol * z_norm)
            .collect();
        if u_kept.len() > cap {
            u_kept.sort_by(|a, b| b.1.norm().partial_cmp(&a.1.norm()).unwrap());
            u_kept.truncate(cap);
        }
        u_kept.sort_by_key(|&(j, _)| j);
        let mut row = Vec::with_capacity(u_kept.len() + 1);
        row.push((k, pivot));
        u_cols[k].push((k, pivot));
        for &(j, v) in &u_kept {
            row.push((j, v));
            u_cols[j].push((k, v));
        }
        u_rows[k] = row;

        // drop and cap the L column
        let mut l_kept: Vec<(usize, Complex)> = w_touch
            .iter()
            .map(|&i| (i, w[i]))
            .filter(|(_, v)| v.norm() >= drop_tol * w_norm)
            .collect();
        if l_kept.len() > cap {
            l_kept.sort_by(|a, b| b.1.norm().partial_cmp(&a.1.norm()).unwrap());
            l_kept.truncate(cap);
        }
        l_kept.sort_by_key(|&(i, _)| i);
        let mut col = Vec::with_capacity(l_kept.len());
        for &(i, v) in &l_kept {
            let lik = v / pivot;
            col.push((i, lik));
            l_rows[i].push((k, lik));
        }
        l_cols[k] = col;

        // reset accumulators
        for &j in &z_touch {
            z[j] = czero();
            z_mark[j] = false;
        }
        for &i in &w_touch {
            w[i] = czero();
            w_mark[i] = false;
        }
        z_touch.clear();
        w_touch.clear();
    }

    Ok(IlutFactors {
        n,
        l_cols,
        u_rows,
        u_cols,
        drop_tol,
    })
}

impl IlutFactors {
    pub fn identity(n: usize) -> Self {
        let one = Complex::new(1.0, 0.0);
        Self {
            n,
            l_cols: vec![Vec::new(); n],
            u_rows: (0..n).map(|k| vec![(k, one)]).collect(),
            u_cols: (0..n).map(|k| vec![(k, one)]).collect(),
            drop_tol: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.l_cols.iter().map(Vec::len).sum::<usize>()
            + self.u_rows.iter().map(Vec::len).sum::<usize>()
    }

    /// x = L^{-1} b (unit lower triangular forward solve).
    pub fn solve_lower(&self, b: &[Complex]) -> CVector {
        let mut x = b.to_vec();
        for k in 0..self.n {
            let xk = x[k];
            if xk == czero() {
                continue;
            }
            for &(r, l) in &self.l_cols[k] {
                x[r] -= l * xk;
            }
        }
        x
    }

    /// x = Uf^{-1} b (upper triangular backward solve).
    pub fn solve_upper(&self, b: &[Complex]) -> CVector {
        let mut x = b.to_vec();
        for k in (0..self.n).rev() {
            let mut s = x[k];
            let mut diag = czero();
            for &(j, v) in &self.u_rows[k] {
                if j == k {
                    diag = v;
                } else {
                    s -= v * x[j];
                }
            }
            x[k] = s / diag;
        }
        x
    }

    /// x = L^{-*} b (adjoint of the unit lower factor, backward solve).
    pub fn solve_lower_adjoint(&self, b: &[Complex]) -> CVector {
        let mut x = b.to_vec();
        for k in (0..self.n).rev() {
            let mut s = x[k];
            for &(r, l) in &self.l_cols[k] {
                s -= l.conj() * x[r];
            }
            x[k] = s;
        }
        x
    }

    /// x = Uf^{-*} b (adjoint of the upper factor, forward solve).
    pub fn solve_upper_adjoint(&self, b: &[Complex]) -> CVector {
        let mut x = b.to_vec();
        for k in 0..self.n {
            let mut s = x[k];
            let mut diag = czero();
            for &(j, v) in &self.u_cols[k] {
                if j == k {
                    diag = v;
                } else {
                    s -= v.conj() * x[j];
                }
            }
            x[k] = s / diag.conj();
        }
        x
    }

    /// Full solve (L Uf) x = b, or its adjoint.
    pub fn solve(&self, b: &[Complex], adjoint: bool) -> CVector {
        if adjoint {
            self.solve_lower_adjoint(&self.solve_upper_adjoint(b))
        } else {
            self.solve_upper(&self.solve_lower(b))
        }
    }

    /// L as a sparse matrix, unit diagonal included.
    pub fn l_matrix(&self) -> SparseMatrix {
        let mut t: Vec<(usize, usize, Complex)> = (0..self.n)
            .map(|k| (k, k, Complex::new(1.0, 0.0)))
            .collect();
        for k in 0..self.n {
            for &(r, l) in &self.l_cols[k] {
                t.push((r, k, l));
            }
        }
        SparseMatrix::from_triplets(self.n, self.n, &t)
    }

    /// Uf as a sparse matrix.
    pub fn u_matrix(&self) -> SparseMatrix {
        let mut t = Vec::new();
        for k in 0..self.n {
            for &(j, v) in &self.u_rows[k] {
                t.push((k, j, v));
            }
        }
        SparseMatrix::from_triplets(self.n, self.n, &t)
    }

    /// Reassembles L * Uf as a sparse matrix (testing aid).
    pub fn product(&self) -> SparseMatrix {
        let mut t = Vec::new();
        // L = I + strict lower
        for k in 0..self.n {
            for &(j, v) in &self.u_rows[k] {
                t.push((k, j, v)); // I * U contribution
            }
        }
        for k in 0..self.n {
            for &(r, l) in &self.l_cols[k] {
                for &(j, v) in &self.u_rows[k] {
                    t.push((r, j, l * v));
                }
            }
        }
        SparseMatrix::from_triplets(self.n, self.n, &t)
    }
}

/// The split-preconditioned operator L^{-1} M Uf^{-1} for an inner operator M.
pub struct SplitOperator<'a, Op: Operator + ?Sized> {
    pub inner: &'a Op,
    pub factors: &'a IlutFactors,
}

impl<'a, Op: Operator + ?Sized> SplitOperator<'a, Op> {
    pub fn new(inner: &'a Op, factors: &'a IlutFactors) -> Self {
        assert_eq!(inner.dim(), factors.dim());
        Self { inner, factors }
    }

    /// Transforms an unpreconditioned right-hand side: L^{-1} b.
    pub fn transform_rhs(&self, b: &[Complex]) -> CVector {
        self.factors.solve_lower(b)
    }

    /// Adjoint-side right-hand side transform: Uf^{-*} b.
    pub fn transform_rhs_adjoint(&self, b: &[Complex]) -> CVector {
        self.factors.solve_upper_adjoint(b)
    }

    /// Recovers the unpreconditioned solution: x = Uf^{-1} y.
    pub fn recover_solution(&self, y: &[Complex]) -> CVector {
        self.factors.solve_upper(y)
    }

    /// Adjoint-side solution recovery: x = L^{-*} y.
    pub fn recover_solution_adjoint(&self, y: &[Complex]) -> CVector {
        self.factors.solve_lower_adjoint(y)
    }

    /// Maps an unpreconditioned solution into split coordinates: y = Uf x.
    pub fn to_split_coords(&self, x: &[Complex]) -> CVector {
        let mut y = vec![czero(); self.factors.n];
        for (k, yk) in y.iter_mut().enumerate() {
            let mut s = czero();
            for &(j, v) in &self.factors.u_rows[k] {
                s += v * x[j];
            }
            *yk = s;
        }
        y
    }

    /// Adjoint-side map into split coordinates: y = L* x.
    pub fn to_split_coords_adjoint(&self, x: &[Complex]) -> CVector {
        let mut y = x.to_vec();
        for (k, yk) in y.iter_mut().enumerate() {
            let mut s = *yk;
            for &(r, l) in &self.factors.l_cols[k] {
                s += l.conj() * x[r];
            }
            *yk = s;
        }
        y
    }
}

impl<Op: Operator + ?Sized> Operator for SplitOperator<'_, Op> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn apply(&self, x: &[Complex], adjoint: bool) -> Result<CVector, NumericsError> {
        if adjoint {
            // (L^{-1} M Uf^{-1})* = Uf^{-*} M* L^{-*}
            let t = self.factors.solve_lower_adjoint(x);
            let mt = self.inner.apply(&t, true)?;
            Ok(self.factors.solve_upper_adjoint(&mt))
        } else {
            let t = self.factors.solve_upper(x);
            let mt = self.inner.apply(&t, false)?;
            Ok(self.factors.solve_lower(&mt))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{creal, dot, norm, Complex};
    use rand::{Rng, SeedableRng};

    fn tridiag_m1_2_m1(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, creal(2.0)));
            if i + 1 < n {
                t.push((i, i + 1, creal(-1.0)));
                t.push((i + 1, i, creal(-1.0)));
            }
        }
        SparseMatrix::from_triplets(n, n, &t)
    }

    fn rand_vec(n: usize, seed: u64) -> CVector {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn identity_factors_are_identity() {
        let a = SparseMatrix::identity(4);
        let f = ilut_factor(&a, 0.1, None).unwrap();
        let x = rand_vec(4, 1);
        let y = f.solve(&x, false);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn exact_lu_of_tridiagonal() {
        let a = tridiag_m1_2_m1(4);
        let f = ilut_factor(&a, 0.0, Some(10)).unwrap();
        let err = f.product().to_dense().sub(&a.to_dense()).frobenius_norm();
        assert!(err < 1e-13 * a.to_dense().frobenius_norm());
    }

    #[test]
    fn exact_lu_of_random_sparse() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let n = 30;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, creal(4.0 + rng.gen_range(0.0..1.0))));
            for _ in 0..3 {
                let j = rng.gen_range(0..n);
                if j != i {
                    t.push((i, j, creal(rng.gen_range(-1.0..1.0))));
                }
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &t);
        let f = ilut_factor(&a, 0.0, Some(n)).unwrap();
        let err = f.product().to_dense().sub(&a.to_dense()).frobenius_norm();
        assert!(err <= 1e-12 * a.to_dense().frobenius_norm(), "err {err}");
    }

    #[test]
    fn split_apply_with_identity_factors_is_spmv() {
        let a = tridiag_m1_2_m1(5);
        let f = IlutFactors::identity(5);
        let op = SplitOperator::new(&a, &f);
        let x = rand_vec(5, 3);
        let y1 = op.apply(&x, false).unwrap();
        let y2 = a.spmv(&x, false).unwrap();
        for (a, b) in y1.iter().zip(&y2) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn split_adjoint_identity() {
        let a = tridiag_m1_2_m1(20);
        let f = ilut_factor(&a, 0.01, None).unwrap();
        let op = SplitOperator::new(&a, &f);
        for seed in 0..5 {
            let x = rand_vec(20, seed);
            let y = rand_vec(20, seed + 100);
            let lhs = dot(&y, &op.apply(&x, false).unwrap());
            let rhs = dot(&op.apply(&y, true).unwrap(), &x);
            assert!(
                (lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0),
                "adjoint identity violated"
            );
        }
    }

    #[test]
    fn triangular_solves_invert_product() {
        let a = tridiag_m1_2_m1(15);
        let f = ilut_factor(&a, 0.0, Some(20)).unwrap();
        let b = rand_vec(15, 7);
        let x = f.solve(&b, false);
        let ax = a.spmv(&x, false).unwrap();
        let res: f64 = norm(&crate::numerics::sub(&ax, &b));
        assert!(res < 1e-12 * norm(&b));
        // adjoint solve
        let x = f.solve(&b, true);
        let ax = a.spmv(&x, true).unwrap();
        let res: f64 = norm(&crate::numerics::sub(&ax, &b));
        assert!(res < 1e-12 * norm(&b));
    }

    #[test]
    fn zero_pivot_reports_row() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 1, creal(1.0)), (1, 0, creal(1.0))]);
        match ilut_factor(&a, 0.0, None) {
            Err(PrecondError::ZeroPivot(0)) => {}
            other => panic!("expected zero pivot at row 0, got {other:?}"),
        }
    }
}
