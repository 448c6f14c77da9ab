//! Reference invariant subspaces: the right/left invariant subspaces of the
//! split-preconditioned operator belonging to its smallest-magnitude
//! eigenvalues, computed by block subspace iteration on the inverse (exact
//! sparse factorization), with a Ritz extraction at the end. This scales to
//! the full experiment sizes where a dense eigensolve does not.

use crate::numerics::{eig_dense, CVector, Complex, DenseMatrix, NumericsError, SparseMatrix};
use crate::precond::{ilut_factor, IlutFactors, PrecondError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SubspaceError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Precond(#[from] PrecondError),
    #[error("subspace iteration stalled: residual {0:.3e} after {1} sweeps")]
    NoConvergence(f64, usize),
}

/// Orthonormal bases for the right and left invariant subspaces of the
/// smallest-|λ| eigenvalues, with the Ritz values and final residuals.
#[derive(Debug, Clone)]
pub struct InvariantPair {
    pub right: DenseMatrix,
    pub left: DenseMatrix,
    pub values: Vec<Complex>,
    pub residual_right: f64,
    pub residual_left: f64,
    pub sweeps: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SubspaceOptions {
    pub seed: u64,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        Self {
            seed: 0x5EED,
            max_sweeps: 300,
            tol: 1e-8,
        }
    }
}

/// Dominant invariant subspace of the map `apply` (here: an operator
/// inverse), dimension at least k (widened past magnitude ties so a
/// complex-conjugate pair is never split), via block iteration with an
/// oversampled guard block and a final Ritz extraction. Returns the orthonormal basis, the
/// Ritz values of `apply` restricted to it, the relative residual, and the
/// sweep count.
fn dominant_subspace(
    n: usize,
    k: usize,
    apply: &dyn Fn(&[Complex]) -> CVector,
    opts: &SubspaceOptions,
) -> Result<(DenseMatrix, Vec<Complex>, f64, usize), SubspaceError> {
    assert!(k >= 1 && k <= n);
    let m = (k + (k / 2 + 2)).min(n);
    let cols: Vec<CVector> = (0..m)
        .map(|j| crate::bicg::random_vector(n, opts.seed.wrapping_add(j as u64)))
        .collect();
    let (mut q, _) = DenseMatrix::from_columns(n, &cols).thin_qr(1e-14);
    let apply_mat = |x: &DenseMatrix| -> DenseMatrix {
        let cols: Vec<CVector> = (0..x.n_cols()).map(|j| apply(x.col(j))).collect();
        DenseMatrix::from_columns(n, &cols)
    };
    // k dominant Ritz pairs of H = Q*Y and their residual ‖YW − QWΛ‖/‖YW‖
    let extract = |q: &DenseMatrix,
                   y: &DenseMatrix|
     -> Result<(DenseMatrix, DenseMatrix, Vec<Complex>, f64), NumericsError> {
        let h = q.adjoint_matmul(y);
        let eig = eig_dense(&h)?;
        let mut order: Vec<usize> = (0..h.n_rows()).collect();
        order.sort_by(|&a, &b| {
            eig.values[b]
                .norm()
                .partial_cmp(&eig.values[a].norm())
                .unwrap()
                .then(a.cmp(&b))
        });
        // never split a magnitude tie (e.g. a complex-conjugate pair) at the
        // boundary: the k-dimensional subspace would be ill-defined
        let mut kk = k;
        while kk < order.len() {
            let prev = eig.values[order[kk - 1]].norm();
            if (eig.values[order[kk]].norm() - prev).abs() > 1e-8 * prev.max(1e-300) {
                break;
            }
            kk += 1;
        }
        order.truncate(kk);
        let values: Vec<Complex> = order.iter().map(|&i| eig.values[i]).collect();
        let w = eig.right.select_columns(&order);
        let yw = y.matmul(&w);
        let mut qwl = q.matmul(&w);
        for (j, lam) in values.iter().enumerate() {
            for i in 0..n {
                qwl[(i, j)] *= lam;
            }
        }
        let res = yw.sub(&qwl).frobenius_norm() / yw.frobenius_norm().max(1e-300);
        Ok((q.matmul(&w), yw, values, res))
    };
    let mut sweeps = 0;
    let mut last = loop {
        sweeps += 1;
        let y = apply_mat(&q);
        let ext = extract(&q, &y)?;
        let done = ext.3 < opts.tol || sweeps >= opts.max_sweeps;
        if done {
            break ext;
        }
        let (qn, _) = y.thin_qr(1e-14);
        q = qn;
    };
    if last.3 >= opts.tol.max(1e-6) {
        return Err(SubspaceError::NoConvergence(last.3, sweeps));
    }
    let values = std::mem::take(&mut last.2);
    let (basis, _) = last.0.thin_qr(1e-14);
    // residual of the extracted subspace
    let yb = apply_mat(&basis);
    let hb = basis.adjoint_matmul(&yb);
    let res = yb.sub(&basis.matmul(&hb)).frobenius_norm() / yb.frobenius_norm().max(1e-300);
    Ok((basis, values, res, sweeps))
}

/// Right/left invariant subspaces of M = L⁻¹ A Uf⁻¹ (the split-preconditioned
/// operator with the given incomplete factors) for the k eigenvalues of
/// smallest magnitude. Inner solves with A use an exact factorization
/// (zero drop tolerance, unbounded fill).
pub fn preconditioned_invariant_pair(
    a: &SparseMatrix,
    factors: &IlutFactors,
    k: usize,
    opts: &SubspaceOptions,
) -> Result<InvariantPair, SubspaceError> {
    let n = a.n_rows();
    let exact = ilut_factor(a, 0.0, Some(n))?;
    let l_mat = factors.l_matrix();
    let u_mat = factors.u_matrix();
    // M⁻¹ v = Uf A⁻¹ L v
    let inv = |v: &[Complex]| -> CVector {
        let w = l_mat.spmv(v, false).expect("dimension checked");
        let s = exact.solve(&w, false);
        u_mat.spmv(&s, false).expect("dimension checked")
    };
    // M⁻* v = L* A⁻* Uf* v
    let inv_adj = |v: &[Complex]| -> CVector {
        let w = u_mat.spmv(v, true).expect("dimension checked");
        let s = exact.solve(&w, true);
        l_mat.spmv(&s, true).expect("dimension checked")
    };
    let (right, vals_inv, residual_right, sweeps_r) = dominant_subspace(n, k, &inv, opts)?;
    let (left, _, residual_left, sweeps_l) = dominant_subspace(n, k, &inv_adj, opts)?;
    // Ritz values of the inverse are reciprocals of the operator's.
    let values: Vec<Complex> = vals_inv.iter().map(|v| v.inv()).collect();
    Ok(InvariantPair {
        right,
        left,
        values,
        residual_right,
        residual_left,
        sweeps: sweeps_r.max(sweeps_l),
    })
}
