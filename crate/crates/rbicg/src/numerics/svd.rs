//! One-sided Jacobi SVD for small dense complex matrices.

use super::{cone, creal, czero, dot, norm, CVector, DenseMatrix, NumericsError};

#[derive(Debug, Clone)]
pub struct Svd {
    /// Left singular vectors, orthonormal columns.
    pub left: DenseMatrix,
    /// Singular values, nonincreasing and nonnegative.
    pub singular_values: Vec<f64>,
    /// Right singular vectors, orthonormal columns.
    pub right: DenseMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> DenseMatrix {
        let s = DenseMatrix::diag(
            &self
                .singular_values
                .iter()
                .map(|&v| creal(v))
                .collect::<Vec<_>>(),
        );
        self.left.matmul(&s).matmul(&self.right.adjoint())
    }

    /// Index p such that sigma_p >= tol > sigma_{p+1} (1-based count of kept values).
    pub fn rank_at_tol(&self, tol: f64) -> usize {
        self.singular_values
            .iter()
            .take_while(|&&s| s >= tol)
            .count()
    }
}

/// Full SVD M = U diag(sigma) V* by one-sided Jacobi rotations on columns.
/// Intended for matrices of at most a few hundred rows/columns.
pub fn svd_small(m: &DenseMatrix) -> Result<Svd, NumericsError> {
    if m.n_rows() < m.n_cols() {
        // factor the adjoint and swap factors
        let svd = svd_small(&m.adjoint())?;
        return Ok(Svd {
            left: svd.right,
            singular_values: svd.singular_values,
            right: svd.left,
        });
    }
    let n_rows = m.n_rows();
    let n_cols = m.n_cols();
    let mut a = m.clone();
    let mut v = DenseMatrix::identity(n_cols);
    let scale = m.frobenius_norm();
    if scale == 0.0 {
        return Ok(Svd {
            left: embed_identity(n_rows, n_cols),
            singular_values: vec![0.0; n_cols],
            right: DenseMatrix::identity(n_cols),
        });
    }
    let tol = 1e-15;
    let max_sweeps = 100 * n_cols.max(1);
    let mut converged = false;
    for _sweep in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n_cols {
            for q in p + 1..n_cols {
                let app = norm(a.col(p)).powi(2);
                let aqq = norm(a.col(q)).powi(2);
                let apq = dot(a.col(p), a.col(q));
                if apq.norm() <= tol * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                // phase to make the off-diagonal coupling real
                let phase = apq / creal(apq.norm());
                let g = apq.norm();
                // real 2x2 Jacobi rotation on [app g; g aqq]
                let tau = (aqq - app) / (2.0 * g);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let cs = creal(c);
                let sn = creal(s);
                // columns p and q are mixed by [c, s*conj(phase)?]-style unitary;
                // work with b_p = a_p * phase so the cross term is real.
                for i in 0..n_rows {
                    let ap = a[(i, p)] * phase;
                    let aq = a[(i, q)];
                    a[(i, p)] = (ap * cs - aq * sn) * phase.conj();
                    a[(i, q)] = ap * sn + aq * cs;
                }
                for i in 0..n_cols {
                    let vp = v[(i, p)] * phase;
                    let vq = v[(i, q)];
                    v[(i, p)] = (vp * cs - vq * sn) * phase.conj();
                    v[(i, q)] = vp * sn + vq * cs;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(NumericsError::NoConvergence("svd_small"));
    }
    // extract singular values, sort descending
    let mut order: Vec<usize> = (0..n_cols).collect();
    let norms: Vec<f64> = (0..n_cols).map(|j| norm(a.col(j))).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let mut u_cols: Vec<CVector> = Vec::with_capacity(n_cols);
    let mut sigma = Vec::with_capacity(n_cols);
    let mut v_sorted = DenseMatrix::zeros(n_cols, n_cols);
    for (jj, &j) in order.iter().enumerate() {
        sigma.push(norms[j]);
        v_sorted.col_mut(jj).copy_from_slice(v.col(j));
        if norms[j] > tol * scale {
            let inv = creal(1.0 / norms[j]);
            u_cols.push(a.col(j).iter().map(|x| x * inv).collect());
        } else {
            u_cols.push(vec![czero(); n_rows]); // filled below
        }
    }
    complete_null_columns(&mut u_cols, n_rows);
    Ok(Svd {
        left: DenseMatrix::from_columns(n_rows, &u_cols),
        singular_values: sigma,
        right: v_sorted,
    })
}

fn embed_identity(n_rows: usize, n_cols: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(n_rows, n_cols);
    for i in 0..n_cols.min(n_rows) {
        m[(i, i)] = cone();
    }
    m
}

/// Replaces zero columns with unit vectors orthogonal to the existing ones.
fn complete_null_columns(cols: &mut [CVector], n_rows: usize) {
    for idx in 0..cols.len() {
        if norm(&cols[idx]) > 0.5 {
            continue;
        }
        'candidates: for e in 0..n_rows {
            let mut cand = vec![czero(); n_rows];
            cand[e] = cone();
            for pass in 0..2 {
                let _ = pass;
                for (other, col) in cols.iter().enumerate() {
                    if other == idx || norm(col) < 0.5 {
                        continue;
                    }
                    let h = dot(col, &cand);
                    for (cv, ov) in cand.iter_mut().zip(col) {
                        *cv -= h * ov;
                    }
                }
            }
            let nm = norm(&cand);
            if nm > 1e-8 {
                let inv = creal(1.0 / nm);
                cols[idx] = cand.iter().map(|x| x * inv).collect();
                break 'candidates;
            }
        }
    }
}
