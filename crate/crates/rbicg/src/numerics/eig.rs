//! Dense complex eigensolvers: Schur form via shifted QR on a Hessenberg
//! reduction, eigenvectors by triangular substitution, and the generalized
//! pencil solver built on top.

use super::{cone, creal, czero, norm, svd_small, CVector, Complex, DenseMatrix, NumericsError};

#[derive(Debug, Clone)]
pub struct EigDecomp {
    pub values: Vec<Complex>,
    /// Right eigenvectors as columns, unit norm.
    pub right: DenseMatrix,
    /// Left eigenvectors as columns, unit norm: left_i* A = lambda_i left_i*.
    pub left: DenseMatrix,
}

#[derive(Debug, Clone)]
pub struct GenEig {
    pub values: Vec<Complex>,
    pub right: DenseMatrix,
    pub left: DenseMatrix,
    /// Set when Q was rank-deficient beyond tolerance and the pseudo-inverse
    /// fallback was applied.
    pub singular_pencil: bool,
}

/// Householder reduction to upper Hessenberg form: H = Z* A Z.
fn hessenberg(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let n = a.n_rows();
    let mut h = a.clone();
    let mut z = DenseMatrix::identity(n);
    for k in 0..n.saturating_sub(2) {
        // Householder vector for column k, rows k+1..n
        let mut v: CVector = (k + 1..n).map(|i| h[(i, k)]).collect();
        let alpha = norm(&v);
        if alpha == 0.0 {
            continue;
        }
        let x0 = v[0];
        let phase = if x0 == czero() {
            cone()
        } else {
            x0 / creal(x0.norm())
        };
        v[0] += phase * creal(alpha);
        let vn = norm(&v);
        if vn == 0.0 {
            continue;
        }
        let inv = creal(1.0 / vn);
        for e in v.iter_mut() {
            *e *= inv;
        }
        // H <- (I - 2vv*) H applied to rows k+1..n
        for j in 0..n {
            let mut s = czero();
            for (idx, i) in (k + 1..n).enumerate() {
                s += v[idx].conj() * h[(i, j)];
            }
            let s2 = s * creal(2.0);
            for (idx, i) in (k + 1..n).enumerate() {
                h[(i, j)] -= v[idx] * s2;
            }
        }
        // H <- H (I - 2vv*) applied to cols k+1..n
        for i in 0..n {
            let mut s = czero();
            for (idx, j) in (k + 1..n).enumerate() {
                s += h[(i, j)] * v[idx];
            }
            let s2 = s * creal(2.0);
            for (idx, j) in (k + 1..n).enumerate() {
                h[(i, j)] -= s2 * v[idx].conj();
            }
        }
        // Z <- Z (I - 2vv*)
        for i in 0..n {
            let mut s = czero();
            for (idx, j) in (k + 1..n).enumerate() {
                s += z[(i, j)] * v[idx];
            }
            let s2 = s * creal(2.0);
            for (idx, j) in (k + 1..n).enumerate() {
                z[(i, j)] -= s2 * v[idx].conj();
            }
        }
    }
    // clean below-subdiagonal noise
    for j in 0..n {
        for i in j + 2..n {
            h[(i, j)] = czero();
        }
    }
    (h, z)
}

/// Schur decomposition A = Z T Z* with T upper triangular, via single-shift
/// QR with Wilkinson shifts.
pub fn schur(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix), NumericsError> {
    let n = a.n_rows();
    assert_eq!(n, a.n_cols());
    if n == 0 {
        return Ok((DenseMatrix::zeros(0, 0), DenseMatrix::zeros(0, 0)));
    }
    let (mut t, mut z) = hessenberg(a);
    let eps = 1e-15;
    let max_iter = 100 * n.max(1);
    let mut hi = n - 1; // active block is 0..=hi
    let mut iter = 0;
    while hi > 0 {
        // deflate
        let mut deflated = false;
        for m in (1..=hi).rev() {
            let s = t[(m - 1, m - 1)].norm() + t[(m, m)].norm();
            let s = if s == 0.0 { 1.0 } else { s };
            if t[(m, m - 1)].norm() <= eps * s {
                t[(m, m - 1)] = czero();
                if m == hi {
                    hi -= 1;
                    deflated = true;
                    break;
                }
            }
        }
        if deflated {
            iter = 0;
            continue;
        }
        if hi == 0 {
            break;
        }
        iter += 1;
        if iter > max_iter {
            return Err(NumericsError::NoConvergence("schur"));
        }
        // find the start of the active unreduced block
        let mut lo = hi;
        while lo > 0 && t[(lo, lo - 1)] != czero() {
            lo -= 1;
        }
        // Wilkinson shift from trailing 2x2 of the active block
        let a11 = t[(hi - 1, hi - 1)];
        let a12 = t[(hi - 1, hi)];
        let a21 = t[(hi, hi - 1)];
        let a22 = t[(hi, hi)];
        let tr = a11 + a22;
        let det = a11 * a22 - a12 * a21;
        let disc = (tr * tr - det * creal(4.0)).sqrt();
        let mu1 = (tr + disc) * creal(0.5);
        let mu2 = (tr - disc) * creal(0.5);
        let mut mu = if (mu1 - a22).norm() <= (mu2 - a22).norm() {
            mu1
        } else {
            mu2
        };
        if iter % 20 == 0 {
            // exceptional shift to break symmetry stalls
            mu = a22 + creal(0.75 * a21.norm());
        }
        // Explicit shifted QR step on the active block: T - mu I = QR,
        // then T <- RQ + mu I, accumulating Q into Z.
        for i in lo..=hi {
            t[(i, i)] -= mu;
        }
        let mut rots: Vec<(usize, Complex, Complex)> = Vec::new();
        for k in lo..hi {
            let (c, s) = givens(t[(k, k)], t[(k + 1, k)]);
            for j in k..n {
                let t1 = t[(k, j)];
                let t2 = t[(k + 1, j)];
                t[(k, j)] = c.conj() * t1 + s.conj() * t2;
                t[(k + 1, j)] = -s * t1 + c * t2;
            }
            t[(k + 1, k)] = czero();
            rots.push((k, c, s));
        }
        for &(k, c, s) in &rots {
            // R is upper triangular, so columns k, k+1 vanish below row k+1
            for i in 0..=k + 1 {
                let t1 = t[(i, k)];
                let t2 = t[(i, k + 1)];
                t[(i, k)] = t1 * c + t2 * s;
                t[(i, k + 1)] = -t1 * s.conj() + t2 * c.conj();
            }
            for i in 0..n {
                let z1 = z[(i, k)];
                let z2 = z[(i, k + 1)];
                z[(i, k)] = z1 * c + z2 * s;
                z[(i, k + 1)] = -z1 * s.conj() + z2 * c.conj();
            }
        }
        for i in lo..=hi {
            t[(i, i)] += mu;
        }
    }
    Ok((t, z))
}

/// Givens rotation: returns (c, s) with |c|^2+|s|^2=1 such that
/// [c* s*; -s c] [a; b] = [r; 0].
fn givens(a: Complex, b: Complex) -> (Complex, Complex) {
    let na = a.norm();
    let nb = b.norm();
    if nb == 0.0 {
        return (cone(), czero());
    }
    let r = creal((na * na + nb * nb).sqrt());
    (a / r, b / r)
}

/// Full eigendecomposition of a general complex dense matrix.
pub fn eig_dense(a: &DenseMatrix) -> Result<EigDecomp, NumericsError> {
    let n = a.n_rows();
    let (t, z) = schur(a)?;
    let values: Vec<Complex> = (0..n).map(|i| t[(i, i)]).collect();
    let scale = t.max_abs().max(f64::MIN_POSITIVE);
    let mut right = DenseMatrix::zeros(n, n);
    let mut left = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let lam = values[i];
        // right eigenvector of T by back substitution
        let mut y = vec![czero(); n];
        y[i] = cone();
        for j in (0..i).rev() {
            let mut s = czero();
            for l in j + 1..=i {
                s += t[(j, l)] * y[l];
            }
            let mut d = t[(j, j)] - lam;
            if d.norm() < 1e-14 * scale {
                d = creal(1e-14 * scale);
            }
            y[j] = -s / d;
        }
        let w = z.mul_vec(&y);
        let nw = norm(&w);
        right.col_mut(i).copy_from_slice(&normalize_phase(&w, nw));
        // left eigenvector: rho T = lam rho, rho_j = 0 for j < i
        let mut rho = vec![czero(); n]; // rho = conj of the left vector entries
        rho[i] = cone();
        for j in i + 1..n {
            let mut s = czero();
            for m in i..j {
                s += rho[m] * t[(m, j)];
            }
            let mut d = lam - t[(j, j)];
            if d.norm() < 1e-14 * scale {
                d = creal(1e-14 * scale);
            }
            rho[j] = s / d;
        }
        // left vector u with u* = rho Z*, i.e. u = Z rho*
        let rho_conj: CVector = rho.iter().map(|v| v.conj()).collect();
        let u = z.mul_vec(&rho_conj);
        let nu = norm(&u);
        left.col_mut(i).copy_from_slice(&normalize_phase(&u, nu));
    }
    Ok(EigDecomp {
        values,
        right,
        left,
    })
}

/// Unit-norm with deterministic phase: largest-magnitude entry real positive.
fn normalize_phase(v: &[Complex], nv: f64) -> CVector {
    if nv == 0.0 {
        return v.to_vec();
    }
    let mut imax = 0;
    let mut best = 0.0;
    for (i, x) in v.iter().enumerate() {
        if x.norm() > best {
            best = x.norm();
            imax = i;
        }
    }
    let phase = if v[imax] == czero() {
        cone()
    } else {
        v[imax].conj() / creal(v[imax].norm())
    };
    let f = phase * creal(1.0 / nv);
    v.iter().map(|x| x * f).collect()
}

/// All eigenpairs of the pencil (P, Q): P w = lambda Q w, with left vectors
/// satisfying w_l* P = lambda w_l* Q. A rank-deficient Q (beyond 1e-12
/// relative) is reported via `singular_pencil` and handled with a
/// pseudo-inverse fallback.
pub fn generalized_eig_small(p: &DenseMatrix, q: &DenseMatrix) -> Result<GenEig, NumericsError> {
    let m = p.n_rows();
    assert_eq!(m, p.n_cols());
    assert_eq!((m, m), (q.n_rows(), q.n_cols()));
    let svd = svd_small(q)?;
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    let singular = smax == 0.0 || svd.singular_values[m - 1] < 1e-12 * smax;
    // S = Q^{-1} P (pseudo-inverse when Q is rank deficient)
    let s_mat = if singular {
        let cutoff = 1e-12 * smax.max(f64::MIN_POSITIVE);
        let inv_sigma: Vec<Complex> = svd
            .singular_values
            .iter()
            .map(|&s| if s > cutoff { creal(1.0 / s) } else { czero() })
            .collect();
        // Q^+ = V diag(1/sigma) U*
        svd.right
            .matmul(&DenseMatrix::diag(&inv_sigma))
            .matmul(&svd.left.adjoint())
            .matmul(p)
    } else {
        q.lu_solve(p)?
    };
    let eig = eig_dense(&s_mat)?;
    // left vectors of the pencil: solve Q* w_l = u where u* S = lambda u*
    let left = if singular {
        let cutoff = 1e-12 * smax.max(f64::MIN_POSITIVE);
        let inv_sigma: Vec<Complex> = svd
            .singular_values
            .iter()
            .map(|&s| if s > cutoff { creal(1.0 / s) } else { czero() })
            .collect();
        let q_adj_pinv = svd
            .left
            .matmul(&DenseMatrix::diag(&inv_sigma))
            .matmul(&svd.right.adjoint());
        q_adj_pinv.matmul(&eig.left)
    } else {
        q.adjoint().lu_solve(&eig.left)?
    };
    // renormalize left columns
    let mut left_n = DenseMatrix::zeros(m, m);
    for j in 0..m {
        let c = left.col(j);
        let nc = norm(c);
        left_n.col_mut(j).copy_from_slice(&normalize_phase(c, nc));
    }
    Ok(GenEig {
        values: eig.values,
        right: eig.right,
        left: left_n,
        singular_pencil: singular,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_mat(n: usize, seed: u64) -> DenseMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(n, n, |_, _| {
            Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn check_eig(a: &DenseMatrix, e: &EigDecomp, tol: f64) {
        let na = a.frobenius_norm();
        for i in 0..a.n_rows() {
            let w = e.right.col(i);
            let aw = a.mul_vec(w);
            let lw: CVector = w.iter().map(|x| x * e.values[i]).collect();
            let res: f64 = aw
                .iter()
                .zip(&lw)
                .map(|(x, y)| (x - y).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(
                res <= tol * (na + e.values[i].norm()),
                "right residual {res}"
            );
            // left: u* A = lambda u*  <=>  A* u = conj(lambda) u
            let u = e.left.col(i);
            let au = a.adjoint().mul_vec(u);
            let lu: CVector = u.iter().map(|x| x * e.values[i].conj()).collect();
            let res: f64 = au
                .iter()
                .zip(&lu)
                .map(|(x, y)| (x - y).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(
                res <= tol * (na + e.values[i].norm()),
                "left residual {res}"
            );
        }
    }

    #[test]
    fn eig_diagonal() {
        let a = DenseMatrix::diag(&[creal(1.0), creal(2.0), creal(3.0)]);
        let e = eig_dense(&a).unwrap();
        let mut vals: Vec<f64> = e.values.iter().map(|v| v.re).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[2] - 3.0).abs() < 1e-12);
        check_eig(&a, &e, 1e-10);
    }

    #[test]
    fn eig_random_matrices() {
        for seed in 0..6 {
            let n = 3 + (seed as usize % 6);
            let a = rand_mat(n, seed + 40);
            let e = eig_dense(&a).unwrap();
            check_eig(&a, &e, 1e-9);
        }
    }

    #[test]
    fn gen_eig_diagonal_pencil() {
        let p = DenseMatrix::diag(&[creal(1.0), creal(2.0)]);
        let q = DenseMatrix::identity(2);
        let g = generalized_eig_small(&p, &q).unwrap();
        let mut vals: Vec<f64> = g.values.iter().map(|v| v.re).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 2.0).abs() < 1e-12);
        assert!(!g.singular_pencil);
    }

    #[test]
    fn gen_eig_reciprocal_scaling() {
        let p = DenseMatrix::identity(2);
        let q = DenseMatrix::diag(&[creal(2.0), creal(4.0)]);
        let g = generalized_eig_small(&p, &q).unwrap();
        let mut vals: Vec<f64> = g.values.iter().map(|v| v.re).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((vals[0] - 0.25).abs() < 1e-12 && (vals[1] - 0.5).abs() < 1e-12);
    }

    /// Determinant-sampling oracle: eigenvalues are roots of det(P - lambda Q).
    #[test]
    fn gen_eig_matches_determinant_roots() {
        let p = rand_mat(6, 51);
        let q = rand_mat(6, 52);
        let g = generalized_eig_small(&p, &q).unwrap();
        let np = p.frobenius_norm();
        let nq = q.frobenius_norm();
        for (idx, &lam) in g.values.iter().enumerate() {
            // residual check on the pair, both sides
            let w = g.right.col(idx);
            let r1 = crate::numerics::sub(
                &p.mul_vec(w),
                &q.mul_vec(w).iter().map(|x| x * lam).collect::<Vec<_>>(),
            );
            assert!(
                norm(&r1) <= 1e-10 * (np + lam.norm() * nq),
                "res {}",
                norm(&r1)
            );
            let u = g.left.col(idx);
            // u* P = lam u* Q  <=>  P* u = conj(lam) Q* u
            let r2 = crate::numerics::sub(
                &p.adjoint().mul_vec(u),
                &q.adjoint()
                    .mul_vec(u)
                    .iter()
                    .map(|x| x * lam.conj())
                    .collect::<Vec<_>>(),
            );
            assert!(
                norm(&r2) <= 1e-10 * (np + lam.norm() * nq),
                "left res {}",
                norm(&r2)
            );
            // determinant of P - lam Q must (near) vanish relative to a nearby sample
            let shifted = p.sub(&q.scaled(lam));
            let det = det_via_lu(&shifted);
            let nearby = p.sub(&q.scaled(lam + creal(0.1)));
            let det_near = det_via_lu(&nearby).norm().max(1e-30);
            assert!(
                det.norm() / det_near < 1e-6,
                "det ratio {}",
                det.norm() / det_near
            );
        }
    }

    fn det_via_lu(m: &DenseMatrix) -> Complex {
        let n = m.n_rows();
        let mut a = m.clone();
        let mut det = cone();
        for k in 0..n {
            let (mut pmax, mut prow) = (a[(k, k)].norm(), k);
            for i in k + 1..n {
                if a[(i, k)].norm() > pmax {
                    pmax = a[(i, k)].norm();
                    prow = i;
                }
            }
            if pmax == 0.0 {
                return czero();
            }
            if prow != k {
                for j in 0..n {
                    let t = a[(k, j)];
                    a[(k, j)] = a[(prow, j)];
                    a[(prow, j)] = t;
                }
                det = -det;
            }
            det *= a[(k, k)];
            for i in k + 1..n {
                let f = a[(i, k)] / a[(k, k)];
                for j in k..n {
                    let v = a[(k, j)];
                    a[(i, j)] -= f * v;
                }
            }
        }
        det
    }

    #[test]
    fn singular_pencil_flagged() {
        let p = DenseMatrix::diag(&[creal(1.0), creal(2.0)]);
        let q = DenseMatrix::diag(&[creal(1.0), czero()]);
        let g = generalized_eig_small(&p, &q).unwrap();
        assert!(g.singular_pencil);
    }
}
