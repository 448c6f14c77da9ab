//! Tridiagonal matrices and their pivotless LDU factorization.

use super::{cone, czero, Complex, DenseMatrix, NumericsError};

#[derive(Debug, Clone)]
pub struct Tridiagonal {
    pub sub: Vec<Complex>,
    pub diag: Vec<Complex>,
    pub sup: Vec<Complex>,
}

/// Pivotless LDU factors of a tridiagonal: L unit lower bidiagonal, D
/// diagonal, R unit upper bidiagonal.
#[derive(Debug, Clone)]
pub struct LduFactors {
    pub l_sub: Vec<Complex>,
    pub d: Vec<Complex>,
    pub r_sup: Vec<Complex>,
}

impl Tridiagonal {
    pub fn order(&self) -> usize {
        self.diag.len()
    }

    pub fn identity(n: usize) -> Self {
        Self {
            sub: vec![czero(); n.saturating_sub(1)],
            diag: vec![cone(); n],
            sup: vec![czero(); n.saturating_sub(1)],
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.order();
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i + 1, i)] = self.sub[i];
                m[(i, i + 1)] = self.sup[i];
            }
        }
        m
    }

    pub fn adjoint(&self) -> Tridiagonal {
        Tridiagonal {
            sub: self.sup.iter().map(|v| v.conj()).collect(),
            diag: self.diag.iter().map(|v| v.conj()).collect(),
            sup: self.sub.iter().map(|v| v.conj()).collect(),
        }
    }

    pub fn infinity_norm(&self) -> f64 {
        let n = self.order();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i].norm();
                if i > 0 {
                    s += self.sub[i - 1].norm();
                }
                if i + 1 < n {
                    s += self.sup[i].norm();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    /// T = L D R by pivotless elimination. A pivot below
    /// 1e-14 * ||T||_inf signals a breakdown of the second kind.
    pub fn ldu(&self) -> Result<LduFactors, NumericsError> {
        let n = self.order();
        let threshold = 1e-14 * self.infinity_norm().max(f64::MIN_POSITIVE);
        let mut d = vec![czero(); n];
        let mut l_sub = vec![czero(); n.saturating_sub(1)];
        let mut r_sup = vec![czero(); n.saturating_sub(1)];
        let mut prev = czero();
        for i in 0..n {
            let pivot = if i == 0 {
                self.diag[0]
            } else {
                self.diag[i] - l_sub[i - 1] * prev * r_sup[i - 1]
            };
            if pivot.norm() < threshold {
                return Err(NumericsError::LduBreakdown(i));
            }
            d[i] = pivot;
            if i + 1 < n {
                l_sub[i] = self.sub[i] / pivot;
                r_sup[i] = self.sup[i] / pivot;
            }
            prev = pivot;
        }
        Ok(LduFactors { l_sub, d, r_sup })
    }
}

impl LduFactors {
    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.d.len();
        let mut l = DenseMatrix::identity(n);
        let mut r = DenseMatrix::identity(n);
        let dm = DenseMatrix::diag(&self.d);
        for i in 0..n.saturating_sub(1) {
            l[(i + 1, i)] = self.l_sub[i];
            r[(i, i + 1)] = self.r_sup[i];
        }
        l.matmul(&dm).matmul(&r)
    }
}
