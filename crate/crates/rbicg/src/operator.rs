//! Linear operator abstraction shared by the solvers: raw sparse matrices,
//! shifted pencils sigma*E - A, and split-preconditioned wrappers all
//! implement the same apply/apply-adjoint surface.

use crate::numerics::{CVector, Complex, NumericsError, SparseMatrix};

pub trait Operator: Sync {
    fn dim(&self) -> usize;
    /// Returns M x, or M* x when `adjoint` is set.
    fn apply(&self, x: &[Complex], adjoint: bool) -> Result<CVector, NumericsError>;
}

impl Operator for SparseMatrix {
    fn dim(&self) -> usize {
        self.n_rows()
    }
    fn apply(&self, x: &[Complex], adjoint: bool) -> Result<CVector, NumericsError> {
        self.spmv(x, adjoint)
    }
}

/// The pencil operator sigma*E - A.
pub struct ShiftedOperator<'a> {
    pub e: &'a SparseMatrix,
    pub a: &'a SparseMatrix,
    pub sigma: Complex,
}

impl<'a> ShiftedOperator<'a> {
    pub fn new(e: &'a SparseMatrix, a: &'a SparseMatrix, sigma: Complex) -> Self {
        assert_eq!(e.n_rows(), a.n_rows());
        assert_eq!(e.n_cols(), a.n_cols());
        Self { e, a, sigma }
    }

    /// Materializes sigma*E - A as a sparse matrix (for factorization).
    pub fn assemble(&self) -> SparseMatrix {
        self.e
            .scaled(self.sigma)
            .add_scaled(-crate::numerics::cone(), self.a)
    }
}

impl Operator for ShiftedOperator<'_> {
    fn dim(&self) -> usize {
        self.e.n_rows()
    }
    fn apply(&self, x: &[Complex], adjoint: bool) -> Result<CVector, NumericsError> {
        let ex = self.e.spmv(x, adjoint)?;
        let ax = self.a.spmv(x, adjoint)?;
        let s = if adjoint {
            self.sigma.conj()
        } else {
            self.sigma
        };
        Ok(ex.iter().zip(&ax).map(|(e, a)| s * e - a).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{creal, dot, Complex};
    use rand::{Rng, SeedableRng};

    #[test]
    fn shifted_operator_matches_assembled() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let n = 8;
        let mut te = Vec::new();
        let mut ta = Vec::new();
        for i in 0..n {
            te.push((i, i, creal(rng.gen_range(1.0..2.0))));
            ta.push((i, i, creal(rng.gen_range(-2.0..-1.0))));
            if i + 1 < n {
                ta.push((i, i + 1, creal(rng.gen_range(-0.5..0.5))));
                ta.push((i + 1, i, creal(rng.gen_range(-0.5..0.5))));
            }
        }
        let e = SparseMatrix::from_triplets(n, n, &te);
        let a = SparseMatrix::from_triplets(n, n, &ta);
        let op = ShiftedOperator::new(&e, &a, Complex::new(0.3, 0.1));
        let m = op.assemble();
        let x: Vec<_> = (0..n)
            .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        for adjoint in [false, true] {
            let y1 = op.apply(&x, adjoint).unwrap();
            let y2 = m.spmv(&x, adjoint).unwrap();
            for (a, b) in y1.iter().zip(&y2) {
                assert!((a - b).norm() < 1e-13);
            }
        }
        // adjoint identity
        let y: Vec<_> = (0..n)
            .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let lhs = dot(&y, &op.apply(&x, false).unwrap());
        let rhs = dot(&op.apply(&y, true).unwrap(), &x);
        assert!((lhs - rhs).norm() < 1e-12);
    }
}
