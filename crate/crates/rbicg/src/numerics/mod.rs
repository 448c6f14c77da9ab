//! Complex scalar/vector/dense-matrix kernels and the small dense
//! decompositions used by every other module.

pub mod angles;
pub mod dense;
pub mod eig;
pub mod sparse;
pub mod svd;
pub mod tridiag;

pub use angles::principal_angle_cosines;
pub use dense::DenseMatrix;
pub use eig::{eig_dense, generalized_eig_small, GenEig};
pub use sparse::SparseMatrix;
pub use svd::{svd_small, Svd};
pub use tridiag::Tridiagonal;

use thiserror::Error;

pub type Complex = num_complex::Complex64;

/// All solver arithmetic is complex-valued; real inputs are promoted.
pub type CVector = Vec<Complex>;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("iteration cap reached in {0}")]
    NoConvergence(&'static str),
    #[error("zero pivot in LDU factorization at index {0} (breakdown of the second kind)")]
    LduBreakdown(usize),
    #[error("singular matrix in dense solve at pivot {0}")]
    SingularMatrix(usize),
    #[error("rank-zero input to principal angle computation")]
    RankZero,
    #[error("fewer than {requested} finite eigenvalues available ({available})")]
    TooFewEigenvalues { requested: usize, available: usize },
}

pub fn czero() -> Complex {
    Complex::new(0.0, 0.0)
}

pub fn cone() -> Complex {
    Complex::new(1.0, 0.0)
}

pub fn creal(x: f64) -> Complex {
    Complex::new(x, 0.0)
}

/// Inner product (x, y) = x* y, conjugate-linear in the first argument.
pub fn dot(x: &[Complex], y: &[Complex]) -> Complex {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(x: &[Complex]) -> f64 {
    x.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// y += a * x
pub fn axpy(a: Complex, x: &[Complex], y: &mut [Complex]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn scale(a: Complex, x: &[Complex]) -> CVector {
    x.iter().map(|v| a * v).collect()
}

pub fn sub(x: &[Complex], y: &[Complex]) -> CVector {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn add(x: &[Complex], y: &[Complex]) -> CVector {
    x.iter().zip(y).map(|(a, b)| a + b).collect()
}

pub fn zeros(n: usize) -> CVector {
    vec![czero(); n]
}

pub fn promote(x: &[f64]) -> CVector {
    x.iter().map(|&v| creal(v)).collect()
}

pub fn all_finite(x: &[Complex]) -> bool {
    x.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}
