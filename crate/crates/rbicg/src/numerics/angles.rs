//! Principal angles between subspaces.

use super::{svd_small, DenseMatrix, NumericsError};

/// Cosines of the principal angles between range(X) and range(Y): the
/// singular values of Qx* Qy for orthonormal bases Qx, Qy, clamped to [0, 1]
/// and nonincreasing.
pub fn principal_angle_cosines(
    x: &DenseMatrix,
    y: &DenseMatrix,
) -> Result<Vec<f64>, NumericsError> {
    assert_eq!(x.n_rows(), y.n_rows(), "row counts must match");
    let (qx, _) = x.thin_qr(1e-12);
    let (qy, _) = y.thin_qr(1e-12);
    if qx.n_cols() == 0 || qy.n_cols() == 0 {
        return Err(NumericsError::RankZero);
    }
    let m = qx.adjoint_matmul(&qy);
    let svd = svd_small(&m)?;
    Ok(svd
        .singular_values
        .iter()
        .map(|&s| s.clamp(0.0, 1.0))
        .collect())
}
