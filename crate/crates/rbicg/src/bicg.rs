//! Standard BiCG for a pair of dual systems A x = b, A* x̃ = b̃, via coupled
//! two-term recurrences. Also the k = 0 oracle for the recycling solver.

use crate::numerics::{axpy, czero, dot, norm, sub, CVector, Complex, NumericsError};
use crate::operator::Operator;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A primal/dual pair sharing one operator.
pub struct DualSystem<'a> {
    pub op: &'a dyn Operator,
    pub b: CVector,
    pub b_dual: CVector,
}

impl<'a> DualSystem<'a> {
    pub fn new(op: &'a dyn Operator, b: CVector, b_dual: CVector) -> Self {
        assert_eq!(op.dim(), b.len());
        assert_eq!(op.dim(), b_dual.len());
        Self { op, b, b_dual }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxItn,
    SeriousBreakdown,
    SecondKindBreakdown,
}

/// Per-iteration scalars and residual norms. Indexing convention:
/// `resid_norms[i]` is ‖r_i‖ with `resid_norms[0] = ‖r_0‖`; `alphas[i-1]` is
/// α_i; `betas[i-1]` is the β_{i-1} used in iteration i's direction update
/// (zero for i = 1); `rhos[i-1]` is ρ_{i-1} = (r̃_{i-1}, r_{i-1}).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceHistory {
    pub resid_norms: Vec<f64>,
    pub dual_resid_norms: Vec<f64>,
    pub alphas: Vec<Complex>,
    pub betas: Vec<Complex>,
    pub rhos: Vec<Complex>,
    pub termination: Termination,
    pub iterations: usize,
    /// Stored residual vectors r_0..r_m (only when requested; used by tests
    /// and by the recycle builder's naive oracle).
    #[serde(skip)]
    pub residuals: Vec<CVector>,
    #[serde(skip)]
    pub dual_residuals: Vec<CVector>,
}

impl ConvergenceHistory {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("serious breakdown at iteration {0}: (r̃, r) vanished")]
    SeriousBreakdown(usize),
    #[error("second-kind breakdown at iteration {0}: (p̃, q) vanished")]
    SecondKindBreakdown(usize),
    #[error("recycle basis inconsistent with operator: ‖C − AU‖ = {0:.3e}")]
    BasisInconsistent(f64),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Retain residual vectors in the history.
    pub store_residuals: bool,
    /// Seed for the one-shot dual re-randomization when (r̃_0, r_0) = 0.
    pub seed: u64,
    /// Skip the dual residual stopping test (used when b̃ = 0 and the dual
    /// iteration only generates the adjoint Krylov space).
    pub waive_dual_test: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            store_residuals: false,
            seed: 0x5EED,
            waive_dual_test: false,
        }
    }
}

pub(crate) const BREAKDOWN_TOL: f64 = 1e-14;

pub(crate) fn random_vector(n: usize, seed: u64) -> CVector {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

pub fn solve_bicg(
    sys: &DualSystem,
    x0: &[Complex],
    x0_dual: &[Complex],
    tol: f64,
    max_itn: usize,
) -> Result<(CVector, CVector, ConvergenceHistory), SolveError> {
    solve_bicg_with(sys, x0, x0_dual, tol, max_itn, &SolveOptions::default())
}

pub fn solve_bicg_with(
    sys: &DualSystem,
    x0: &[Complex],
    x0_dual: &[Complex],
    tol: f64,
    max_itn: usize,
    opts: &SolveOptions,
) -> Result<(CVector, CVector, ConvergenceHistory), SolveError> {
    assert!(tol > 0.0);
    let op = sys.op;
    let n = op.dim();
    assert_eq!(x0.len(), n);
    assert_eq!(x0_dual.len(), n);

    let mut x = x0.to_vec();
    let mut x_dual = x0_dual.to_vec();
    let mut r = sub(&sys.b, &op.apply(&x, false)?);
    let mut r_dual = sub(&sys.b_dual, &op.apply(&x_dual, true)?);

    // If the initial residual pair is (bi-)orthogonal, re-randomize the dual
    // guess once so the coupled recurrence can start.
    if dot(&r_dual, &r).norm() < BREAKDOWN_TOL * norm(&r) * norm(&r_dual) || norm(&r_dual) == 0.0 {
        x_dual = random_vector(n, opts.seed);
        r_dual = sub(&sys.b_dual, &op.apply(&x_dual, true)?);
    }

    let b_norm = norm(&sys.b).max(f64::MIN_POSITIVE);
    let b_dual_norm = norm(&sys.b_dual).max(f64::MIN_POSITIVE);
    let waive_dual = opts.waive_dual_test || norm(&sys.b_dual) == 0.0;

    let mut hist = ConvergenceHistory {
        resid_norms: vec![norm(&r)],
        dual_resid_norms: vec![norm(&r_dual)],
        alphas: Vec::new(),
        betas: Vec::new(),
        rhos: Vec::new(),
        termination: Termination::MaxItn,
        iterations: 0,
        residuals: Vec::new(),
        dual_residuals: Vec::new(),
    };
    if opts.store_residuals {
        hist.residuals.push(r.clone());
        hist.dual_residuals.push(r_dual.clone());
    }

    if norm(&r) <= tol * b_norm && (waive_dual || norm(&r_dual) <= tol * b_dual_norm) {
        hist.termination = Termination::Converged;
        return Ok((x, x_dual, hist));
    }

    let mut p: CVector = Vec::new();
    let mut p_dual: CVector = Vec::new();
    let mut rho_prev = czero();

    for i in 1..=max_itn {
        let rho = dot(&r_dual, &r);
        if rho.norm() < BREAKDOWN_TOL * norm(&r) * norm(&r_dual) {
            hist.termination = Termination::SeriousBreakdown;
            return Err(SolveError::SeriousBreakdown(i));
        }
        let beta = if i == 1 { czero() } else { rho / rho_prev };
        if i == 1 {
            p = r.clone();
            p_dual = r_dual.clone();
        } else {
            for l in 0..n {
                p[l] = r[l] + beta * p[l];
                p_dual[l] = r_dual[l] + beta.conj() * p_dual[l];
            }
        }
        let q = op.apply(&p, false)?;
        let q_dual = op.apply(&p_dual, true)?;
        let delta = dot(&p_dual, &q);
        if delta.norm() < BREAKDOWN_TOL * norm(&p_dual) * norm(&q) {
            hist.termination = Termination::SecondKindBreakdown;
            return Err(SolveError::SecondKindBreakdown(i));
        }
        let alpha = rho / delta;

        axpy(alpha, &p, &mut x);
        axpy(alpha.conj(), &p_dual, &mut x_dual);
        axpy(-alpha, &q, &mut r);
        axpy(-alpha.conj(), &q_dual, &mut r_dual);

        hist.alphas.push(alpha);
        hist.betas.push(beta);
        hist.rhos.push(rho);
        hist.resid_norms.push(norm(&r));
        hist.dual_resid_norms.push(norm(&r_dual));
        hist.iterations = i;
        if opts.store_residuals {
            hist.residuals.push(r.clone());
            hist.dual_residuals.push(r_dual.clone());
        }
        rho_prev = rho;

        if norm(&r) <= tol * b_norm && (waive_dual || norm(&r_dual) <= tol * b_dual_norm) {
            hist.termination = Termination::Converged;
            return Ok((x, x_dual, hist));
        }
    }

    hist.termination = Termination::MaxItn;
    Ok((x, x_dual, hist))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{creal, zeros, SparseMatrix};

    fn ones(n: usize) -> CVector {
        vec![creal(1.0); n]
    }

    #[test]
    fn identity_converges_in_one() {
        let a = SparseMatrix::identity(6);
        let sys = DualSystem::new(&a, ones(6), ones(6));
        let (x, _, hist) = solve_bicg(&sys, &zeros(6), &zeros(6), 1e-12, 10).unwrap();
        assert_eq!(hist.iterations, 1);
        assert!(hist.converged());
        for v in &x {
            assert!((v - creal(1.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn diag_two_by_two() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, creal(1.0)), (1, 1, creal(2.0))]);
        let sys = DualSystem::new(&a, ones(2), ones(2));
        let (x, x_dual, hist) = solve_bicg(&sys, &zeros(2), &zeros(2), 1e-12, 5).unwrap();
        assert!(hist.iterations <= 2);
        assert!((x[0] - creal(1.0)).norm() < 1e-12);
        assert!((x[1] - creal(0.5)).norm() < 1e-12);
        assert!((x_dual[0] - creal(1.0)).norm() < 1e-12);
        assert!((x_dual[1] - creal(0.5)).norm() < 1e-12);
    }

    fn random_nonsym(n: usize, seed: u64) -> SparseMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, Complex::new(4.0 + rng.gen_range(0.0..1.0), 0.0)));
            for _ in 0..3 {
                let j = rng.gen_range(0..n);
                if j != i {
                    t.push((
                        i,
                        j,
                        Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-0.3..0.3)),
                    ));
                }
            }
        }
        SparseMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn true_residual_agreement() {
        let n = 60;
        let a = random_nonsym(n, 2);
        let b = random_vector(n, 3);
        let bd = random_vector(n, 4);
        let sys = DualSystem::new(&a, b.clone(), bd.clone());
        let (x, x_dual, hist) = solve_bicg(&sys, &zeros(n), &zeros(n), 1e-10, 200).unwrap();
        assert!(hist.converged());
        let true_r = sub(&b, &a.spmv(&x, false).unwrap());
        assert!(norm(&true_r) <= 1e-6 * norm(&b));
        let true_rd = sub(&bd, &a.spmv(&x_dual, true).unwrap());
        assert!(norm(&true_rd) <= 1e-6 * norm(&bd));
    }

    #[test]
    fn finite_termination() {
        let n = 25;
        let a = random_nonsym(n, 11);
        let sys = DualSystem::new(&a, random_vector(n, 12), random_vector(n, 13));
        let (_, _, hist) = solve_bicg(&sys, &zeros(n), &zeros(n), 1e-12, n + 2).unwrap();
        assert!(hist.converged(), "terminated {:?}", hist.termination);
        assert!(hist.iterations <= n);
    }

    #[test]
    fn petrov_galerkin_orthogonality() {
        // r_i ⊥ span{r̃_0..r̃_{i-1}} and vice versa (Lanczos vectors are
        // scalings of the residuals).
        let n = 40;
        let a = random_nonsym(n, 21);
        let sys = DualSystem::new(&a, random_vector(n, 22), random_vector(n, 23));
        let opts = SolveOptions {
            store_residuals: true,
            ..Default::default()
        };
        let (_, _, hist) = solve_bicg_with(&sys, &zeros(n), &zeros(n), 1e-10, 200, &opts).unwrap();
        let r0n = hist.resid_norms[0];
        let m = hist.iterations.min(8);
        for i in 1..=m {
            for j in 0..i {
                let d1 = dot(&hist.dual_residuals[j], &hist.residuals[i]).norm();
                let d2 = dot(&hist.residuals[j], &hist.dual_residuals[i]).norm();
                let scale = hist.resid_norms[j].max(hist.dual_resid_norms[j]);
                assert!(
                    d1 <= 1e-8 * r0n * scale,
                    "primal orthogonality {i},{j}: {d1}"
                );
                assert!(d2 <= 1e-8 * r0n * scale, "dual orthogonality {i},{j}: {d2}");
            }
        }
    }

    #[test]
    fn zero_dual_rhs_rerandomizes_and_waives() {
        let n = 30;
        let a = random_nonsym(n, 31);
        let b = random_vector(n, 32);
        let sys = DualSystem::new(&a, b.clone(), zeros(n));
        let (x, _, hist) = solve_bicg(&sys, &zeros(n), &zeros(n), 1e-10, 200).unwrap();
        assert!(hist.converged());
        let true_r = sub(&b, &a.spmv(&x, false).unwrap());
        assert!(norm(&true_r) <= 1e-8 * norm(&b));
    }
}
