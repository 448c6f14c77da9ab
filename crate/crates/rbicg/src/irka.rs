//! Interpolatory model reduction: the iterative rational Krylov algorithm
//! with the dual shifted systems solved by BiCG or RBiCG, per-shift recycle
//! spaces carried across steps, Petrov-Galerkin reduced-model construction,
//! and transfer-function / backward-error checks.

use crate::bicg::{solve_bicg_with, DualSystem, SolveError, SolveOptions};
use crate::numerics::{
    czero, dot, generalized_eig_small, norm, svd_small, CVector, Complex, DenseMatrix,
    NumericsError,
};
use crate::operator::{Operator, ShiftedOperator};
use crate::precond::{ilut_factor, PrecondError, SplitOperator};
use crate::problems::StateSpaceModel;
use crate::rbicg::{solve_rbicg_with, RecycleBasis};
use crate::recycle::{refresh_for_new_system, update_recycle_space, RecycleError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IrkaError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Precond(#[from] PrecondError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Recycle(#[from] RecycleError),
    #[error("evaluation point {0} makes sE - A singular")]
    SingularPoint(Complex),
    #[error("W_r* V_r is rank deficient (condition {0:.3e})")]
    RankDeficient(f64),
    #[error("initial shifts must be distinct and nonzero")]
    BadShifts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Bicg,
    Rbicg,
}

#[derive(Debug, Clone)]
pub struct IrkaOptions {
    pub solver: SolverKind,
    /// Convergence test: maximum relative shift change below this value.
    pub shift_tol: f64,
    pub max_steps: usize,
    /// Linear-solver relative residual tolerance.
    pub solve_tol: f64,
    pub max_itn: usize,
    /// RBiCG cycle length.
    pub s: usize,
    /// Recycle-space dimension target.
    pub k: usize,
    pub trunc_tol: f64,
    /// Recompute the recycle space on every `recycle_every`-th step
    /// (and on the first). Zero disables updates entirely.
    pub recycle_every: usize,
    /// Recycle only for shifts whose previous solve took more than this many
    /// iterations; small-iteration shifts are not worth the update cost.
    pub recycle_iter_threshold: usize,
    /// ILUT drop tolerance for a per-shift split preconditioner; `None`
    /// solves the shifted systems unpreconditioned.
    pub drop_tol: Option<f64>,
}

impl Default for IrkaOptions {
    fn default() -> Self {
        Self {
            solver: SolverKind::Bicg,
            shift_tol: 1e-6,
            max_steps: 100,
            solve_tol: 1e-8,
            max_itn: 10_000,
            s: 40,
            k: 10,
            trunc_tol: 1e-6,
            recycle_every: 5,
            recycle_iter_threshold: 0,
            drop_tol: None,
        }
    }
}

/// Petrov-Galerkin reduced model E_r = W*EV, A_r = W*AV, b_r = W*b,
/// c_r = V*c, so the reduced transfer function is c_r*(sE_r − A_r)⁻¹ b_r.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub e_r: DenseMatrix,
    pub a_r: DenseMatrix,
    pub b_r: CVector,
    pub c_r: CVector,
    /// 2-norm condition number of W_r* V_r.
    pub wv_condition: f64,
}

#[derive(Debug, Clone)]
pub struct IrkaState {
    pub shifts: Vec<Complex>,
    pub bases: Vec<RecycleBasis>,
    pub v_r: DenseMatrix,
    pub w_r: DenseMatrix,
    pub step: usize,
    pub shift_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrkaStepReport {
    pub step: usize,
    pub shifts: Vec<Complex>,
    /// Iteration count of each dual solve, shift by shift.
    pub iterations: Vec<usize>,
    /// Whether the per-shift recycle space was rebuilt after the solve.
    pub recycled: Vec<bool>,
    /// Maximum relative shift change produced by this step's update.
    pub shift_change: f64,
}

#[derive(Debug, Clone)]
pub struct IrkaResult {
    pub reduced: ReducedModel,
    pub shifts: Vec<Complex>,
    pub steps: Vec<IrkaStepReport>,
    pub converged: bool,
    pub total_iterations: usize,
    pub state: IrkaState,
}

fn sort_shifts(shifts: &mut [Complex]) {
    // ascending by magnitude; near-ties (conjugate pairs) are ordered by
    // imaginary part so roundoff jitter in the real parts cannot flip the
    // pair between steps
    shifts.sort_by(|a, b| {
        let (na, nb) = (a.norm(), b.norm());
        if (na - nb).abs() > 1e-8 * na.max(nb).max(f64::MIN_POSITIVE) {
            na.partial_cmp(&nb).unwrap()
        } else {
            a.im.partial_cmp(&b.im)
                .unwrap()
                .then(a.re.partial_cmp(&b.re).unwrap())
        }
    });
}

/// One dual shifted solve (σE − A)v = b, (σE − A)*w = c with the configured
/// solver, optional split preconditioning, and optional recycle basis. The
/// basis lives in the split coordinates of the current preconditioner.
#[allow(clippy::too_many_arguments)]
fn shifted_dual_solve(
    model: &StateSpaceModel,
    sigma: Complex,
    basis: &mut RecycleBasis,
    guess: &(CVector, CVector),
    update_basis: bool,
    opts: &IrkaOptions,
) -> Result<(CVector, CVector, usize), IrkaError> {
    let shifted = ShiftedOperator::new(&model.e, &model.a, sigma);
    match opts.drop_tol {
        None => run_dual_solve(
            &shifted,
            model.b.clone(),
            model.c.clone(),
            guess.0.clone(),
            guess.1.clone(),
            basis,
            update_basis,
            opts,
        ),
        Some(dt) => {
            let assembled = shifted.assemble();
            let factors = ilut_factor(&assembled, dt, None)?;
            let split = SplitOperator::new(&assembled, &factors);
            let b = split.transform_rhs(&model.b);
            let c = split.transform_rhs_adjoint(&model.c);
            let x0 = split.to_split_coords(&guess.0);
            let x0d = split.to_split_coords_adjoint(&guess.1);
            let (y, y_dual, its) =
                run_dual_solve(&split, b, c, x0, x0d, basis, update_basis, opts)?;
            Ok((
                split.recover_solution(&y),
                split.recover_solution_adjoint(&y_dual),
                its,
            ))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_dual_solve(
    op: &dyn Operator,
    b: CVector,
    c: CVector,
    x0: CVector,
    x0_dual: CVector,
    basis: &mut RecycleBasis,
    update_basis: bool,
    opts: &IrkaOptions,
) -> Result<(CVector, CVector, usize), IrkaError> {
    let sys = DualSystem::new(op, b, c);
    // A Lanczos breakdown depends on the starting residual pair; retry once
    // from a zero guess with a reseeded shadow vector before giving up.
    let mut attempt = 0;
    loop {
        let solve_opts = SolveOptions {
            seed: 0x5EED + attempt as u64,
            ..SolveOptions::default()
        };
        let zeros = vec![czero(); op.dim()];
        let (g, g_dual) = if attempt == 0 {
            (&x0, &x0_dual)
        } else {
            (&zeros, &zeros)
        };
        let outcome = match opts.solver {
            SolverKind::Bicg => {
                solve_bicg_with(&sys, g, g_dual, opts.solve_tol, opts.max_itn, &solve_opts)
                    .map(|(y, y_dual, hist)| (y, y_dual, hist.iterations))
            }
            SolverKind::Rbicg => {
                let refreshed = refresh_for_new_system(basis, op, opts.trunc_tol)?;
                match solve_rbicg_with(
                    &sys,
                    &refreshed,
                    g,
                    g_dual,
                    opts.solve_tol,
                    opts.max_itn,
                    opts.s,
                    &solve_opts,
                ) {
                    Ok((y, y_dual, hist, cycles)) => {
                        *basis = if update_basis && hist.iterations > opts.recycle_iter_threshold {
                            update_recycle_space(
                                &refreshed,
                                &cycles,
                                &hist,
                                opts.k,
                                opts.trunc_tol,
                                op,
                            )?
                        } else {
                            refreshed
                        };
                        Ok((y, y_dual, hist.iterations))
                    }
                    Err(e) => Err(e),
                }
            }
        };
        match outcome {
            Ok(result) => return Ok(result),
            Err(e @ (SolveError::SeriousBreakdown(_) | SolveError::SecondKindBreakdown(_))) => {
                if attempt >= 1 {
                    return Err(e.into());
                }
                attempt += 1;
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// IRKA, Algorithm-3 style: repeat dual shifted solves at the current shifts,
/// project, and replace the shifts by the mirrored reduced poles until the
/// relative shift change falls below `shift_tol` (or the step cap is hit, in
/// which case the partial result is returned with `converged = false`).
pub fn irka_run(
    model: &StateSpaceModel,
    r: usize,
    initial_shifts: &[Complex],
    opts: &IrkaOptions,
) -> Result<IrkaResult, IrkaError> {
    assert_eq!(initial_shifts.len(), r);
    let n = model.n;
    for (i, s) in initial_shifts.iter().enumerate() {
        if s.norm() == 0.0 || initial_shifts[..i].iter().any(|t| (t - s).norm() == 0.0) {
            return Err(IrkaError::BadShifts);
        }
    }
    let mut shifts = initial_shifts.to_vec();
    sort_shifts(&mut shifts);
    let mut bases: Vec<RecycleBasis> = (0..r).map(|_| RecycleBasis::empty(n)).collect();
    let mut guesses: Vec<(CVector, CVector)> = (0..r)
        .map(|_| (vec![czero(); n], vec![czero(); n]))
        .collect();
    let mut steps: Vec<IrkaStepReport> = Vec::new();
    let mut total_iterations = 0;
    let mut converged = false;
    let mut v_r = DenseMatrix::zeros(n, r);
    let mut w_r = DenseMatrix::zeros(n, r);
    let mut step = 0;
    while step < opts.max_steps {
        step += 1;
        let update_basis = opts.solver == SolverKind::Rbicg
            && opts.recycle_every > 0
            && (step == 1 || step % opts.recycle_every == 0);
        let mut iters = Vec::with_capacity(r);
        let mut recycled = Vec::with_capacity(r);
        for i in 0..r {
            let (v, w, its) = shifted_dual_solve(
                model,
                shifts[i],
                &mut bases[i],
                &guesses[i],
                update_basis,
                opts,
            )?;
            total_iterations += its;
            iters.push(its);
            recycled.push(update_basis && bases[i].k > 0);
            guesses[i] = (v.clone(), w.clone());
            v_r.col_mut(i).copy_from_slice(&v);
            w_r.col_mut(i).copy_from_slice(&w);
        }
        // Project from orthonormalized copies: the spans (and hence the
        // interpolation properties and reduced poles) are unchanged, but the
        // conditioning of W_r*V_r is far better when shifts cluster.
        let (vq, _) = v_r.thin_qr(1e-14);
        let (wq, _) = w_r.thin_qr(1e-14);
        let reduced = build_reduced(model, &vq, &wq)?;
        let eig = generalized_eig_small(&reduced.a_r, &reduced.e_r)?;
        let mut next: Vec<Complex> = eig.values.iter().map(|l| -l).collect();
        sort_shifts(&mut next);
        let change = shifts
            .iter()
            .zip(&next)
            .map(|(old, new)| (new - old).norm() / old.norm().max(f64::MIN_POSITIVE))
            .fold(0.0_f64, f64::max);
        steps.push(IrkaStepReport {
            step,
            shifts: shifts.clone(),
            iterations: iters,
            recycled,
            shift_change: change,
        });
        shifts = next;
        if change < opts.shift_tol {
            converged = true;
            break;
        }
    }
    // final projection at the converged (or last) shift set
    let (vq, _) = v_r.thin_qr(1e-14);
    let (wq, _) = w_r.thin_qr(1e-14);
    let reduced = build_reduced(model, &vq, &wq)?;
    let state = IrkaState {
        shifts: shifts.clone(),
        bases,
        v_r,
        w_r,
        step,
        shift_change: steps
            .last()
            .map(|s| s.shift_change)
            .unwrap_or(f64::INFINITY),
    };
    Ok(IrkaResult {
        reduced,
        shifts,
        steps,
        converged,
        total_iterations,
        state,
    })
}

/// Projected model per the Petrov-Galerkin frame (V_r, W_r). Errors when
/// W_r* V_r is numerically singular.
pub fn build_reduced(
    model: &StateSpaceModel,
    v_r: &DenseMatrix,
    w_r: &DenseMatrix,
) -> Result<ReducedModel, IrkaError> {
    let n = model.n;
    let r = v_r.n_cols();
    assert_eq!(w_r.n_cols(), r);
    let apply_cols = |m: &crate::numerics::SparseMatrix| -> DenseMatrix {
        let cols: Vec<CVector> = (0..r)
            .map(|j| m.spmv(v_r.col(j), false).expect("dimension checked"))
            .collect();
        DenseMatrix::from_columns(n, &cols)
    };
    let e_r = w_r.adjoint_matmul(&apply_cols(&model.e));
    let a_r = w_r.adjoint_matmul(&apply_cols(&model.a));
    let b_r = w_r.adjoint_mul_vec(&model.b);
    let c_r = v_r.adjoint_mul_vec(&model.c);
    let wv = w_r.adjoint_matmul(v_r);
    let sv = svd_small(&wv)?.singular_values;
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if smin <= 1e-13 * smax.max(f64::MIN_POSITIVE) {
        return Err(IrkaError::RankDeficient(cond));
    }
    Ok(ReducedModel {
        e_r,
        a_r,
        b_r,
        c_r,
        wv_condition: cond,
    })
}

impl ReducedModel {
    pub fn order(&self) -> usize {
        self.b_r.len()
    }

    /// G_r(s) and G_r′(s) by dense solves.
    pub fn eval(&self, s: Complex) -> Result<(Complex, Complex), IrkaError> {
        let _r = self.order();
        let m = self.e_r.scaled(s).sub(&self.a_r);
        let x = m
            .lu_solve_vec(&self.b_r)
            .map_err(|_| IrkaError::SingularPoint(s))?;
        let ex = self.e_r.mul_vec(&x);
        let y = m
            .lu_solve_vec(&ex)
            .map_err(|_| IrkaError::SingularPoint(s))?;
        Ok((dot(&self.c_r, &x), -dot(&self.c_r, &y)))
    }
}

/// G(s) = c*(sE − A)⁻¹b and G′(s) = −c*(sE − A)⁻¹E(sE − A)⁻¹b for the full
/// model, via an exact sparse factorization of sE − A.
pub fn eval_transfer(model: &StateSpaceModel, s: Complex) -> Result<(Complex, Complex), IrkaError> {
    let shifted = ShiftedOperator::new(&model.e, &model.a, s).assemble();
    let factors =
        ilut_factor(&shifted, 0.0, Some(model.n)).map_err(|_| IrkaError::SingularPoint(s))?;
    let x = factors.solve(&model.b, false);
    let ex = model.e.spmv(&x, false).expect("dimension checked");
    let y = factors.solve(&ex, false);
    Ok((dot(&model.c, &x), -dot(&model.c, &y)))
}

/// Backward-error surrogate for approximate interpolation: per-column norms
/// of the primal and dual solve residuals R_b = [b − (σ_iE−A)v_i] and
/// R_c = [c − (σ_iE−A)*w_i], the inverse norm of W_r*V_r, the combined
/// bound ‖(W_r*V_r)⁻¹‖(‖R_b‖_F + ‖R_c‖_F), and the two Petrov-Galerkin
/// orthogonality measures ‖W_r*R_b‖ and ‖V_r*R_c‖.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackwardErrorReport {
    pub resid_b_norms: Vec<f64>,
    pub resid_c_norms: Vec<f64>,
    pub wv_inverse_norm: f64,
    pub bound: f64,
    pub orth_primal: f64,
    pub orth_dual: f64,
}

pub fn backward_error_report(
    model: &StateSpaceModel,
    shifts: &[Complex],
    v_r: &DenseMatrix,
    w_r: &DenseMatrix,
) -> Result<BackwardErrorReport, IrkaError> {
    let n = model.n;
    let r = shifts.len();
    let mut rb_cols = Vec::with_capacity(r);
    let mut rc_cols = Vec::with_capacity(r);
    for (i, &sigma) in shifts.iter().enumerate() {
        let op = ShiftedOperator::new(&model.e, &model.a, sigma);
        let av = op.apply(v_r.col(i), false)?;
        let aw = op.apply(w_r.col(i), true)?;
        rb_cols.push(crate::numerics::sub(&model.b, &av));
        rc_cols.push(crate::numerics::sub(&model.c, &aw));
    }
    let rb = DenseMatrix::from_columns(n, &rb_cols);
    let rc = DenseMatrix::from_columns(n, &rc_cols);
    let wv = w_r.adjoint_matmul(v_r);
    let sv = svd_small(&wv)?.singular_values;
    let smin = sv.last().copied().unwrap_or(0.0);
    let wv_inverse_norm = if smin > 0.0 {
        1.0 / smin
    } else {
        f64::INFINITY
    };
    let bound = wv_inverse_norm * (rb.frobenius_norm() + rc.frobenius_norm());
    Ok(BackwardErrorReport {
        resid_b_norms: rb_cols.iter().map(|c| norm(c)).collect(),
        resid_c_norms: rc_cols.iter().map(|c| norm(c)).collect(),
        wv_inverse_norm,
        bound,
        orth_primal: w_r.adjoint_matmul(&rb).frobenius_norm(),
        orth_dual: v_r.adjoint_matmul(&rc).frobenius_norm(),
    })
}
