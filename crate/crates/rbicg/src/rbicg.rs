//! Recycling BiCG: the augmented two-term recurrence solver. Keeps the new
//! Lanczos vectors bi-orthogonal to the recycle images C, C̃ and collects the
//! per-cycle data the recycle builder consumes.

use crate::bicg::{
    random_vector, ConvergenceHistory, DualSystem, SolveError, SolveOptions, Termination,
    BREAKDOWN_TOL,
};
use crate::numerics::{axpy, czero, dot, norm, sub, CVector, Complex, DenseMatrix};
use crate::operator::Operator;

/// The fixed recycle space for one linear system: U with image C = A U, the
/// dual pair Ũ, C̃ = A* Ũ, and the positive diagonal D_c = C̃*C.
#[derive(Debug, Clone)]
pub struct RecycleBasis {
    pub u: DenseMatrix,
    pub u_dual: DenseMatrix,
    pub c: DenseMatrix,
    pub c_dual: DenseMatrix,
    pub d_c: Vec<f64>,
    pub k: usize,
}

impl RecycleBasis {
    pub fn empty(n: usize) -> Self {
        Self {
            u: DenseMatrix::zeros(n, 0),
            u_dual: DenseMatrix::zeros(n, 0),
            c: DenseMatrix::zeros(n, 0),
            c_dual: DenseMatrix::zeros(n, 0),
            d_c: Vec::new(),
            k: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.u.n_rows()
    }

    /// Ĉ* y = D_c^{-1} C̃* y.
    pub fn c_hat_adjoint(&self, y: &[Complex]) -> CVector {
        let mut z = self.c_dual.adjoint_mul_vec(y);
        for (zi, di) in z.iter_mut().zip(&self.d_c) {
            *zi /= *di;
        }
        z
    }

    /// Č* y = D_c^{-1} C* y.
    pub fn c_check_adjoint(&self, y: &[Complex]) -> CVector {
        let mut z = self.c.adjoint_mul_vec(y);
        for (zi, di) in z.iter_mut().zip(&self.d_c) {
            *zi /= *di;
        }
        z
    }

    /// ‖C − A U‖_F under the given operator (consistency check).
    pub fn consistency_residual(&self, op: &dyn Operator) -> f64 {
        let mut err = 0.0f64;
        for j in 0..self.k {
            let au = match op.apply(self.u.col(j), false) {
                Ok(v) => v,
                Err(_) => return f64::INFINITY,
            };
            let d = sub(self.c.col(j), &au);
            err += norm(&d).powi(2);
        }
        err.sqrt()
    }
}

/// Lanczos data from one cycle: the in-cycle vectors, the boundary vectors
/// shared with neighboring cycles, the banded Γ blocks, and B = Ĉ*AV.
#[derive(Debug, Clone)]
pub struct CycleState {
    /// Global (1-based) iteration index of the first iteration in the cycle.
    pub start: usize,
    pub len: usize,
    pub v: DenseMatrix,
    pub v_dual: DenseMatrix,
    pub lead: Option<(CVector, CVector)>,
    pub trail: Option<(CVector, CVector)>,
    pub b: DenseMatrix,
    pub b_dual: DenseMatrix,
    pub gamma: DenseMatrix,
    pub gamma_dual: DenseMatrix,
}

impl CycleState {
    /// Υ_j as a dense matrix: [lead V trail] (lead/trail only when present).
    pub fn upsilon(&self, dual: bool) -> DenseMatrix {
        let mut cols: Vec<CVector> = Vec::new();
        if let Some((v, vd)) = &self.lead {
            cols.push(if dual { vd.clone() } else { v.clone() });
        }
        let body = if dual { &self.v_dual } else { &self.v };
        for j in 0..self.len {
            cols.push(body.col(j).to_vec());
        }
        if let Some((v, vd)) = &self.trail {
            cols.push(if dual { vd.clone() } else { v.clone() });
        }
        DenseMatrix::from_columns(self.v.n_rows(), &cols)
    }

    /// Global iteration indices of the Υ_j columns (v_i has index i).
    pub fn upsilon_indices(&self) -> Vec<usize> {
        let mut idx = Vec::new();
        if self.lead.is_some() {
            idx.push(self.start - 1);
        }
        idx.extend(self.start..self.start + self.len);
        if self.trail.is_some() {
            idx.push(self.start + self.len);
        }
        idx
    }
}

/// Projects the initial guesses onto the complement of the recycle space:
/// x₀ = x₋₁ + UĈ*r₋₁, r₀ = (I − CĈ*)r₋₁, and the dual analogues.
pub fn project_initial(
    basis: &RecycleBasis,
    x_init: &[Complex],
    x_init_dual: &[Complex],
    r_init: &[Complex],
    r_init_dual: &[Complex],
) -> (CVector, CVector, CVector, CVector) {
    if basis.k == 0 {
        return (
            x_init.to_vec(),
            x_init_dual.to_vec(),
            r_init.to_vec(),
            r_init_dual.to_vec(),
        );
    }
    let s = basis.c_hat_adjoint(r_init);
    let mut x0 = x_init.to_vec();
    axpy_mat(&mut x0, &basis.u, &s, Complex::new(1.0, 0.0));
    let mut r0 = r_init.to_vec();
    axpy_mat(&mut r0, &basis.c, &s, Complex::new(-1.0, 0.0));

    let sd = basis.c_check_adjoint(r_init_dual);
    let mut x0d = x_init_dual.to_vec();
    axpy_mat(&mut x0d, &basis.u_dual, &sd, Complex::new(1.0, 0.0));
    let mut r0d = r_init_dual.to_vec();
    axpy_mat(&mut r0d, &basis.c_dual, &sd, Complex::new(-1.0, 0.0));
    (x0, x0d, r0, r0d)
}

fn axpy_mat(y: &mut [Complex], m: &DenseMatrix, s: &[Complex], sign: Complex) {
    let t = m.mul_vec(s);
    for (yi, ti) in y.iter_mut().zip(&t) {
        *yi += sign * ti;
    }
}

struct CycleCollector {
    s: usize,
    start: usize,
    lead: Option<(CVector, CVector)>,
    v: Vec<CVector>,
    v_dual: Vec<CVector>,
    b_cols: Vec<CVector>,
    b_dual_cols: Vec<CVector>,
}

pub fn solve_rbicg(
    sys: &DualSystem,
    basis: &RecycleBasis,
    x_init: &[Complex],
    x_init_dual: &[Complex],
    tol: f64,
    max_itn: usize,
    s: usize,
) -> Result<(CVector, CVector, ConvergenceHistory, Vec<CycleState>), SolveError> {
    solve_rbicg_with(
        sys,
        basis,
        x_init,
        x_init_dual,
        tol,
        max_itn,
        s,
        &SolveOptions::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn solve_rbicg_with(
    sys: &DualSystem,
    basis: &RecycleBasis,
    x_init: &[Complex],
    x_init_dual: &[Complex],
    tol: f64,
    max_itn: usize,
    s: usize,
    opts: &SolveOptions,
) -> Result<(CVector, CVector, ConvergenceHistory, Vec<CycleState>), SolveError> {
    assert!(s >= 2, "cycle length must be at least 2");
    assert!(tol > 0.0);
    let op = sys.op;
    let n = op.dim();
    assert_eq!(basis.dim(), n);

    if basis.k > 0 {
        let err = basis.consistency_residual(op);
        let scale = basis.c.frobenius_norm().max(1.0);
        if err > 1e-8 * scale {
            return Err(SolveError::BasisInconsistent(err));
        }
    }

    let r_init = sub(&sys.b, &op.apply(x_init, false)?);
    let mut r_init_dual = sub(&sys.b_dual, &op.apply(x_init_dual, true)?);
    let mut x_init_dual = x_init_dual.to_vec();

    let (mut x, mut x_dual, mut r, mut r_dual) =
        project_initial(basis, x_init, &x_init_dual, &r_init, &r_init_dual);

    // Orthogonal initial residual pair: re-randomize the dual guess once.
    if dot(&r_dual, &r).norm() < BREAKDOWN_TOL * norm(&r) * norm(&r_dual) || norm(&r_dual) == 0.0 {
        x_init_dual = random_vector(n, opts.seed);
        r_init_dual = sub(&sys.b_dual, &op.apply(&x_init_dual, true)?);
        let (_, xd, _, rd) = project_initial(basis, x_init, &x_init_dual, &r_init, &r_init_dual);
        x_dual = xd;
        r_dual = rd;
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

    let k = basis.k;
    let mut zeta_c = vec![czero(); k];
    let mut zeta_c_dual = vec![czero(); k];

    let mut cycles: Vec<CycleState> = Vec::new();
    let mut collector = CycleCollector {
        s,
        start: 1,
        lead: None,
        v: Vec::new(),
        v_dual: Vec::new(),
        b_cols: Vec::new(),
        b_dual_cols: Vec::new(),
    };

    let finish =
        |x: &mut CVector, x_dual: &mut CVector, zeta_c: &[Complex], zeta_c_dual: &[Complex]| {
            if k > 0 {
                axpy_mat(x, &basis.u, zeta_c, Complex::new(-1.0, 0.0));
                axpy_mat(x_dual, &basis.u_dual, zeta_c_dual, Complex::new(-1.0, 0.0));
            }
        };

    if norm(&r) <= tol * b_norm && (waive_dual || norm(&r_dual) <= tol * b_dual_norm) {
        hist.termination = Termination::Converged;
        finish(&mut x, &mut x_dual, &zeta_c, &zeta_c_dual);
        return Ok((x, x_dual, hist, cycles));
    }

    let mut p: CVector = Vec::new();
    let mut p_dual: CVector = Vec::new();
    let mut rho_prev = czero();
    let mut prev_zeta = vec![czero(); k];
    let mut prev_zeta_dual = vec![czero(); k];

    for i in 1..=max_itn {
        let rho = dot(&r_dual, &r);
        if rho.norm() < BREAKDOWN_TOL * norm(&r) * norm(&r_dual) {
            hist.termination = Termination::SeriousBreakdown;
            close_partial(&mut cycles, &mut collector, &hist, None);
            return Err(SolveError::SeriousBreakdown(i));
        }
        let gamma_i = norm(&r); // ‖r_{i-1}‖
        let d_i = rho.conj() / gamma_i;
        // Lanczos vectors of this iteration: v_i = r_{i-1}/‖r_{i-1}‖,
        // ṽ_i = r̃_{i-1}/d_i with d_i = (v_i, r̃_{i-1}).
        let v_i: CVector = r.iter().map(|z| z / gamma_i).collect();
        let vd_i: CVector = r_dual.iter().map(|z| z / d_i).collect();

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
        let z = op.apply(&p, false)?;
        let z_dual = op.apply(&p_dual, true)?;
        let (zeta, zeta_dual, mut q, mut q_dual);
        if k > 0 {
            zeta = basis.c_hat_adjoint(&z);
            zeta_dual = basis.c_check_adjoint(&z_dual);
            q = z;
            axpy_mat(&mut q, &basis.c, &zeta, Complex::new(-1.0, 0.0));
            q_dual = z_dual;
            axpy_mat(
                &mut q_dual,
                &basis.c_dual,
                &zeta_dual,
                Complex::new(-1.0, 0.0),
            );
        } else {
            zeta = Vec::new();
            zeta_dual = Vec::new();
            q = z;
            q_dual = z_dual;
        }

        let delta = dot(&p_dual, &q);
        if delta.norm() < BREAKDOWN_TOL * norm(&p_dual) * norm(&q) {
            hist.termination = Termination::SecondKindBreakdown;
            close_partial(&mut cycles, &mut collector, &hist, None);
            return Err(SolveError::SecondKindBreakdown(i));
        }
        let alpha = rho / delta;

        if k > 0 {
            for l in 0..k {
                zeta_c[l] += alpha * zeta[l];
                zeta_c_dual[l] += alpha.conj() * zeta_dual[l];
            }
        }
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

        // cycle bookkeeping: B column from A r_{m-1} = z_m − β_{m-1} z_{m-1}
        collector.v.push(v_i);
        collector.v_dual.push(vd_i);
        if k > 0 {
            let bcol: CVector = (0..k)
                .map(|l| (zeta[l] - beta * prev_zeta[l]) / gamma_i)
                .collect();
            let bdcol: CVector = (0..k)
                .map(|l| (zeta_dual[l] - beta.conj() * prev_zeta_dual[l]) / d_i)
                .collect();
            collector.b_cols.push(bcol);
            collector.b_dual_cols.push(bdcol);
        }
        prev_zeta = zeta;
        prev_zeta_dual = zeta_dual;
        rho_prev = rho;

        let done = norm(&r) <= tol * b_norm && (waive_dual || norm(&r_dual) <= tol * b_dual_norm);

        if collector.v.len() == collector.s || done || i == max_itn {
            // closing data: v_{i+1} = r_i/‖r_i‖ and its dual, from ρ_i
            let rn = norm(&r);
            let rho_next = dot(&r_dual, &r);
            let trail = if rn > 0.0 && rho_next.norm() >= BREAKDOWN_TOL * rn * norm(&r_dual) {
                let d_next = rho_next.conj() / rn;
                let tv: CVector = r.iter().map(|z| z / rn).collect();
                let tvd: CVector = r_dual.iter().map(|z| z / d_next).collect();
                Some((tv, tvd, d_next))
            } else {
                None
            };
            close_partial(&mut cycles, &mut collector, &hist, trail);
            // Roundoff lets the residual pair drift back into range(C) /
            // range(C̃), where the projected iteration cannot reduce it.
            // Re-project at cycle boundaries, folding the removed component
            // into the ζ_c accumulators so r = b − A(x − Uζ_c) stays exact.
            if k > 0 && !done {
                let mu = basis.c_hat_adjoint(&r);
                axpy_mat(&mut r, &basis.c, &mu, Complex::new(-1.0, 0.0));
                let mu_dual = basis.c_check_adjoint(&r_dual);
                axpy_mat(
                    &mut r_dual,
                    &basis.c_dual,
                    &mu_dual,
                    Complex::new(-1.0, 0.0),
                );
                for l in 0..k {
                    zeta_c[l] -= mu[l];
                    zeta_c_dual[l] -= mu_dual[l];
                }
            }
        }

        if done {
            hist.termination = Termination::Converged;
            finish(&mut x, &mut x_dual, &zeta_c, &zeta_c_dual);
            return Ok((x, x_dual, hist, cycles));
        }
    }

    hist.termination = Termination::MaxItn;
    finish(&mut x, &mut x_dual, &zeta_c, &zeta_c_dual);
    Ok((x, x_dual, hist, cycles))
}

fn close_partial(
    cycles: &mut Vec<CycleState>,
    col: &mut CycleCollector,
    hist: &ConvergenceHistory,
    trail: Option<(CVector, CVector, Complex)>,
) {
    let len = col.v.len();
    if len == 0 {
        return;
    }
    let n = col.v[0].len();
    let v = DenseMatrix::from_columns(n, &col.v);
    let v_dual = DenseMatrix::from_columns(n, &col.v_dual);
    let kc = col.b_cols.first().map_or(0, Vec::len);
    let b = DenseMatrix::from_columns(kc, &col.b_cols);
    let b_dual = DenseMatrix::from_columns(kc, &col.b_dual_cols);
    let lead = col.lead.take();
    let start = col.start;
    let d_next = trail.as_ref().map(|(_, _, d)| *d);
    let trail_vecs = trail.map(|(tv, tvd, _)| (tv, tvd));
    let gamma = crate::recycle::build_gamma(
        hist,
        start,
        len,
        lead.is_some(),
        trail_vecs.is_some(),
        false,
        None,
    )
    .expect("Γ reconstruction from recorded scalars");
    let gamma_dual = crate::recycle::build_gamma(
        hist,
        start,
        len,
        lead.is_some(),
        trail_vecs.is_some(),
        true,
        d_next,
    )
    .expect("Γ̃ reconstruction from recorded scalars");
    let state = CycleState {
        start,
        len,
        v,
        v_dual,
        lead,
        trail: trail_vecs,
        b,
        b_dual,
        gamma,
        gamma_dual,
    };
    // seed the next cycle: its leading boundary vector is v_{js}
    col.start = start + len;
    col.lead = Some((
        state.v.col(len - 1).to_vec(),
        state.v_dual.col(len - 1).to_vec(),
    ));
    col.v.clear();
    col.v_dual.clear();
    col.b_cols.clear();
    col.b_dual_cols.clear();
    cycles.push(state);
}
