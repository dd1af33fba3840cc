//! Parametric block solve and solution evaluation.

use super::{
    null_space_basis, BlockLayout, CompactSubproblem, ControllabilityData, TerminalParametrization,
};
use crate::error::{Result, SolveError};
use crate::linalg::{orthonormal_complement, RankedSvd};
use nalgebra::{DMatrix, DVector};

/// Tolerance of the runtime kernel-membership check applied to the
/// null-space correction weight.
const KERNEL_CHECK_TOL: f64 = 1e-8;

/// Affine parametric solution of one block.
///
/// Primal: `X(theta) = Kx theta + kx`. Dual: `lambda(theta) = Kl theta + kl`,
/// which is the unique dual when the constraint gradients are independent
/// and the minimum-norm dual otherwise; degenerate blocks additionally carry
/// the null-space map `Z` used to correct the dual during propagation. The
/// block's optimal cost is `1/2 theta' Hhat theta + fhat' theta + chat`.
#[derive(Debug, Clone)]
#[allow(non_snake_case)]
pub struct ParametricSolution {
    pub Kx: DMatrix<f64>,
    pub kx: DVector<f64>,
    pub Kl: DMatrix<f64>,
    pub kl: DVector<f64>,
    pub Hhat: DMatrix<f64>,
    pub fhat: DVector<f64>,
    pub chat: f64,
    /// Null-space map of the constraint gradients; present for interior blocks.
    pub Z: Option<DMatrix<f64>>,
    pub ctrl: ControllabilityData,
    pub term: Option<TerminalParametrization>,
    pub layout: BlockLayout,
    pub degenerate: bool,
}

impl ParametricSolution {
    pub fn n_theta(&self) -> usize {
        self.Kx.ncols()
    }

    /// Evaluate the primal trajectory at a parameter value.
    pub fn evaluate_primal(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != self.n_theta() {
            return Err(SolveError::DimensionMismatch(format!(
                "theta has length {}, block expects {}",
                theta.len(),
                self.n_theta()
            )));
        }
        Ok(&self.Kx * theta + &self.kx)
    }

    /// Evaluate the dual variables at a parameter value.
    ///
    /// `lam_hat` is the multiplier of the coupling constraint tying this
    /// block to its successor, computed one level up. Non-degenerate blocks
    /// have a unique dual and ignore it; degenerate blocks require it and
    /// shift the minimum-norm dual by the null-space element `Z w` with
    /// `w = -(lambda_tc + lam_hat)`, which restores the dual of the
    /// unsplit problem.
    pub fn evaluate_dual(
        &self,
        theta: &DVector<f64>,
        lam_hat: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>> {
        if theta.len() != self.n_theta() {
            return Err(SolveError::DimensionMismatch(format!(
                "theta has length {}, block expects {}",
                theta.len(),
                self.n_theta()
            )));
        }
        let gamma = &self.Kl * theta + &self.kl;
        if !self.degenerate {
            return Ok(gamma);
        }
        let lam_hat = lam_hat.ok_or(SolveError::MissingCouplingDual)?;
        if lam_hat.len() != self.layout.nx {
            return Err(SolveError::DimensionMismatch(format!(
                "coupling dual has length {}, expected {}",
                lam_hat.len(),
                self.layout.nx
            )));
        }
        let gamma_tc = self.layout.terminal_multiplier(&gamma);
        let w = -(gamma_tc + lam_hat);
        let kernel_defect = (self.ctrl.Scal.transpose() * &w).norm();
        if kernel_defect > KERNEL_CHECK_TOL * (1.0 + w.norm()) {
            return Err(SolveError::InconsistentMaster {
                residual: kernel_defect,
            });
        }
        let z = self.Z.as_ref().expect("degenerate blocks store Z");
        Ok(gamma + z * w)
    }

    /// Optimal block cost at a parameter value.
    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        0.5 * theta.dot(&(&self.Hhat * theta)) + self.fhat.dot(theta) + self.chat
    }
}

/// Columns solved against simultaneously: the constant part `(-fbar, be)`
/// followed by one homogeneous column `(0, Ge e_j)` per parameter.
fn primal_dual_from_columns(
    c: &CompactSubproblem,
    x_cols: DMatrix<f64>,
    l_cols: DMatrix<f64>,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
    let kx = x_cols.columns(1, c.n_theta).into_owned();
    let kx0 = x_cols.column(0).into_owned();
    let kl = l_cols.columns(1, c.n_theta).into_owned();
    let kl0 = l_cols.column(0).into_owned();
    (kx, kx0, kl, kl0)
}

/// Solve a block parametrically.
///
/// Non-degenerate blocks factor the KKT matrix once and back-solve against
/// all parameter columns. Degenerate blocks (rank-deficient constraint
/// gradients) switch to a rank-revealing route: a complete orthogonal
/// decomposition of `Ae` yields the particular solutions and the constraint
/// null space, the reduced Hessian on that null space closes the primal, and
/// the minimum-norm dual comes from the same decomposition. The primal is
/// unique in both cases because the reduced Hessian is positive definite;
/// its failure to factor is reported as an assumption violation.
pub fn solve_parametric(
    c: &CompactSubproblem,
    ctrl: &ControllabilityData,
) -> Result<ParametricSolution> {
    let n_var = c.layout.n_var;
    let n_con = c.layout.n_con;
    let n_rhs = 1 + c.n_theta;
    debug_assert_eq!(
        ctrl.block_len(),
        c.layout.ni,
        "controllability data mismatch"
    );

    let degenerate = c.degenerate();
    let (x_cols, l_cols) = if degenerate {
        solve_rank_deficient(c, n_rhs)?
    } else {
        solve_full_rank(c, n_var, n_con, n_rhs)?
    };
    let (kx_mat, kx_vec, kl_mat, kl_vec) = primal_dual_from_columns(c, x_cols, l_cols);

    let hbar_kx = &c.Hbar * &kx_mat;
    let hhat_raw = kx_mat.transpose() * &hbar_kx;
    let hhat = (&hhat_raw + hhat_raw.transpose()) * 0.5;
    let hbar_kx0 = &c.Hbar * &kx_vec;
    let fhat = kx_mat.transpose() * (&hbar_kx0 + &c.fbar);
    let chat = c.cbar + 0.5 * kx_vec.dot(&hbar_kx0) + c.fbar.dot(&kx_vec);

    let z = if c.is_last() {
        None
    } else {
        Some(null_space_basis(ctrl))
    };

    Ok(ParametricSolution {
        Kx: kx_mat,
        kx: kx_vec,
        Kl: kl_mat,
        kl: kl_vec,
        Hhat: hhat,
        fhat,
        chat,
        Z: z,
        ctrl: ctrl.clone(),
        term: c.term.clone(),
        layout: c.layout.clone(),
        degenerate,
    })
}

fn solve_full_rank(
    c: &CompactSubproblem,
    n_var: usize,
    n_con: usize,
    n_rhs: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let dim = n_var + n_con;
    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    kkt.view_mut((0, 0), (n_var, n_var)).copy_from(&c.Hbar);
    kkt.view_mut((0, n_var), (n_var, n_con))
        .copy_from(&c.Ae.transpose());
    kkt.view_mut((n_var, 0), (n_con, n_var)).copy_from(&c.Ae);

    let mut rhs = DMatrix::<f64>::zeros(dim, n_rhs);
    rhs.view_mut((0, 0), (n_var, 1)).copy_from(&(-&c.fbar));
    rhs.view_mut((n_var, 0), (n_con, 1)).copy_from(&c.be);
    rhs.view_mut((n_var, 1), (n_con, c.n_theta))
        .copy_from(&c.Ge);

    let lu = kkt.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| SolveError::SingularKkt("block KKT matrix is singular".into()))?;
    Ok((
        sol.view((0, 0), (n_var, n_rhs)).into_owned(),
        sol.view((n_var, 0), (n_con, n_rhs)).into_owned(),
    ))
}

fn solve_rank_deficient(
    c: &CompactSubproblem,
    n_rhs: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n_con = c.layout.n_con;
    let svd = RankedSvd::new(&c.Ae);

    // stacked right-hand sides of the constraint system
    let mut r = DMatrix::<f64>::zeros(n_con, n_rhs);
    r.column_mut(0).copy_from(&c.be);
    r.columns_mut(1, c.n_theta).copy_from(&c.Ge);

    // particular solutions and the constraint null space
    let x_part = svd.pinv_apply(&r);
    let null = orthonormal_complement(&svd.row_space());

    // reduced problem over the null space
    let h_null = &c.Hbar * &null;
    let reduced = null.transpose() * &h_null;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let chol = nalgebra::Cholesky::new(reduced).ok_or_else(|| {
        SolveError::ReducedHessianNotPd("null-space reduced Hessian of a block".into())
    })?;

    let mut grad = &c.Hbar * &x_part;
    {
        let mut col0 = grad.column_mut(0);
        col0 += &c.fbar;
    }
    let z = -chol.solve(&(null.transpose() * &grad));
    let x_cols = x_part + &null * z;

    // minimum-norm duals: Ae' lambda = -(Hbar X + fbar)
    let mut g = &c.Hbar * &x_cols;
    {
        let mut col0 = g.column_mut(0);
        col0 += &c.fbar;
    }
    let l_cols = svd.pinv_t_apply(&(-g));
    Ok((x_cols, l_cols))
}
