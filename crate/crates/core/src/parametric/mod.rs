//! Parametric solution of horizon blocks.
//!
//! A block of consecutive stages, together with an initial constraint
//! `x_0 = xbar` and (for interior blocks) a terminal constraint
//! `x_Ni = Ac xbar + Tc dbar + ac`, forms an equality-constrained QP
//!
//! ```text
//! minimize   1/2 X' Hbar X + fbar' X + cbar
//! subject to Ae X = be + Ge theta,      theta = [xbar; dbar]
//! ```
//!
//! over the stacked variable `X = (x_0, u_0, ..., u_{Ni-1}, x_Ni)`. Because
//! only equality constraints appear, the optimal primal and dual solutions
//! are affine in `theta`, and the optimal cost is a quadratic in `theta`
//! that becomes a stage cost of the reduced problem one level up.
//!
//! The terminal parametrization is chosen from the block's controllability
//! data so that every admissible `theta` yields a feasible block: when the
//! block controllability matrix has full rank any terminal state is
//! reachable and `(Ac, Tc, ac) = (0, I, 0)`; otherwise the terminal state is
//! restricted to the reachable affine subspace, the constraint gradients
//! become linearly dependent, and the dual solution is defined only up to
//! the null space of `Ae'`, which is spanned by `Z w` for `w` in
//! `ker(Scal')`.

mod solve;

pub use solve::{solve_parametric, ParametricSolution};

use crate::error::{Result, SolveError};
use crate::linalg::{orthonormal_complement, RankedSvd};
use crate::problem::{MpcProblem, Stage};
use nalgebra::{DMatrix, DVector};
use std::ops::Range;

/// Index bookkeeping for a block's stacked variable and dual vectors.
///
/// Primal layout: `x_0, u_0, x_1, u_1, ..., u_{Ni-1}, x_Ni`.
/// Dual layout: `lambda_0, ..., lambda_Ni` (one block per constraint row)
/// followed by `lambda_tc` for interior blocks.
#[derive(Debug, Clone)]
pub struct BlockLayout {
    pub nx: usize,
    pub ni: usize,
    pub nu: Vec<usize>,
    pub x_off: Vec<usize>,
    pub u_off: Vec<usize>,
    pub n_var: usize,
    pub n_con: usize,
    pub is_last: bool,
}

impl BlockLayout {
    fn new(nx: usize, nu: Vec<usize>, is_last: bool) -> Self {
        let ni = nu.len();
        let mut x_off = Vec::with_capacity(ni + 1);
        let mut u_off = Vec::with_capacity(ni);
        let mut at = 0;
        for &n in &nu {
            x_off.push(at);
            at += nx;
            u_off.push(at);
            at += n;
        }
        x_off.push(at);
        let n_var = at + nx;
        let n_con = if is_last {
            (ni + 1) * nx
        } else {
            (ni + 2) * nx
        };
        BlockLayout {
            nx,
            ni,
            nu,
            x_off,
            u_off,
            n_var,
            n_con,
            is_last,
        }
    }

    pub fn state(&self, stacked: &DVector<f64>, t: usize) -> DVector<f64> {
        stacked.rows(self.x_off[t], self.nx).into_owned()
    }

    pub fn input(&self, stacked: &DVector<f64>, t: usize) -> DVector<f64> {
        stacked.rows(self.u_off[t], self.nu[t]).into_owned()
    }

    pub fn multiplier(&self, duals: &DVector<f64>, t: usize) -> DVector<f64> {
        duals.rows(t * self.nx, self.nx).into_owned()
    }

    /// Multiplier of the terminal constraint; interior blocks only.
    pub fn terminal_multiplier(&self, duals: &DVector<f64>) -> DVector<f64> {
        assert!(!self.is_last, "last blocks have no terminal constraint");
        duals.rows((self.ni + 1) * self.nx, self.nx).into_owned()
    }
}

/// Aggregate dynamics of a block: the terminal state satisfies
/// `x_Ni = Acal xbar + Scal ustack + Dcal astack`.
#[derive(Debug, Clone)]
#[allow(non_snake_case)]
pub struct ControllabilityData {
    /// Product `A_{Ni-1} ... A_0`.
    pub Acal: DMatrix<f64>,
    /// Block controllability matrix, nx × (sum of input dims).
    pub Scal: DMatrix<f64>,
    /// Disturbance propagation, nx × (Ni nx).
    pub Dcal: DMatrix<f64>,
    /// `Dcal` applied to the stacked affine offsets.
    pub Da: DVector<f64>,
    /// Numerical rank of `Scal`.
    pub rank: usize,
    /// Orthonormal basis of `range(Scal)`, nx × rank.
    pub T: DMatrix<f64>,
    /// Orthonormal basis of `ker(Scal')`, nx × (nx − rank).
    pub W: DMatrix<f64>,
    /// Singular values of `Scal`, descending.
    pub sigma: Vec<f64>,
}

impl ControllabilityData {
    pub fn nx(&self) -> usize {
        self.Acal.nrows()
    }

    pub fn block_len(&self) -> usize {
        self.Dcal.ncols() / self.nx()
    }
}

/// Compute the block controllability data.
///
/// With `suffix(t) = A_{Ni-1} ... A_t` (identity for `t = Ni`), the columns
/// of `Scal` are `suffix(t+1) B_t` and the blocks of `Dcal` are
/// `suffix(t+1)`, so that chaining the dynamics gives
/// `x_Ni = suffix(0) x_0 + sum_t suffix(t+1) (B_t u_t + a_t)`.
pub fn controllability_data(stages: &[Stage]) -> ControllabilityData {
    assert!(!stages.is_empty(), "controllability of an empty block");
    let ni = stages.len();
    let nx = stages[0].nx();

    // suffix products, suffix[t] = A_{ni-1} ... A_t
    let mut suffix = vec![DMatrix::<f64>::identity(nx, nx); ni + 1];
    for t in (0..ni).rev() {
        suffix[t] = &suffix[t + 1] * &stages[t].A;
    }

    let total_nu: usize = stages.iter().map(Stage::nu).sum();
    let mut scal = DMatrix::zeros(nx, total_nu);
    let mut dcal = DMatrix::zeros(nx, ni * nx);
    let mut da = DVector::zeros(nx);
    let mut col = 0;
    for (t, s) in stages.iter().enumerate() {
        let nu = s.nu();
        scal.view_mut((0, col), (nx, nu))
            .copy_from(&(&suffix[t + 1] * &s.B));
        col += nu;
        dcal.view_mut((0, t * nx), (nx, nx))
            .copy_from(&suffix[t + 1]);
        da += &suffix[t + 1] * &s.a;
    }

    let svd = RankedSvd::new(&scal);
    let t_basis = svd.range();
    let w_basis = orthonormal_complement(&t_basis);

    ControllabilityData {
        Acal: suffix[0].clone(),
        Scal: scal,
        Dcal: dcal,
        Da: da,
        rank: svd.rank,
        T: t_basis,
        W: w_basis,
        sigma: svd.sigma,
    }
}

/// Restriction of a block's terminal constraint,
/// `x_Ni = Ac xbar + Tc dbar + ac`.
#[derive(Debug, Clone)]
#[allow(non_snake_case)]
pub struct TerminalParametrization {
    pub Ac: DMatrix<f64>,
    pub Tc: DMatrix<f64>,
    pub ac: DVector<f64>,
    /// True when the block controllability matrix is rank-deficient, i.e.
    /// the terminal constraint gradients are linearly dependent.
    pub degenerate: bool,
}

impl TerminalParametrization {
    /// Dimension of the free terminal parameter `dbar`.
    pub fn nd(&self) -> usize {
        self.Tc.ncols()
    }

    /// The unrestricted parametrization `(0, I, 0)`, valid whenever any
    /// terminal state is reachable.
    pub fn full(nx: usize) -> Self {
        TerminalParametrization {
            Ac: DMatrix::zeros(nx, nx),
            Tc: DMatrix::identity(nx, nx),
            ac: DVector::zeros(nx),
            degenerate: false,
        }
    }
}

/// Controllability spectra flatter than this use the plain `(0, I, 0)`
/// parametrization; anything worse keeps the effort-scaled basis so the
/// reduced problem's data stays near the original scale.
const FULL_RANK_COND_LIMIT: f64 = 1e3;

/// Choose the terminal parametrization that keeps the block feasible for
/// every parameter value: unrestricted when the controllability matrix has
/// full rank and decent conditioning, otherwise confined/scaled to the
/// reachable directions.
///
/// The restricted basis scales the range directions by their singular
/// values (`Tc = T diag(sigma)`), so a unit parameter step costs roughly a
/// unit of control effort. An orthonormal (or identity) basis is equally
/// valid algebraically, but it prices barely reachable directions at
/// `1/sigma^2`, which inflates the reduced problem's data and destroys
/// accuracy over deep trees; that is why badly conditioned full-rank blocks
/// also take the scaled branch. Rank deficiency alone decides degeneracy:
/// a full-rank block keeps unique multipliers no matter the basis.
pub fn terminal_parametrization(
    ctrl: &ControllabilityData,
    a_stack: &DVector<f64>,
) -> TerminalParametrization {
    let nx = ctrl.nx();
    let full_rank = ctrl.rank == nx;
    if full_rank && ctrl.sigma[nx - 1] * FULL_RANK_COND_LIMIT >= ctrl.sigma[0] {
        return TerminalParametrization::full(nx);
    }
    let mut tc = ctrl.T.clone();
    for j in 0..ctrl.rank {
        tc.column_mut(j).scale_mut(ctrl.sigma[j]);
    }
    TerminalParametrization {
        Ac: ctrl.Acal.clone(),
        Tc: tc,
        ac: &ctrl.Dcal * a_stack,
        degenerate: !full_rank,
    }
}

/// Basis of `ker(Ae')` as a map from `ker(Scal')`:
/// every `z` with `Ae' z = 0` has the form `z = Z w` with `Scal' w = 0`,
/// where the blocks of `Z` follow the dual layout.
pub fn null_space_basis(ctrl: &ControllabilityData) -> DMatrix<f64> {
    let nx = ctrl.nx();
    let ni = ctrl.block_len();
    let mut z = DMatrix::zeros((ni + 2) * nx, nx);
    z.view_mut((0, 0), (nx, nx))
        .copy_from(&(-ctrl.Acal.transpose()));
    z.view_mut((nx, 0), (ni * nx, nx))
        .copy_from(&(-ctrl.Dcal.transpose()));
    z.view_mut(((ni + 1) * nx, 0), (nx, nx))
        .copy_from(&DMatrix::identity(nx, nx));
    z
}

/// The stacked equality-constrained form of one block.
#[derive(Debug, Clone)]
#[allow(non_snake_case)]
pub struct CompactSubproblem {
    pub layout: BlockLayout,
    pub Hbar: DMatrix<f64>,
    pub fbar: DVector<f64>,
    pub cbar: f64,
    pub Ae: DMatrix<f64>,
    pub be: DVector<f64>,
    pub Ge: DMatrix<f64>,
    pub n_theta: usize,
    pub term: Option<TerminalParametrization>,
}

impl CompactSubproblem {
    pub fn is_last(&self) -> bool {
        self.layout.is_last
    }

    pub fn degenerate(&self) -> bool {
        self.term.as_ref().is_some_and(|t| t.degenerate)
    }
}

/// Stack the stages `range` of `problem` into compact form.
///
/// Interior blocks (`term` supplied) carry a zero trailing cost block and
/// the terminal-constraint rows; the last block (`term` absent) must end at
/// the horizon, absorbs the terminal cost, and has neither the terminal
/// constraint rows nor the `dbar` parameter columns.
pub fn build_compact(
    problem: &MpcProblem,
    range: Range<usize>,
    term: Option<&TerminalParametrization>,
) -> Result<CompactSubproblem> {
    if range.is_empty() || range.end > problem.horizon() {
        return Err(SolveError::InvalidParameter(format!(
            "block range {range:?} invalid for horizon {}",
            problem.horizon()
        )));
    }
    let is_last = term.is_none();
    if is_last && range.end != problem.horizon() {
        return Err(SolveError::InvalidParameter(
            "a block without a terminal constraint must end at the horizon".into(),
        ));
    }
    let nx = problem.nx();
    if let Some(t) = term {
        if t.Ac.shape() != (nx, nx) || t.Tc.nrows() != nx || t.ac.len() != nx {
            return Err(SolveError::DimensionMismatch(
                "terminal parametrization does not match the state dimension".into(),
            ));
        }
    }

    let stages = &problem.stages[range.clone()];
    let layout = BlockLayout::new(nx, stages.iter().map(Stage::nu).collect(), is_last);
    let nd = term.map_or(0, |t| t.nd());
    let n_theta = if is_last { nx } else { nx + nd };

    let mut hbar = DMatrix::zeros(layout.n_var, layout.n_var);
    let mut fbar = DVector::zeros(layout.n_var);
    let mut cbar = 0.0;
    for (t, s) in stages.iter().enumerate() {
        let nu = s.nu();
        hbar.view_mut((layout.x_off[t], layout.x_off[t]), (nx, nx))
            .copy_from(&s.Hx);
        hbar.view_mut((layout.x_off[t], layout.u_off[t]), (nx, nu))
            .copy_from(&s.Hxu);
        hbar.view_mut((layout.u_off[t], layout.x_off[t]), (nu, nx))
            .copy_from(&s.Hxu.transpose());
        hbar.view_mut((layout.u_off[t], layout.u_off[t]), (nu, nu))
            .copy_from(&s.Hu);
        fbar.rows_mut(layout.x_off[t], nx).copy_from(&s.fx);
        fbar.rows_mut(layout.u_off[t], nu).copy_from(&s.fu);
        cbar += s.c;
    }
    let ni = layout.ni;
    if is_last {
        hbar.view_mut((layout.x_off[ni], layout.x_off[ni]), (nx, nx))
            .copy_from(&problem.HN);
        fbar.rows_mut(layout.x_off[ni], nx).copy_from(&problem.fN);
        cbar += problem.cN;
    }

    let mut ae = DMatrix::zeros(layout.n_con, layout.n_var);
    let mut be = DVector::zeros(layout.n_con);
    let mut ge = DMatrix::zeros(layout.n_con, n_theta);
    for i in 0..nx {
        ae[(i, layout.x_off[0] + i)] = -1.0;
        ge[(i, i)] = -1.0;
    }
    for (t, s) in stages.iter().enumerate() {
        let row = (t + 1) * nx;
        let nu = s.nu();
        ae.view_mut((row, layout.x_off[t]), (nx, nx))
            .copy_from(&s.A);
        ae.view_mut((row, layout.u_off[t]), (nx, nu))
            .copy_from(&s.B);
        for i in 0..nx {
            ae[(row + i, layout.x_off[t + 1] + i)] = -1.0;
        }
        be.rows_mut(row, nx).copy_from(&(-&s.a));
    }
    if let Some(t) = term {
        let row = (ni + 1) * nx;
        for i in 0..nx {
            ae[(row + i, layout.x_off[ni] + i)] = -1.0;
        }
        be.rows_mut(row, nx).copy_from(&(-&t.ac));
        ge.view_mut((row, 0), (nx, nx)).copy_from(&(-&t.Ac));
        ge.view_mut((row, nx), (nx, nd)).copy_from(&(-&t.Tc));
    }

    Ok(CompactSubproblem {
        layout,
        Hbar: hbar,
        fbar,
        cbar,
        Ae: ae,
        be,
        Ge: ge,
        n_theta,
        term: term.cloned(),
    })
}
