//! MPC problem data model and validation.
//!
//! An [`MpcProblem`] is the equality-constrained problem
//!
//! ```text
//! minimize   sum_{t=0}^{N-1} ( 1/2 [x_t; u_t]' H_t [x_t; u_t] + f_t' [x_t; u_t] + c_t )
//!            + 1/2 x_N' HN x_N + fN' x_N + cN
//! subject to x_0 = x_bar
//!            x_{t+1} = A_t x_t + B_t u_t + a_t,   t = 0..N-1
//! ```
//!
//! with stage Hessians partitioned as `H_t = [Hx Hxu; Hxu' Hu]`. The state
//! dimension is constant across stages; the input dimension may vary per
//! stage (active-set elimination and horizon reduction both produce stages
//! with differing input counts, including zero).
//!
//! Solvability assumptions: each blocked `H_t` is positive semidefinite,
//! each `Hu` block is positive definite, and `HN` is positive semidefinite.
//! [`validate_problem`] reports violations of these together with any
//! dimension inconsistencies. The dynamics constraint matrix has full row
//! rank by construction, so no constraint-qualification test is needed.

mod eliminate;
mod generate;

pub use eliminate::{eliminate_active_set, recover_eliminated_duals};
pub use generate::generate_random_stable;

use crate::linalg;
use nalgebra::{DMatrix, DVector};
use std::fmt;

/// Data of one stage: dynamics `x+ = A x + B u + a` and cost
/// `1/2 [x;u]' [Hx Hxu; Hxu' Hu] [x;u] + [fx;fu]' [x;u] + c`.
#[derive(Debug, Clone, PartialEq)]
#[allow(non_snake_case)]
pub struct Stage {
    pub A: DMatrix<f64>,
    pub B: DMatrix<f64>,
    pub a: DVector<f64>,
    pub Hx: DMatrix<f64>,
    pub Hxu: DMatrix<f64>,
    pub Hu: DMatrix<f64>,
    pub fx: DVector<f64>,
    pub fu: DVector<f64>,
    pub c: f64,
}

impl Stage {
    pub fn nx(&self) -> usize {
        self.A.nrows()
    }

    pub fn nu(&self) -> usize {
        self.B.ncols()
    }

    /// The blocked stage Hessian `[Hx Hxu; Hxu' Hu]`.
    pub fn hessian(&self) -> DMatrix<f64> {
        let nx = self.Hx.nrows();
        let nu = self.Hu.nrows();
        let mut h = DMatrix::zeros(nx + nu, nx + nu);
        h.view_mut((0, 0), (nx, nx)).copy_from(&self.Hx);
        h.view_mut((0, nx), (nx, nu)).copy_from(&self.Hxu);
        h.view_mut((nx, 0), (nu, nx))
            .copy_from(&self.Hxu.transpose());
        h.view_mut((nx, nx), (nu, nu)).copy_from(&self.Hu);
        h
    }

    /// Stage cost at `(x, u)`.
    pub fn cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let qx = self.Hx.clone() * x;
        let qu = self.Hu.clone() * u;
        let cross = self.Hxu.clone() * u;
        0.5 * (x.dot(&qx) + u.dot(&qu)) + x.dot(&cross) + self.fx.dot(x) + self.fu.dot(u) + self.c
    }

    /// A stage with zero cost and the given dynamics; used when assembling
    /// reduced problems from pure dynamics data.
    #[allow(non_snake_case)]
    pub fn from_dynamics(A: DMatrix<f64>, B: DMatrix<f64>, a: DVector<f64>) -> Self {
        let nx = A.nrows();
        let nu = B.ncols();
        Stage {
            A,
            B,
            a,
            Hx: DMatrix::zeros(nx, nx),
            Hxu: DMatrix::zeros(nx, nu),
            Hu: DMatrix::zeros(nu, nu),
            fx: DVector::zeros(nx),
            fu: DVector::zeros(nu),
            c: 0.0,
        }
    }
}

/// The equality-constrained MPC problem over horizon `N = stages.len()`.
#[derive(Debug, Clone, PartialEq)]
#[allow(non_snake_case)]
pub struct MpcProblem {
    pub stages: Vec<Stage>,
    pub HN: DMatrix<f64>,
    pub fN: DVector<f64>,
    pub cN: f64,
    pub x_bar: DVector<f64>,
}

impl MpcProblem {
    /// Horizon length.
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    /// State dimension.
    pub fn nx(&self) -> usize {
        self.x_bar.len()
    }

    /// Input dimension of stage `t`.
    pub fn nu(&self, t: usize) -> usize {
        self.stages[t].nu()
    }

    /// Total number of primal variables `(N+1) nx + sum_t nu_t`.
    pub fn num_primal(&self) -> usize {
        (self.horizon() + 1) * self.nx() + self.stages.iter().map(Stage::nu).sum::<usize>()
    }

    /// Objective value at a trajectory.
    pub fn objective(&self, xs: &[DVector<f64>], us: &[DVector<f64>]) -> f64 {
        let mut total = 0.0;
        for (t, stage) in self.stages.iter().enumerate() {
            total += stage.cost(&xs[t], &us[t]);
        }
        let xn = &xs[self.horizon()];
        total += 0.5 * xn.dot(&(self.HN.clone() * xn)) + self.fN.dot(xn) + self.cN;
        total
    }
}

/// Side of a box constraint on an input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    Lower,
    Upper,
}

impl fmt::Display for BoundSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundSide::Lower => write!(f, "lower"),
            BoundSide::Upper => write!(f, "upper"),
        }
    }
}

/// An MPC problem with elementwise bounds on the control signal.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxMpcProblem {
    pub base: MpcProblem,
    /// Per-stage lower bounds, one vector of length `nu(t)` per stage.
    pub u_min: Vec<DVector<f64>>,
    /// Per-stage upper bounds.
    pub u_max: Vec<DVector<f64>>,
}

/// The set of input bounds held at equality, per stage.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActiveSet {
    /// `entries[t]` lists `(input index, side)` pairs active at stage `t`.
    pub entries: Vec<Vec<(usize, BoundSide)>>,
}

impl ActiveSet {
    /// An empty active set for a horizon of `n` stages.
    pub fn empty(n: usize) -> Self {
        ActiveSet {
            entries: vec![Vec::new(); n],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.iter().all(Vec::is_empty)
    }
}

/// Per-stage bookkeeping produced by [`eliminate_active_set`]: the values of
/// the eliminated inputs and the cost/dynamics blocks coupling them to the
/// kept variables, as needed to recover their dual variables afterwards.
#[derive(Debug, Clone, PartialEq)]
#[allow(non_snake_case)]
pub struct EliminationStage {
    /// Values the eliminated inputs are fixed at.
    pub v: DVector<f64>,
    /// Cross Hessian between states and eliminated inputs (nx × ne).
    pub Hxv: DMatrix<f64>,
    /// Cross Hessian between kept and eliminated inputs (nf × ne).
    pub Huv: DMatrix<f64>,
    /// Hessian block of the eliminated inputs (ne × ne).
    pub Hv: DMatrix<f64>,
    /// Input-map columns of the eliminated inputs (nx × ne).
    pub Bv: DMatrix<f64>,
    /// Linear cost of the eliminated inputs.
    pub fv: DVector<f64>,
    /// Original indices of the kept inputs, ascending.
    pub kept: Vec<usize>,
    /// Original indices of the eliminated inputs, ascending.
    pub eliminated: Vec<usize>,
}

/// Elimination bookkeeping for a whole problem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EliminationRecord {
    pub stages: Vec<EliminationStage>,
}

impl EliminationRecord {
    pub fn is_empty(&self) -> bool {
        self.stages.iter().all(|s| s.eliminated.is_empty())
    }
}

/// A single defect reported by [`validate_problem`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DimensionMismatch { what: String },
    NotSymmetric { what: String, defect: f64 },
    StageHessianNotPsd { stage: usize, min_eig: f64 },
    HuNotPd { stage: usize, min_eig: f64 },
    TerminalNotPsd { min_eig: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch { what } => write!(f, "dimension mismatch: {what}"),
            Violation::NotSymmetric { what, defect } => {
                write!(f, "{what} not symmetric (defect {defect:.3e})")
            }
            Violation::StageHessianNotPsd { stage, min_eig } => {
                write!(
                    f,
                    "stage {stage} Hessian not PSD (min eigenvalue {min_eig:.3e})"
                )
            }
            Violation::HuNotPd { stage, min_eig } => {
                write!(f, "stage {stage} Hu not PD (min eigenvalue {min_eig:.3e})")
            }
            Violation::TerminalNotPsd { min_eig } => {
                write!(f, "HN not PSD (min eigenvalue {min_eig:.3e})")
            }
        }
    }
}

/// Check dimensions, symmetry, and definiteness assumptions.
///
/// Definiteness thresholds scale with the spectral norm of the matrix under
/// test: a blocked stage Hessian passes when its smallest eigenvalue is at
/// least `-tol * norm`, and `Hu` passes when it exceeds `+tol * norm`.
/// Returns an empty list when the problem is valid.
pub fn validate_problem(p: &MpcProblem, tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let nx = p.nx();

    fn dim(out: &mut Vec<Violation>, cond: bool, what: String) -> bool {
        if !cond {
            out.push(Violation::DimensionMismatch { what });
        }
        cond
    }

    if !dim(
        &mut out,
        p.horizon() >= 1,
        "horizon must be at least 1".into(),
    ) {
        return out;
    }
    dim(
        &mut out,
        p.HN.shape() == (nx, nx),
        format!("HN must be {nx}x{nx}"),
    );
    dim(
        &mut out,
        p.fN.len() == nx,
        format!("fN must have length {nx}"),
    );

    for (t, s) in p.stages.iter().enumerate() {
        let nu = s.nu();
        let ok = dim(
            &mut out,
            s.A.shape() == (nx, nx),
            format!("stage {t}: A must be {nx}x{nx}"),
        ) & dim(
            &mut out,
            s.B.nrows() == nx,
            format!("stage {t}: B must have {nx} rows"),
        ) & dim(
            &mut out,
            s.a.len() == nx,
            format!("stage {t}: a must have length {nx}"),
        ) & dim(
            &mut out,
            s.Hx.shape() == (nx, nx),
            format!("stage {t}: Hx must be {nx}x{nx}"),
        ) & dim(
            &mut out,
            s.Hxu.shape() == (nx, nu),
            format!("stage {t}: Hxu must be {nx}x{nu}"),
        ) & dim(
            &mut out,
            s.Hu.shape() == (nu, nu),
            format!("stage {t}: Hu must be {nu}x{nu}"),
        ) & dim(
            &mut out,
            s.fx.len() == nx,
            format!("stage {t}: fx must have length {nx}"),
        ) & dim(
            &mut out,
            s.fu.len() == nu,
            format!("stage {t}: fu must have length {nu}"),
        );
        if !ok {
            continue; // definiteness checks would be meaningless
        }

        let sym_defect = linalg::asymmetry(&s.Hx);
        if sym_defect > tol * (1.0 + linalg::spectral_norm(&s.Hx)) {
            out.push(Violation::NotSymmetric {
                what: format!("stage {t} Hx"),
                defect: sym_defect,
            });
        }
        let sym_defect = linalg::asymmetry(&s.Hu);
        if sym_defect > tol * (1.0 + linalg::spectral_norm(&s.Hu)) {
            out.push(Violation::NotSymmetric {
                what: format!("stage {t} Hu"),
                defect: sym_defect,
            });
        }

        let h = s.hessian();
        let scale = linalg::spectral_norm(&h);
        let min_eig = linalg::min_symmetric_eigenvalue(&h);
        if min_eig < -tol * scale {
            out.push(Violation::StageHessianNotPsd { stage: t, min_eig });
        }
        if nu > 0 {
            let hu_scale = linalg::spectral_norm(&s.Hu);
            let hu_min = linalg::min_symmetric_eigenvalue(&s.Hu);
            if hu_min <= tol * hu_scale {
                out.push(Violation::HuNotPd {
                    stage: t,
                    min_eig: hu_min,
                });
            }
        }
    }

    if p.HN.shape() == (nx, nx) {
        let defect = linalg::asymmetry(&p.HN);
        if defect > tol * (1.0 + linalg::spectral_norm(&p.HN)) {
            out.push(Violation::NotSymmetric {
                what: "HN".into(),
                defect,
            });
        }
        let min_eig = linalg::min_symmetric_eigenvalue(&p.HN);
        if min_eig < -tol * linalg::spectral_norm(&p.HN) {
            out.push(Violation::TerminalNotPsd { min_eig });
        }
    }

    out
}
