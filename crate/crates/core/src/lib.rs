//! Newton-step solver for equality-constrained MPC problems.
//!
//! The optimization problem handled by this crate is the linear-quadratic
//! optimal control problem over a horizon of `N` stages,
//!
//! ```text
//! minimize   sum_t ( 1/2 [x_t; u_t]' H_t [x_t; u_t] + f_t' [x_t; u_t] + c_t )
//!            + 1/2 x_N' H_N x_N + f_N' x_N + c_N
//! subject to x_0 = x_bar
//!            x_{t+1} = A_t x_t + B_t u_t + a_t
//! ```
//!
//! which is the system solved for every Newton step inside interior-point and
//! active-set MPC solvers. Three solution paths are provided:
//!
//! * [`tree`] — recursive horizon reduction: the horizon-`N` problem is split
//!   into blocks, each block is solved parametrically in its boundary
//!   variables, and the blocks collapse into a new MPC problem with a shorter
//!   horizon. Repeating this yields a tree whose depth is logarithmic in `N`;
//!   blocks within a level are independent and run in parallel.
//! * [`baselines::riccati_solve`] — the classic serial backward Riccati
//!   recursion, linear in `N`.
//! * [`baselines::dense_kkt_oracle`] — one dense factorization of the full
//!   KKT system, used as ground truth in the test suite.
//!
//! [`problem`] defines the data model, random instance generation, and the
//! active-set elimination layer that produces reduced problems from
//! box-constrained ones. [`json`] holds the on-disk formats used by the CLI.

pub mod baselines;
pub mod error;
pub mod json;
pub mod linalg;
pub mod parametric;
pub mod problem;
pub mod solution;
pub mod tree;

pub use error::SolveError;
pub use problem::{
    ActiveSet, BoundSide, BoxMpcProblem, EliminationRecord, MpcProblem, Stage, Violation,
};
pub use solution::{NewtonSolution, TimingRecord};
pub use tree::{SolveOptions, TreeReport};
