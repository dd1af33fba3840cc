//! Error type shared by all solver paths.

use thiserror::Error;

/// Failures raised while building or solving an MPC problem.
///
/// Dimension and assumption violations are reported with enough context to
/// identify the offending stage or tree block.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("stage {stage}: no free inputs remain after elimination")]
    EmptyFreeSet { stage: usize },

    #[error("reduced Hessian is not positive definite ({0})")]
    ReducedHessianNotPd(String),

    #[error("singular KKT system ({0})")]
    SingularKkt(String),

    #[error("degenerate block requires a coupling dual but none was supplied")]
    MissingCouplingDual,

    #[error(
        "inconsistent master solution: null-space correction leaves the \
         controllability kernel (residual {residual:.3e})"
    )]
    InconsistentMaster { residual: f64 },

    #[error("level {level}, block {block}: {source}")]
    AtBlock {
        level: usize,
        block: usize,
        #[source]
        source: Box<SolveError>,
    },
}

impl SolveError {
    /// Attach tree coordinates to an error bubbling out of a block solve.
    pub(crate) fn at_block(self, level: usize, block: usize) -> Self {
        SolveError::AtBlock {
            level,
            block,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, SolveError>;
