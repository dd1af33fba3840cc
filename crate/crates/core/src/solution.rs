//! Solution container shared by all solver paths.

use nalgebra::DVector;

/// Execution phase a timing record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Parametric block solves while collapsing a level.
    Reduce,
    /// Per-block evaluation while propagating the solution back down.
    Propagate,
}

/// Wall-clock durations of the independent block tasks of one tree level.
#[derive(Debug, Clone)]
pub struct LevelTiming {
    pub level: usize,
    pub phase: Phase,
    pub block_seconds: Vec<f64>,
}

/// Timing breakdown of a solve.
///
/// `simulated_parallel_seconds` models unlimited workers with free
/// communication: within a level all blocks run simultaneously, so each
/// level contributes only its slowest block.
#[derive(Debug, Clone, Default)]
pub struct TimingRecord {
    pub levels: Vec<LevelTiming>,
    pub root_seconds: f64,
    pub total_seconds: f64,
}

impl TimingRecord {
    pub fn simulated_parallel_seconds(&self) -> f64 {
        let level_sum: f64 = self
            .levels
            .iter()
            .map(|l| l.block_seconds.iter().copied().fold(0.0, f64::max))
            .sum();
        level_sum + self.root_seconds
    }
}

/// Primal/dual solution of an MPC problem.
///
/// `lambdas[0]` is the multiplier of the initial-state constraint and
/// `lambdas[t+1]` the multiplier of the dynamics constraint producing
/// `x_{t+1}`, entering stationarity as `-lambda_t + A_t' lambda_{t+1}`.
#[derive(Debug, Clone)]
pub struct NewtonSolution {
    /// States `x_0 ..= x_N`.
    pub xs: Vec<DVector<f64>>,
    /// Inputs `u_0 .. u_{N-1}`.
    pub us: Vec<DVector<f64>>,
    /// Multipliers `lambda_0 ..= lambda_N`.
    pub lambdas: Vec<DVector<f64>>,
    /// Multipliers of eliminated input bounds, when an elimination record
    /// was supplied.
    pub nu: Option<Vec<DVector<f64>>>,
    pub objective: f64,
    pub timing: TimingRecord,
}

impl NewtonSolution {
    /// Interleaved primal vector `(x_0, u_0, x_1, ..., u_{N-1}, x_N)`.
    pub fn stacked_primal(&self) -> DVector<f64> {
        let len: usize = self.xs.iter().map(DVector::len).sum::<usize>()
            + self.us.iter().map(DVector::len).sum::<usize>();
        let mut out = DVector::zeros(len);
        let mut at = 0;
        for t in 0..self.us.len() {
            out.rows_mut(at, self.xs[t].len()).copy_from(&self.xs[t]);
            at += self.xs[t].len();
            out.rows_mut(at, self.us[t].len()).copy_from(&self.us[t]);
            at += self.us[t].len();
        }
        let last = self.xs.last().expect("at least one state");
        out.rows_mut(at, last.len()).copy_from(last);
        out
    }

    /// Stacked dual vector `(lambda_0, ..., lambda_N)`.
    pub fn stacked_dual(&self) -> DVector<f64> {
        let len: usize = self.lambdas.iter().map(DVector::len).sum();
        let mut out = DVector::zeros(len);
        let mut at = 0;
        for l in &self.lambdas {
            out.rows_mut(at, l.len()).copy_from(l);
            at += l.len();
        }
        out
    }
}
