//! Recursive horizon reduction.
//!
//! One reduction step splits the horizon into consecutive blocks, solves
//! every block parametrically in its boundary variables, and reassembles the
//! value functions and terminal parametrizations into an MPC problem whose
//! horizon equals the number of blocks: block `i` becomes stage `i`, with
//!
//! ```text
//! A_i  = Ac_i,   B_i = Tc_i,   a_i = ac_i          (coupling dynamics)
//! cost = value function of block i over (xbar_i, dbar_i)
//! ```
//!
//! and the terminal cost passing through unchanged. Repeating the step
//! produces a tree of subproblems whose depth is logarithmic in the horizon
//! when the block length is fixed; blocks within a level are independent and
//! are processed in parallel. The small problem at the top is solved by one
//! dense KKT factorization, and the solution is propagated back down the
//! tree: each block evaluates its affine solution at the parameters computed
//! by its parent, applying the null-space dual correction wherever the block
//! is degenerate. No iteration over the coupling variables takes place:
//! every block is solved exactly once on the way up and evaluated exactly
//! once on the way down.

use crate::baselines;
use crate::error::{Result, SolveError};
use crate::linalg;
use crate::parametric::{
    build_compact, controllability_data, solve_parametric, terminal_parametrization,
    ParametricSolution,
};
use crate::problem::recover_eliminated_duals;
use crate::problem::{EliminationRecord, MpcProblem, Stage};
use crate::solution::{LevelTiming, NewtonSolution, Phase, TimingRecord};
use nalgebra::DVector;
use rayon::prelude::*;
use std::ops::Range;
use std::time::Instant;

/// Solver configuration.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Target block length per reduction level (last block absorbs the
    /// remainder).
    pub s: usize,
    /// Reduction stops once the horizon is at most `max(p_min, s)`.
    pub p_min: usize,
    /// Worker threads for the per-level block loops; 0 uses all cores.
    pub workers: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            s: 2,
            p_min: 1,
            workers: 1,
        }
    }
}

/// Block lengths of every reduction level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    /// `levels[k]` holds the block lengths applied to the level-`k` problem;
    /// the resulting problem has horizon `levels[k].len()`.
    pub levels: Vec<Vec<usize>>,
    pub s: usize,
    pub p_min: usize,
}

impl SplitPlan {
    /// Horizon of the problem left after all reductions.
    pub fn root_horizon(&self, n: usize) -> usize {
        self.levels.last().map_or(n, Vec::len)
    }
}

/// Greedy fixed-length splitting: every level uses blocks of length `s`,
/// the final block absorbing any remainder (length in `[s, 2s-1]`), until
/// the horizon is at most `max(p_min, s)`.
pub fn plan_levels(n: usize, s: usize, p_min: usize) -> Result<SplitPlan> {
    if n < 1 {
        return Err(SolveError::InvalidParameter(
            "horizon must be positive".into(),
        ));
    }
    if s < 2 {
        return Err(SolveError::InvalidParameter(
            "block length must be at least 2".into(),
        ));
    }
    if p_min < 1 {
        return Err(SolveError::InvalidParameter(
            "p_min must be at least 1".into(),
        ));
    }
    let stop = p_min.max(s);
    let mut levels = Vec::new();
    let mut len = n;
    while len > stop {
        let q = len / s;
        let mut blocks = vec![s; q];
        blocks[q - 1] += len - q * s;
        levels.push(blocks);
        len = q;
    }
    Ok(SplitPlan { levels, s, p_min })
}

/// One solved block of the reduction tree.
#[derive(Debug, Clone)]
pub struct TreeNode {
    pub level: usize,
    pub index: usize,
    /// Stage range this block covers in its level's problem.
    pub range: Range<usize>,
    pub sol: ParametricSolution,
    /// Residual of the null-space property `Ae' Z w = 0` over the computed
    /// kernel basis; 0 for fully controllable blocks.
    pub nullspace_residual: f64,
    pub solve_seconds: f64,
}

/// The reduction tree: per-level solved blocks plus every intermediate
/// problem (index 0 is the original, the last entry is the root problem).
#[derive(Debug, Clone)]
pub struct ReductionTree {
    pub levels: Vec<Vec<TreeNode>>,
    pub level_problems: Vec<MpcProblem>,
    pub plan: SplitPlan,
    pub reduce_timings: Vec<LevelTiming>,
}

impl ReductionTree {
    pub fn root(&self) -> &MpcProblem {
        self.level_problems
            .last()
            .expect("at least the original problem")
    }
}

/// Full primal/dual solution of one level's problem.
#[derive(Debug, Clone)]
pub struct LevelSolution {
    pub xs: Vec<DVector<f64>>,
    pub us: Vec<DVector<f64>>,
    pub lams: Vec<DVector<f64>>,
}

/// Dual-relation residuals of one propagated block, normalized by
/// `1 + max ||parent multipliers||`.
#[derive(Debug, Clone)]
pub struct BlockCheck {
    pub level: usize,
    pub index: usize,
    pub degenerate: bool,
    /// `lambda_0 = lam_hat_prev - Ac'(lambda_tc + lam_hat)`.
    pub initial_dual_residual: f64,
    /// `Tc'(lambda_tc + lam_hat) = 0`.
    pub kernel_residual: f64,
    /// `lambda_Ni = -lambda_tc`.
    pub terminal_dual_residual: f64,
    /// `lambda_tc = -lam_hat`; only meaningful under LICQ (non-degenerate).
    pub licq_coupling_residual: Option<f64>,
    /// Coupling constraint gap `x_{0,i+1} - x_{Ni,i}` against the next block.
    pub primal_boundary_gap: Option<f64>,
    /// Dual continuity `lambda_{0,i+1} - lambda_{Ni,i}` against the next block.
    pub dual_boundary_gap: Option<f64>,
}

/// Diagnostics of a full tree solve.
#[derive(Debug, Clone)]
pub struct TreeReport {
    pub level_blocks: Vec<usize>,
    pub root_horizon: usize,
    pub degenerate_blocks: usize,
    /// Optimal objective of the root problem.
    pub root_objective: f64,
    /// Objective of the assembled solution on the original problem.
    pub original_objective: f64,
    pub checks: Vec<BlockCheck>,
    /// Per level: consistency of the last block's terminal state/dual with
    /// the parent's terminal variables, normalized.
    pub terminal_links: Vec<f64>,
    /// Largest `Ae' Z w` residual over all blocks.
    pub nullspace_residual: f64,
    pub reduce_solves: usize,
    pub propagate_evals: usize,
}

impl TreeReport {
    /// Largest dual-relation residual over all blocks.
    pub fn max_dual_relation_residual(&self) -> f64 {
        self.checks
            .iter()
            .flat_map(|c| {
                [
                    c.initial_dual_residual,
                    c.kernel_residual,
                    c.terminal_dual_residual,
                ]
            })
            .fold(0.0, f64::max)
    }

    /// Largest LICQ coupling residual over non-degenerate blocks.
    pub fn max_licq_residual(&self) -> f64 {
        self.checks
            .iter()
            .filter_map(|c| c.licq_coupling_residual)
            .fold(0.0, f64::max)
    }

    /// Largest boundary gap (primal or dual) between adjacent blocks.
    pub fn max_boundary_gap(&self) -> f64 {
        self.checks
            .iter()
            .flat_map(|c| [c.primal_boundary_gap, c.dual_boundary_gap])
            .flatten()
            .fold(0.0, f64::max)
    }
}

fn make_pool(workers: usize) -> Result<Option<rayon::ThreadPool>> {
    if workers == 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| SolveError::InvalidParameter(format!("worker pool: {e}")))
}

/// Run one fallible task per block, serially or on the pool; results keep
/// block order either way, so the outcome is independent of scheduling.
fn run_blocks<T, F>(count: usize, pool: Option<&rayon::ThreadPool>, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    match pool {
        None => (0..count).map(task).collect(),
        Some(pool) => pool.install(|| (0..count).into_par_iter().map(task).collect()),
    }
}

fn block_ranges(blocks: &[usize]) -> Vec<Range<usize>> {
    let mut out = Vec::with_capacity(blocks.len());
    let mut at = 0;
    for &len in blocks {
        out.push(at..at + len);
        at += len;
    }
    out
}

struct ReducedBlock {
    node: TreeNode,
    stage: Stage,
}

fn reduce_block(
    problem: &MpcProblem,
    level: usize,
    index: usize,
    range: Range<usize>,
) -> Result<ReducedBlock> {
    let started = Instant::now();
    let nx = problem.nx();
    let stages = &problem.stages[range.clone()];

    let ctrl = controllability_data(stages);
    let a_stack = DVector::from_iterator(
        range.len() * nx,
        stages.iter().flat_map(|s| s.a.iter().copied()),
    );
    let term = terminal_parametrization(&ctrl, &a_stack);
    let compact = build_compact(problem, range.clone(), Some(&term))?;
    let sol = solve_parametric(&compact, &ctrl)?;

    // kernel-basis property of the stored null-space map
    let mut nullspace_residual = 0.0_f64;
    if ctrl.W.ncols() > 0 {
        let z = sol.Z.as_ref().expect("interior blocks store Z");
        let aetzw = compact.Ae.transpose() * (z * &ctrl.W);
        nullspace_residual = aetzw.abs().max();
    }

    // the dbar block of the value-function Hessian becomes an input block
    // one level up and must stay positive semidefinite to tolerance
    let nd = term.nd();
    let huu = sol.Hhat.view((nx, nx), (nd, nd)).into_owned();
    let pd_tol = 1e-10 * linalg::spectral_norm(&huu);
    if !linalg::is_positive_semidefinite(&huu, pd_tol) {
        return Err(SolveError::ReducedHessianNotPd(
            "value-function input block lost definiteness".into(),
        ));
    }

    let stage = Stage {
        A: term.Ac.clone(),
        B: term.Tc.clone(),
        a: term.ac.clone(),
        Hx: sol.Hhat.view((0, 0), (nx, nx)).into_owned(),
        Hxu: sol.Hhat.view((0, nx), (nx, nd)).into_owned(),
        Hu: huu,
        fx: sol.fhat.rows(0, nx).into_owned(),
        fu: sol.fhat.rows(nx, nd).into_owned(),
        c: sol.chat,
    };

    Ok(ReducedBlock {
        node: TreeNode {
            level,
            index,
            range,
            sol,
            nullspace_residual,
            solve_seconds: started.elapsed().as_secs_f64(),
        },
        stage,
    })
}

/// Collapse one level: solve every block parametrically and assemble the
/// next-level problem from the terminal parametrizations (dynamics) and
/// value functions (costs); the terminal cost passes through unchanged.
pub fn reduce_level(
    problem: &MpcProblem,
    blocks: &[usize],
    level: usize,
    pool: Option<&rayon::ThreadPool>,
) -> Result<(Vec<TreeNode>, MpcProblem, LevelTiming)> {
    let total: usize = blocks.iter().sum();
    if total != problem.horizon() {
        return Err(SolveError::InvalidParameter(format!(
            "blocks sum to {total}, level horizon is {}",
            problem.horizon()
        )));
    }
    let ranges = block_ranges(blocks);
    let reduced = run_blocks(ranges.len(), pool, |i| {
        reduce_block(problem, level, i, ranges[i].clone()).map_err(|e| e.at_block(level, i))
    })?;

    let mut nodes = Vec::with_capacity(reduced.len());
    let mut stages = Vec::with_capacity(reduced.len());
    let mut block_seconds = Vec::with_capacity(reduced.len());
    for rb in reduced {
        block_seconds.push(rb.node.solve_seconds);
        nodes.push(rb.node);
        stages.push(rb.stage);
    }

    let next = MpcProblem {
        stages,
        HN: problem.HN.clone(),
        fN: problem.fN.clone(),
        cN: problem.cN,
        x_bar: problem.x_bar.clone(),
    };
    Ok((
        nodes,
        next,
        LevelTiming {
            level,
            phase: Phase::Reduce,
            block_seconds,
        },
    ))
}

/// Apply the whole split plan, producing the reduction tree.
pub fn build_tree(
    p: &MpcProblem,
    plan: &SplitPlan,
    pool: Option<&rayon::ThreadPool>,
) -> Result<ReductionTree> {
    if let Some(first) = plan.levels.first() {
        let total: usize = first.iter().sum();
        if total != p.horizon() {
            return Err(SolveError::InvalidParameter(format!(
                "plan covers horizon {total}, problem has {}",
                p.horizon()
            )));
        }
    }
    let mut level_problems = vec![p.clone()];
    let mut levels = Vec::with_capacity(plan.levels.len());
    let mut reduce_timings = Vec::with_capacity(plan.levels.len());
    for (k, blocks) in plan.levels.iter().enumerate() {
        let (nodes, next, timing) = reduce_level(&level_problems[k], blocks, k, pool)?;
        levels.push(nodes);
        reduce_timings.push(timing);
        level_problems.push(next);
    }
    Ok(ReductionTree {
        levels,
        level_problems,
        plan: plan.clone(),
        reduce_timings,
    })
}

/// Solve the root problem exactly with one dense KKT factorization.
pub fn solve_root(root: &MpcProblem) -> Result<LevelSolution> {
    let sol = baselines::dense_kkt_oracle(root)?;
    Ok(LevelSolution {
        xs: sol.xs,
        us: sol.us,
        lams: sol.lambdas,
    })
}

struct LevelEvaluation {
    solution: LevelSolution,
    timing: LevelTiming,
    checks: Vec<BlockCheck>,
    terminal_link: f64,
}

fn evaluate_level(
    nodes: &[TreeNode],
    level_problem: &MpcProblem,
    parent: &LevelSolution,
    pool: Option<&rayon::ThreadPool>,
) -> Result<LevelEvaluation> {
    let level = nodes.first().map_or(0, |n| n.level);
    let evals = run_blocks(nodes.len(), pool, |i| {
        let started = Instant::now();
        let node = &nodes[i];
        let theta = {
            let x = &parent.xs[i];
            let u = &parent.us[i];
            let mut theta = DVector::zeros(x.len() + u.len());
            theta.rows_mut(0, x.len()).copy_from(x);
            theta.rows_mut(x.len(), u.len()).copy_from(u);
            theta
        };
        let primal = node
            .sol
            .evaluate_primal(&theta)
            .map_err(|e| e.at_block(level, i))?;
        let dual = node
            .sol
            .evaluate_dual(&theta, Some(&parent.lams[i + 1]))
            .map_err(|e| e.at_block(level, i))?;
        Ok((primal, dual, started.elapsed().as_secs_f64()))
    })?;

    let horizon = level_problem.horizon();
    let nx = level_problem.nx();
    let zero = DVector::zeros(nx);
    let mut xs = vec![zero.clone(); horizon + 1];
    let mut us: Vec<DVector<f64>> = (0..horizon)
        .map(|t| DVector::zeros(level_problem.nu(t)))
        .collect();
    let mut lams = vec![zero; horizon + 1];

    let dual_scale = 1.0
        + parent
            .lams
            .iter()
            .map(|l| l.abs().max())
            .fold(0.0, f64::max);

    for (node, (primal, dual, _)) in nodes.iter().zip(&evals) {
        let layout = &node.sol.layout;
        for t in 0..node.range.len() {
            xs[node.range.start + t] = layout.state(primal, t);
            us[node.range.start + t] = layout.input(primal, t);
            lams[node.range.start + t] = layout.multiplier(dual, t);
        }
    }
    // the final block owns the terminal state and multiplier
    let last = nodes.last().expect("levels have at least one block");
    let layout = &last.sol.layout;
    let (primal, dual, _) = &evals[nodes.len() - 1];
    xs[horizon] = layout.state(primal, last.range.len());
    lams[horizon] = layout.multiplier(dual, last.range.len());

    // dual-relation checks
    let mut checks = Vec::with_capacity(nodes.len());
    for (i, (node, (primal, dual, _))) in nodes.iter().zip(&evals).enumerate() {
        let layout = &node.sol.layout;
        let term = node.sol.term.as_ref().expect("tree blocks are interior");
        let len = node.range.len();
        let lam_tc = layout.terminal_multiplier(dual);
        let lam_hat = &parent.lams[i + 1];
        let tc_plus = &lam_tc + lam_hat;

        let initial = (layout.multiplier(dual, 0)
            - (&parent.lams[i] - term.Ac.transpose() * &tc_plus))
            .abs()
            .max();
        let kernel = if term.nd() > 0 {
            (term.Tc.transpose() * &tc_plus).abs().max()
        } else {
            0.0
        };
        let terminal = (layout.multiplier(dual, len) + &lam_tc).abs().max();
        let licq = (!node.sol.degenerate).then(|| tc_plus.abs().max() / dual_scale);

        let (primal_gap, dual_gap) = if i + 1 < nodes.len() {
            let next_layout = &nodes[i + 1].sol.layout;
            let (next_primal, next_dual, _) = &evals[i + 1];
            let pg = (layout.state(primal, len) - next_layout.state(next_primal, 0))
                .abs()
                .max();
            let dg = (layout.multiplier(dual, len) - next_layout.multiplier(next_dual, 0))
                .abs()
                .max();
            (Some(pg / dual_scale), Some(dg / dual_scale))
        } else {
            (None, None)
        };

        checks.push(BlockCheck {
            level: node.level,
            index: i,
            degenerate: node.sol.degenerate,
            initial_dual_residual: initial / dual_scale,
            kernel_residual: kernel / dual_scale,
            terminal_dual_residual: terminal / dual_scale,
            licq_coupling_residual: licq,
            primal_boundary_gap: primal_gap,
            dual_boundary_gap: dual_gap,
        });
    }

    // last block's terminal variables must match the parent's terminal ones
    let q = nodes.len();
    let primal_link = (&xs[horizon] - &parent.xs[q]).abs().max();
    let dual_link = (&lams[horizon] - &parent.lams[q]).abs().max();
    let terminal_link = primal_link.max(dual_link) / dual_scale;

    let block_seconds = evals.iter().map(|(_, _, s)| *s).collect();
    Ok(LevelEvaluation {
        solution: LevelSolution { xs, us, lams },
        timing: LevelTiming {
            level,
            phase: Phase::Propagate,
            block_seconds,
        },
        checks,
        terminal_link,
    })
}

/// Everything produced by the downward pass.
pub struct Propagation {
    /// Solution of the level-0 (original) problem.
    pub solution: LevelSolution,
    pub timings: Vec<LevelTiming>,
    pub checks: Vec<BlockCheck>,
    /// Per level, top to bottom: consistency of the last block's terminal
    /// variables with the parent's.
    pub terminal_links: Vec<f64>,
}

/// Propagate the root solution down to level 0, evaluating every block once.
pub fn propagate(
    tree: &ReductionTree,
    root_solution: &LevelSolution,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Propagation> {
    let mut current = root_solution.clone();
    let mut timings = Vec::with_capacity(tree.levels.len());
    let mut checks = Vec::new();
    let mut links = Vec::with_capacity(tree.levels.len());
    for k in (0..tree.levels.len()).rev() {
        let eval = evaluate_level(&tree.levels[k], &tree.level_problems[k], &current, pool)?;
        current = eval.solution;
        timings.push(eval.timing);
        checks.extend(eval.checks);
        links.push(eval.terminal_link);
    }
    Ok(Propagation {
        solution: current,
        timings,
        checks,
        terminal_links: links,
    })
}

/// Solve the Newton step: plan, reduce, solve the root, propagate, and
/// assemble. When an elimination record is supplied, the multipliers of the
/// eliminated input bounds are recovered as well.
pub fn solve_newton_step(
    p: &MpcProblem,
    rec: Option<&EliminationRecord>,
    opts: &SolveOptions,
) -> Result<NewtonSolution> {
    solve_newton_step_detailed(p, rec, opts).map(|(sol, _)| sol)
}

/// As [`solve_newton_step`], additionally returning the tree diagnostics.
pub fn solve_newton_step_detailed(
    p: &MpcProblem,
    rec: Option<&EliminationRecord>,
    opts: &SolveOptions,
) -> Result<(NewtonSolution, TreeReport)> {
    let started = Instant::now();
    let pool = make_pool(opts.workers)?;
    let plan = plan_levels(p.horizon(), opts.s, opts.p_min)?;
    let tree = build_tree(p, &plan, pool.as_ref())?;

    let root_started = Instant::now();
    let root_solution = solve_root(tree.root())?;
    let root_seconds = root_started.elapsed().as_secs_f64();
    let root_objective = tree.root().objective(&root_solution.xs, &root_solution.us);

    let prop = propagate(&tree, &root_solution, pool.as_ref())?;
    let level0 = prop.solution;

    let objective = p.objective(&level0.xs, &level0.us);
    let nu = match rec {
        Some(rec) => {
            let sol = NewtonSolution {
                xs: level0.xs.clone(),
                us: level0.us.clone(),
                lambdas: level0.lams.clone(),
                nu: None,
                objective,
                timing: TimingRecord::default(),
            };
            Some(recover_eliminated_duals(&sol, rec)?)
        }
        None => None,
    };

    let mut timing_levels = tree.reduce_timings.clone();
    timing_levels.extend(prop.timings);
    let timing = TimingRecord {
        levels: timing_levels,
        root_seconds,
        total_seconds: started.elapsed().as_secs_f64(),
    };

    let report = TreeReport {
        level_blocks: tree.levels.iter().map(Vec::len).collect(),
        root_horizon: tree.root().horizon(),
        degenerate_blocks: tree
            .levels
            .iter()
            .flatten()
            .filter(|n| n.sol.degenerate)
            .count(),
        root_objective,
        original_objective: objective,
        checks: prop.checks,
        terminal_links: prop.terminal_links,
        nullspace_residual: tree
            .levels
            .iter()
            .flatten()
            .map(|n| n.nullspace_residual)
            .fold(0.0, f64::max),
        reduce_solves: tree.levels.iter().map(Vec::len).sum(),
        propagate_evals: tree.levels.iter().map(Vec::len).sum(),
    };

    let solution = NewtonSolution {
        xs: level0.xs,
        us: level0.us,
        lambdas: level0.lams,
        nu,
        objective,
        timing,
    };
    Ok((solution, report))
}
