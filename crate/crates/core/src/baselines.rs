//! Reference solvers: serial Riccati recursion and a dense KKT factorization.
//!
//! Both solve the same equality-constrained MPC problem as the tree solver
//! and share its dual-variable sign convention, where the stationarity
//! equations for stage `t` read
//!
//! ```text
//! Hx x_t + Hxu u_t + fx - lambda_t + A_t' lambda_{t+1} = 0
//! Hxu' x_t + Hu u_t + fu + B_t' lambda_{t+1} = 0
//! ```
//!
//! with `HN x_N + fN - lambda_N = 0` at the horizon end. The Riccati pass is
//! the linear-time serial comparator; the dense factorization is cubic and
//! meant for test-scale problems only, where it serves as ground truth.

use crate::error::{Result, SolveError};
use crate::problem::MpcProblem;
use crate::solution::{NewtonSolution, TimingRecord};
use nalgebra::{DMatrix, DVector};
use std::time::Instant;

/// Backward Riccati factorization: cost-to-go terms and feedback policies.
#[derive(Debug, Clone)]
pub struct RiccatiPass {
    /// Cost-to-go Hessians `P_0 ..= P_N` (`P_N = HN`).
    pub p_mats: Vec<DMatrix<f64>>,
    /// Cost-to-go linear terms `p_0 ..= p_N` (`p_N = fN`).
    pub p_vecs: Vec<DVector<f64>>,
    /// Feedback gains, one per stage: `u_t = -K_t x_t - k_t`.
    pub gains: Vec<DMatrix<f64>>,
    /// Feedforward terms.
    pub ffwd: Vec<DVector<f64>>,
}

/// Run the backward recursion, including cross terms and affine offsets.
pub fn riccati_factor(p: &MpcProblem) -> Result<RiccatiPass> {
    let n = p.horizon();
    let nx = p.nx();
    let mut p_mats = vec![DMatrix::zeros(0, 0); n + 1];
    let mut p_vecs = vec![DVector::zeros(0); n + 1];
    let mut gains = vec![DMatrix::zeros(0, 0); n];
    let mut ffwd = vec![DVector::zeros(0); n];

    p_mats[n] = (&p.HN + p.HN.transpose()) * 0.5;
    p_vecs[n] = p.fN.clone();

    for t in (0..n).rev() {
        let s = &p.stages[t];
        let nu = s.nu();
        let pb = &p_mats[t + 1] * &s.B;
        let pa = &p_mats[t + 1] * &s.A;
        let pa_vec = &p_mats[t + 1] * &s.a + &p_vecs[t + 1];

        let (gain, ff) = if nu == 0 {
            (DMatrix::zeros(0, nx), DVector::zeros(0))
        } else {
            let mut g = &s.Hu + s.B.transpose() * &pb;
            g = (&g + g.transpose()) * 0.5;
            let chol = nalgebra::Cholesky::new(g).ok_or_else(|| {
                SolveError::ReducedHessianNotPd(format!("Riccati input block at stage {t}"))
            })?;
            let m = s.Hxu.transpose() + s.B.transpose() * &pa;
            let m_vec = &s.fu + s.B.transpose() * &pa_vec;
            (chol.solve(&m), chol.solve(&m_vec))
        };

        let cross = &s.Hxu + s.A.transpose() * &pb;
        let mut p_t = &s.Hx + s.A.transpose() * &pa - &cross * &gain;
        p_t = (&p_t + p_t.transpose()) * 0.5;
        let p_vec_t = &s.fx + s.A.transpose() * &pa_vec - &cross * &ff;

        p_mats[t] = p_t;
        p_vecs[t] = p_vec_t;
        gains[t] = gain;
        ffwd[t] = ff;
    }

    Ok(RiccatiPass {
        p_mats,
        p_vecs,
        gains,
        ffwd,
    })
}

/// Solve by backward Riccati recursion and forward rollout; duals are
/// recovered as `lambda_t = P_t x_t + p_t`.
pub fn riccati_solve(p: &MpcProblem) -> Result<NewtonSolution> {
    let start = Instant::now();
    let pass = riccati_factor(p)?;
    let n = p.horizon();

    let mut xs = Vec::with_capacity(n + 1);
    let mut us = Vec::with_capacity(n);
    xs.push(p.x_bar.clone());
    for t in 0..n {
        let s = &p.stages[t];
        let u = -(&pass.gains[t] * &xs[t]) - &pass.ffwd[t];
        let next = &s.A * &xs[t] + &s.B * &u + &s.a;
        us.push(u);
        xs.push(next);
    }
    let lambdas: Vec<DVector<f64>> = (0..=n)
        .map(|t| &pass.p_mats[t] * &xs[t] + &pass.p_vecs[t])
        .collect();

    let objective = p.objective(&xs, &us);
    Ok(NewtonSolution {
        xs,
        us,
        lambdas,
        nu: None,
        objective,
        timing: TimingRecord {
            total_seconds: start.elapsed().as_secs_f64(),
            ..TimingRecord::default()
        },
    })
}

/// Variable layout of the stacked KKT system: interleaved
/// `(x_0, u_0, x_1, ..., u_{N-1}, x_N)` primal, one multiplier block per
/// constraint row block (initial state first, then dynamics in order).
fn kkt_dimensions(p: &MpcProblem) -> (usize, usize) {
    (p.num_primal(), (p.horizon() + 1) * p.nx())
}

/// Solve the full KKT system with one dense factorization.
///
/// Cubic in the total variable count; intended as the correctness oracle at
/// test scale, not as a production path.
pub fn dense_kkt_oracle(p: &MpcProblem) -> Result<NewtonSolution> {
    let start = Instant::now();
    let n = p.horizon();
    let nx = p.nx();
    let (n_var, n_con) = kkt_dimensions(p);
    let dim = n_var + n_con;

    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);

    // variable offsets
    let mut x_off = Vec::with_capacity(n + 1);
    let mut u_off = Vec::with_capacity(n);
    let mut at = 0;
    for t in 0..n {
        x_off.push(at);
        at += nx;
        u_off.push(at);
        at += p.nu(t);
    }
    x_off.push(at);

    for (t, s) in p.stages.iter().enumerate() {
        let nu = s.nu();
        kkt.view_mut((x_off[t], x_off[t]), (nx, nx))
            .copy_from(&s.Hx);
        kkt.view_mut((x_off[t], u_off[t]), (nx, nu))
            .copy_from(&s.Hxu);
        kkt.view_mut((u_off[t], x_off[t]), (nu, nx))
            .copy_from(&s.Hxu.transpose());
        kkt.view_mut((u_off[t], u_off[t]), (nu, nu))
            .copy_from(&s.Hu);
        rhs.rows_mut(x_off[t], nx).copy_from(&(-&s.fx));
        rhs.rows_mut(u_off[t], nu).copy_from(&(-&s.fu));
    }
    kkt.view_mut((x_off[n], x_off[n]), (nx, nx))
        .copy_from(&p.HN);
    rhs.rows_mut(x_off[n], nx).copy_from(&(-&p.fN));

    // constraint rows: -x_0 = -x_bar, then A x_t + B u_t - x_{t+1} = -a_t
    let con = n_var;
    for i in 0..nx {
        kkt[(con + i, x_off[0] + i)] = -1.0;
        kkt[(x_off[0] + i, con + i)] = -1.0;
        rhs[con + i] = -p.x_bar[i];
    }
    for (t, s) in p.stages.iter().enumerate() {
        let row = con + (t + 1) * nx;
        let nu = s.nu();
        kkt.view_mut((row, x_off[t]), (nx, nx)).copy_from(&s.A);
        kkt.view_mut((row, u_off[t]), (nx, nu)).copy_from(&s.B);
        kkt.view_mut((x_off[t], row), (nx, nx))
            .copy_from(&s.A.transpose());
        kkt.view_mut((u_off[t], row), (nu, nx))
            .copy_from(&s.B.transpose());
        for i in 0..nx {
            kkt[(row + i, x_off[t + 1] + i)] = -1.0;
            kkt[(x_off[t + 1] + i, row + i)] = -1.0;
        }
        rhs.rows_mut(row, nx).copy_from(&(-&s.a));
    }

    let lu = kkt.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| SolveError::SingularKkt("dense KKT factorization failed".into()))?;

    let xs: Vec<DVector<f64>> = (0..=n)
        .map(|t| sol.rows(x_off[t], nx).into_owned())
        .collect();
    let us: Vec<DVector<f64>> = (0..n)
        .map(|t| sol.rows(u_off[t], p.nu(t)).into_owned())
        .collect();
    let lambdas: Vec<DVector<f64>> = (0..=n)
        .map(|t| sol.rows(con + t * nx, nx).into_owned())
        .collect();

    let objective = p.objective(&xs, &us);
    Ok(NewtonSolution {
        xs,
        us,
        lambdas,
        nu: None,
        objective,
        timing: TimingRecord {
            total_seconds: start.elapsed().as_secs_f64(),
            ..TimingRecord::default()
        },
    })
}

fn row_scaled_max(residual: &DVector<f64>, row_norms: &[f64]) -> f64 {
    residual
        .iter()
        .zip(row_norms)
        .map(|(r, n)| r.abs() / (1.0 + n))
        .fold(0.0, f64::max)
}

fn matrix_row_norms(parts: &[&DMatrix<f64>]) -> Vec<f64> {
    let rows = parts.first().map(|m| m.nrows()).unwrap_or(0);
    (0..rows)
        .map(|i| {
            parts
                .iter()
                .map(|m| m.row(i).iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Largest row-scaled KKT residual of a candidate solution:
/// `max_i |r_i| / (1 + ||row_i||)` over every stationarity, dynamics,
/// initial, and terminal equation.
pub fn kkt_residual(p: &MpcProblem, sol: &NewtonSolution) -> f64 {
    let n = p.horizon();
    let mut worst = 0.0_f64;

    // initial constraint
    let r0 = &sol.xs[0] - &p.x_bar;
    worst = worst.max(
        r0.iter()
            .zip(p.x_bar.iter())
            .map(|(r, b)| r.abs() / (2.0 + b.abs()))
            .fold(0.0, f64::max),
    );

    for (t, s) in p.stages.iter().enumerate() {
        let at = s.A.transpose();
        let bt = s.B.transpose();
        let hxut = s.Hxu.transpose();

        let stat_x = &s.Hx * &sol.xs[t] + &s.Hxu * &sol.us[t] + &s.fx - &sol.lambdas[t]
            + &at * &sol.lambdas[t + 1];
        let norms = matrix_row_norms(&[&s.Hx, &s.Hxu, &at]);
        worst = worst.max(row_scaled_max(&stat_x, &norms));

        if s.nu() > 0 {
            let stat_u =
                &hxut * &sol.xs[t] + &s.Hu * &sol.us[t] + &s.fu + &bt * &sol.lambdas[t + 1];
            let norms = matrix_row_norms(&[&hxut, &s.Hu, &bt]);
            worst = worst.max(row_scaled_max(&stat_u, &norms));
        }

        let dyn_r = &s.A * &sol.xs[t] + &s.B * &sol.us[t] + &s.a - &sol.xs[t + 1];
        let norms = matrix_row_norms(&[&s.A, &s.B]);
        worst = worst.max(row_scaled_max(&dyn_r, &norms));
    }

    let term = &p.HN * &sol.xs[n] + &p.fN - &sol.lambdas[n];
    let norms = matrix_row_norms(&[&p.HN]);
    worst = worst.max(row_scaled_max(&term, &norms));

    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{generate_random_stable, Stage};

    /// Horizon-1 scalar problem: A=1, B=1, a=0, Hx=Hu=HN=1, f=0, x_bar=1.
    /// By hand: u* = -1/2, x_1 = 1/2, objective 3/4, lambda_0 = 3/2,
    /// lambda_1 = 1/2.
    pub(crate) fn scalar_instance() -> MpcProblem {
        MpcProblem {
            stages: vec![Stage {
                A: DMatrix::from_element(1, 1, 1.0),
                B: DMatrix::from_element(1, 1, 1.0),
                a: DVector::zeros(1),
                Hx: DMatrix::from_element(1, 1, 1.0),
                Hxu: DMatrix::zeros(1, 1),
                Hu: DMatrix::from_element(1, 1, 1.0),
                fx: DVector::zeros(1),
                fu: DVector::zeros(1),
                c: 0.0,
            }],
            HN: DMatrix::from_element(1, 1, 1.0),
            fN: DVector::zeros(1),
            cN: 0.0,
            x_bar: DVector::from_element(1, 1.0),
        }
    }

    fn assert_scalar_solution(sol: &NewtonSolution) {
        assert!((sol.us[0][0] - (-0.5)).abs() < 1e-12);
        assert!((sol.xs[1][0] - 0.5).abs() < 1e-12);
        assert!((sol.objective - 0.75).abs() < 1e-12);
        assert!((sol.lambdas[0][0] - 1.5).abs() < 1e-12);
        assert!((sol.lambdas[1][0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn riccati_matches_hand_solution() {
        let sol = riccati_solve(&scalar_instance()).unwrap();
        assert_scalar_solution(&sol);
    }

    #[test]
    fn oracle_matches_hand_solution() {
        let sol = dense_kkt_oracle(&scalar_instance()).unwrap();
        assert_scalar_solution(&sol);
    }

    #[test]
    fn unforced_zero_problem_is_zero() {
        let mut p = generate_random_stable(1, 3, 2, 6, 0.9).unwrap();
        p.x_bar = DVector::zeros(3);
        for s in &mut p.stages {
            s.a = DVector::zeros(3);
            s.fx = DVector::zeros(3);
            s.fu = DVector::zeros(2);
        }
        p.fN = DVector::zeros(3);
        let sol = riccati_solve(&p).unwrap();
        for x in &sol.xs {
            assert!(x.abs().max() < 1e-14);
        }
        for u in &sol.us {
            assert!(u.abs().max() < 1e-14);
        }
        for l in &sol.lambdas {
            assert!(l.abs().max() < 1e-14);
        }
    }

    #[test]
    fn riccati_agrees_with_oracle() {
        let p = generate_random_stable(42, 6, 3, 40, 0.95).unwrap();
        let r = riccati_solve(&p).unwrap();
        let o = dense_kkt_oracle(&p).unwrap();
        let scale = 1.0 + o.stacked_primal().abs().max();
        let dp = (r.stacked_primal() - o.stacked_primal()).abs().max();
        let dd = (r.stacked_dual() - o.stacked_dual()).abs().max();
        assert!(dp / scale < 1e-9, "primal mismatch {dp:.3e}");
        assert!(dd / scale < 1e-9, "dual mismatch {dd:.3e}");
    }

    #[test]
    fn oracle_residual_is_tiny() {
        let p = generate_random_stable(7, 4, 2, 12, 0.9).unwrap();
        let sol = dense_kkt_oracle(&p).unwrap();
        assert!(kkt_residual(&p, &sol) < 1e-10);
    }

    #[test]
    fn perturbed_duals_raise_residual() {
        let p = generate_random_stable(8, 4, 2, 12, 0.9).unwrap();
        let mut sol = dense_kkt_oracle(&p).unwrap();
        sol.lambdas[3][0] += 1e-3;
        assert!(kkt_residual(&p, &sol) >= 1e-4);
    }

    #[test]
    fn zero_solution_residual_tracks_linear_term() {
        let p = scalar_instance();
        let mut zero = dense_kkt_oracle(&p).unwrap();
        for x in &mut zero.xs {
            x.fill(0.0);
        }
        for u in &mut zero.us {
            u.fill(0.0);
        }
        for l in &mut zero.lambdas {
            l.fill(0.0);
        }
        // with f = 0 and x_bar = 1 the worst equation is the initial
        // constraint; make f nonzero and check it dominates
        let mut p2 = p.clone();
        p2.x_bar[0] = 0.0;
        p2.stages[0].fx[0] = 0.7;
        let res = kkt_residual(&p2, &zero);
        assert!((res - 0.7 / (1.0 + (2.0f64).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn riccati_handles_zero_input_stages() {
        let mut p = generate_random_stable(5, 3, 2, 4, 0.9).unwrap();
        // replace one stage with a zero-input stage
        let s = &mut p.stages[1];
        s.B = DMatrix::zeros(3, 0);
        s.Hxu = DMatrix::zeros(3, 0);
        s.Hu = DMatrix::zeros(0, 0);
        s.fu = DVector::zeros(0);
        let r = riccati_solve(&p).unwrap();
        let o = dense_kkt_oracle(&p).unwrap();
        let d = (r.stacked_primal() - o.stacked_primal()).abs().max();
        assert!(d < 1e-9);
        assert_eq!(r.us[1].len(), 0);
    }
}
