//! Shared test oracles, kept independent of the library's solve paths.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use parmpc::problem::{ActiveSet, BoundSide, BoxMpcProblem, MpcProblem, Stage};

/// Solve `min 1/2 X'HX + f'X  s.t.  AX = b` through the pseudoinverse of the
/// full KKT matrix. Works for rank-deficient `A` as long as the system is
/// consistent, returning the unique primal and the minimum-norm dual. This
/// route shares no code with the parametric solver.
pub fn kkt_pinv_solve(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let n = h.nrows();
    let m = a.nrows();
    let dim = n + m;
    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    kkt.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(a);
    let mut rhs = DVector::<f64>::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-f));
    rhs.rows_mut(n, m).copy_from(b);

    let svd = kkt.svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-11 * svd.singular_values.max())
        .expect("SVD solve");
    (sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned())
}

/// Objective of `min 1/2 X'HX + f'X + c` at a point.
pub fn quad_objective(h: &DMatrix<f64>, f: &DVector<f64>, c: f64, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(h * x)) + f.dot(x) + c
}

/// Dense solve of the full box problem with the active bounds imposed as
/// equality constraints. Returns states, full inputs, dynamics multipliers,
/// and the multipliers of the active-bound rows, in active-set order per
/// stage.
pub struct ConstrainedSolution {
    pub xs: Vec<DVector<f64>>,
    pub us: Vec<DVector<f64>>,
    pub lambdas: Vec<DVector<f64>>,
    pub bound_duals: Vec<DVector<f64>>,
}

pub fn solve_box_with_active_equalities(
    p: &BoxMpcProblem,
    active: &ActiveSet,
) -> ConstrainedSolution {
    let base = &p.base;
    let n = base.horizon();
    let nx = base.nx();

    let mut x_off = Vec::with_capacity(n + 1);
    let mut u_off = Vec::with_capacity(n);
    let mut at = 0;
    for t in 0..n {
        x_off.push(at);
        at += nx;
        u_off.push(at);
        at += base.nu(t);
    }
    x_off.push(at);
    let n_var = at + nx;

    let n_active: usize = active.entries.iter().map(Vec::len).sum();
    let n_con = (n + 1) * nx + n_active;

    let mut h = DMatrix::<f64>::zeros(n_var, n_var);
    let mut f = DVector::<f64>::zeros(n_var);
    for (t, s) in base.stages.iter().enumerate() {
        let nu = s.nu();
        h.view_mut((x_off[t], x_off[t]), (nx, nx)).copy_from(&s.Hx);
        h.view_mut((x_off[t], u_off[t]), (nx, nu)).copy_from(&s.Hxu);
        h.view_mut((u_off[t], x_off[t]), (nu, nx))
            .copy_from(&s.Hxu.transpose());
        h.view_mut((u_off[t], u_off[t]), (nu, nu)).copy_from(&s.Hu);
        f.rows_mut(x_off[t], nx).copy_from(&s.fx);
        f.rows_mut(u_off[t], nu).copy_from(&s.fu);
    }
    h.view_mut((x_off[n], x_off[n]), (nx, nx))
        .copy_from(&base.HN);
    f.rows_mut(x_off[n], nx).copy_from(&base.fN);

    let mut a_mat = DMatrix::<f64>::zeros(n_con, n_var);
    let mut b = DVector::<f64>::zeros(n_con);
    for i in 0..nx {
        a_mat[(i, x_off[0] + i)] = -1.0;
        b[i] = -base.x_bar[i];
    }
    for (t, s) in base.stages.iter().enumerate() {
        let row = (t + 1) * nx;
        a_mat.view_mut((row, x_off[t]), (nx, nx)).copy_from(&s.A);
        a_mat
            .view_mut((row, u_off[t]), (nx, s.nu()))
            .copy_from(&s.B);
        for i in 0..nx {
            a_mat[(row + i, x_off[t + 1] + i)] = -1.0;
        }
        b.rows_mut(row, nx).copy_from(&(-&s.a));
    }
    let mut row = (n + 1) * nx;
    for (t, entries) in active.entries.iter().enumerate() {
        for &(j, side) in entries {
            a_mat[(row, u_off[t] + j)] = 1.0;
            b[row] = match side {
                BoundSide::Lower => p.u_min[t][j],
                BoundSide::Upper => p.u_max[t][j],
            };
            row += 1;
        }
    }

    let dim = n_var + n_con;
    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    kkt.view_mut((0, 0), (n_var, n_var)).copy_from(&h);
    kkt.view_mut((0, n_var), (n_var, n_con))
        .copy_from(&a_mat.transpose());
    kkt.view_mut((n_var, 0), (n_con, n_var)).copy_from(&a_mat);
    let mut rhs = DVector::<f64>::zeros(dim);
    rhs.rows_mut(0, n_var).copy_from(&(-&f));
    rhs.rows_mut(n_var, n_con).copy_from(&b);
    let sol = kkt
        .lu()
        .solve(&rhs)
        .expect("constrained KKT is nonsingular");

    let xs = (0..=n)
        .map(|t| sol.rows(x_off[t], nx).into_owned())
        .collect();
    let us = (0..n)
        .map(|t| sol.rows(u_off[t], base.nu(t)).into_owned())
        .collect();
    let lambdas = (0..=n)
        .map(|t| sol.rows(n_var + t * nx, nx).into_owned())
        .collect();
    let mut bound_duals = Vec::with_capacity(n);
    let mut row = n_var + (n + 1) * nx;
    for entries in &active.entries {
        let k = entries.len();
        bound_duals.push(sol.rows(row, k).into_owned());
        row += k;
    }

    ConstrainedSolution {
        xs,
        us,
        lambdas,
        bound_duals,
    }
}

/// Assemble the dense KKT matrix `[[H, A'], [A, 0]]` of a plain problem with
/// the same layout and sign conventions as the solvers use.
pub fn plain_kkt(p: &MpcProblem) -> DMatrix<f64> {
    let n = p.horizon();
    let nx = p.nx();
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
    let n_var = at + nx;
    let n_con = (n + 1) * nx;
    let dim = n_var + n_con;

    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
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
    }
    kkt.view_mut((x_off[n], x_off[n]), (nx, nx))
        .copy_from(&p.HN);
    for i in 0..nx {
        kkt[(n_var + i, x_off[0] + i)] = -1.0;
        kkt[(x_off[0] + i, n_var + i)] = -1.0;
    }
    for (t, s) in p.stages.iter().enumerate() {
        let row = n_var + (t + 1) * nx;
        kkt.view_mut((row, x_off[t]), (nx, nx)).copy_from(&s.A);
        kkt.view_mut((row, u_off[t]), (nx, s.nu())).copy_from(&s.B);
        kkt.view_mut((x_off[t], row), (nx, nx))
            .copy_from(&s.A.transpose());
        kkt.view_mut((u_off[t], row), (s.nu(), nx))
            .copy_from(&s.B.transpose());
        for i in 0..nx {
            kkt[(row + i, x_off[t + 1] + i)] = -1.0;
            kkt[(x_off[t + 1] + i, row + i)] = -1.0;
        }
    }
    kkt
}

/// Two-sided power-iteration estimate of the 2-norm condition number of the
/// KKT matrix. The matrix is symmetric, so its singular values are the
/// absolute eigenvalues; both extreme ones are estimated from below, which
/// makes the estimate a slight underestimate of the true condition number.
pub fn kkt_condition_estimate(p: &MpcProblem) -> f64 {
    let kkt = plain_kkt(p);
    let dim = kkt.nrows();
    let lu = kkt.clone().lu();

    let start = |salt: u64| {
        DVector::<f64>::from_fn(dim, |i, _| {
            let h = (i as u64)
                .wrapping_mul(6364136223846793005)
                .wrapping_add(salt);
            ((h >> 33) as f64 / (u32::MAX as f64)) * 2.0 - 1.0
        })
        .normalize()
    };

    let mut v = start(1442695040888963407);
    let mut sigma_max = 0.0;
    for _ in 0..60 {
        v = &kkt * v;
        sigma_max = v.norm();
        v /= sigma_max;
    }

    let mut w = start(88172645463325252);
    let mut inv_sigma_min = 0.0;
    for _ in 0..60 {
        w = lu.solve(&w).expect("KKT matrix is nonsingular");
        inv_sigma_min = w.norm();
        w /= inv_sigma_min;
    }

    sigma_max * inv_sigma_min
}

/// A random box-constrained instance with a random feasible active set;
/// every stage keeps at least one free input.
pub fn random_box_instance(
    seed: u64,
    nx: usize,
    nu: usize,
    horizon: usize,
    activation: f64,
) -> (BoxMpcProblem, ActiveSet) {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    let base = parmpc::problem::generate_random_stable(seed, nx, nu, horizon, 0.9).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7919));
    let u_min = base
        .stages
        .iter()
        .map(|s| DVector::from_fn(s.nu(), |_, _| rng.random_range(-1.5..-0.5)))
        .collect::<Vec<_>>();
    let u_max = base
        .stages
        .iter()
        .map(|s| DVector::from_fn(s.nu(), |_, _| rng.random_range(0.5..1.5)))
        .collect::<Vec<_>>();
    let mut active = ActiveSet::empty(horizon);
    for t in 0..horizon {
        for j in 0..nu {
            if active.entries[t].len() + 1 >= nu {
                break;
            }
            if rng.random_range(0.0..1.0) < activation {
                let side = if rng.random_range(0.0..1.0) < 0.5 {
                    BoundSide::Lower
                } else {
                    BoundSide::Upper
                };
                active.entries[t].push((j, side));
            }
        }
    }
    (BoxMpcProblem { base, u_min, u_max }, active)
}

/// The hand-solved scalar instance: horizon 1 with unit data and x_bar = 1.
pub fn scalar_instance() -> MpcProblem {
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

/// Relative max-norm error of a candidate against a reference.
pub fn rel_err(candidate: &DVector<f64>, reference: &DVector<f64>) -> f64 {
    (candidate - reference).abs().max() / (1.0 + reference.abs().max())
}

/// Max relative error over the stacked primal and dual of two solutions.
pub fn solution_rel_err(a: &parmpc::NewtonSolution, b: &parmpc::NewtonSolution) -> f64 {
    rel_err(&a.stacked_primal(), &b.stacked_primal())
        .max(rel_err(&a.stacked_dual(), &b.stacked_dual()))
}
