//! Active-set elimination of input bounds.
//!
//! Fixing the active inputs `v_t` at their bound values turns the
//! box-constrained problem into a pure equality-constrained one with fewer
//! inputs per stage: the cross terms `Hxv v` and `Huv v` fold into the linear
//! cost, `Bv v` folds into the dynamics offset, and the quadratic/linear cost
//! of `v` itself folds into the constant. The recorded blocks allow the dual
//! variables of the eliminated bounds to be recovered from the solution of
//! the reduced problem afterwards.

use super::{
    ActiveSet, BoundSide, BoxMpcProblem, EliminationRecord, EliminationStage, MpcProblem, Stage,
};
use crate::error::{Result, SolveError};
use crate::solution::NewtonSolution;
use nalgebra::{DMatrix, DVector};

fn select_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), idx.len());
    for (k, &j) in idx.iter().enumerate() {
        out.set_column(k, &m.column(j));
    }
    out
}

fn select_block(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), cols.len());
    for (ri, &r) in rows.iter().enumerate() {
        for (ci, &c) in cols.iter().enumerate() {
            out[(ri, ci)] = m[(r, c)];
        }
    }
    out
}

fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&j| v[j]))
}

/// Fix the active inputs at their bounds and return the reduced problem
/// together with the bookkeeping needed for dual recovery.
///
/// Fails when an input appears at both bounds of the same stage or when a
/// stage would be left without free inputs.
pub fn eliminate_active_set(
    p: &BoxMpcProblem,
    active: &ActiveSet,
) -> Result<(MpcProblem, EliminationRecord)> {
    let n = p.base.horizon();
    if active.entries.len() != n || p.u_min.len() != n || p.u_max.len() != n {
        return Err(SolveError::DimensionMismatch(format!(
            "active set and bounds must cover all {n} stages"
        )));
    }

    let mut stages = Vec::with_capacity(n);
    let mut record = Vec::with_capacity(n);
    for (t, stage) in p.base.stages.iter().enumerate() {
        let nu = stage.nu();
        if p.u_min[t].len() != nu || p.u_max[t].len() != nu {
            return Err(SolveError::DimensionMismatch(format!(
                "stage {t}: bounds must have length {nu}"
            )));
        }
        if (0..nu).any(|j| p.u_min[t][j] > p.u_max[t][j]) {
            return Err(SolveError::InvalidParameter(format!(
                "stage {t}: u_min exceeds u_max"
            )));
        }

        let mut side_of: Vec<Option<BoundSide>> = vec![None; nu];
        for &(j, side) in &active.entries[t] {
            if j >= nu {
                return Err(SolveError::DimensionMismatch(format!(
                    "stage {t}: active input index {j} out of range (nu = {nu})"
                )));
            }
            match side_of[j] {
                None => side_of[j] = Some(side),
                Some(existing) if existing == side => {}
                Some(_) => {
                    return Err(SolveError::InvalidParameter(format!(
                        "stage {t}: input {j} active at both bounds"
                    )))
                }
            }
        }

        let eliminated: Vec<usize> = (0..nu).filter(|&j| side_of[j].is_some()).collect();
        let kept: Vec<usize> = (0..nu).filter(|&j| side_of[j].is_none()).collect();
        if kept.is_empty() {
            return Err(SolveError::EmptyFreeSet { stage: t });
        }

        let v = DVector::from_iterator(
            eliminated.len(),
            eliminated.iter().map(|&j| match side_of[j] {
                Some(BoundSide::Lower) => p.u_min[t][j],
                Some(BoundSide::Upper) => p.u_max[t][j],
                None => unreachable!(),
            }),
        );

        let hxv = select_columns(&stage.Hxu, &eliminated);
        let huv = select_block(&stage.Hu, &kept, &eliminated);
        let hv = select_block(&stage.Hu, &eliminated, &eliminated);
        let bv = select_columns(&stage.B, &eliminated);
        let fv = select_entries(&stage.fu, &eliminated);

        stages.push(Stage {
            A: stage.A.clone(),
            B: select_columns(&stage.B, &kept),
            a: &stage.a + &bv * &v,
            Hx: stage.Hx.clone(),
            Hxu: select_columns(&stage.Hxu, &kept),
            Hu: select_block(&stage.Hu, &kept, &kept),
            fx: &stage.fx + &hxv * &v,
            fu: select_entries(&stage.fu, &kept) + &huv * &v,
            c: stage.c + 0.5 * v.dot(&(&hv * &v)) + fv.dot(&v),
        });
        record.push(EliminationStage {
            v,
            Hxv: hxv,
            Huv: huv,
            Hv: hv,
            Bv: bv,
            fv,
            kept,
            eliminated,
        });
    }

    Ok((
        MpcProblem {
            stages,
            HN: p.base.HN.clone(),
            fN: p.base.fN.clone(),
            cN: p.base.cN,
            x_bar: p.base.x_bar.clone(),
        },
        EliminationRecord { stages: record },
    ))
}

/// Recover the dual variables of the eliminated input bounds from the
/// solution of the reduced problem:
///
/// ```text
/// nu_t = Hxv' x_t + Huv' u_t + Bv' lambda_{t+1} + fv + Hv v_t
/// ```
///
/// i.e. the stationarity residual of the full problem at the eliminated
/// coordinates.
pub fn recover_eliminated_duals(
    sol: &NewtonSolution,
    rec: &EliminationRecord,
) -> Result<Vec<DVector<f64>>> {
    let n = rec.stages.len();
    if sol.us.len() != n || sol.xs.len() != n + 1 || sol.lambdas.len() != n + 1 {
        return Err(SolveError::DimensionMismatch(format!(
            "solution covers {} stages, record covers {n}",
            sol.us.len()
        )));
    }
    let mut out = Vec::with_capacity(n);
    for (t, r) in rec.stages.iter().enumerate() {
        if r.Hxv.nrows() != sol.xs[t].len() || r.Huv.nrows() != sol.us[t].len() {
            return Err(SolveError::DimensionMismatch(format!(
                "stage {t}: record blocks do not match solution dimensions"
            )));
        }
        let nu_t = r.Hxv.transpose() * &sol.xs[t]
            + r.Huv.transpose() * &sol.us[t]
            + r.Bv.transpose() * &sol.lambdas[t + 1]
            + &r.fv
            + &r.Hv * &r.v;
        out.push(nu_t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::generate_random_stable;
    use crate::solution::TimingRecord;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn boxed(p: MpcProblem, lo: f64, hi: f64) -> BoxMpcProblem {
        let u_min = p
            .stages
            .iter()
            .map(|s| DVector::from_element(s.nu(), lo))
            .collect();
        let u_max = p
            .stages
            .iter()
            .map(|s| DVector::from_element(s.nu(), hi))
            .collect();
        BoxMpcProblem {
            base: p,
            u_min,
            u_max,
        }
    }

    #[test]
    fn empty_active_set_is_identity() {
        let p = generate_random_stable(3, 2, 2, 4, 0.9).unwrap();
        let bp = boxed(p.clone(), -1.0, 1.0);
        let (reduced, rec) = eliminate_active_set(&bp, &ActiveSet::empty(4)).unwrap();
        assert_eq!(reduced, p);
        assert!(rec.is_empty());
    }

    #[test]
    fn single_upper_bound_folds_into_dynamics() {
        let p = generate_random_stable(5, 2, 2, 3, 0.9).unwrap();
        let bp = boxed(p.clone(), -1.0, 1.0);
        let mut active = ActiveSet::empty(3);
        active.entries[0].push((1, BoundSide::Upper));
        let (reduced, rec) = eliminate_active_set(&bp, &active).unwrap();

        assert_eq!(reduced.nu(0), 1);
        assert_eq!(reduced.nu(1), 2);
        let expected_a = &p.stages[0].a + p.stages[0].B.column(1) * 1.0;
        assert!((&reduced.stages[0].a - expected_a).abs().max() < 1e-15);
        assert_eq!(rec.stages[0].eliminated, vec![1]);
        assert_eq!(rec.stages[0].kept, vec![0]);
        assert_eq!(rec.stages[0].v[0], 1.0);
    }

    #[test]
    fn reassembly_reproduces_original_blocks() {
        let p = generate_random_stable(11, 3, 3, 2, 0.9).unwrap();
        let bp = boxed(p.clone(), -0.5, 0.5);
        let mut active = ActiveSet::empty(2);
        active.entries[0].push((0, BoundSide::Lower));
        active.entries[0].push((2, BoundSide::Upper));
        active.entries[1].push((1, BoundSide::Upper));
        let (reduced, rec) = eliminate_active_set(&bp, &active).unwrap();

        for t in 0..2 {
            let r = &rec.stages[t];
            let s = &reduced.stages[t];
            let orig = &p.stages[t];
            // columns of B split across kept/eliminated reproduce B
            for (k, &j) in r.kept.iter().enumerate() {
                assert_eq!(orig.B.column(j), s.B.column(k));
                assert_eq!(orig.Hxu.column(j), s.Hxu.column(k));
            }
            for (k, &j) in r.eliminated.iter().enumerate() {
                assert_eq!(orig.B.column(j), r.Bv.column(k));
                assert_eq!(orig.Hxu.column(j), r.Hxv.column(k));
                assert_eq!(orig.fu[j], r.fv[k]);
            }
        }
    }

    #[test]
    fn objective_matches_at_lifted_points() {
        // one input held at its bound in every stage; evaluating the reduced
        // objective at any feasible point must equal the original objective
        // at the corresponding lifted point
        let p = generate_random_stable(13, 2, 3, 4, 0.9).unwrap();
        let bp = boxed(p.clone(), -2.0, 2.0);
        let mut active = ActiveSet::empty(4);
        for t in 0..4 {
            active.entries[t].push((1, BoundSide::Lower));
        }
        let (reduced, rec) = eliminate_active_set(&bp, &active).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            // random inputs for the reduced problem, states rolled out
            let us: Vec<DVector<f64>> = (0..4)
                .map(|t| DVector::from_fn(reduced.nu(t), |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let mut xs = vec![reduced.x_bar.clone()];
            for t in 0..4 {
                let s = &reduced.stages[t];
                let next = &s.A * &xs[t] + &s.B * &us[t] + &s.a;
                xs.push(next);
            }
            // lift: insert the eliminated value back into the input vector
            let us_full: Vec<DVector<f64>> = (0..4)
                .map(|t| {
                    let r = &rec.stages[t];
                    let mut u = DVector::zeros(p.nu(t));
                    for (k, &j) in r.kept.iter().enumerate() {
                        u[j] = us[t][k];
                    }
                    for (k, &j) in r.eliminated.iter().enumerate() {
                        u[j] = r.v[k];
                    }
                    u
                })
                .collect();
            let reduced_obj = reduced.objective(&xs, &us);
            let full_obj = p.objective(&xs, &us_full);
            assert!(
                (reduced_obj - full_obj).abs() <= 1e-12 * (1.0 + full_obj.abs()),
                "{reduced_obj} vs {full_obj}"
            );
        }
    }

    #[test]
    fn all_inputs_active_is_an_error() {
        let p = generate_random_stable(17, 2, 1, 2, 0.9).unwrap();
        let bp = boxed(p, -1.0, 1.0);
        let mut active = ActiveSet::empty(2);
        active.entries[1].push((0, BoundSide::Upper));
        let err = eliminate_active_set(&bp, &active).unwrap_err();
        assert!(matches!(err, SolveError::EmptyFreeSet { stage: 1 }));
    }

    #[test]
    fn conflicting_sides_rejected() {
        let p = generate_random_stable(19, 2, 2, 2, 0.9).unwrap();
        let bp = boxed(p, -1.0, 1.0);
        let mut active = ActiveSet::empty(2);
        active.entries[0].push((0, BoundSide::Upper));
        active.entries[0].push((0, BoundSide::Lower));
        assert!(matches!(
            eliminate_active_set(&bp, &active),
            Err(SolveError::InvalidParameter(_))
        ));
    }

    #[test]
    fn scalar_dual_recovery() {
        // Hxv = 0, Huv = 0, Hv = 1, fv = 0, Bv = 1, v = 2, lambda_1 = 0.5
        let rec = EliminationRecord {
            stages: vec![EliminationStage {
                v: DVector::from_element(1, 2.0),
                Hxv: DMatrix::zeros(1, 1),
                Huv: DMatrix::zeros(1, 1),
                Hv: DMatrix::from_element(1, 1, 1.0),
                Bv: DMatrix::from_element(1, 1, 1.0),
                fv: DVector::zeros(1),
                kept: vec![0],
                eliminated: vec![1],
            }],
        };
        let sol = NewtonSolution {
            xs: vec![DVector::zeros(1), DVector::zeros(1)],
            us: vec![DVector::zeros(1)],
            lambdas: vec![DVector::zeros(1), DVector::from_element(1, 0.5)],
            nu: None,
            objective: 0.0,
            timing: TimingRecord::default(),
        };
        let nu = recover_eliminated_duals(&sol, &rec).unwrap();
        assert_eq!(nu.len(), 1);
        assert!((nu[0][0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn empty_record_gives_empty_duals() {
        let rec = EliminationRecord::default();
        let sol = NewtonSolution {
            xs: vec![DVector::zeros(1)],
            us: vec![],
            lambdas: vec![DVector::zeros(1)],
            nu: None,
            objective: 0.0,
            timing: TimingRecord::default(),
        };
        let nu = recover_eliminated_duals(&sol, &rec).unwrap();
        assert!(nu.is_empty());
    }
}
