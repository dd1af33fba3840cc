//! Random stable test instances.

use super::{MpcProblem, Stage};
use crate::error::{Result, SolveError};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Regularization added to the `Hu` block of each random stage Hessian so the
/// input block is positive definite with a known margin.
const HU_SHIFT: f64 = 0.01;

fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn uniform_vector<R: Rng>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-1.0..1.0))
}

/// Generate a deterministic random MPC problem whose dynamics are stable.
///
/// Every `A_t` is drawn with uniform entries and rescaled so its spectral
/// norm equals `spectral_bound < 1`, which bounds the norm of any product of
/// transition matrices and hence keeps the time-varying system stable. Stage
/// Hessians are built as `M' M` (entries of `M` uniform in [-1, 1]) with a
/// small shift added to the input block, so they satisfy the solvability
/// assumptions with margin. Affine and linear terms are uniform in [-1, 1].
///
/// The same seed always produces the same problem.
pub fn generate_random_stable(
    seed: u64,
    nx: usize,
    nu: usize,
    horizon: usize,
    spectral_bound: f64,
) -> Result<MpcProblem> {
    if nx == 0 || nu == 0 || horizon == 0 {
        return Err(SolveError::InvalidParameter(
            "dimensions and horizon must be positive".into(),
        ));
    }
    if !(spectral_bound > 0.0 && spectral_bound < 1.0) {
        return Err(SolveError::InvalidParameter(format!(
            "spectral bound must lie in (0, 1), got {spectral_bound}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stages = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let raw = uniform_matrix(&mut rng, nx, nx);
        let norm = crate::linalg::spectral_norm(&raw);
        let a_mat = if norm > 0.0 {
            raw * (spectral_bound / norm)
        } else {
            raw
        };
        let b_mat = uniform_matrix(&mut rng, nx, nu);
        let a_vec = uniform_vector(&mut rng, nx);

        let m = uniform_matrix(&mut rng, nx + nu, nx + nu);
        let mut h = m.transpose() * &m;
        for i in 0..nu {
            h[(nx + i, nx + i)] += HU_SHIFT;
        }
        let hx = h.view((0, 0), (nx, nx)).into_owned();
        let hxu = h.view((0, nx), (nx, nu)).into_owned();
        let hu = h.view((nx, nx), (nu, nu)).into_owned();

        stages.push(Stage {
            A: a_mat,
            B: b_mat,
            a: a_vec,
            Hx: hx,
            Hxu: hxu,
            Hu: hu,
            fx: uniform_vector(&mut rng, nx),
            fu: uniform_vector(&mut rng, nu),
            c: rng.random_range(-1.0..1.0),
        });
    }

    let m = uniform_matrix(&mut rng, nx, nx);
    let hn = m.transpose() * &m;
    Ok(MpcProblem {
        stages,
        HN: hn,
        fN: uniform_vector(&mut rng, nx),
        cN: rng.random_range(-1.0..1.0),
        x_bar: uniform_vector(&mut rng, nx),
    })
}
