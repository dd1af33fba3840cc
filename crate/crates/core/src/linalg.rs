//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Singular value decomposition with descending singular values and a
/// rank decision attached.
pub struct RankedSvd {
    /// Left singular vectors, one column per singular value.
    pub u: DMatrix<f64>,
    /// Right singular vectors, one column per singular value.
    pub v: DMatrix<f64>,
    /// Singular values, descending.
    pub sigma: Vec<f64>,
    /// Numerical rank under [`rank_tol`].
    pub rank: usize,
}

/// Rank tolerance used for every rank decision in the crate:
/// a singular value is kept iff `sigma > 1e-10 * sigma_max * max(rows, cols)`.
pub fn rank_tol(sigma_max: f64, rows: usize, cols: usize) -> f64 {
    1e-10 * sigma_max * rows.max(cols) as f64
}

impl RankedSvd {
    /// Factor by one-sided Jacobi rotations. The matrices decomposed here
    /// are small (block-sized), and the decomposition feeds rank decisions
    /// and null-space bases where silent inaccuracy is not acceptable, so a
    /// simple method with excellent accuracy wins over a faster one.
    pub fn new(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        if rows == 0 || cols == 0 {
            return RankedSvd {
                u: DMatrix::zeros(rows, 0),
                v: DMatrix::zeros(cols, 0),
                sigma: Vec::new(),
                rank: 0,
            };
        }
        let (u, sigma, v) = jacobi_svd(m);
        let tol = rank_tol(sigma.first().copied().unwrap_or(0.0), rows, cols);
        let rank = sigma.iter().filter(|&&s| s > tol).count();
        RankedSvd { u, v, sigma, rank }
    }

    /// Apply the pseudoinverse: `x = V Σ⁺ Uᵀ b` (minimum-norm least squares).
    pub fn pinv_apply(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let ur = self.u.columns(0, self.rank);
        let vr = self.v.columns(0, self.rank);
        let mut y = ur.transpose() * b;
        for i in 0..self.rank {
            let inv = 1.0 / self.sigma[i];
            y.row_mut(i).scale_mut(inv);
        }
        vr * y
    }

    /// Apply the pseudoinverse of the transpose: `x = U Σ⁺ Vᵀ b`.
    pub fn pinv_t_apply(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let ur = self.u.columns(0, self.rank);
        let vr = self.v.columns(0, self.rank);
        let mut y = vr.transpose() * b;
        for i in 0..self.rank {
            let inv = 1.0 / self.sigma[i];
            y.row_mut(i).scale_mut(inv);
        }
        ur * y
    }

    /// Orthonormal basis of the row space (first `rank` right vectors).
    pub fn row_space(&self) -> DMatrix<f64> {
        self.v.columns(0, self.rank).into_owned()
    }

    /// Orthonormal basis of the range (first `rank` left vectors).
    pub fn range(&self) -> DMatrix<f64> {
        self.u.columns(0, self.rank).into_owned()
    }
}

/// One-sided Jacobi SVD: orthogonalize the columns of the working matrix by
/// plane rotations accumulated into `V`; the surviving column norms are the
/// singular values. Returns `(U, sigma, V)` with `sigma` descending and one
/// `U`/`V` column per singular value (columns of `U` belonging to zero
/// singular values are zero and never used by callers).
fn jacobi_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (rows, cols) = m.shape();
    if rows < cols {
        let (u, sigma, v) = jacobi_svd(&m.transpose());
        return (v, sigma, u);
    }

    let mut w = m.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    for _sweep in 0..60 {
        let mut worst = 0.0_f64;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..rows {
                    let a = w[(i, p)];
                    let b = w[(i, q)];
                    alpha += a * a;
                    beta += b * b;
                    gamma += a * b;
                }
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let rel = gamma.abs() / (alpha * beta).sqrt();
                worst = worst.max(rel);
                if rel <= 1e-15 {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let a = w[(i, p)];
                    let b = w[(i, q)];
                    w[(i, p)] = c * a - s * b;
                    w[(i, q)] = s * a + c * b;
                }
                for i in 0..cols {
                    let a = v[(i, p)];
                    let b = v[(i, q)];
                    v[(i, p)] = c * a - s * b;
                    v[(i, q)] = s * a + c * b;
                }
            }
        }
        if worst <= 1e-14 {
            break;
        }
    }

    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols).map(|j| w.column(j).norm()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let mut u_out = DMatrix::<f64>::zeros(rows, cols);
    let mut v_out = DMatrix::<f64>::zeros(cols, cols);
    let mut sigma = Vec::with_capacity(cols);
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        sigma.push(s);
        if s > 0.0 {
            u_out.set_column(k, &(w.column(j) / s));
        }
        v_out.set_column(k, &v.column(j));
    }
    (u_out, sigma, v_out)
}

/// Extend an orthonormal set of columns `q` (dim × k) to an orthonormal basis
/// of the full space, returning the dim × (dim − k) complement.
///
/// Pivoted Gram-Schmidt over the canonical basis: each round projects every
/// remaining canonical vector onto the orthogonal complement of the current
/// basis and adopts the one with the largest residual. The largest residual
/// norm is always at least `sqrt((dim - len) / dim)`, so the completion
/// never stalls and stays well conditioned.
pub fn orthonormal_complement(q: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = q.nrows();
    let k = q.ncols();
    let mut basis: Vec<DVector<f64>> = (0..k).map(|j| q.column(j).into_owned()).collect();
    let mut extra: Vec<DVector<f64>> = Vec::with_capacity(dim - k);
    while basis.len() < dim {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for e in 0..dim {
            let mut cand = DVector::zeros(dim);
            cand[e] = 1.0;
            for b in &basis {
                let dot = b.dot(&cand);
                cand.axpy(-dot, b, 1.0);
            }
            let norm = cand.norm();
            if best.as_ref().is_none_or(|(n, _)| norm > *n) {
                best = Some((norm, cand));
            }
        }
        let (norm, mut cand) = best.expect("dim > 0");
        assert!(norm > 1e-8, "orthonormal completion lost rank");
        cand /= norm;
        // one re-orthogonalization pass for stability
        for b in &basis {
            let dot = b.dot(&cand);
            cand.axpy(-dot, b, 1.0);
        }
        cand /= cand.norm();
        basis.push(cand.clone());
        extra.push(cand);
    }
    let mut out = DMatrix::zeros(dim, dim - k);
    for (j, col) in extra.iter().enumerate() {
        out.set_column(j, col);
    }
    out
}

/// Smallest eigenvalue of a symmetric matrix (0 for an empty matrix).
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Spectral norm (largest singular value); 0 for empty matrices.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Positive-definiteness test via an attempted Cholesky factorization of
/// `m − tol·I`; `tol` should scale with the matrix norm.
pub fn is_positive_definite(m: &DMatrix<f64>, tol: f64) -> bool {
    let n = m.nrows();
    if n == 0 {
        return true; // empty block imposes no condition
    }
    let shifted = m - DMatrix::<f64>::identity(n, n) * tol;
    nalgebra::Cholesky::new(shifted).is_some()
}

/// Positive-semidefiniteness test: smallest eigenvalue at least `-tol`.
pub fn is_positive_semidefinite(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    min_symmetric_eigenvalue(m) >= -tol
}

/// Max-norm of the symmetry defect `m − mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}
