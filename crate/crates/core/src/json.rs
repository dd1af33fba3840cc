//! On-disk JSON formats for problems and solutions.
//!
//! Matrices are row-major nested arrays of numbers. A problem document has
//! the shape
//!
//! ```text
//! {
//!   "N": 2, "nx": 1, "x_bar": [1.0],
//!   "stages": [ {"A": [[1.0]], "B": [[1.0]], "a": [0.0],
//!                "Hx": [[1.0]], "Hxu": [[0.0]], "Hu": [[1.0]],
//!                "fx": [0.0], "fu": [0.0], "c": 0.0}, ... ],
//!   "HN": [[1.0]], "fN": [0.0], "cN": 0.0
//! }
//! ```
//!
//! Box-constrained problems add `"u_min"`/`"u_max"` per stage, and an active
//! set is a top-level `"active": [{"t": 0, "j": 1, "side": "upper"}]` list.

use crate::error::{Result, SolveError};
use crate::parametric::{CompactSubproblem, ParametricSolution};
use crate::problem::{ActiveSet, BoundSide, BoxMpcProblem, MpcProblem, Stage};
use crate::solution::NewtonSolution;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(SolveError::DimensionMismatch(format!(
            "{what}: ragged matrix rows"
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct StageJson {
    pub A: Vec<Vec<f64>>,
    pub B: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    pub Hx: Vec<Vec<f64>>,
    pub Hxu: Vec<Vec<f64>>,
    pub Hu: Vec<Vec<f64>>,
    pub fx: Vec<f64>,
    pub fu: Vec<f64>,
    pub c: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_min: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_max: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideJson {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActiveEntryJson {
    pub t: usize,
    pub j: usize,
    pub side: SideJson,
}

/// Top-level problem document; box bounds and the active set are optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ProblemJson {
    pub N: usize,
    pub nx: usize,
    pub x_bar: Vec<f64>,
    pub stages: Vec<StageJson>,
    pub HN: Vec<Vec<f64>>,
    pub fN: Vec<f64>,
    pub cN: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub active: Option<Vec<ActiveEntryJson>>,
}

impl ProblemJson {
    pub fn from_problem(p: &MpcProblem) -> Self {
        ProblemJson {
            N: p.horizon(),
            nx: p.nx(),
            x_bar: p.x_bar.iter().copied().collect(),
            stages: p
                .stages
                .iter()
                .map(|s| StageJson {
                    A: matrix_to_rows(&s.A),
                    B: matrix_to_rows(&s.B),
                    a: s.a.iter().copied().collect(),
                    Hx: matrix_to_rows(&s.Hx),
                    Hxu: matrix_to_rows(&s.Hxu),
                    Hu: matrix_to_rows(&s.Hu),
                    fx: s.fx.iter().copied().collect(),
                    fu: s.fu.iter().copied().collect(),
                    c: s.c,
                    u_min: None,
                    u_max: None,
                })
                .collect(),
            HN: matrix_to_rows(&p.HN),
            fN: p.fN.iter().copied().collect(),
            cN: p.cN,
            active: None,
        }
    }

    pub fn from_box_problem(p: &BoxMpcProblem, active: Option<&ActiveSet>) -> Self {
        let mut doc = Self::from_problem(&p.base);
        for (t, stage) in doc.stages.iter_mut().enumerate() {
            stage.u_min = Some(p.u_min[t].iter().copied().collect());
            stage.u_max = Some(p.u_max[t].iter().copied().collect());
        }
        doc.active = active.map(|set| {
            set.entries
                .iter()
                .enumerate()
                .flat_map(|(t, entries)| {
                    entries.iter().map(move |&(j, side)| ActiveEntryJson {
                        t,
                        j,
                        side: match side {
                            BoundSide::Lower => SideJson::Lower,
                            BoundSide::Upper => SideJson::Upper,
                        },
                    })
                })
                .collect()
        });
        doc
    }

    /// Convert to the in-memory problem, checking declared dimensions.
    pub fn to_problem(&self) -> Result<MpcProblem> {
        if self.stages.len() != self.N {
            return Err(SolveError::DimensionMismatch(format!(
                "document declares N = {} but has {} stages",
                self.N,
                self.stages.len()
            )));
        }
        if self.x_bar.len() != self.nx {
            return Err(SolveError::DimensionMismatch(format!(
                "x_bar has length {}, document declares nx = {}",
                self.x_bar.len(),
                self.nx
            )));
        }
        let stages = self
            .stages
            .iter()
            .enumerate()
            .map(|(t, s)| {
                Ok(Stage {
                    A: rows_to_matrix(&s.A, &format!("stage {t} A"))?,
                    B: rows_to_matrix(&s.B, &format!("stage {t} B"))?,
                    a: DVector::from_vec(s.a.clone()),
                    Hx: rows_to_matrix(&s.Hx, &format!("stage {t} Hx"))?,
                    Hxu: rows_to_matrix(&s.Hxu, &format!("stage {t} Hxu"))?,
                    Hu: rows_to_matrix(&s.Hu, &format!("stage {t} Hu"))?,
                    fx: DVector::from_vec(s.fx.clone()),
                    fu: DVector::from_vec(s.fu.clone()),
                    c: s.c,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MpcProblem {
            stages,
            HN: rows_to_matrix(&self.HN, "HN")?,
            fN: DVector::from_vec(self.fN.clone()),
            cN: self.cN,
            x_bar: DVector::from_vec(self.x_bar.clone()),
        })
    }

    pub fn has_bounds(&self) -> bool {
        self.stages
            .iter()
            .any(|s| s.u_min.is_some() || s.u_max.is_some())
    }

    /// Convert to a box problem; stages without explicit bounds get
    /// unbounded ones.
    pub fn to_box_problem(&self) -> Result<BoxMpcProblem> {
        let base = self.to_problem()?;
        let mut u_min = Vec::with_capacity(base.horizon());
        let mut u_max = Vec::with_capacity(base.horizon());
        for (t, s) in self.stages.iter().enumerate() {
            let nu = base.nu(t);
            let lo = match &s.u_min {
                Some(v) if v.len() == nu => DVector::from_vec(v.clone()),
                Some(v) => {
                    return Err(SolveError::DimensionMismatch(format!(
                        "stage {t}: u_min has length {}, expected {nu}",
                        v.len()
                    )))
                }
                None => DVector::from_element(nu, f64::NEG_INFINITY),
            };
            let hi = match &s.u_max {
                Some(v) if v.len() == nu => DVector::from_vec(v.clone()),
                Some(v) => {
                    return Err(SolveError::DimensionMismatch(format!(
                        "stage {t}: u_max has length {}, expected {nu}",
                        v.len()
                    )))
                }
                None => DVector::from_element(nu, f64::INFINITY),
            };
            u_min.push(lo);
            u_max.push(hi);
        }
        Ok(BoxMpcProblem { base, u_min, u_max })
    }

    /// Extract the active set, if any.
    pub fn to_active_set(&self) -> Result<Option<ActiveSet>> {
        let Some(entries) = &self.active else {
            return Ok(None);
        };
        let mut set = ActiveSet::empty(self.N);
        for e in entries {
            if e.t >= self.N {
                return Err(SolveError::DimensionMismatch(format!(
                    "active entry stage {} out of range (N = {})",
                    e.t, self.N
                )));
            }
            let side = match e.side {
                SideJson::Lower => BoundSide::Lower,
                SideJson::Upper => BoundSide::Upper,
            };
            set.entries[e.t].push((e.j, side));
        }
        Ok(Some(set))
    }
}

/// Solution document written by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct SolutionJson {
    pub N: usize,
    pub nx: usize,
    pub objective: f64,
    pub kkt_residual: f64,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<Vec<f64>>>,
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim_parallel_seconds: Option<f64>,
}

impl SolutionJson {
    pub fn from_solution(sol: &NewtonSolution, residual: f64, sim_parallel: Option<f64>) -> Self {
        SolutionJson {
            N: sol.us.len(),
            nx: sol.xs.first().map_or(0, DVector::len),
            objective: sol.objective,
            kkt_residual: residual,
            x: sol.xs.iter().map(|v| v.iter().copied().collect()).collect(),
            u: sol.us.iter().map(|v| v.iter().copied().collect()).collect(),
            lambda: sol
                .lambdas
                .iter()
                .map(|v| v.iter().copied().collect())
                .collect(),
            nu: sol
                .nu
                .as_ref()
                .map(|nu| nu.iter().map(|v| v.iter().copied().collect()).collect()),
            wall_seconds: sol.timing.total_seconds,
            sim_parallel_seconds: sim_parallel,
        }
    }
}

impl CompactSubproblem {
    /// Diagnostic dump in the matrix format of the problem documents.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "Ni": self.layout.ni,
            "is_last": self.is_last(),
            "Hbar": matrix_to_rows(&self.Hbar),
            "fbar": self.fbar.iter().copied().collect::<Vec<_>>(),
            "cbar": self.cbar,
            "Ae": matrix_to_rows(&self.Ae),
            "be": self.be.iter().copied().collect::<Vec<_>>(),
            "Ge": matrix_to_rows(&self.Ge),
            "n_theta": self.n_theta,
        })
    }
}

impl ParametricSolution {
    /// Diagnostic dump in the matrix format of the problem documents.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "Kx": matrix_to_rows(&self.Kx),
            "kx": self.kx.iter().copied().collect::<Vec<_>>(),
            "Kl": matrix_to_rows(&self.Kl),
            "kl": self.kl.iter().copied().collect::<Vec<_>>(),
            "Hhat": matrix_to_rows(&self.Hhat),
            "fhat": self.fhat.iter().copied().collect::<Vec<_>>(),
            "chat": self.chat,
            "degenerate": self.degenerate,
            "controllability_rank": self.ctrl.rank,
        })
    }
}

/// Parse a problem document from JSON text.
pub fn parse_problem(text: &str) -> std::result::Result<ProblemJson, serde_json::Error> {
    serde_json::from_str(text)
}
