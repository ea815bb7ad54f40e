//! Linear programs of the form
//!
//! ```text
//! min  cᵀz   s.t.  A z ≤ u,   z_j ≥ 0 (non-negative) or free
//! ```
//!
//! with Lagrange dual `max -uᵀα` s.t. `c + Aᵀα ≥ 0` on non-negative
//! columns, `= 0` on free columns, `α ≥ 0`.
//!
//! [`DenseSimplex`] is the bundled solver. Any other backend can be plugged
//! in through [`LpSolver`].

mod format;
mod lu;
mod simplex;
mod subproblem;

pub use format::write_lp_format;
pub use simplex::{DenseSimplex, SimplexOptions};
pub use subproblem::{
    assemble_full_dual, assemble_subproblem, warm_start_from, KeyedBasis, MrcDualProgram,
    MrcSubproblem, VarKey, ZERO_COEFFICIENT,
};

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    NonNeg,
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    n_rows: usize,
    n_cols: usize,
    objective: Vec<f64>,
    kinds: Vec<VarKind>,
    /// Row-major `n_rows × n_cols`.
    matrix: Vec<f64>,
    rhs: Vec<f64>,
    /// For each row, an earlier row whose entries are its exact negation.
    negated: Vec<Option<usize>>,
}

impl LpProblem {
    pub fn new(
        objective: Vec<f64>,
        kinds: Vec<VarKind>,
        matrix: Vec<f64>,
        rhs: Vec<f64>,
    ) -> Result<Self> {
        let n_cols = objective.len();
        let n_rows = rhs.len();
        if kinds.len() != n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_cols,
                got: kinds.len(),
            });
        }
        if matrix.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_rows * n_cols,
                got: matrix.len(),
            });
        }
        if !objective
            .iter()
            .chain(&matrix)
            .chain(&rhs)
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidArgument("LP data must be finite".into()));
        }
        let negated = negated_rows(n_rows, n_cols, &matrix);
        Ok(LpProblem {
            n_rows,
            n_cols,
            objective,
            kinds,
            matrix,
            rhs,
            negated,
        })
    }

    /// An earlier row equal to `-aᵣ`, if any. Solvers use this to derive
    /// activities of paired rows instead of recomputing them.
    pub(crate) fn negated_row(&self, r: usize) -> Option<usize> {
        self.negated[r]
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn kinds(&self) -> &[VarKind] {
        &self.kinds
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.matrix[r * self.n_cols..(r + 1) * self.n_cols]
    }

    #[inline]
    pub fn entry(&self, r: usize, j: usize) -> f64 {
        self.matrix[r * self.n_cols + j]
    }

    pub fn objective_value(&self, z: &[f64]) -> f64 {
        self.objective.iter().zip(z).map(|(c, v)| c * v).sum()
    }

    /// `A z`.
    pub fn row_activity(&self, z: &[f64]) -> Vec<f64> {
        (0..self.n_rows)
            .map(|r| self.row(r).iter().zip(z).map(|(a, v)| a * v).sum())
            .collect()
    }

    /// Largest violation of `A z ≤ u` and of the sign constraints.
    pub fn primal_violation(&self, z: &[f64]) -> f64 {
        let act = self.row_activity(z);
        let rows = act
            .iter()
            .zip(&self.rhs)
            .map(|(a, u)| (a - u).max(0.0))
            .fold(0.0, f64::max);
        let signs = z
            .iter()
            .zip(&self.kinds)
            .filter(|(_, k)| **k == VarKind::NonNeg)
            .map(|(v, _)| (-v).max(0.0))
            .fold(0.0, f64::max);
        rows.max(signs)
    }
}

fn negated_rows(n_rows: usize, n_cols: usize, matrix: &[f64]) -> Vec<Option<usize>> {
    if n_cols == 0 {
        return vec![None; n_rows];
    }
    // -0.0 and 0.0 hash alike.
    let key = |row: &[f64], sign: f64| {
        let mut h = DefaultHasher::new();
        for &v in row {
            (sign * v + 0.0).to_bits().hash(&mut h);
        }
        h.finish()
    };
    let mut primaries: HashMap<u64, Vec<usize>> = HashMap::new();
    matrix
        .chunks_exact(n_cols)
        .enumerate()
        .map(|(r, row)| {
            let found = primaries.get(&key(row, -1.0)).and_then(|cands| {
                cands.iter().copied().find(|&q| {
                    let other = &matrix[q * n_cols..(q + 1) * n_cols];
                    row.iter().zip(other).all(|(a, b)| *a == -*b)
                })
            });
            if found.is_none() {
                primaries.entry(key(row, 1.0)).or_default().push(r);
            }
            found
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Basic structural columns and the rows whose slacks are nonbasic (tight).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Basis {
    pub columns: Vec<usize>,
    pub rows: Vec<usize>,
}

/// Starting point for a solve. When `basis` is absent the basis is inferred
/// from the support of `point` and the rows it makes tight.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub point: Vec<f64>,
    pub basis: Option<Basis>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    /// Multipliers `α ≥ 0` of the inequality rows.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub basis: Basis,
    pub iterations: usize,
    /// Objective at the first feasible basis of the optimizing phase.
    pub initial_objective: f64,
    pub warm_started: bool,
}

impl LpSolution {
    /// `-uᵀα`.
    pub fn dual_objective(&self, p: &LpProblem) -> f64 {
        -p.rhs
            .iter()
            .zip(&self.duals)
            .map(|(u, a)| u * a)
            .sum::<f64>()
    }
}

pub trait LpSolver {
    fn solve(&mut self, problem: &LpProblem, warm: Option<&WarmStart>) -> Result<LpSolution>;
}

/// Optimality residuals of a claimed solution, computed from the problem
/// data alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    /// `max(A z - u)₊` and sign violations of `z`.
    pub primal_infeasibility: f64,
    /// Violation of reduced-cost signs and of `α ≥ 0`.
    pub dual_infeasibility: f64,
    /// `max(αᵣ (u - Az)ᵣ, z_j · d_j)`.
    pub complementarity: f64,
    /// `|cᵀz - (-uᵀα)|`.
    pub duality_gap: f64,
    pub objective: f64,
}

impl Certificate {
    /// Checks all residuals with absolute tolerance `tol`; the gap is
    /// compared relative to `1 + |objective|`.
    pub fn passes(&self, tol: f64) -> bool {
        self.primal_infeasibility <= tol
            && self.dual_infeasibility <= tol
            && self.complementarity <= tol
            && self.duality_gap <= tol * (1.0 + self.objective.abs())
    }
}

pub fn certify(p: &LpProblem, z: &[f64], alpha: &[f64]) -> Certificate {
    let act = p.row_activity(z);
    let primal_infeasibility = p.primal_violation(z);
    let mut dual_infeasibility = alpha.iter().map(|a| (-a).max(0.0)).fold(0.0, f64::max);
    let mut complementarity: f64 = 0.0;
    for r in 0..p.n_rows {
        complementarity = complementarity.max((alpha[r] * (p.rhs[r] - act[r])).abs());
    }
    for j in 0..p.n_cols {
        let d = p.objective[j] + (0..p.n_rows).map(|r| p.entry(r, j) * alpha[r]).sum::<f64>();
        let viol = match p.kinds[j] {
            VarKind::NonNeg => (-d).max(0.0),
            VarKind::Free => d.abs(),
        };
        dual_infeasibility = dual_infeasibility.max(viol);
        complementarity = complementarity.max((z[j] * d).abs());
    }
    let objective = p.objective_value(z);
    let dual = -p.rhs.iter().zip(alpha).map(|(u, a)| u * a).sum::<f64>();
    Certificate {
        primal_infeasibility,
        dual_infeasibility,
        complementarity,
        duality_gap: (objective - dual).abs(),
        objective,
    }
}
