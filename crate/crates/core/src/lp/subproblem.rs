use std::collections::HashMap;

use super::{Basis, LpProblem, VarKind, WarmStart};
use crate::error::{Error, Result};
use crate::problem::{ConstraintSystem, MomentStats};
use crate::sparse::SparseVector;

/// Coefficients with magnitude at or below this are treated as zero when a
/// feature leaves the working set.
pub const ZERO_COEFFICIENT: f64 = 1e-9;

/// Identity of an LP column independent of the working set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKey {
    /// Positive part `μ₁` of a feature coefficient.
    Pos(usize),
    /// Negative part `μ₂`.
    Neg(usize),
    Nu,
}

/// Basis expressed with [`VarKey`]s so it survives changes of the feature
/// set between iterations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyedBasis {
    pub vars: Vec<VarKey>,
    pub rows: Vec<usize>,
}

/// The LP restricted to a feature subset `J`:
///
/// ```text
/// min  -(τ_J - λ_J)ᵀμ₁ + (τ_J + λ_J)ᵀμ₂ + ν
/// s.t. F_J (μ₁ - μ₂) - ν 1 ≤ b,   μ₁, μ₂ ≥ 0
/// ```
///
/// Columns are ordered `μ₁` over `J`, then `μ₂` over `J`, then `ν`.
#[derive(Debug, Clone)]
pub struct MrcSubproblem {
    features: Vec<usize>,
    position: HashMap<usize, usize>,
    lp: LpProblem,
}

pub fn assemble_subproblem(
    stats: &MomentStats,
    cs: &ConstraintSystem,
    features: &[usize],
) -> Result<MrcSubproblem> {
    if features.is_empty() {
        return Err(Error::InvalidArgument("feature set is empty".into()));
    }
    cs.validate_features(features)?;
    if stats.dim() != cs.n_features() {
        return Err(Error::DimensionMismatch {
            expected: cs.n_features(),
            got: stats.dim(),
        });
    }
    let k = features.len();
    let n_cols = 2 * k + 1;
    let mut objective = Vec::with_capacity(n_cols);
    objective.extend(features.iter().map(|&j| -(stats.tau[j] - stats.lambda[j])));
    objective.extend(features.iter().map(|&j| stats.tau[j] + stats.lambda[j]));
    objective.push(1.0);
    let mut kinds = vec![VarKind::NonNeg; 2 * k];
    kinds.push(VarKind::Free);

    let n_rows = cs.n_rows();
    let mut matrix = vec![0.0; n_rows * n_cols];
    for (r, row) in matrix.chunks_exact_mut(n_cols).enumerate() {
        for (c, &j) in features.iter().enumerate() {
            let v = cs.entry(r, j);
            row[c] = v;
            row[k + c] = -v;
        }
        row[2 * k] = -1.0;
    }
    let lp = LpProblem::new(objective, kinds, matrix, cs.b_vec())?;
    let position = features.iter().enumerate().map(|(c, &j)| (j, c)).collect();
    Ok(MrcSubproblem {
        features: features.to_vec(),
        position,
        lp,
    })
}

impl MrcSubproblem {
    pub fn lp(&self) -> &LpProblem {
        &self.lp
    }

    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn nu_column(&self) -> usize {
        2 * self.features.len()
    }

    pub fn key(&self, col: usize) -> VarKey {
        let k = self.features.len();
        if col < k {
            VarKey::Pos(self.features[col])
        } else if col < 2 * k {
            VarKey::Neg(self.features[col - k])
        } else {
            VarKey::Nu
        }
    }

    pub fn column(&self, key: VarKey) -> Option<usize> {
        let k = self.features.len();
        match key {
            VarKey::Pos(j) => self.position.get(&j).copied(),
            VarKey::Neg(j) => self.position.get(&j).map(|c| k + c),
            VarKey::Nu => Some(2 * k),
        }
    }

    /// `μ = μ₁ - μ₂` over the global feature index space.
    pub fn coefficients(&self, z: &[f64]) -> SparseVector {
        let k = self.features.len();
        SparseVector::from_pairs(
            self.features
                .iter()
                .enumerate()
                .map(|(c, &j)| (j, z[c] - z[k + c]))
                .collect(),
        )
    }

    pub fn nu(&self, z: &[f64]) -> f64 {
        z[self.nu_column()]
    }

    pub fn keyed_basis(&self, basis: &Basis) -> KeyedBasis {
        KeyedBasis {
            vars: basis.columns.iter().map(|&c| self.key(c)).collect(),
            rows: basis.rows.clone(),
        }
    }

    /// Translates a keyed basis, silently dropping variables not in `J`.
    pub fn basis_from_keys(&self, keyed: &KeyedBasis) -> Basis {
        Basis {
            columns: keyed.vars.iter().filter_map(|&v| self.column(v)).collect(),
            rows: keyed.rows.clone(),
        }
    }

    /// Objective `-(τ-λ)ᵀμ₁ + (τ+λ)ᵀμ₂ + ν` at a point.
    pub fn objective_at(&self, z: &[f64]) -> f64 {
        self.lp.objective_value(z)
    }
}

/// Starting point for the subproblem over a new feature set: `μ₁ = (μ)₊`,
/// `μ₂ = (-μ)₊` restricted to `J`, `ν` unchanged. Features of `μ_prev`
/// outside `J` must have (numerically) zero coefficients.
pub fn warm_start_from(
    sub: &MrcSubproblem,
    mu_prev: &SparseVector,
    nu_prev: f64,
    prev_basis: Option<&KeyedBasis>,
) -> Result<WarmStart> {
    let k = sub.features.len();
    let mut point = vec![0.0; 2 * k + 1];
    for (j, v) in mu_prev.iter() {
        match sub.position.get(&j) {
            Some(&c) => {
                if v > 0.0 {
                    point[c] = v;
                } else {
                    point[k + c] = -v;
                }
            }
            None if v.abs() > ZERO_COEFFICIENT => {
                return Err(Error::Solver(format!(
                    "feature {j} left the working set with coefficient {v:e}"
                )));
            }
            None => {}
        }
    }
    point[2 * k] = nu_prev;
    Ok(WarmStart {
        point,
        basis: prev_basis.map(|b| sub.basis_from_keys(b)),
    })
}

/// The dual of the LP over every feature, as a program in `α`:
///
/// ```text
/// min  bᵀα
/// s.t. -Fᵀα ≤ λ - τ,   Fᵀα ≤ τ + λ,   1ᵀα ≤ 1,   -1ᵀα ≤ -1,   α ≥ 0
/// ```
///
/// The row multipliers are `μ₁`, `μ₂` and the two halves of `ν`. The primal
/// program is highly degenerate, while this one has one column per
/// constraint row and is solved in far fewer pivots when `m` is large.
#[derive(Debug, Clone)]
pub struct MrcDualProgram {
    m: usize,
    lp: LpProblem,
}

pub fn assemble_full_dual(stats: &MomentStats, cs: &ConstraintSystem) -> Result<MrcDualProgram> {
    let m = cs.n_features();
    if stats.dim() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: stats.dim(),
        });
    }
    let n_alpha = cs.n_rows();
    let n_rows = 2 * m + 2;
    let mut matrix = vec![0.0; n_rows * n_alpha];
    let mut rhs = vec![0.0; n_rows];
    for j in 0..m {
        let (lo, hi) = matrix[j * n_alpha..].split_at_mut(m * n_alpha);
        for (r, (neg, pos)) in lo[..n_alpha].iter_mut().zip(&mut hi[..n_alpha]).enumerate() {
            let v = cs.entry(r, j);
            *neg = -v;
            *pos = v;
        }
        rhs[j] = stats.lambda[j] - stats.tau[j];
        rhs[m + j] = stats.tau[j] + stats.lambda[j];
    }
    matrix[2 * m * n_alpha..(2 * m + 1) * n_alpha].fill(1.0);
    matrix[(2 * m + 1) * n_alpha..].fill(-1.0);
    rhs[2 * m] = 1.0;
    rhs[2 * m + 1] = -1.0;
    let lp = LpProblem::new(cs.b_vec(), vec![VarKind::NonNeg; n_alpha], matrix, rhs)?;
    Ok(MrcDualProgram { m, lp })
}

impl MrcDualProgram {
    pub fn lp(&self) -> &LpProblem {
        &self.lp
    }

    /// `μ = μ₁ - μ₂` from the row multipliers.
    pub fn coefficients(&self, duals: &[f64]) -> SparseVector {
        let m = self.m;
        SparseVector::from_pairs((0..m).map(|j| (j, duals[j] - duals[m + j])).collect())
    }

    pub fn nu(&self, duals: &[f64]) -> f64 {
        duals[2 * self.m] - duals[2 * self.m + 1]
    }
}
