//! Moment estimates and the implicit LP constraint matrix.
//!
//! Rows of the constraint matrix `F` are indexed by pairs `(i, C)` of a
//! training instance and a nonempty label subset, enumerated instance-major
//! and then by subset bitmask `1, 2, …, 2^|Y| - 1` (bit `y` set iff
//! `y ∈ C`). Row `(i, C)` is `g = Σ_{y∈C} Φ(x_i, y) / |C|` with offset
//! `b = 1/|C| - 1`. Only `Ψ(x_i)` is stored; rows, columns and `Fᵀα` are
//! derived on demand.

use ndarray::Array2;

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::featmap::FeatureMap;
use crate::sparse::SparseVector;

pub const MAX_CLASSES: usize = 16;

/// Mean vector `τ`, deviations `s` and confidence vector `λ = λ₀ s / √n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentStats {
    pub tau: Vec<f64>,
    pub s: Vec<f64>,
    pub lambda: Vec<f64>,
    pub lambda_scale: f64,
    pub n: usize,
}

impl MomentStats {
    pub fn dim(&self) -> usize {
        self.tau.len()
    }

    /// Objective of the MRC problem, `1 - τᵀμ + φ + λᵀ|μ|`, given `φ(μ)`.
    pub fn objective(&self, mu: &SparseVector, phi: f64) -> f64 {
        let mut v = 1.0 + phi;
        for (j, m) in mu.iter() {
            v += -self.tau[j] * m + self.lambda[j] * m.abs();
        }
        v
    }

    /// Builds statistics from a cached `Ψ` matrix (`n × d'`, row-major).
    fn from_psi(
        psi: &[f64],
        block_dim: usize,
        labels: &[usize],
        n_classes: usize,
        lambda_scale: f64,
    ) -> Result<Self> {
        let n = labels.len();
        if n < 2 {
            return Err(Error::InvalidArgument(
                "moment estimation needs at least two samples".into(),
            ));
        }
        if !(lambda_scale > 0.0 && lambda_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda scale must be positive, got {lambda_scale}"
            )));
        }
        let m = block_dim * n_classes;
        let nf = n as f64;
        let mut tau = vec![0.0; m];
        let mut counts = vec![0usize; n_classes];
        for (i, &y) in labels.iter().enumerate() {
            counts[y] += 1;
            let row = &psi[i * block_dim..(i + 1) * block_dim];
            let block = &mut tau[y * block_dim..(y + 1) * block_dim];
            for (t, v) in block.iter_mut().zip(row) {
                *t += v;
            }
        }
        tau.iter_mut().for_each(|t| *t /= nf);

        // Population variance: in-class squared deviations plus the zeros
        // contributed by the other classes.
        let mut ss = vec![0.0; m];
        for (i, &y) in labels.iter().enumerate() {
            let row = &psi[i * block_dim..(i + 1) * block_dim];
            let off = y * block_dim;
            for (p, v) in row.iter().enumerate() {
                let dev = v - tau[off + p];
                ss[off + p] += dev * dev;
            }
        }
        let mut s = vec![0.0; m];
        for (y, &cy) in counts.iter().enumerate() {
            let others = (n - cy) as f64;
            for p in 0..block_dim {
                let j = y * block_dim + p;
                s[j] = ((ss[j] + others * tau[j] * tau[j]) / nf).sqrt();
            }
        }
        let lambda = s.iter().map(|v| lambda_scale * v / nf.sqrt()).collect();
        Ok(MomentStats {
            tau,
            s,
            lambda,
            lambda_scale,
            n,
        })
    }
}

/// `τ`, `s`, `λ` over the `n` training pairs (population deviations).
pub fn estimate_moments(
    data: &Dataset,
    fmap: &FeatureMap,
    lambda_scale: f64,
) -> Result<MomentStats> {
    let psi = psi_matrix(data, fmap)?;
    MomentStats::from_psi(
        &psi,
        fmap.block_dim(),
        &data.labels,
        fmap.n_classes,
        lambda_scale,
    )
}

fn psi_matrix(data: &Dataset, fmap: &FeatureMap) -> Result<Vec<f64>> {
    let bd = fmap.block_dim();
    let n = data.n_samples();
    if data.n_classes != fmap.n_classes {
        return Err(Error::DimensionMismatch {
            expected: fmap.n_classes,
            got: data.n_classes,
        });
    }
    let mut psi = vec![0.0; n * bd];
    let mut row = Vec::with_capacity(data.n_features());
    for i in 0..n {
        row.clear();
        row.extend(data.instance(i).iter().copied());
        fmap.instance_map
            .psi_into(&row, &mut psi[i * bd..(i + 1) * bd])?;
    }
    Ok(psi)
}

#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    psi: Vec<f64>,
    n: usize,
    block_dim: usize,
    n_classes: usize,
    n_subsets: usize,
}

/// Builds the row system over every (training instance, nonempty subset).
pub fn build_constraints(data: &Dataset, fmap: &FeatureMap) -> Result<ConstraintSystem> {
    if fmap.n_classes > MAX_CLASSES {
        return Err(Error::TooManyClasses(fmap.n_classes));
    }
    let psi = psi_matrix(data, fmap)?;
    Ok(ConstraintSystem {
        psi,
        n: data.n_samples(),
        block_dim: fmap.block_dim(),
        n_classes: fmap.n_classes,
        n_subsets: (1usize << fmap.n_classes) - 1,
    })
}

impl ConstraintSystem {
    /// `|S| = n (2^|Y| - 1)`.
    pub fn n_rows(&self) -> usize {
        self.n * self.n_subsets
    }

    /// `m`.
    pub fn n_features(&self) -> usize {
        self.block_dim * self.n_classes
    }

    pub fn n_instances(&self) -> usize {
        self.n
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn psi_row(&self, i: usize) -> &[f64] {
        &self.psi[i * self.block_dim..(i + 1) * self.block_dim]
    }

    /// `(instance, subset mask)` of row `r`.
    pub fn row_key(&self, r: usize) -> (usize, u32) {
        (r / self.n_subsets, (r % self.n_subsets + 1) as u32)
    }

    pub fn row_index(&self, instance: usize, mask: u32) -> usize {
        instance * self.n_subsets + mask as usize - 1
    }

    pub fn b(&self, r: usize) -> f64 {
        let (_, mask) = self.row_key(r);
        1.0 / mask.count_ones() as f64 - 1.0
    }

    pub fn b_vec(&self) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.b(r)).collect()
    }

    /// Index of the first row with the smallest offset (`C = Y`).
    pub fn min_b_row(&self) -> usize {
        self.n_subsets - 1
    }

    pub fn moments(&self, labels: &[usize], lambda_scale: f64) -> Result<MomentStats> {
        if labels.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: labels.len(),
            });
        }
        MomentStats::from_psi(
            &self.psi,
            self.block_dim,
            labels,
            self.n_classes,
            lambda_scale,
        )
    }

    pub fn validate_features(&self, features: &[usize]) -> Result<()> {
        let m = self.n_features();
        let mut seen = vec![false; m];
        for &j in features {
            if j >= m {
                return Err(Error::InvalidFeature { index: j, dim: m });
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::DuplicateFeature(j));
            }
        }
        Ok(())
    }

    /// Entry of `F` at row `r`, feature `j`.
    #[inline]
    pub fn entry(&self, r: usize, j: usize) -> f64 {
        let (i, mask) = self.row_key(r);
        let (y, p) = (j / self.block_dim, j % self.block_dim);
        if mask & (1 << y) == 0 {
            0.0
        } else {
            self.psi[i * self.block_dim + p] / mask.count_ones() as f64
        }
    }

    /// Dense `|S| × |J|` submatrix `F_J`.
    pub fn columns(&self, features: &[usize]) -> Result<Array2<f64>> {
        self.validate_features(features)?;
        let mut out = Array2::zeros((self.n_rows(), features.len()));
        for (r, mut row) in out.rows_mut().into_iter().enumerate() {
            for (c, &j) in features.iter().enumerate() {
                row[c] = self.entry(r, j);
            }
        }
        Ok(out)
    }

    /// `Fᵀα` for a sparse row weighting; cost scales with `nnz(α)`.
    pub fn ft_alpha(&self, alpha: &SparseVector) -> Vec<f64> {
        let bd = self.block_dim;
        let mut out = vec![0.0; self.n_features()];
        for (r, a) in alpha.iter() {
            let (i, mask) = self.row_key(r);
            let w = a / mask.count_ones() as f64;
            let psi = self.psi_row(i);
            for y in 0..self.n_classes {
                if mask & (1 << y) != 0 {
                    for (o, v) in out[y * bd..(y + 1) * bd].iter_mut().zip(psi) {
                        *o += w * v;
                    }
                }
            }
        }
        out
    }

    /// `max_r gᵣᵀμ - bᵣ`, i.e. `φ(μ) + 1` over the training rows.
    pub fn max_row_value(&self, mu: &SparseVector) -> f64 {
        let bd = self.block_dim;
        let mut best = f64::NEG_INFINITY;
        let mut scores = vec![0.0; self.n_classes];
        for i in 0..self.n {
            let psi = self.psi_row(i);
            for (y, s) in scores.iter_mut().enumerate() {
                *s = mu
                    .range(y * bd, (y + 1) * bd)
                    .iter()
                    .map(|&(j, v)| v * psi[j - y * bd])
                    .sum();
            }
            for mask in 1..=self.n_subsets as u32 {
                let c = mask.count_ones() as f64;
                let sum: f64 = (0..self.n_classes)
                    .filter(|y| mask & (1 << y) != 0)
                    .map(|y| scores[y])
                    .sum();
                best = best.max(sum / c - (1.0 / c - 1.0));
            }
        }
        best
    }
}
