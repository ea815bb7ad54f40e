//! Instance maps `Ψ` and the label-indexed feature map `Φ(x, y) = e_y ⊗ Ψ(x)`.
//!
//! `Φ` is never materialized as a dense length-`m` vector: it has exactly one
//! nonzero block, the one indexed by the label.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseVector;

/// Instance representation `Ψ: R^d → R^{d'}`.
///
/// The random Fourier variant draws `D` frequency vectors `u_k ~ N(0, γI)`
/// and maps `x` to `[cos(u_1·x), …, cos(u_D·x), sin(u_1·x), …, sin(u_D·x)]`,
/// unnormalized, so `Ψ(x)·Ψ(x') / D` approximates `exp(-γ‖x - x'‖² / 2)`.
///
/// Frequencies come from ChaCha20 seeded with `seed` (via `seed_from_u64`)
/// feeding a ziggurat standard normal sampler, drawn in frequency-major
/// order and scaled by `√γ`. Only the seed, `D` and `γ` are persisted; the
/// matrix is regenerated on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceMapSpec", into = "InstanceMapSpec")]
pub enum InstanceMap {
    Identity {
        d: usize,
    },
    Rff {
        d: usize,
        components: usize,
        gamma: f64,
        seed: u64,
        /// `components × d`, row-major.
        frequencies: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum InstanceMapSpec {
    Identity {
        d: usize,
    },
    Rff {
        d: usize,
        components: usize,
        gamma: f64,
        seed: u64,
    },
}

impl TryFrom<InstanceMapSpec> for InstanceMap {
    type Error = Error;

    fn try_from(spec: InstanceMapSpec) -> Result<Self> {
        match spec {
            InstanceMapSpec::Identity { d } => Ok(InstanceMap::identity(d)),
            InstanceMapSpec::Rff {
                d,
                components,
                gamma,
                seed,
            } => InstanceMap::rff(d, components, gamma, seed),
        }
    }
}

impl From<InstanceMap> for InstanceMapSpec {
    fn from(map: InstanceMap) -> Self {
        match map {
            InstanceMap::Identity { d } => InstanceMapSpec::Identity { d },
            InstanceMap::Rff {
                d,
                components,
                gamma,
                seed,
                ..
            } => InstanceMapSpec::Rff {
                d,
                components,
                gamma,
                seed,
            },
        }
    }
}

impl InstanceMap {
    pub fn identity(d: usize) -> Self {
        InstanceMap::Identity { d }
    }

    pub fn rff(d: usize, components: usize, gamma: f64, seed: u64) -> Result<Self> {
        if components == 0 {
            return Err(Error::InvalidArgument(
                "rff needs at least one component".into(),
            ));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "rff gamma must be positive, got {gamma}"
            )));
        }
        if d == 0 {
            return Err(Error::InvalidArgument(
                "input dimension must be positive".into(),
            ));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let scale = gamma.sqrt();
        let frequencies = (0..components * d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect();
        Ok(InstanceMap::Rff {
            d,
            components,
            gamma,
            seed,
            frequencies,
        })
    }

    pub fn input_dim(&self) -> usize {
        match self {
            InstanceMap::Identity { d } | InstanceMap::Rff { d, .. } => *d,
        }
    }

    /// `d'`.
    pub fn output_dim(&self) -> usize {
        match self {
            InstanceMap::Identity { d } => *d,
            InstanceMap::Rff { components, .. } => 2 * components,
        }
    }

    pub fn psi(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output_dim()];
        self.psi_into(x, &mut out)?;
        Ok(out)
    }

    pub fn psi_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.input_dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        debug_assert_eq!(out.len(), self.output_dim());
        match self {
            InstanceMap::Identity { .. } => out.copy_from_slice(x),
            InstanceMap::Rff {
                components,
                frequencies,
                ..
            } => {
                for (k, u) in frequencies.chunks_exact(d).enumerate() {
                    let t: f64 = u.iter().zip(x).map(|(a, b)| a * b).sum();
                    let (s, c) = t.sin_cos();
                    out[k] = c;
                    out[components + k] = s;
                }
            }
        }
        Ok(())
    }
}

/// Rule-of-thumb RFF scale `1 / (d · mean column variance)`; equals `1/d` on
/// standardized data. Falls back to `1/d` when all columns are constant.
pub fn default_rff_gamma(x: &ndarray::Array2<f64>) -> f64 {
    let d = x.ncols().max(1) as f64;
    let n = x.nrows() as f64;
    let mut total = 0.0;
    for col in x.columns() {
        let m = col.sum() / n;
        total += col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    }
    let var = total / d;
    if var > 0.0 {
        1.0 / (d * var)
    } else {
        1.0 / d
    }
}

/// `Φ(x, y) = e_y ⊗ Ψ(x)` with `m = d'·|Y|` coordinates. Coordinate `j`
/// belongs to class `j / d'` and instance component `j % d'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub instance_map: InstanceMap,
    pub n_classes: usize,
}

/// The single nonzero block of `Φ(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiBlock {
    pub block: usize,
    pub values: Vec<f64>,
}

impl PhiBlock {
    /// First global coordinate of the block.
    pub fn offset(&self) -> usize {
        self.block * self.values.len()
    }

    pub fn to_sparse(&self) -> SparseVector {
        let off = self.offset();
        SparseVector::from_pairs(
            self.values
                .iter()
                .enumerate()
                .map(|(p, &v)| (off + p, v))
                .collect(),
        )
    }
}

impl FeatureMap {
    pub fn new(instance_map: InstanceMap, n_classes: usize) -> Self {
        FeatureMap {
            instance_map,
            n_classes,
        }
    }

    pub fn block_dim(&self) -> usize {
        self.instance_map.output_dim()
    }

    /// `m`.
    pub fn dim(&self) -> usize {
        self.block_dim() * self.n_classes
    }

    pub fn decompose(&self, j: usize) -> (usize, usize) {
        let bd = self.block_dim();
        (j / bd, j % bd)
    }

    pub fn compose(&self, class: usize, component: usize) -> usize {
        class * self.block_dim() + component
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.n_classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                n_classes: self.n_classes,
            });
        }
        Ok(())
    }

    pub fn phi(&self, x: &[f64], y: usize) -> Result<PhiBlock> {
        self.check_label(y)?;
        Ok(PhiBlock {
            block: y,
            values: self.instance_map.psi(x)?,
        })
    }

    pub fn phi_dot(&self, x: &[f64], y: usize, mu: &SparseVector) -> Result<f64> {
        self.check_label(y)?;
        let psi = self.instance_map.psi(x)?;
        Ok(self.block_dot(&psi, y, mu))
    }

    /// `Φ(x, y)ᵀμ` from a precomputed `Ψ(x)`; touches only block `y` of `μ`.
    pub fn block_dot(&self, psi: &[f64], y: usize, mu: &SparseVector) -> f64 {
        let bd = self.block_dim();
        let off = y * bd;
        mu.range(off, off + bd)
            .iter()
            .map(|&(j, v)| v * psi[j - off])
            .sum()
    }

    /// `Φ(x, y)ᵀμ` for every label.
    pub fn scores(&self, psi: &[f64], mu: &SparseVector) -> Vec<f64> {
        (0..self.n_classes)
            .map(|y| self.block_dot(psi, y, mu))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_is_identity() {
        let m = InstanceMap::identity(2);
        assert_eq!(m.psi(&[2.0, -1.0]).unwrap(), vec![2.0, -1.0]);
    }

    #[test]
    fn rff_single_frequency_closed_form() {
        let m = InstanceMap::Rff {
            d: 1,
            components: 1,
            gamma: 1.0,
            seed: 0,
            frequencies: vec![FRAC_PI_2],
        };
        let out = m.psi(&[1.0]).unwrap();
        assert_abs_diff_eq!(out[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rff_tiny_gamma_gives_ones_then_zeros() {
        let m = InstanceMap::rff(3, 4, 1e-16, 1).unwrap();
        let out = m.psi(&[1.0, -2.0, 0.5]).unwrap();
        for k in 0..4 {
            assert_abs_diff_eq!(out[k], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(out[4 + k], 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn rff_is_seed_deterministic() {
        let a = InstanceMap::rff(5, 20, 0.3, 42).unwrap();
        let b = InstanceMap::rff(5, 20, 0.3, 42).unwrap();
        let c = InstanceMap::rff(5, 20, 0.3, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rff_rejects_bad_parameters() {
        assert!(InstanceMap::rff(3, 0, 1.0, 0).is_err());
        assert!(InstanceMap::rff(3, 2, 0.0, 0).is_err());
        assert!(InstanceMap::rff(3, 2, -1.0, 0).is_err());
    }

    #[test]
    fn rff_frequency_variance_matches_gamma() {
        let gamma = 0.7;
        let m = InstanceMap::rff(1, 10_000, gamma, 5).unwrap();
        let InstanceMap::Rff { frequencies, .. } = &m else {
            unreachable!()
        };
        let n = frequencies.len() as f64;
        let mean = frequencies.iter().sum::<f64>() / n;
        let var = frequencies.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / n;
        assert!((var / gamma - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn rff_kernel_approximation() {
        let gamma = 0.5;
        let d_out = 5000;
        let m = InstanceMap::rff(3, d_out, gamma, 11).unwrap();
        let x = [0.3, -0.2, 0.9];
        let y = [-0.5, 0.4, 0.1];
        let px = m.psi(&x).unwrap();
        let py = m.psi(&y).unwrap();
        let approx: f64 = px.iter().zip(&py).map(|(a, b)| a * b).sum::<f64>() / d_out as f64;
        let dist2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        let exact = (-gamma * dist2 / 2.0).exp();
        // Monte Carlo standard error is below 1/sqrt(2D) ≈ 0.01.
        assert!((approx - exact).abs() < 0.04, "{approx} vs {exact}");
    }

    #[test]
    fn rff_norm_equals_component_count() {
        let m = InstanceMap::rff(4, 37, 2.0, 3).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let p = m.psi(&x).unwrap();
            assert!(p.iter().all(|v| v.abs() <= 1.0));
            let norm2: f64 = p.iter().map(|v| v * v).sum();
            assert_abs_diff_eq!(norm2, 37.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn psi_dimension_mismatch() {
        assert!(InstanceMap::identity(3).psi(&[1.0]).is_err());
    }

    #[test]
    fn phi_block_structure() {
        let fm = FeatureMap::new(InstanceMap::identity(2), 2);
        let b = fm.phi(&[3.0, 4.0], 0).unwrap();
        assert_eq!(b.to_sparse().to_dense(4), vec![3.0, 4.0, 0.0, 0.0]);

        let fm3 = FeatureMap::new(InstanceMap::identity(1), 3);
        let b = fm3.phi(&[7.0], 2).unwrap();
        assert_eq!(b.to_sparse().entries(), &[(2, 7.0)]);
        assert!(fm3.phi(&[7.0], 3).is_err());
    }

    #[test]
    fn phi_dot_unit_and_zero() {
        let fm = FeatureMap::new(InstanceMap::identity(3), 2);
        let x = [0.5, -1.5, 2.0];
        assert_eq!(fm.phi_dot(&x, 1, &SparseVector::new()).unwrap(), 0.0);
        let e = SparseVector::from_pairs(vec![(fm.compose(1, 1), 1.0)]);
        assert_eq!(fm.phi_dot(&x, 1, &e).unwrap(), -1.5);
        assert_eq!(fm.phi_dot(&x, 0, &e).unwrap(), 0.0);
    }

    #[test]
    fn phi_dot_matches_dense_product() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let fm = FeatureMap::new(InstanceMap::rff(3, 4, 0.8, 2).unwrap(), 3);
        let m = fm.dim();
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = rng.random_range(0..3);
            let mut pairs = Vec::new();
            for j in 0..m {
                if rng.random_bool(0.4) {
                    pairs.push((j, rng.random_range(-1.0..1.0)));
                }
            }
            let mu = SparseVector::from_pairs(pairs);
            let dense_phi = fm.phi(&x, y).unwrap().to_sparse().to_dense(m);
            let dense_mu = mu.to_dense(m);
            let oracle: f64 = dense_phi.iter().zip(&dense_mu).map(|(a, b)| a * b).sum();
            assert_abs_diff_eq!(fm.phi_dot(&x, y, &mu).unwrap(), oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn index_decomposition_round_trips() {
        let fm = FeatureMap::new(InstanceMap::identity(7), 3);
        for j in 0..fm.dim() {
            let (y, p) = fm.decompose(j);
            assert!(y < 3 && p < 7);
            assert_eq!(fm.compose(y, p), j);
        }
    }

    #[test]
    fn instance_map_serde_regenerates_frequencies() {
        let m = InstanceMap::rff(2, 3, 0.25, 99).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"kind\":\"rff\""));
        assert!(!s.contains("frequencies"));
        let back: InstanceMap = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
