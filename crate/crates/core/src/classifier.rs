//! The learned classifier and its model file.
//!
//! With scores `s_y = Φ(x, y)ᵀμ - φ` the randomized rule is
//! `h(y|x) = (s_y)₊ / Σ_y' (s_y')₊`, uniform when every score is non-positive.
//! The deterministic rule picks `argmax_y Φ(x, y)ᵀμ`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::ArrayView1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cg::{CgConfig, IterationRecord};
use crate::datasets::{Dataset, ScalerParams};
use crate::error::{Error, Result};
use crate::featmap::{FeatureMap, InstanceMap};
use crate::problem::MomentStats;
use crate::sparse::SparseVector;

pub const MODEL_VERSION: u32 = 1;

/// Normalizers at or below this fall back to the uniform rule.
pub const UNIFORM_CUTOFF: f64 = 1e-12;

/// Training settings stored alongside the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub epsilon: f64,
    pub n_max: usize,
    pub k_max: usize,
    pub lambda_scale: f64,
    pub active_tol: f64,
    pub seed: u64,
    pub standardized: bool,
}

impl ConfigEcho {
    pub fn from_cg(cfg: &CgConfig, standardized: bool) -> Self {
        ConfigEcho {
            epsilon: cfg.epsilon,
            n_max: cfg.n_max,
            k_max: cfg.k_max,
            lambda_scale: cfg.lambda_scale,
            active_tol: cfg.active_tol,
            seed: cfg.seed,
            standardized,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrcModel {
    pub fmap: FeatureMap,
    /// Applied to raw instances before the feature map.
    pub scaler: Option<ScalerParams>,
    pub mu: SparseVector,
    pub selected: Vec<usize>,
    pub nu: f64,
    pub r_star: f64,
    pub trace: Vec<IterationRecord>,
    pub config: Option<ConfigEcho>,
    /// Original label values by encoded index; empty when unknown.
    pub label_values: Vec<String>,
    /// Names of the raw instance columns.
    pub feature_names: Option<Vec<String>>,
}

/// On-disk layout of a model.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    n_classes: usize,
    d: usize,
    fmap: InstanceMap,
    scaler: Option<ScalerParams>,
    mu: SparseVector,
    selected: Vec<usize>,
    nu: f64,
    phi_threshold: f64,
    r_star: f64,
    #[serde(default)]
    trace: Vec<IterationRecord>,
    #[serde(default)]
    config: Option<ConfigEcho>,
    #[serde(default)]
    label_values: Vec<String>,
    #[serde(default)]
    feature_names: Option<Vec<String>>,
}

/// Error rates of both prediction rules on a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// Fraction of samples where the deterministic rule is wrong.
    pub deterministic: f64,
    /// Mean of `1 - h(y_i | x_i)`.
    pub randomized: f64,
}

impl MrcModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fmap: FeatureMap,
        scaler: Option<ScalerParams>,
        mu: SparseVector,
        selected: Vec<usize>,
        nu: f64,
        r_star: f64,
        trace: Vec<IterationRecord>,
        config: Option<ConfigEcho>,
    ) -> Result<Self> {
        let model = MrcModel {
            fmap,
            scaler,
            mu,
            selected,
            nu,
            r_star,
            trace,
            config,
            label_values: Vec::new(),
            feature_names: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn n_classes(&self) -> usize {
        self.fmap.n_classes
    }

    /// Raw instance dimension.
    pub fn input_dim(&self) -> usize {
        self.fmap.instance_map.input_dim()
    }

    /// `φ(μ)`, the largest training row value `max (gᵀμ - b)` minus one.
    pub fn phi_threshold(&self) -> f64 {
        self.nu - 1.0
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.fmap.dim();
        let n_classes = self.n_classes();
        if n_classes < 2 {
            return Err(Error::InvalidModel(format!("{n_classes} classes")));
        }
        if !self.label_values.is_empty() && self.label_values.len() != n_classes {
            return Err(Error::InvalidModel(format!(
                "{} label values for {n_classes} classes",
                self.label_values.len()
            )));
        }
        if let Some(names) = &self.feature_names {
            if names.len() != self.input_dim() {
                return Err(Error::InvalidModel(format!(
                    "{} feature names for dimension {}",
                    names.len(),
                    self.input_dim()
                )));
            }
        }
        if let Some(s) = &self.scaler {
            if s.dim() != self.input_dim() {
                return Err(Error::InvalidModel(format!(
                    "scaler has dimension {}, feature map expects {}",
                    s.dim(),
                    self.input_dim()
                )));
            }
        }
        let mut sorted = self.selected.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidModel("duplicate selected feature".into()));
        }
        if sorted.last().is_some_and(|&j| j >= m) {
            return Err(Error::InvalidModel(format!(
                "selected feature out of range for dimension {m}"
            )));
        }
        for (j, v) in self.mu.iter() {
            if !v.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "coefficient {j} is not finite"
                )));
            }
            if sorted.binary_search(&j).is_err() {
                return Err(Error::InvalidModel(format!(
                    "coefficient {j} outside the selected features"
                )));
            }
        }
        if !self.nu.is_finite() {
            return Err(Error::InvalidModel("nu is not finite".into()));
        }
        let upper = 1.0 - 1.0 / n_classes as f64 + 1e-9;
        if !(self.r_star >= -1e-9 && self.r_star <= upper) {
            return Err(Error::InvalidModel(format!(
                "worst-case risk {} outside [0, {upper}]",
                self.r_star
            )));
        }
        Ok(())
    }

    fn psi(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        match &self.scaler {
            Some(s) => {
                let z = s.transform_row(x);
                self.fmap
                    .instance_map
                    .psi(z.as_slice().expect("contiguous"))
            }
            None => match x.as_slice() {
                Some(s) => self.fmap.instance_map.psi(s),
                None => self.fmap.instance_map.psi(&x.to_vec()),
            },
        }
    }

    /// `Φ(x, y)ᵀμ` for every label.
    pub fn scores(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        let psi = self.psi(x)?;
        Ok(self.fmap.scores(&psi, &self.mu))
    }

    fn proba_from_scores(&self, scores: &[f64]) -> Vec<f64> {
        let phi = self.phi_threshold();
        let mut h: Vec<f64> = scores.iter().map(|s| (s - phi).max(0.0)).collect();
        let d: f64 = h.iter().sum();
        if d <= UNIFORM_CUTOFF {
            let u = 1.0 / h.len() as f64;
            h.fill(u);
        } else {
            h.iter_mut().for_each(|v| *v /= d);
        }
        h
    }

    pub fn predict_proba(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        Ok(self.proba_from_scores(&self.scores(x)?))
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }

    /// Draws a label from the randomized rule.
    pub fn sample_label<R: Rng + ?Sized>(
        &self,
        x: ArrayView1<'_, f64>,
        rng: &mut R,
    ) -> Result<usize> {
        let h = self.predict_proba(x)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (y, p) in h.iter().enumerate() {
            acc += p;
            if u < acc {
                return Ok(y);
            }
        }
        Ok(h.iter().rposition(|&p| p > 0.0).unwrap_or(h.len() - 1))
    }

    /// Both error rates on `data`. Panics if `1 - h^d(y|x) ≤ 2 (1 - h(y|x))`
    /// fails on some sample, which would indicate a broken prediction rule.
    pub fn empirical_error(&self, data: &Dataset) -> Result<ErrorReport> {
        if data.n_classes > self.n_classes() {
            return Err(Error::LabelOutOfRange {
                label: data.n_classes - 1,
                n_classes: self.n_classes(),
            });
        }
        let n = data.n_samples();
        let mut det = 0.0;
        let mut rnd = 0.0;
        for i in 0..n {
            let scores = self.scores(data.instance(i))?;
            let h = self.proba_from_scores(&scores);
            let y = data.labels[i];
            let det_loss = if argmax(&scores) == y { 0.0 } else { 1.0 };
            let rnd_loss = 1.0 - h[y];
            assert!(
                det_loss <= 2.0 * rnd_loss + 1e-12,
                "deterministic loss {det_loss} exceeds twice the randomized loss {rnd_loss} at sample {i}"
            );
            det += det_loss;
            rnd += rnd_loss;
        }
        let n = n.max(1) as f64;
        Ok(ErrorReport {
            deterministic: det / n,
            randomized: rnd / n,
        })
    }

    /// `R + Σ_{j∈J} (|e_j - τ_j| - λ_j) |μ_j|` over the selected features,
    /// with `expectation[c]` the exact mean of feature `selected[c]`.
    pub fn risk_bound_rhs(&self, stats: &MomentStats, expectation: &[f64]) -> Result<f64> {
        if expectation.len() != self.selected.len() {
            return Err(Error::DimensionMismatch {
                expected: self.selected.len(),
                got: expectation.len(),
            });
        }
        if stats.dim() != self.fmap.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.fmap.dim(),
                got: stats.dim(),
            });
        }
        let correction: f64 = self
            .selected
            .iter()
            .zip(expectation)
            .map(|(&j, e)| ((e - stats.tau[j]).abs() - stats.lambda[j]) * self.mu.get(j).abs())
            .sum();
        Ok(self.r_star + correction)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &self.to_file())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_file(serde_json::from_reader(BufReader::new(f))?)
    }

    fn to_file(&self) -> ModelFile {
        ModelFile {
            version: MODEL_VERSION,
            n_classes: self.n_classes(),
            d: self.input_dim(),
            fmap: self.fmap.instance_map.clone(),
            scaler: self.scaler.clone(),
            mu: self.mu.clone(),
            selected: self.selected.clone(),
            nu: self.nu,
            phi_threshold: self.phi_threshold(),
            r_star: self.r_star,
            trace: self.trace.clone(),
            config: self.config.clone(),
            label_values: self.label_values.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    fn from_file(f: ModelFile) -> Result<Self> {
        if f.version != MODEL_VERSION {
            return Err(Error::InvalidModel(format!(
                "unsupported model version {}",
                f.version
            )));
        }
        if f.fmap.input_dim() != f.d {
            return Err(Error::InvalidModel(format!(
                "feature map input dimension {} does not match d = {}",
                f.fmap.input_dim(),
                f.d
            )));
        }
        if (f.phi_threshold - (f.nu - 1.0)).abs() > 1e-12 {
            return Err(Error::InvalidModel("phi_threshold is not nu - 1".into()));
        }
        let mut model = Self::new(
            FeatureMap::new(f.fmap, f.n_classes),
            f.scaler,
            f.mu,
            f.selected,
            f.nu,
            f.r_star,
            f.trace,
            f.config,
        )?;
        model.label_values = f.label_values;
        model.feature_names = f.feature_names;
        model.validate()?;
        Ok(model)
    }

    /// Label value for an encoded class, falling back to the index.
    pub fn label_name(&self, class: usize) -> String {
        self.label_values
            .get(class)
            .cloned()
            .unwrap_or_else(|| class.to_string())
    }
}

/// Index of the largest value, ties to the smallest index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    /// Identity map on `d = 1`, two classes; `μ = (a, b)` gives scores
    /// `(a x, b x)`.
    fn model(mu: Vec<(usize, f64)>, nu: f64) -> MrcModel {
        MrcModel::new(
            FeatureMap::new(InstanceMap::identity(1), 2),
            None,
            SparseVector::from_pairs(mu),
            vec![0, 1],
            nu,
            0.25,
            Vec::new(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn zero_coefficients_give_uniform_rule() {
        let m = model(vec![], 1.0);
        let x = array![3.0];
        assert_eq!(m.predict_proba(x.view()).unwrap(), vec![0.5, 0.5]);
        assert_eq!(m.predict(x.view()).unwrap(), 0);
    }

    #[test]
    fn single_positive_score() {
        // φ = 0, scores (0.3, -0.1).
        let m = model(vec![(0, 0.3), (1, -0.1)], 1.0);
        let h = m.predict_proba(array![1.0].view()).unwrap();
        assert_eq!(h, vec![1.0, 0.0]);
    }

    #[test]
    fn proportional_scores() {
        let m = model(vec![(0, 0.3), (1, 0.1)], 1.0);
        let h = m.predict_proba(array![1.0].view()).unwrap();
        assert_abs_diff_eq!(h[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(h[1], 0.25, epsilon = 1e-15);
        assert_eq!(m.predict(array![1.0].view()).unwrap(), 0);
    }

    #[test]
    fn threshold_shifts_scores() {
        // φ = 0.2: shifted scores (0.1, -0.1).
        let m = model(vec![(0, 0.3), (1, 0.1)], 1.2);
        let h = m.predict_proba(array![1.0].view()).unwrap();
        assert_abs_diff_eq!(h[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn dimension_is_checked() {
        let m = model(vec![], 1.0);
        assert!(matches!(
            m.predict(array![1.0, 2.0].view()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn uniform_rule_has_half_loss() {
        let m = model(vec![], 1.0);
        let data = Dataset::new(array![[1.0], [-1.0], [0.5]], vec![0, 1, 1], 2).unwrap();
        let e = m.empirical_error(&data).unwrap();
        assert_eq!(e.randomized, 0.5);
        assert_abs_diff_eq!(e.deterministic, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn risk_bound_examples() {
        let m = model(vec![(0, 0.5), (1, -0.25)], 1.0);
        let stats = MomentStats {
            tau: vec![0.2, -0.1],
            s: vec![0.1, 0.1],
            lambda: vec![0.05, 0.02],
            lambda_scale: 1.0,
            n: 4,
        };
        let rhs = m.risk_bound_rhs(&stats, &stats.tau).unwrap();
        assert_abs_diff_eq!(rhs, 0.25 - 0.05 * 0.5 - 0.02 * 0.25, epsilon = 1e-15);
        let rhs = m.risk_bound_rhs(&stats, &[0.3, -0.1]).unwrap();
        assert_abs_diff_eq!(rhs, 0.25 + 0.05 * 0.5 - 0.02 * 0.25, epsilon = 1e-15);
        let zero = model(vec![], 1.0);
        assert_eq!(zero.risk_bound_rhs(&stats, &[9.0, 9.0]).unwrap(), 0.25);
        assert!(zero.risk_bound_rhs(&stats, &[0.0]).is_err());
    }

    #[test]
    fn invariants_rejected() {
        let fm = FeatureMap::new(InstanceMap::identity(1), 2);
        let mu = SparseVector::from_pairs(vec![(1, 0.5)]);
        assert!(MrcModel::new(
            fm.clone(),
            None,
            mu.clone(),
            vec![0],
            1.0,
            0.2,
            vec![],
            None
        )
        .is_err());
        assert!(MrcModel::new(
            fm.clone(),
            None,
            mu.clone(),
            vec![1],
            1.0,
            0.6,
            vec![],
            None
        )
        .is_err());
        assert!(MrcModel::new(fm, None, mu, vec![1, 7], 1.0, 0.2, vec![], None).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let fm = FeatureMap::new(InstanceMap::rff(3, 4, 0.37, 11).unwrap(), 3);
        let scaler = ScalerParams {
            mean: vec![0.1, -0.2, 1.0 / 3.0],
            std: vec![1.5, 1.0, 0.7],
            degenerate: vec![false, true, false],
        };
        let m = MrcModel::new(
            fm,
            Some(scaler),
            SparseVector::from_pairs(vec![(2, 0.1 + 0.2), (17, -1.0 / 7.0)]),
            vec![2, 5, 17],
            1.0 + 1e-3 / 3.0,
            0.4,
            vec![],
            None,
        )
        .unwrap();
        let back = MrcModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let x = array![0.3, 1.2, -0.8];
        assert_eq!(
            back.predict_proba(x.view()).unwrap(),
            m.predict_proba(x.view()).unwrap()
        );
    }

    #[test]
    fn json_layout() {
        let m = model(vec![(1, -0.5)], 1.0);
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["n_classes"], 2);
        assert_eq!(v["d"], 1);
        assert_eq!(v["fmap"]["kind"], "identity");
        assert_eq!(v["mu"], serde_json::json!([[1, -0.5]]));
        assert_eq!(v["phi_threshold"], 0.0);
    }
}
