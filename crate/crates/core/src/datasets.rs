//! Labeled tabular data: CSV ingestion, standardization, stratified folds,
//! and synthetic Gaussian problems with known structure.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns whose standard deviation falls below this are treated as constant.
pub const DEGENERATE_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n × d` instance matrix.
    pub instances: Array2<f64>,
    /// Contiguous labels in `0..n_classes`.
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub feature_names: Option<Vec<String>>,
    /// Original label value for each encoded class, in encoded order.
    pub label_values: Vec<String>,
}

impl Dataset {
    /// Validates the label and finiteness invariants.
    pub fn new(instances: Array2<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let label_values = (0..n_classes).map(|c| c.to_string()).collect();
        let ds = Dataset {
            instances,
            labels,
            n_classes,
            feature_names: None,
            label_values,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.instances.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.instances.nrows(),
                got: self.labels.len(),
            });
        }
        if self.n_classes < 2 {
            return Err(Error::SingleClass);
        }
        let mut seen = vec![false; self.n_classes];
        for &y in &self.labels {
            if y >= self.n_classes {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    n_classes: self.n_classes,
                });
            }
            seen[y] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!(
                "class {missing} has no samples"
            )));
        }
        for ((row, column), v) in self.instances.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row, column });
            }
        }
        if let Some(names) = &self.feature_names {
            if names.len() != self.n_features() {
                return Err(Error::DimensionMismatch {
                    expected: self.n_features(),
                    got: names.len(),
                });
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.instances.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.instances.ncols()
    }

    pub fn instance(&self, i: usize) -> ArrayView1<'_, f64> {
        self.instances.row(i)
    }

    /// Rows at `indices`, keeping the label encoding of `self`. The result may
    /// lack some classes, so it is not re-validated.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            instances: self.instances.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            feature_names: self.feature_names.clone(),
            label_values: self.label_values.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

/// Which column of a CSV file holds the label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Integers select by zero-based index, anything else by header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub label_column: LabelColumn,
    pub has_header: bool,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            label_column: LabelColumn::Index(0),
            has_header: true,
            delimiter: b',',
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, options)
}

/// Parses CSV from any reader. Error line numbers are 1-based file lines.
pub fn read_csv<R: std::io::Read>(reader: R, options: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .delimiter(options.delimiter)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header: Option<Vec<String>> = if options.has_header {
        let h = rdr.headers().map_err(csv_error)?;
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };

    let label_idx = match (&options.label_column, &header) {
        (LabelColumn::Index(i), Some(h)) if *i >= h.len() => {
            return Err(Error::MissingLabelColumn(i.to_string()))
        }
        (LabelColumn::Index(i), _) => *i,
        (LabelColumn::Name(name), Some(h)) => h
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingLabelColumn(name.clone()))?,
        (LabelColumn::Name(name), None) => return Err(Error::MissingLabelColumn(name.clone())),
    };

    let mut values: Vec<f64> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut width: Option<usize> = None;
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if label_idx >= record.len() {
            return Err(Error::MissingLabelColumn(label_idx.to_string()));
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        for (column, cell) in record.iter().enumerate() {
            if column == label_idx {
                raw_labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                line,
                column,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumeric {
                    line,
                    column,
                    value: cell.to_string(),
                });
            }
            values.push(v);
        }
    }

    let n = raw_labels.len();
    let d = width.map_or(0, |w| w - 1);
    if n == 0 {
        return Err(Error::InvalidArgument("csv has no data rows".into()));
    }
    let (labels, label_values) = encode_labels(&raw_labels);
    if label_values.len() < 2 {
        return Err(Error::SingleClass);
    }
    let instances = Array2::from_shape_vec((n, d), values)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let feature_names = header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|(i, _)| *i != label_idx)
            .map(|(_, name)| name)
            .collect()
    });
    let ds = Dataset {
        instances,
        labels,
        n_classes: label_values.len(),
        feature_names,
        label_values,
    };
    ds.validate()?;
    Ok(ds)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::MalformedRow {
        line,
        message: e.to_string(),
    }
}

/// Maps observed label values to `0..k` in ascending order: numeric order
/// when every value parses as a number, lexicographic otherwise.
fn encode_labels(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let numeric: Option<Vec<f64>> = raw.iter().map(|s| s.parse::<f64>().ok()).collect();
    let mut distinct: Vec<String> = raw
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if let Some(nums) = &numeric {
        let mut pairs: Vec<(f64, String)> = nums.iter().copied().zip(raw.iter().cloned()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.dedup_by(|a, b| a.0 == b.0);
        distinct = pairs.into_iter().map(|(_, s)| s).collect();
        let labels = nums
            .iter()
            .map(|v| {
                distinct
                    .iter()
                    .position(|s| s.parse::<f64>().ok() == Some(*v))
                    .expect("value is present")
            })
            .collect();
        return (labels, distinct);
    }
    let labels = raw
        .iter()
        .map(|s| distinct.binary_search(s).expect("value is present"))
        .collect();
    (labels, distinct)
}

/// Per-column affine transform fitted by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    /// Population standard deviation; `1.0` for degenerate columns.
    pub std: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl ScalerParams {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        Array1::from_iter(x.iter().enumerate().map(|(j, &v)| {
            if self.degenerate[j] {
                0.0
            } else {
                (v - self.mean[j]) / self.std[j]
            }
        }))
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if self.degenerate[j] {
                    0.0
                } else {
                    (*v - self.mean[j]) / self.std[j]
                };
            }
        }
        out
    }

    pub fn inverse_transform(&self, z: &Array2<f64>) -> Array2<f64> {
        let mut out = z.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[j] + self.mean[j];
            }
        }
        out
    }

    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows() as f64;
        let d = x.ncols();
        let mut mean = vec![0.0; d];
        let mut std = vec![1.0; d];
        let mut degenerate = vec![false; d];
        for (j, col) in x.columns().into_iter().enumerate() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[j] = m;
            let s = var.sqrt();
            if s < DEGENERATE_STD {
                degenerate[j] = true;
            } else {
                std[j] = s;
            }
        }
        ScalerParams {
            mean,
            std,
            degenerate,
        }
    }
}

/// Centers and scales every column to mean 0 and population standard
/// deviation 1. Constant columns become all zeros and are flagged.
pub fn standardize(data: &Dataset) -> Result<(Dataset, ScalerParams)> {
    if data.n_samples() < 2 {
        return Err(Error::InvalidArgument(
            "standardize needs at least two samples".into(),
        ));
    }
    let params = ScalerParams::fit(&data.instances);
    let mut out = data.clone();
    out.instances = params.transform(&data.instances);
    Ok((out, params))
}

/// A single train/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold split. Each class is shuffled with a seeded generator
/// and the concatenated class lists are dealt round-robin to the folds, so
/// both per-class counts and fold sizes differ by at most one.
pub fn stratified_kfold(data: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    let n = data.n_samples();
    if k < 2 {
        return Err(Error::InvalidArgument("k must be at least 2".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds sample count {n}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.n_classes];
    for (i, &y) in data.labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut slot = 0;
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            tests[slot % k].push(i);
            slot += 1;
        }
    }
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; n];
            for &i in &test {
                in_test[i] = true;
            }
            let train = (0..n).filter(|&i| !in_test[i]).collect();
            Fold { train, test }
        })
        .collect())
}

/// Parameters for [`synthetic_gaussian`].
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub n_classes: usize,
    pub informative: usize,
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Mean of class `class` on coordinate `j`.
    ///
    /// Informative coordinate `j` is shifted up for the class `j mod |Y|` and
    /// centered across classes, so any two classes differ by `separation` on
    /// the coordinates assigned to either of them.
    pub fn class_mean(&self, class: usize, j: usize) -> f64 {
        if j >= self.informative {
            return 0.0;
        }
        let hit = if j % self.n_classes == class {
            1.0
        } else {
            0.0
        };
        self.separation * (hit - 1.0 / self.n_classes as f64)
    }

    fn check(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        if self.n < self.n_classes {
            return Err(Error::InvalidArgument(
                "need at least one sample per class".into(),
            ));
        }
        if self.d == 0 {
            return Err(Error::InvalidArgument("d must be positive".into()));
        }
        if self.informative > self.d {
            return Err(Error::InvalidArgument(
                "informative coordinates exceed d".into(),
            ));
        }
        if !self.separation.is_finite() || self.separation < 0.0 {
            return Err(Error::InvalidArgument(
                "separation must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Draws `n` fresh samples from the same law with labels drawn uniformly.
    /// Used for Monte Carlo risk estimates.
    pub fn sample_population(&self, n: usize, seed: u64) -> Result<(Array2<f64>, Vec<usize>)> {
        use rand::Rng;
        self.check()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, self.d));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let c = rng.random_range(0..self.n_classes);
            y.push(c);
            for j in 0..self.d {
                let z: f64 = StandardNormal.sample(&mut rng);
                x[[i, j]] = self.class_mean(c, j) + z;
            }
        }
        Ok((x, y))
    }
}

/// Class-conditional unit-variance Gaussians. Labels cycle `i mod |Y|` so
/// every class is present and class sizes differ by at most one.
pub fn synthetic_gaussian(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.check()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut x = Array2::zeros((spec.n, spec.d));
    let labels: Vec<usize> = (0..spec.n).map(|i| i % spec.n_classes).collect();
    for (i, &c) in labels.iter().enumerate() {
        for j in 0..spec.d {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[[i, j]] = spec.class_mean(c, j) + z;
        }
    }
    Dataset::new(x, labels, spec.n_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn opts(label: LabelColumn, header: bool) -> CsvOptions {
        CsvOptions {
            label_column: label,
            has_header: header,
            delimiter: b',',
        }
    }

    #[test]
    fn labels_reencoded_contiguously() {
        let csv = "a,b,y\n1,2,5\n3,4,7\n5,6,5\n";
        let ds = read_csv(csv.as_bytes(), &opts(LabelColumn::Name("y".into()), true)).unwrap();
        assert_eq!(ds.labels, vec![0, 1, 0]);
        assert_eq!(ds.n_classes, 2);
        assert_eq!(ds.label_values, vec!["5", "7"]);
        assert_eq!(ds.feature_names.as_deref().unwrap(), &["a", "b"]);
        assert_eq!(ds.instances, array![[1., 2.], [3., 4.], [5., 6.]]);
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let csv = "10,0.5\n9,1.5\n10,2.5\n";
        let ds = read_csv(csv.as_bytes(), &opts(LabelColumn::Index(0), false)).unwrap();
        assert_eq!(ds.label_values, vec!["9", "10"]);
        assert_eq!(ds.labels, vec![1, 0, 1]);
    }

    #[test]
    fn text_cell_reports_line() {
        let csv = "x,y\n1,0\n2,1\noops,0\n";
        let err = read_csv(csv.as_bytes(), &opts(LabelColumn::Name("y".into()), true)).unwrap_err();
        match err {
            Error::NonNumeric { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e:?}"),
        }
        assert!(err_string(csv).contains("line 4"));
    }

    fn err_string(csv: &str) -> String {
        read_csv(csv.as_bytes(), &opts(LabelColumn::Name("y".into()), true))
            .unwrap_err()
            .to_string()
    }

    #[test]
    fn ragged_row_is_malformed() {
        let csv = "x,y\n1,0\n2,1,3\n";
        let err = read_csv(csv.as_bytes(), &opts(LabelColumn::Name("y".into()), true)).unwrap_err();
        assert!(
            matches!(err, Error::MalformedRow { line: 3, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn single_class_rejected() {
        let csv = "1,0\n2,0\n";
        let err = read_csv(csv.as_bytes(), &opts(LabelColumn::Index(1), false)).unwrap_err();
        assert!(matches!(err, Error::SingleClass));
    }

    #[test]
    fn semicolon_delimiter() {
        let csv = "y;x\na;1\nb;2\n";
        let o = CsvOptions {
            delimiter: b';',
            ..opts(LabelColumn::Name("y".into()), true)
        };
        let ds = read_csv(csv.as_bytes(), &o).unwrap();
        assert_eq!(ds.labels, vec![0, 1]);
    }

    #[test]
    fn two_point_column_standardizes_to_unit() {
        let ds = Dataset::new(array![[1.0, 4.0], [3.0, 4.0]], vec![0, 1], 2).unwrap();
        let (z, p) = standardize(&ds).unwrap();
        assert_eq!(z.instances.column(0).to_vec(), vec![-1.0, 1.0]);
        assert_eq!(z.instances.column(1).to_vec(), vec![0.0, 0.0]);
        assert_eq!(p.degenerate, vec![false, true]);
    }

    #[test]
    fn constant_column_is_flagged() {
        let ds = Dataset::new(array![[4.0], [4.0], [4.0]], vec![0, 1, 0], 2).unwrap();
        let (z, p) = standardize(&ds).unwrap();
        assert!(z.instances.iter().all(|v| *v == 0.0));
        assert!(p.degenerate[0]);
        assert!(p.std[0] > 0.0);
    }

    #[test]
    fn kfold_exact_divisibility() {
        let x = Array2::zeros((10, 1));
        let labels = (0..10).map(|i| i % 2).collect();
        let ds = Dataset::new(x, labels, 2).unwrap();
        let folds = stratified_kfold(&ds, 5, 3).unwrap();
        for f in &folds {
            assert_eq!(f.test.len(), 2);
            let ones: usize = f.test.iter().map(|&i| ds.labels[i]).sum();
            assert_eq!(ones, 1);
        }
        assert_eq!(folds, stratified_kfold(&ds, 5, 3).unwrap());
    }

    #[test]
    fn kfold_rejects_bad_k() {
        let ds = Dataset::new(Array2::zeros((3, 1)), vec![0, 1, 0], 2).unwrap();
        assert!(stratified_kfold(&ds, 4, 0).is_err());
        assert!(stratified_kfold(&ds, 1, 0).is_err());
    }

    #[test]
    fn synthetic_rejects_bad_counts() {
        let spec = SyntheticSpec {
            n: 10,
            d: 3,
            n_classes: 2,
            informative: 4,
            separation: 1.0,
            seed: 0,
        };
        assert!(synthetic_gaussian(&spec).is_err());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec {
            n: 12,
            d: 5,
            n_classes: 3,
            informative: 3,
            separation: 2.0,
            seed: 9,
        };
        let a = synthetic_gaussian(&spec).unwrap();
        let b = synthetic_gaussian(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), vec![4, 4, 4]);
    }
}
