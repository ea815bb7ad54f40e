use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};

use mrccg::cg::FeatureMapSpec;
use mrccg::datasets::{load_csv, CsvOptions, LabelColumn};
use mrccg::{CgConfig, Dataset, InitStrategy};

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// CSV file with one instance per row.
    #[arg(long)]
    pub data: PathBuf,
    /// Label column: zero-based index or header name.
    #[arg(long, default_value = "0")]
    pub label_col: String,
    /// The file has no header row.
    #[arg(long)]
    pub no_header: bool,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
}

impl DataArgs {
    pub fn load(&self) -> Result<Dataset> {
        if !self.delimiter.is_ascii() {
            bail!("delimiter must be a single ASCII character");
        }
        let opts = CsvOptions {
            label_column: self.label_col.parse::<LabelColumn>().expect("infallible"),
            has_header: !self.no_header,
            delimiter: self.delimiter as u8,
        };
        load_csv(&self.data, &opts).with_context(|| format!("loading {}", self.data.display()))
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmapKind {
    Identity,
    Rff,
}

#[derive(Args, Debug, Clone)]
pub struct FmapArgs {
    #[arg(long, value_enum, default_value_t = FmapKind::Identity)]
    pub fmap: FmapKind,
    /// Number of random frequencies; each gives a cosine and a sine feature.
    #[arg(long, default_value_t = 500)]
    pub rff_components: usize,
    /// Frequency variance; defaults to 1 / (d · mean column variance).
    #[arg(long)]
    pub rff_gamma: Option<f64>,
}

impl FmapArgs {
    pub fn spec(&self) -> FeatureMapSpec {
        match self.fmap {
            FmapKind::Identity => FeatureMapSpec::Identity,
            FmapKind::Rff => FeatureMapSpec::Rff {
                components: self.rff_components,
                gamma: self.rff_gamma,
            },
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct CgArgs {
    /// Minimum dual violation for adding a feature.
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    /// Maximum features added per iteration.
    #[arg(long, default_value_t = 100)]
    pub nmax: usize,
    /// Maximum number of LP solves.
    #[arg(long, default_value_t = 10)]
    pub kmax: usize,
    /// Multiplier λ₀ in λ = λ₀ s / √n.
    #[arg(long, default_value_t = 1.0)]
    pub lambda_scale: f64,
    /// Size of the screened initial feature set (defaults to --nmax).
    #[arg(long)]
    pub init_size: Option<usize>,
    /// Write every LP subproblem into this directory.
    #[arg(long)]
    pub dump_lp: Option<PathBuf>,
    /// Train on raw instead of standardized columns.
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl CgArgs {
    pub fn config(&self) -> CgConfig {
        CgConfig {
            epsilon: self.epsilon,
            n_max: self.nmax,
            k_max: self.kmax,
            init: InitStrategy::Screening {
                size: self.init_size,
            },
            lambda_scale: self.lambda_scale,
            seed: self.seed,
            dump_lp: self.dump_lp.clone(),
            ..CgConfig::default()
        }
    }

    pub fn standardize(&self) -> bool {
        !self.no_standardize
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fmap: FmapArgs,
    #[command(flatten)]
    pub cg: CgArgs,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Predictions CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fmap: FmapArgs,
    #[command(flatten)]
    pub cg: CgArgs,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Repetitions with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// Metrics CSV path.
    #[arg(long, default_value = "cv.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Benchmark on this CSV instead of synthetic data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "0")]
    pub label_col: String,
    #[arg(long)]
    pub no_header: bool,
    /// Synthetic sample count.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Synthetic instance dimension.
    #[arg(long, default_value_t = 50)]
    pub d: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    /// Synthetic dimensions carrying class signal.
    #[arg(long, default_value_t = 10)]
    pub informative: usize,
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    #[command(flatten)]
    pub fmap: FmapArgs,
    #[command(flatten)]
    pub cg: CgArgs,
    /// Comma-separated n_max values to sweep (overrides --nmax).
    #[arg(long, value_delimiter = ',')]
    pub sweep_nmax: Vec<usize>,
    /// Comma-separated RFF component counts to sweep (implies --fmap rff).
    #[arg(long, value_delimiter = ',')]
    pub sweep_rff: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// Timing CSV path.
    #[arg(long, default_value = "bench.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    /// Trained model; when absent a model is trained from --data.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "0")]
    pub label_col: String,
    #[arg(long)]
    pub no_header: bool,
    #[command(flatten)]
    pub fmap: FmapArgs,
    #[command(flatten)]
    pub cg: CgArgs,
    /// Feature list CSV path.
    #[arg(long, default_value = "features.csv")]
    pub out: PathBuf,
}

pub fn data_args(data: &Path, label_col: &str, no_header: bool) -> DataArgs {
    DataArgs {
        data: data.to_path_buf(),
        label_col: label_col.to_string(),
        no_header,
        delimiter: ',',
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
