//! Datasets: synthetic benchmark generation, CSV ingestion, and the
//! test-input noise protocol.

mod csv_io;
mod noise;
mod suite;
mod synth;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::ExprError;
use crate::metrics::MetricError;

pub use csv_io::{load_csv, write_csv};
pub use noise::{noise_sweep, perturb_features, NoiseRow, Perturbation, DEFAULT_ETAS};
pub use suite::{desk_suite, find_benchmark, load_benchmark_file, write_benchmark_file, BenchmarkRecord};
pub use synth::generate_synthetic;

/// Default per-feature sampling interval.
pub const DEFAULT_BOX: (f64, f64) = (1.0, 5.0);

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset must have at least one row and one feature")]
    Empty,
    #[error("non-finite value in dataset at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("{0} rows but {1} targets")]
    ShapeMismatch(usize, usize),
    #[error("ground truth is not finite at some sampled input")]
    NonFiniteTarget,
    #[error("target column `{0}` not in header")]
    MissingTarget(String),
    #[error("non-numeric or missing cell at data row {row}, column `{col}`")]
    NonNumericCell { row: usize, col: String },
    #[error("file has no header or no data rows")]
    EmptyFile,
    #[error("feature count mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("noise level {0} outside [0, 1]")]
    EtaOutOfRange(f64),
    #[error("invalid benchmark `{name}`: {reason}")]
    InvalidBenchmark { name: String, reason: String },
    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Easy,
    Medium,
    Hard,
}

/// An `N x d` design matrix with targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub feature_names: Vec<String>,
    /// Per-feature `(lo, hi)` used for sampling and semantic probes.
    pub input_box: Vec<(f64, f64)>,
    pub split: Split,
}

impl Dataset {
    /// Validates shape and finiteness. Feature names default to `x0..`, and
    /// the box to the observed per-column range.
    pub fn new(x: Array2<f64>, y: Array1<f64>, split: Split) -> Result<Self, DataError> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(DataError::Empty);
        }
        if x.nrows() != y.len() {
            return Err(DataError::ShapeMismatch(x.nrows(), y.len()));
        }
        for ((row, col), v) in x.indexed_iter() {
            if !v.is_finite() {
                return Err(DataError::NonFinite { row, col });
            }
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite { row, col: x.ncols() });
        }
        let input_box = x
            .axis_iter(Axis(1))
            .map(|c| {
                let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            })
            .collect();
        let feature_names = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        Ok(Dataset { x, y, feature_names, input_box, split })
    }

    pub fn with_box(mut self, input_box: Vec<(f64, f64)>) -> Self {
        assert_eq!(input_box.len(), self.dim());
        self.input_box = input_box;
        self
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.dim());
        self.feature_names = names;
        self
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize], split: Split) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), indices),
            y: self.y.select(Axis(0), indices),
            feature_names: self.feature_names.clone(),
            input_box: self.input_box.clone(),
            split,
        }
    }

    /// Splits off a validation set of `fraction` of the rows (at least one),
    /// chosen by a seeded shuffle.
    pub fn holdout(&self, fraction: f64, seed: u64) -> (Dataset, Dataset) {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut crate::seed::derive_rng(seed, "holdout", 0));
        let n_val = ((self.len() as f64 * fraction).round() as usize).clamp(1, self.len().max(2) - 1);
        let (val, train) = idx.split_at(n_val);
        let mut train = train.to_vec();
        let mut val = val.to_vec();
        train.sort_unstable();
        val.sort_unstable();
        (self.select_rows(&train, Split::Train), self.select_rows(&val, Split::Validation))
    }
}

/// A ground-truth expression and its sampling protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub name: String,
    pub tier: Tier,
    pub d: usize,
    /// Postfix text with literal constants, e.g. `2.5 x0 mul 1.3 x1 mul sin add`.
    pub expression: String,
    pub input_box: Vec<(f64, f64)>,
    pub train_n: usize,
    pub test_n: usize,
    pub seed: u64,
}
