use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::data::{desk_suite, generate_synthetic, load_benchmark_file, load_csv, BenchmarkSpec, Dataset, Split};
use crate::expr::Vocab;
use crate::fit::{FitConfig, SelectOn};
use crate::gp::GpConfig;
use crate::prior::PriorConfig;
use crate::search::SamplerConfig;
use crate::seed::derive_seed;

/// Artifact file names, relative to `out_dir` unless absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub checkpoint: PathBuf,
    pub training_log: PathBuf,
    pub pool: PathBuf,
    pub results: PathBuf,
    pub manifest: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: "corpus.jsonl".into(),
            checkpoint: "prior.ckpt".into(),
            training_log: "prior_log.csv".into(),
            pool: "pool.jsonl".into(),
            results: "results.jsonl".into(),
            manifest: "manifest.json".into(),
        }
    }
}

/// A real dataset given as train/test CSV files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvData {
    pub name: String,
    pub train: PathBuf,
    pub test: PathBuf,
    pub target: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; every stage seed is derived from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Target benchmark for search and fitting.
    pub benchmark: String,
    /// Benchmarks whose training splits feed the GP bootstrap; empty means
    /// the whole suite.
    pub corpus_benchmarks: Vec<String>,
    /// Replaces the built-in suite with specs from a benchmark file.
    pub benchmark_file: Option<PathBuf>,
    /// Replaces the target benchmark with CSV data.
    pub data: Option<CsvData>,
    /// Variables in the token vocabulary.
    pub max_vars: usize,
    /// Templates kept per bootstrap dataset.
    pub corpus_per_dataset: usize,
    /// Complexity cap applied to the pool and to final selection.
    pub max_complexity: usize,
    pub select_on: SelectOn,
    /// Fraction of the training split held out when selecting on validation.
    pub holdout_fraction: f64,
    /// Include per-candidate fit wall time in results (makes them
    /// run-dependent).
    pub record_fit_times: bool,
    pub paths: Paths,
    pub gp: GpConfig,
    pub prior: PriorConfig,
    pub sampler: SamplerConfig,
    pub fit: FitConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: "run".into(),
            benchmark: "easy_sin_linear".into(),
            corpus_benchmarks: Vec::new(),
            benchmark_file: None,
            data: None,
            max_vars: 4,
            corpus_per_dataset: 100,
            max_complexity: 12,
            select_on: SelectOn::Test,
            holdout_fraction: 0.2,
            record_fit_times: false,
            paths: Paths::default(),
            gp: GpConfig::default(),
            prior: PriorConfig::default(),
            sampler: SamplerConfig::default(),
            fit: FitConfig::default(),
        }
    }
}

/// Target data for search and fitting.
#[derive(Clone, Debug)]
pub struct Problem {
    pub name: String,
    pub train: Dataset,
    pub test: Dataset,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies a `dotted.key=value` override, e.g. `sampler.top_k=5` or
    /// `benchmark=easy_poly`. The value is read as a TOML literal, falling
    /// back to a bare string.
    pub fn set_override(&mut self, assignment: &str) -> Result<(), PipelineError> {
        let bad = |msg: String| PipelineError::Config(format!("override `{assignment}`: {msg}"));
        let (key, raw) = assignment.split_once('=').ok_or_else(|| bad("expected key=value".into()))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        let mut root = toml::Table::try_from(&*self).map_err(|e| bad(e.to_string()))?;
        let parts: Vec<&str> = key.split('.').collect();
        let (last, parents) = parts.split_last().ok_or_else(|| bad("empty key".into()))?;
        let mut table = &mut root;
        for part in parents {
            table = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| bad(format!("`{part}` is not a section")))?;
        }
        table.insert(last.to_string(), value);
        *self = root.try_into().map_err(|e: toml::de::Error| bad(e.to_string()))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |e: String| PipelineError::Config(e);
        if self.max_vars == 0 {
            return Err(cfg("max_vars must be at least 1".into()));
        }
        if self.corpus_per_dataset == 0 {
            return Err(cfg("corpus_per_dataset must be at least 1".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(cfg("holdout_fraction must be in (0, 1)".into()));
        }
        self.gp.validate().map_err(|e| cfg(e.to_string()))?;
        self.prior.validate().map_err(|e| cfg(e.to_string()))?;
        self.sampler_config().validate().map_err(|e| cfg(e.to_string()))?;
        self.fit.validate().map_err(|e| cfg(e.to_string()))?;
        if self.prior.max_seq_len < self.gp.max_template_len.min(self.sampler.max_len) + 2 {
            return Err(cfg("prior.max_seq_len must cover the longest template plus BOS/EOS".into()));
        }
        if self.sampler.max_len + 2 > self.prior.max_seq_len {
            return Err(cfg("sampler.max_len + 2 must not exceed prior.max_seq_len".into()));
        }
        Ok(())
    }

    pub fn vocab(&self) -> Vocab {
        Vocab::new(self.max_vars)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.out_dir.join(path)
        }
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage, 0)
    }

    pub fn gp_config(&self) -> GpConfig {
        GpConfig { seed: self.stage_seed("gp"), ..self.gp.clone() }
    }

    pub fn prior_config(&self) -> PriorConfig {
        PriorConfig { seed: self.stage_seed("prior"), ..self.prior.clone() }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig { seed: self.stage_seed("sampler"), max_complexity: self.max_complexity, ..self.sampler.clone() }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig { seed: self.stage_seed("fit"), ..self.fit.clone() }
    }

    /// Benchmark specs in use (built-in suite, or the benchmark file).
    pub fn suite(&self) -> Result<Vec<BenchmarkSpec>, PipelineError> {
        match &self.benchmark_file {
            Some(path) => load_benchmark_file(path).map_err(|e| PipelineError::data(path.display().to_string(), e)),
            None => Ok(desk_suite(self.stage_seed("data"))),
        }
    }

    fn spec(&self, name: &str) -> Result<BenchmarkSpec, PipelineError> {
        self.suite()?
            .into_iter()
            .find(|s| s.name == name)
            .ok_or_else(|| PipelineError::Config(format!("unknown benchmark `{name}`")))
    }

    fn check_dim(&self, name: &str, d: usize) -> Result<(), PipelineError> {
        if d > self.max_vars {
            return Err(PipelineError::Config(format!("`{name}` has {d} inputs but max_vars is {}", self.max_vars)));
        }
        Ok(())
    }

    /// Training splits for the GP bootstrap.
    pub fn corpus_datasets(&self) -> Result<Vec<(String, Dataset)>, PipelineError> {
        let suite = self.suite()?;
        let specs: Vec<BenchmarkSpec> = if self.corpus_benchmarks.is_empty() {
            suite
        } else {
            self.corpus_benchmarks.iter().map(|n| self.spec(n)).collect::<Result<_, _>>()?
        };
        specs
            .into_iter()
            .map(|spec| {
                self.check_dim(&spec.name, spec.d)?;
                let (train, _) = generate_synthetic(&spec).map_err(|e| PipelineError::data(&spec.name, e))?;
                Ok((spec.name, train))
            })
            .collect()
    }

    /// The benchmark (or CSV data) searched and fitted.
    pub fn problem(&self) -> Result<Problem, PipelineError> {
        self.problem_named(None)
    }

    /// Like [`problem`](Self::problem) but for another suite benchmark.
    pub fn problem_named(&self, name: Option<&str>) -> Result<Problem, PipelineError> {
        if let (Some(csv), None) = (&self.data, name) {
            let load = |p: &PathBuf, split| load_csv(p, &csv.target, split).map_err(|e| PipelineError::data(p.display().to_string(), e));
            let train = load(&csv.train, Split::Train)?;
            let test = load(&csv.test, Split::Test)?;
            if train.dim() != test.dim() {
                return Err(PipelineError::Config("train and test CSV feature counts differ".into()));
            }
            self.check_dim(&csv.name, train.dim())?;
            return Ok(Problem { name: csv.name.clone(), train, test });
        }
        let spec = self.spec(name.unwrap_or(&self.benchmark))?;
        self.check_dim(&spec.name, spec.d)?;
        let (train, test) = generate_synthetic(&spec).map_err(|e| PipelineError::data(&spec.name, e))?;
        Ok(Problem { name: spec.name, train, test })
    }
}
