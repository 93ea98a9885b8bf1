use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifacts::Recorder;
use super::commands::{fit_and_select, load_prior};
use super::config::Problem;
use super::results::{read_results, RecordKind};
use super::{PipelineError, RunConfig};
use crate::data::{noise_sweep as sweep_noise, NoiseRow};
use crate::expr::{PostfixTemplate, Program};
use crate::fit::{fit_gradient, fit_hillclimb, FitConfig, FittedEquation};
use crate::metrics::MetricReport;
use crate::search::{generate_pool, SamplerConfig};
use crate::seed::derive_seed;

/// Allowed rise of R² (and fall of ln MSE) between consecutive noise levels.
pub const NOISE_JITTER: f64 = 0.005;

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x}"))
}

/// The selected equation recorded in a results file.
fn selected_from(config: &RunConfig, path: &Path) -> Result<(String, FittedEquation), PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let bad = |reason: String| PipelineError::BadArtifact { path: path.to_path_buf(), reason };
    let records = read_results(&text, &config.vocab()).map_err(bad)?;
    let rec = records
        .into_iter()
        .rev()
        .find(|r| r.kind == RecordKind::Selected)
        .ok_or_else(|| bad("no selected equation".into()))?;
    Ok((rec.dataset, rec.equation))
}

fn problem_for(config: &RunConfig, dataset: &str) -> Result<Problem, PipelineError> {
    let target = config.problem()?;
    if target.name == dataset {
        Ok(target)
    } else {
        config.problem_named(Some(dataset))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweepReport {
    pub dataset: String,
    pub rows: Vec<NoiseRow>,
    /// Consecutive noise levels where R² rose, or ln MSE fell, by more than
    /// [`NOISE_JITTER`].
    pub violations: Vec<String>,
}

/// Evaluates the frozen selected equation on increasingly perturbed test
/// inputs and writes `noise_sweep.csv`. With `assert_monotone`, degradation
/// violations are an [`PipelineError::Assertion`].
pub fn noise_sweep(config: &RunConfig, etas: &[f64], assert_monotone: bool) -> Result<NoiseSweepReport, PipelineError> {
    config.validate()?;
    let (dataset, eq) = selected_from(config, &config.resolve(&config.paths.results))?;
    let problem = problem_for(config, &dataset)?;
    let rows = sweep_noise(&eq, &problem.train, &problem.test, etas, config.stage_seed("noise"))
        .map_err(|e| PipelineError::data("noise sweep", e))?;
    let mut violations = Vec::new();
    for pair in rows.windows(2) {
        if pair[1].r2 > pair[0].r2 + NOISE_JITTER {
            violations.push(format!("R2 rises from {} at eta {} to {} at eta {}", pair[0].r2, pair[0].eta, pair[1].r2, pair[1].eta));
        }
        if pair[1].ln_mse < pair[0].ln_mse - NOISE_JITTER {
            violations.push(format!("ln(MSE) falls from {} at eta {} to {} at eta {}", pair[0].ln_mse, pair[0].eta, pair[1].ln_mse, pair[1].eta));
        }
    }
    let bytes = csv_bytes(
        &["eta", "ln_mse", "r2", "pearson"],
        rows.iter().map(|r| vec![format!("{}", r.eta), format!("{}", r.ln_mse), format!("{}", r.r2), opt(r.pearson)]),
    );
    let mut rec = Recorder::open(config);
    rec.write("noise_sweep", &config.out_dir.join("noise_sweep.csv"), &bytes)?;
    rec.finish()?;
    if assert_monotone && !violations.is_empty() {
        return Err(PipelineError::Assertion(violations.join("; ")));
    }
    Ok(NoiseSweepReport { dataset, rows, violations })
}

/// A sampler setting varied by [`sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knob {
    MaxTerm,
    MaxTrigVars,
    Temperature,
    TopK,
}

impl Knob {
    pub fn name(self) -> &'static str {
        match self {
            Knob::MaxTerm => "max_term",
            Knob::MaxTrigVars => "max_trig_vars",
            Knob::Temperature => "temperature",
            Knob::TopK => "top_k",
        }
    }

    fn apply(self, base: &SamplerConfig, value: f64) -> Result<SamplerConfig, PipelineError> {
        let int = || {
            if value >= 1.0 && value.fract() == 0.0 && value <= usize::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(PipelineError::Config(format!("{} needs a positive integer, got {value}", self.name())))
            }
        };
        let mut cfg = base.clone();
        match self {
            Knob::MaxTerm => cfg.max_term = int()?,
            Knob::MaxTrigVars => cfg.max_trig_vars = int()?,
            Knob::TopK => cfg.top_k = int()?,
            Knob::Temperature => cfg.temperature = value,
        }
        cfg.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

impl fmt::Display for Knob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Knob {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "max_term" => Ok(Knob::MaxTerm),
            "max_trig_vars" => Ok(Knob::MaxTrigVars),
            "temperature" => Ok(Knob::Temperature),
            "top_k" => Ok(Knob::TopK),
            _ => Err(PipelineError::Config(format!("unknown sweep knob `{s}`"))),
        }
    }
}

/// One (value, benchmark) cell of a sensitivity sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: f64,
    pub benchmark: String,
    /// `ok`, or the error that stopped this cell.
    pub status: String,
    pub r2: Option<f64>,
    pub pearson: Option<f64>,
    pub tokens: Option<String>,
}

/// Per-value average over the cells that succeeded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepMean {
    pub value: f64,
    pub r2: Option<f64>,
    pub pearson: Option<f64>,
    pub ok_cells: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub knob: Knob,
    pub cells: Vec<SweepCell>,
    pub means: Vec<SweepMean>,
}

impl SweepTable {
    pub fn mean_r2(&self, value: f64) -> Option<f64> {
        self.means.iter().find(|m| m.value == value).and_then(|m| m.r2)
    }
}

/// Re-runs search and fitting for each knob value on each benchmark (the
/// configured target when `benchmarks` is empty), holding every seed fixed.
/// Writes `sweep_<knob>.csv`.
pub fn sweep(config: &RunConfig, knob: Knob, values: &[f64], benchmarks: &[String]) -> Result<SweepTable, PipelineError> {
    config.validate()?;
    if values.is_empty() {
        return Err(PipelineError::Config("sweep needs at least one value".into()));
    }
    let base = config.sampler_config();
    let settings: Vec<SamplerConfig> = values.iter().map(|&v| knob.apply(&base, v)).collect::<Result<_, _>>()?;
    let model = load_prior(config)?;
    let problems: Vec<Problem> = if benchmarks.is_empty() {
        vec![config.problem()?]
    } else {
        benchmarks.iter().map(|b| config.problem_named(Some(b))).collect::<Result<_, _>>()?
    };

    let mut cells = Vec::new();
    for (&value, sampler) in values.iter().zip(&settings) {
        for problem in &problems {
            let outcome = generate_pool(&model, sampler, &problem.train.input_box)
                .map_err(PipelineError::from)
                .and_then(|pool| {
                    let templates: Vec<PostfixTemplate> = pool.candidates.into_iter().map(|c| c.template).collect();
                    fit_and_select(config, problem, &templates).1
                });
            let cell = match outcome {
                Ok(eq) => SweepCell {
                    value,
                    benchmark: problem.name.clone(),
                    status: "ok".into(),
                    r2: eq.test.map(|m| m.r2),
                    pearson: eq.test.and_then(|m| m.pearson),
                    tokens: Some(eq.template.to_string()),
                },
                Err(e) => SweepCell {
                    value,
                    benchmark: problem.name.clone(),
                    status: e.to_string(),
                    r2: None,
                    pearson: None,
                    tokens: None,
                },
            };
            log::info!("sweep {knob}={value} on {}: {} r2 {:?}", cell.benchmark, cell.status, cell.r2);
            cells.push(cell);
        }
    }
    let means = values
        .iter()
        .map(|&value| {
            let ok: Vec<&SweepCell> = cells.iter().filter(|c| c.value == value && c.r2.is_some()).collect();
            let mean = |f: &dyn Fn(&SweepCell) -> Option<f64>| {
                let vals: Vec<f64> = ok.iter().filter_map(|c| f(c)).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            };
            SweepMean { value, r2: mean(&|c| c.r2), pearson: mean(&|c| c.pearson), ok_cells: ok.len() }
        })
        .collect();
    let table = SweepTable { knob, cells, means };

    let rows = table
        .cells
        .iter()
        .map(|c| vec![format!("{}", c.value), c.benchmark.clone(), c.status.clone(), opt(c.r2), opt(c.pearson)])
        .chain(table.means.iter().map(|m| vec![format!("{}", m.value), "mean".into(), format!("{} ok", m.ok_cells), opt(m.r2), opt(m.pearson)]));
    let bytes = csv_bytes(&["value", "benchmark", "status", "r2", "pearson"], rows);
    let mut rec = Recorder::open(config);
    rec.write(&format!("sweep_{knob}"), &config.out_dir.join(format!("sweep_{knob}.csv")), &bytes)?;
    rec.finish()?;
    Ok(table)
}

/// One optimizer's result in a paired ablation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationArm {
    pub w: Vec<f64>,
    pub train_mse: f64,
    pub evaluations: usize,
    pub test: Option<MetricReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub pair: usize,
    pub seed: u64,
    pub gradient: AblationArm,
    pub hill_climb: AblationArm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub dataset: String,
    pub tokens: String,
    pub rows: Vec<AblationRow>,
    /// Pairs where the gradient arm's train MSE is strictly lower.
    pub gradient_wins: usize,
    pub gradient_mean_test_r2: Option<f64>,
    pub hill_climb_mean_test_r2: Option<f64>,
}

fn arm(template: &PostfixTemplate, out: crate::fit::FitOutcome, problem: &Problem) -> AblationArm {
    let test = Program::from_template(template)
        .evaluate(&out.w, problem.test.x.view())
        .ok()
        .and_then(|p| MetricReport::compute(&p.values, problem.test.y.as_slice().expect("contiguous")).ok());
    AblationArm { w: out.w, train_mse: out.train_mse, evaluations: out.evaluations, test }
}

fn mean_r2(rows: &[AblationRow], pick: impl Fn(&AblationRow) -> &AblationArm) -> Option<f64> {
    let vals: Option<Vec<f64>> = rows.iter().map(|r| pick(r).test.map(|m| m.r2)).collect();
    vals.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Gradient fitting versus hill-climbing on one template over `pairs` paired
/// seeds. Each pair shares the seed (hence the starting points); hill-climbing
/// gets exactly the evaluation budget the gradient run used. Writes
/// `ablation.jsonl`.
pub fn ablate_coeff(config: &RunConfig, template: &PostfixTemplate, pairs: usize) -> Result<AblationReport, PipelineError> {
    config.validate()?;
    if pairs == 0 {
        return Err(PipelineError::Config("ablation needs at least one seed pair".into()));
    }
    let problem = config.problem()?;
    let (x, y) = (problem.train.x.view(), problem.train.y.view());
    let base = config.fit_config();
    let rows: Vec<AblationRow> = (0..pairs)
        .into_par_iter()
        .map(|pair| {
            let seed = derive_seed(config.seed, "ablation", pair as u64);
            let cfg = FitConfig { seed, ..base.clone() };
            let grad = fit_gradient(template, x, y, &cfg)?;
            let hc_cfg = FitConfig { loss_eval_budget: Some(grad.evaluations), ..cfg };
            let hc = fit_hillclimb(template, x, y, &hc_cfg)?;
            if hc.evaluations != grad.evaluations {
                return Err(PipelineError::Assertion(format!(
                    "pair {pair}: hill-climb used {} evaluations, gradient {}",
                    hc.evaluations, grad.evaluations
                )));
            }
            Ok(AblationRow { pair, seed, gradient: arm(template, grad, &problem), hill_climb: arm(template, hc, &problem) })
        })
        .collect::<Result<_, PipelineError>>()?;
    let report = AblationReport {
        dataset: problem.name.clone(),
        tokens: template.to_string(),
        gradient_wins: rows.iter().filter(|r| r.gradient.train_mse < r.hill_climb.train_mse).count(),
        gradient_mean_test_r2: mean_r2(&rows, |r| &r.gradient),
        hill_climb_mean_test_r2: mean_r2(&rows, |r| &r.hill_climb),
        rows,
    };
    let mut text = String::new();
    for row in &report.rows {
        text.push_str(&serde_json::to_string(row).expect("serializable"));
        text.push('\n');
    }
    let summary = serde_json::json!({
        "dataset": report.dataset,
        "tokens": report.tokens,
        "pairs": pairs,
        "gradient_wins": report.gradient_wins,
        "gradient_mean_test_r2": report.gradient_mean_test_r2,
        "hill_climb_mean_test_r2": report.hill_climb_mean_test_r2,
    });
    text.push_str(&summary.to_string());
    text.push('\n');
    let mut rec = Recorder::open(config);
    rec.write("ablation", &config.out_dir.join("ablation.jsonl"), text.as_bytes())?;
    rec.finish()?;
    Ok(report)
}

/// Median wall time in seconds of `repeats` evaluations over `x`.
pub fn time_evaluation(program: &Program, w: &[f64], x: ArrayView2<'_, f64>, repeats: usize) -> f64 {
    let mut times: Vec<f64> = (0..repeats.max(1))
        .map(|_| {
            let start = Instant::now();
            let out = program.evaluate(w, x);
            std::hint::black_box(&out);
            start.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    if times.len() % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub dataset: String,
    pub tokens: String,
    pub n_test: usize,
    pub repeats: usize,
    pub median_seconds: f64,
}

/// Times one forward evaluation of each selected equation over its test
/// split. `results` defaults to the configured results file. Writes
/// `timing.csv`.
pub fn timing(config: &RunConfig, results: &[PathBuf], repeats: usize) -> Result<Vec<TimingRow>, PipelineError> {
    config.validate()?;
    let default = [config.resolve(&config.paths.results)];
    let paths: &[PathBuf] = if results.is_empty() { &default } else { results };
    let mut rows = Vec::with_capacity(paths.len());
    for path in paths {
        let (dataset, eq) = selected_from(config, path)?;
        let problem = problem_for(config, &dataset)?;
        let program = Program::from_template(&eq.template);
        let median_seconds = time_evaluation(&program, &eq.w, problem.test.x.view(), repeats);
        rows.push(TimingRow { dataset, tokens: eq.template.to_string(), n_test: problem.test.len(), repeats: repeats.max(1), median_seconds });
    }
    let bytes = csv_bytes(
        &["dataset", "tokens", "n_test", "repeats", "median_seconds"],
        rows.iter().map(|r| vec![r.dataset.clone(), r.tokens.clone(), r.n_test.to_string(), r.repeats.to_string(), format!("{}", r.median_seconds)]),
    );
    let mut rec = Recorder::open(config);
    rec.write("timing", &config.out_dir.join("timing.csv"), &bytes)?;
    rec.finish()?;
    Ok(rows)
}
