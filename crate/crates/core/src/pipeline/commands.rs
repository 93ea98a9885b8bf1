use std::time::Instant;

use super::artifacts::Recorder;
use super::config::Problem;
use super::results::write_results;
use super::{PipelineError, RunConfig};
use crate::data::Dataset;
use crate::expr::PostfixTemplate;
use crate::fit::{fit_pool, select_final, FitData, FittedEquation, SelectOn};
use crate::gp::{build_corpus, parse_corpus, write_corpus_string};
use crate::prior::{self, PriorModel, TrainReport};
use crate::search::{generate_pool, read_pool, write_pool, Pool};

#[derive(Clone, Debug)]
pub struct BootstrapSummary {
    pub datasets: usize,
    pub templates: usize,
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub report: TrainReport,
    pub num_parameters: usize,
}

#[derive(Clone, Debug)]
pub struct SearchSummary {
    pub pool: Pool,
}

#[derive(Clone, Debug)]
pub struct FitSummary {
    pub dataset: String,
    pub fitted: Vec<FittedEquation>,
    pub selected: FittedEquation,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub bootstrap: BootstrapSummary,
    pub train: TrainSummary,
    pub search: SearchSummary,
    pub fit: FitSummary,
}

fn read_text(config: &RunConfig, path: &std::path::Path) -> Result<String, PipelineError> {
    let path = config.resolve(path);
    std::fs::read_to_string(&path).map_err(|e| PipelineError::io(path, e))
}

fn timed<T>(rec: &mut Recorder<'_>, stage: &str, f: impl FnOnce() -> Result<T, PipelineError>) -> Result<T, PipelineError> {
    let start = Instant::now();
    let out = f()?;
    rec.stage(stage, start.elapsed().as_secs_f64());
    Ok(out)
}

fn bootstrap_stage(config: &RunConfig, rec: &mut Recorder<'_>) -> Result<BootstrapSummary, PipelineError> {
    let datasets = config.corpus_datasets()?;
    let entries = timed(rec, "bootstrap", || Ok(build_corpus(&datasets, &config.gp_config(), config.corpus_per_dataset)?))?;
    let text = write_corpus_string(&entries);
    rec.write("corpus", &config.resolve(&config.paths.corpus), text.as_bytes())?;
    log::info!("bootstrap: {} templates from {} datasets", entries.len(), datasets.len());
    Ok(BootstrapSummary { datasets: datasets.len(), templates: entries.len() })
}

/// Runs the GP bootstrap over the corpus benchmarks and writes the corpus.
pub fn bootstrap(config: &RunConfig) -> Result<BootstrapSummary, PipelineError> {
    config.validate()?;
    let mut rec = Recorder::open(config);
    let out = bootstrap_stage(config, &mut rec)?;
    rec.finish()?;
    Ok(out)
}

/// Corpus templates in file order (duplicates across datasets kept).
pub(crate) fn load_corpus(config: &RunConfig) -> Result<Vec<PostfixTemplate>, PipelineError> {
    let path = config.resolve(&config.paths.corpus);
    let text = read_text(config, &config.paths.corpus)?;
    let entries = parse_corpus(&text, &config.vocab())
        .map_err(|e| PipelineError::BadArtifact { path, reason: e.to_string() })?;
    Ok(entries.into_iter().map(|e| e.template).collect())
}

pub(crate) fn load_prior(config: &RunConfig) -> Result<PriorModel, PipelineError> {
    Ok(PriorModel::load_for(&config.resolve(&config.paths.checkpoint), &config.vocab())?)
}

fn train_stage(config: &RunConfig, rec: &mut Recorder<'_>) -> Result<TrainSummary, PipelineError> {
    let corpus = load_corpus(config)?;
    let (model, report) = timed(rec, "train-prior", || Ok(prior::train(&config.prior_config(), config.vocab(), &corpus)?))?;
    rec.write("checkpoint", &config.resolve(&config.paths.checkpoint), &model.to_bytes())?;
    let mut log = Vec::new();
    prior::write_training_log(&report, &mut log)
        .map_err(|e| PipelineError::io(&config.paths.training_log, std::io::Error::other(e)))?;
    rec.write("training_log", &config.resolve(&config.paths.training_log), &log)?;
    log::info!(
        "prior: {} params, held-out CE {:?} -> {:?}",
        model.num_parameters(),
        report.initial_heldout_ce,
        report.final_heldout_ce()
    );
    Ok(TrainSummary { report, num_parameters: model.num_parameters() })
}

/// Trains the prior on the corpus file; writes the checkpoint and loss log.
pub fn train_prior(config: &RunConfig) -> Result<TrainSummary, PipelineError> {
    config.validate()?;
    let mut rec = Recorder::open(config);
    let out = train_stage(config, &mut rec)?;
    rec.finish()?;
    Ok(out)
}

fn search_stage(config: &RunConfig, problem: &Problem, rec: &mut Recorder<'_>) -> Result<SearchSummary, PipelineError> {
    let model = load_prior(config)?;
    let pool = timed(rec, "search", || Ok(generate_pool(&model, &config.sampler_config(), &problem.train.input_box)?))?;
    rec.write("pool", &config.resolve(&config.paths.pool), write_pool(&pool).as_bytes())?;
    Ok(SearchSummary { pool })
}

/// Samples and filters a candidate pool for the target problem.
pub fn search(config: &RunConfig) -> Result<SearchSummary, PipelineError> {
    config.validate()?;
    let problem = config.problem()?;
    let mut rec = Recorder::open(config);
    let out = search_stage(config, &problem, &mut rec)?;
    rec.finish()?;
    Ok(out)
}

/// Train/validation split used for fitting under `config.select_on`.
pub(crate) fn fitting_splits(config: &RunConfig, problem: &Problem) -> (Dataset, Option<Dataset>) {
    match config.select_on {
        SelectOn::Test => (problem.train.clone(), None),
        SelectOn::Validation => {
            let (train, val) = problem.train.holdout(config.holdout_fraction, config.stage_seed("holdout"));
            (train, Some(val))
        }
    }
}

/// Fits and selects over `templates` without touching the filesystem.
pub(crate) fn fit_and_select(
    config: &RunConfig,
    problem: &Problem,
    templates: &[PostfixTemplate],
) -> (Vec<FittedEquation>, Result<FittedEquation, PipelineError>) {
    let (train, validation) = fitting_splits(config, problem);
    let data = FitData { train: &train, validation: validation.as_ref(), test: Some(&problem.test) };
    let fitted = fit_pool(templates, &data, &config.fit_config());
    let selected = select_final(&fitted, config.max_complexity, config.select_on).cloned().map_err(PipelineError::from);
    (fitted, selected)
}

fn fit_stage(config: &RunConfig, problem: &Problem, pool: &Pool, rec: &mut Recorder<'_>) -> Result<FitSummary, PipelineError> {
    let templates: Vec<PostfixTemplate> = pool.candidates.iter().map(|c| c.template.clone()).collect();
    let start = Instant::now();
    let (fitted, selected) = fit_and_select(config, problem, &templates);
    rec.stage("fit", start.elapsed().as_secs_f64());
    let text = write_results(&problem.name, &fitted, selected.as_ref().ok(), config.record_fit_times);
    rec.write("results", &config.resolve(&config.paths.results), text.as_bytes())?;
    let selected = selected?;
    log::info!(
        "selected {} (complexity {}, test R2 {:?})",
        selected.template,
        selected.complexity,
        selected.test.map(|m| m.r2)
    );
    Ok(FitSummary { dataset: problem.name.clone(), fitted, selected })
}

/// Fits every pool candidate and selects the final equation.
pub fn fit(config: &RunConfig) -> Result<FitSummary, PipelineError> {
    config.validate()?;
    let problem = config.problem()?;
    let path = config.resolve(&config.paths.pool);
    let pool = read_pool(&read_text(config, &config.paths.pool)?, &config.vocab())
        .map_err(|e| PipelineError::BadArtifact { path, reason: e.to_string() })?;
    let mut rec = Recorder::open(config);
    let out = fit_stage(config, &problem, &pool, &mut rec);
    rec.finish()?;
    out
}

/// Bootstrap, train, search, fit and select in one go.
pub fn run(config: &RunConfig) -> Result<RunSummary, PipelineError> {
    config.validate()?;
    let problem = config.problem()?;
    let mut rec = Recorder::open(config);
    let result = (|| {
        let bootstrap = bootstrap_stage(config, &mut rec)?;
        let train = train_stage(config, &mut rec)?;
        let search = search_stage(config, &problem, &mut rec)?;
        let fit = fit_stage(config, &problem, &search.pool, &mut rec)?;
        Ok(RunSummary { bootstrap, train, search, fit })
    })();
    rec.finish()?;
    result
}
