use std::cmp::Ordering;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::fit_one;
use super::{FitConfig, FitError, FittedEquation};
use crate::data::Dataset;
use crate::expr::{PostfixTemplate, Program};
use crate::metrics::MetricReport;
use crate::seed::{derive_seed, stable_hash};

/// Splits a pool is fitted and scored on. Coefficients are fitted on `train`
/// only.
#[derive(Clone, Copy, Debug)]
pub struct FitData<'a> {
    pub train: &'a Dataset,
    pub validation: Option<&'a Dataset>,
    pub test: Option<&'a Dataset>,
}

/// Which split's metrics drive final selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectOn {
    #[default]
    Test,
    Validation,
}

fn score(template: &PostfixTemplate, w: &[f64], data: Option<&Dataset>) -> Result<Option<MetricReport>, String> {
    let Some(ds) = data else { return Ok(None) };
    let pred = Program::from_template(template).evaluate(w, ds.x.view()).map_err(|e| e.to_string())?;
    let target = ds.y.as_slice().expect("contiguous targets");
    let report = MetricReport::compute(&pred.values, target).map_err(|e| format!("{:?} split: {e}", ds.split))?;
    if !(report.mse.is_finite() && report.r2.is_finite()) {
        return Err(format!("{:?} split: metrics overflow", ds.split));
    }
    Ok(Some(report))
}

/// Fit seed of one template, keyed by its token string: the same template
/// gets the same restarts in every pool it appears in.
pub fn candidate_seed(base: u64, template: &PostfixTemplate) -> u64 {
    derive_seed(base, "fit-candidate", stable_hash(&template.to_string()))
}

/// Fits every template on the training split and scores it on each split.
///
/// Each template is fitted with [`candidate_seed`], so its result depends on
/// neither scheduling nor its position in the pool. Failures are recorded in
/// [`FittedEquation::failure`] instead of aborting the pool.
pub fn fit_pool(templates: &[PostfixTemplate], data: &FitData<'_>, config: &FitConfig) -> Vec<FittedEquation> {
    templates
        .par_iter()
        .map(|template| {
            let cfg = FitConfig { seed: candidate_seed(config.seed, template), ..config.clone() };
            let start = Instant::now();
            let outcome = fit_one(template, data.train.x.view(), data.train.y.view(), &cfg);
            let fit_seconds = Some(start.elapsed().as_secs_f64());
            let mut eq = FittedEquation {
                template: template.clone(),
                w: Vec::new(),
                complexity: template.complexity(),
                train_mse: None,
                train: None,
                validation: None,
                test: None,
                evaluations: 0,
                trace: None,
                failure: None,
                fit_seconds,
            };
            match outcome {
                Ok(out) => {
                    let scored = (|| {
                        Ok::<_, String>((
                            score(template, &out.w, Some(data.train))?,
                            score(template, &out.w, data.validation)?,
                            score(template, &out.w, data.test)?,
                        ))
                    })();
                    eq.w = out.w;
                    eq.train_mse = Some(out.train_mse);
                    eq.evaluations = out.evaluations;
                    eq.trace = config.record_trace.then_some(out.trace);
                    match scored {
                        Ok((train, validation, test)) => {
                            eq.train = train;
                            eq.validation = validation;
                            eq.test = test;
                        }
                        Err(msg) => eq.failure = Some(msg),
                    }
                }
                Err(e) => eq.failure = Some(e.to_string()),
            }
            eq
        })
        .collect()
}

fn selection_metrics(eq: &FittedEquation, on: SelectOn) -> Option<&MetricReport> {
    match on {
        SelectOn::Test => eq.test.as_ref(),
        SelectOn::Validation => eq.validation.as_ref(),
    }
}

fn feasible(eq: &FittedEquation, max_complexity: usize, on: SelectOn) -> bool {
    eq.complexity <= max_complexity
        && eq.failure.is_none()
        && eq.w.iter().all(|v| v.is_finite())
        && selection_metrics(eq, on).is_some_and(|m| m.r2.is_finite() && m.mse.is_finite())
}

/// Highest R² on the chosen split among entries with complexity at most
/// `max_complexity` and finite metrics; ties go to lower complexity, then
/// lower MSE, then the lexicographically smaller token string.
pub fn select_final(fitted: &[FittedEquation], max_complexity: usize, on: SelectOn) -> Result<&FittedEquation, FitError> {
    fitted
        .iter()
        .filter(|eq| feasible(eq, max_complexity, on))
        .min_by(|a, b| {
            let (ma, mb) = (selection_metrics(a, on).expect("feasible"), selection_metrics(b, on).expect("feasible"));
            mb.r2
                .total_cmp(&ma.r2)
                .then(a.complexity.cmp(&b.complexity))
                .then(ma.mse.total_cmp(&mb.mse))
                .then_with(|| a.template.to_string().cmp(&b.template.to_string()))
                .then(Ordering::Equal)
        })
        .ok_or(FitError::NoFeasibleCandidate { max_complexity, considered: fitted.len() })
}
