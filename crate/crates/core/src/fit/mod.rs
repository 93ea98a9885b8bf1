//! Coefficient fitting for templates and final-equation selection.

mod optim;
mod select;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ExprError, PostfixTemplate};
use crate::metrics::MetricReport;

pub use optim::{fit_gradient, fit_hillclimb, fit_one, FitOutcome};
pub use select::{candidate_seed, fit_pool, select_final, FitData, SelectOn};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("invalid fit config: {0}")]
    InvalidConfig(String),
    #[error("every restart produced a non-finite loss")]
    AllRestartsNonFinite,
    #[error("no fitted candidate is feasible (complexity <= {max_complexity} with finite metrics) among {considered}")]
    NoFeasibleCandidate { max_complexity: usize, considered: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Gradient,
    HillClimb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub optimizer: Optimizer,
    pub init_range: (f64, f64),
    pub num_restarts: usize,
    pub max_iters: usize,
    pub learning_rate: f64,
    pub plateau_patience: usize,
    pub plateau_tol: f64,
    pub hc_step_sigma: f64,
    /// Loss evaluations granted to hill-climbing; `None` means the most a
    /// gradient run could use (`2 * max_iters * num_restarts`).
    pub loss_eval_budget: Option<usize>,
    pub seed: u64,
    /// Added to the squared error for each non-finite prediction.
    pub nonfinite_penalty: f64,
    pub record_trace: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            optimizer: Optimizer::Gradient,
            init_range: (-3.0, 3.0),
            num_restarts: 5,
            max_iters: 2000,
            learning_rate: 0.05,
            plateau_patience: 100,
            plateau_tol: 1e-10,
            hc_step_sigma: 0.1,
            loss_eval_budget: None,
            seed: 0,
            nonfinite_penalty: crate::expr::DEFAULT_NONFINITE_PENALTY,
            record_trace: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |m: &str| Err(FitError::InvalidConfig(m.to_string()));
        let (lo, hi) = self.init_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad("init_range must be a finite interval");
        }
        if self.max_iters == 0 || self.num_restarts == 0 {
            return bad("max_iters and num_restarts must be at least 1");
        }
        if self.loss_eval_budget == Some(0) {
            return bad("loss_eval_budget must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.hc_step_sigma > 0.0 && self.hc_step_sigma.is_finite()) {
            return bad("hc_step_sigma must be positive");
        }
        if !(self.plateau_tol >= 0.0) || !(self.nonfinite_penalty >= 0.0) {
            return bad("plateau_tol and nonfinite_penalty must be non-negative");
        }
        Ok(())
    }

    /// Budget in loss evaluations for hill-climbing.
    pub fn hill_climb_budget(&self) -> usize {
        self.loss_eval_budget.unwrap_or(2 * self.max_iters * self.num_restarts)
    }
}

/// A template with fitted coefficients and its post-fit scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedEquation {
    #[serde(rename = "tokens")]
    pub template: PostfixTemplate,
    pub w: Vec<f64>,
    pub complexity: usize,
    /// Penalized training loss at `w` (plain MSE when every prediction is
    /// finite); `None` if fitting failed.
    pub train_mse: Option<f64>,
    pub train: Option<MetricReport>,
    pub validation: Option<MetricReport>,
    pub test: Option<MetricReport>,
    /// Loss evaluations charged (a gradient step counts as two).
    pub evaluations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<(usize, f64)>>,
    /// Why fitting or scoring failed, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    /// Wall-clock fit time; excluded from equality-sensitive outputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_seconds: Option<f64>,
}
