//! Genetic-programming bootstrap of the template corpus.
//!
//! A compact tree-based regressor (ramped half-and-half initialization,
//! tournament selection, subtree crossover, subtree and point mutation, one
//! elite) runs per dataset; its final population and per-generation champions
//! are abstracted into templates.

mod corpus;
mod evolve;
mod init;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corpus::{build_corpus, parse_corpus, write_corpus_string, CorpusEntry};
pub use evolve::{evolve, fitness, Evolution, Individual};
pub use init::{init_population, random_tree};

#[derive(Debug, Error)]
pub enum GpError {
    #[error("invalid GP configuration: {0}")]
    InvalidConfig(String),
    #[error("corpus has {found} templates, fewer than the required {required}")]
    CorpusTooSmall { found: usize, required: usize },
    #[error("corpus line {line}: {reason}")]
    BadCorpusLine { line: usize, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub population_size: usize,
    pub generations: usize,
    /// Maximum tree depth in levels; 1 means single terminals.
    pub max_depth: usize,
    pub parsimony_coefficient: f64,
    pub tournament_size: usize,
    pub crossover_prob: f64,
    pub subtree_mutation_prob: f64,
    pub point_mutation_prob: f64,
    pub constant_range: (f64, f64),
    /// Standard deviation of the point-mutation perturbation of constants.
    pub constant_mutation_sigma: f64,
    pub seed: u64,
    /// Independent runs per dataset whose candidates are pooled before
    /// ranking; one run of a small population rarely yields M distinct
    /// templates.
    pub runs_per_dataset: usize,
    pub min_fit_r2: f64,
    /// Longest template kept in the corpus.
    pub max_template_len: usize,
    /// `build_corpus` fails below this many entries.
    pub min_corpus_size: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population_size: 200,
            generations: 10,
            max_depth: 4,
            parsimony_coefficient: 0.001,
            tournament_size: 20,
            crossover_prob: 0.6,
            subtree_mutation_prob: 0.15,
            point_mutation_prob: 0.2,
            constant_range: (-5.0, 5.0),
            constant_mutation_sigma: 0.5,
            seed: 0,
            runs_per_dataset: 20,
            min_fit_r2: 0.0,
            max_template_len: 64,
            min_corpus_size: 1,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<(), GpError> {
        let bad = |m: &str| Err(GpError::InvalidConfig(m.to_string()));
        if self.population_size < 2 {
            return bad("population_size must be at least 2");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        if self.runs_per_dataset < 1 {
            return bad("runs_per_dataset must be at least 1");
        }
        if self.tournament_size < 1 {
            return bad("tournament_size must be at least 1");
        }
        let probs = [self.crossover_prob, self.subtree_mutation_prob, self.point_mutation_prob];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("operator probabilities must lie in [0, 1]");
        }
        if probs.iter().sum::<f64>() > 1.0 + 1e-12 {
            return bad("operator probabilities must sum to at most 1");
        }
        let (lo, hi) = self.constant_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad("constant_range must be a finite, non-empty interval");
        }
        if self.parsimony_coefficient < 0.0 || !self.parsimony_coefficient.is_finite() {
            return bad("parsimony_coefficient must be non-negative");
        }
        if self.max_template_len == 0 {
            return bad("max_template_len must be positive");
        }
        Ok(())
    }
}
