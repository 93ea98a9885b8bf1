//! Template search: constrained autoregressive sampling from a next-token
//! model, validity filtering, deduplication and proxy ranking.

mod filter;
mod pool;
mod sampler;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{PostfixTemplate, Token, Vocab};
use crate::prior::{PriorError, PriorModel};

pub use filter::{probe_points, semantic_filter, zero_denominator};
pub use pool::{check_template, generate_pool, rank_by_proxy, read_pool, write_pool, Pool, RejectionStats};
pub use sampler::{allowed_tokens, next_distribution, sample_one, score_sequence, DecodeState, Sample};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("decoding masks left no admissible token after {retries} attempts")]
    DeadEnd { retries: usize },
    #[error("no candidate survived filtering ({stats})")]
    EmptyPool { stats: RejectionStats },
    #[error("bad pool record on line {line}: {reason}")]
    BadPoolRecord { line: usize, reason: String },
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that maps a BOS-prefixed token sequence to next-token logits
/// indexed by vocabulary id.
pub trait NextTokenModel: Sync {
    fn vocab(&self) -> &Vocab;
    fn next_logits(&self, prefix: &[Token]) -> Result<Vec<f64>, PriorError>;
}

impl NextTokenModel for PriorModel {
    fn vocab(&self) -> &Vocab {
        PriorModel::vocab(self)
    }

    fn next_logits(&self, prefix: &[Token]) -> Result<Vec<f64>, PriorError> {
        PriorModel::next_logits(self, prefix)
    }
}

/// Which decoding masks are active.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Arity, EOS, budget and reachability masks.
    #[default]
    Grammar,
    /// Only PAD/BOS and out-of-range variables are forbidden; EOS may come at
    /// any step. Used to measure how often the model alone produces valid
    /// sequences.
    Off,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub temperature: f64,
    pub top_k: usize,
    pub num_samples: usize,
    /// Longest template the decoder may emit (excluding BOS/EOS).
    pub max_len: usize,
    /// Complexity cap (token count) applied when filtering.
    pub max_complexity: usize,
    /// Budget on operand tokens (variables and `COF`).
    pub max_term: usize,
    /// Budget on `sin`/`cos` tokens.
    pub max_trig_vars: usize,
    pub seed: u64,
    pub semantic_probe_count: usize,
    pub masks: MaskMode,
    pub dead_end_retries: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            temperature: 0.8,
            top_k: 10,
            num_samples: 200,
            max_len: 64,
            max_complexity: 12,
            max_term: 8,
            max_trig_vars: 4,
            seed: 0,
            semantic_probe_count: 16,
            masks: MaskMode::Grammar,
            dead_end_retries: 32,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.to_string()));
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive and finite");
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        if self.max_len == 0 {
            return bad("max_len must be at least 1");
        }
        if self.max_complexity > self.max_len {
            return bad("max_complexity must not exceed max_len");
        }
        if self.max_term == 0 || self.max_trig_vars == 0 {
            return bad("budgets must be at least 1");
        }
        if self.semantic_probe_count == 0 {
            return bad("semantic_probe_count must be at least 1");
        }
        Ok(())
    }
}

/// Why a sampled sequence was dropped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Syntax,
    Semantic,
    Complexity,
    Budget,
    Overlength,
}

/// A surviving pool entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub template: PostfixTemplate,
    /// Sum of log renormalized sampling probabilities of the emitted tokens.
    pub proxy_score: f64,
}

impl Candidate {
    pub fn complexity(&self) -> usize {
        self.template.complexity()
    }
}
