use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::filter::{probe_points, semantic_filter};
use super::sampler::{sample_one, Sample};
use super::{Candidate, NextTokenModel, RejectReason, SamplerConfig, SearchError};
use crate::expr::{PostfixTemplate, Vocab};
use crate::seed::derive_rng;

/// Counts of what happened to the sampled sequences.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionStats {
    pub sampled: usize,
    pub dead_end: usize,
    pub syntax: usize,
    pub overlength: usize,
    pub complexity: usize,
    pub budget: usize,
    pub semantic: usize,
    pub duplicates: usize,
    pub survivors: usize,
}

impl RejectionStats {
    fn record(&mut self, reason: RejectReason) {
        match reason {
            RejectReason::Syntax => self.syntax += 1,
            RejectReason::Semantic => self.semantic += 1,
            RejectReason::Complexity => self.complexity += 1,
            RejectReason::Budget => self.budget += 1,
            RejectReason::Overlength => self.overlength += 1,
        }
    }
}

impl fmt::Display for RejectionStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sampled {}, dead-end {}, syntax {}, overlength {}, complexity {}, budget {}, semantic {}, duplicates {}, survivors {}",
            self.sampled,
            self.dead_end,
            self.syntax,
            self.overlength,
            self.complexity,
            self.budget,
            self.semantic,
            self.duplicates,
            self.survivors
        )
    }
}

/// Filtered, deduplicated candidates in rank order.
#[derive(Clone, Debug, PartialEq)]
pub struct Pool {
    pub candidates: Vec<Candidate>,
    pub stats: RejectionStats,
}

fn classify(
    sample: &Sample,
    config: &SamplerConfig,
    vocab: &Vocab,
    num_vars: usize,
    probes: &Array2<f64>,
) -> Result<PostfixTemplate, RejectReason> {
    let template = match PostfixTemplate::new(sample.tokens.clone(), vocab) {
        Ok(t) => t,
        Err(_) if !sample.eos => return Err(RejectReason::Overlength),
        Err(_) => return Err(RejectReason::Syntax),
    };
    check_template(&template, config, num_vars, probes)?;
    Ok(template)
}

/// The post-parse filters applied to every sample, in order: variable range,
/// complexity, operand/trig budgets, semantic checks on `probes`.
pub fn check_template(
    template: &PostfixTemplate,
    config: &SamplerConfig,
    num_vars: usize,
    probes: &Array2<f64>,
) -> Result<(), RejectReason> {
    if template.max_var().is_some_and(|v| v >= num_vars) {
        return Err(RejectReason::Syntax);
    }
    if template.complexity() > config.max_complexity {
        return Err(RejectReason::Complexity);
    }
    if template.operand_count() > config.max_term || template.trig_count() > config.max_trig_vars {
        return Err(RejectReason::Budget);
    }
    semantic_filter(template, probes)
}

/// Draws `num_samples` sequences (slot `i` uses its own stream derived from
/// `(seed, i)`), filters them, deduplicates keeping the higher proxy score and
/// returns the survivors ranked by [`rank_by_proxy`].
///
/// `input_box` gives one `(lo, hi)` range per dataset variable; its length
/// limits which variable tokens may be sampled.
pub fn generate_pool(
    model: &dyn NextTokenModel,
    config: &SamplerConfig,
    input_box: &[(f64, f64)],
) -> Result<Pool, SearchError> {
    config.validate()?;
    let vocab = *model.vocab();
    let num_vars = input_box.len().min(vocab.max_vars());
    let probes = probe_points(input_box, config.semantic_probe_count, config.seed);

    let samples: Vec<Result<Sample, SearchError>> = (0..config.num_samples)
        .into_par_iter()
        .map(|slot| {
            let mut rng = derive_rng(config.seed, "sample-slot", slot as u64);
            sample_one(model, config, num_vars, &mut rng)
        })
        .collect();

    let mut stats = RejectionStats { sampled: config.num_samples, ..Default::default() };
    let mut best: HashMap<PostfixTemplate, f64> = HashMap::new();
    for sample in samples {
        let sample = match sample {
            Ok(s) => s,
            Err(SearchError::DeadEnd { .. }) => {
                stats.dead_end += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        match classify(&sample, config, &vocab, num_vars, &probes) {
            Ok(template) => {
                let entry = best.entry(template).or_insert(f64::NEG_INFINITY);
                if *entry != f64::NEG_INFINITY {
                    stats.duplicates += 1;
                }
                if sample.proxy_score > *entry {
                    *entry = sample.proxy_score;
                }
            }
            Err(reason) => stats.record(reason),
        }
    }
    let mut candidates: Vec<Candidate> =
        best.into_iter().map(|(template, proxy_score)| Candidate { template, proxy_score }).collect();
    rank_by_proxy(&mut candidates);
    stats.survivors = candidates.len();
    log::info!("pool: {stats}");
    if candidates.is_empty() {
        return Err(SearchError::EmptyPool { stats });
    }
    Ok(Pool { candidates, stats })
}

/// Proxy score descending, then complexity ascending, then token string.
pub fn rank_by_proxy(pool: &mut [Candidate]) {
    pool.sort_by(compare);
}

fn compare(a: &Candidate, b: &Candidate) -> Ordering {
    b.proxy_score
        .total_cmp(&a.proxy_score)
        .then(a.complexity().cmp(&b.complexity()))
        .then_with(|| a.template.to_string().cmp(&b.template.to_string()))
}

const POOL_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolRecord {
    schema_version: u32,
    tokens: String,
    proxy_score: f64,
    complexity: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatsRecord {
    schema_version: u32,
    rejection_stats: RejectionStats,
}

/// One JSON record per candidate, then a rejection-statistics record.
pub fn write_pool(pool: &Pool) -> String {
    let mut out = String::new();
    for c in &pool.candidates {
        let rec = PoolRecord {
            schema_version: POOL_SCHEMA_VERSION,
            tokens: c.template.to_string(),
            proxy_score: c.proxy_score,
            complexity: c.complexity(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("serializable"));
        out.push('\n');
    }
    let stats = StatsRecord { schema_version: POOL_SCHEMA_VERSION, rejection_stats: pool.stats.clone() };
    out.push_str(&serde_json::to_string(&stats).expect("serializable"));
    out.push('\n');
    out
}

pub fn read_pool(text: &str, vocab: &Vocab) -> Result<Pool, SearchError> {
    let mut candidates = Vec::new();
    let mut stats = None;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |reason: String| SearchError::BadPoolRecord { line: i + 1, reason };
        if stats.is_some() {
            return Err(bad("record after the statistics record".into()));
        }
        if let Ok(rec) = serde_json::from_str::<StatsRecord>(line) {
            stats = Some(rec.rejection_stats);
            continue;
        }
        let rec: PoolRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if rec.schema_version != POOL_SCHEMA_VERSION {
            return Err(bad(format!("unsupported schema_version {}", rec.schema_version)));
        }
        let template = PostfixTemplate::parse(&rec.tokens, vocab).map_err(|e| bad(e.to_string()))?;
        if template.complexity() != rec.complexity {
            return Err(bad(format!("complexity {} does not match the template", rec.complexity)));
        }
        candidates.push(Candidate { template, proxy_score: rec.proxy_score });
    }
    let stats = stats.ok_or(SearchError::BadPoolRecord { line: 0, reason: "missing statistics record".into() })?;
    Ok(Pool { candidates, stats })
}
