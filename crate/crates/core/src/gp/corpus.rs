use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evolve::{evolve, Individual};
use super::{GpConfig, GpError};
use crate::data::Dataset;
use crate::expr::{abstract_coefficients, PostfixTemplate, Program, Vocab};
use crate::metrics::r2;
use crate::seed::{derive_rng, derive_seed};

/// One corpus line. Field order is part of the file format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub dataset: String,
    #[serde(rename = "tokens")]
    pub template: PostfixTemplate,
    pub train_r2: f64,
}

fn harvest(
    dataset_id: &str,
    data: &Dataset,
    config: &GpConfig,
    per_dataset: usize,
    index: usize,
) -> Vec<CorpusEntry> {
    let mut candidates: Vec<Individual> = Vec::new();
    for run in 0..config.runs_per_dataset {
        let mut rng = if run == 0 {
            derive_rng(config.seed, "gp-dataset", index as u64)
        } else {
            derive_rng(derive_seed(config.seed, "gp-dataset", index as u64), "gp-run", run as u64)
        };
        let evo = evolve(config, data.x.view(), data.y.view(), &mut rng);
        candidates.extend(evo.population);
        candidates.extend(evo.champions);
    }
    // stable: equal fitness keeps run order
    candidates.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));

    let vocab = Vocab::new(data.dim());
    let targets = data.y.as_slice().expect("contiguous targets");
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for ind in candidates {
        if out.len() >= per_dataset {
            break;
        }
        let Ok(template) = abstract_coefficients(&ind.tree, &vocab) else { continue };
        if template.len() > config.max_template_len || seen.contains(&template) {
            continue;
        }
        let Ok(pred) = Program::from_tree(&ind.tree).evaluate(&[], data.x.view()) else { continue };
        if !pred.all_finite() {
            continue;
        }
        let Ok(fit) = r2(&pred.values, targets) else { continue };
        if fit < config.min_fit_r2 {
            continue;
        }
        seen.insert(template.clone());
        out.push(CorpusEntry { dataset: dataset_id.to_string(), template, train_r2: fit });
    }
    out
}

/// Runs GP on each training set and keeps up to `per_dataset` distinct
/// templates per dataset, best fitness first.
///
/// Candidates are the final population plus every generation's champion.
/// Duplicates are removed within a dataset only.
pub fn build_corpus(
    datasets: &[(String, Dataset)],
    config: &GpConfig,
    per_dataset: usize,
) -> Result<Vec<CorpusEntry>, GpError> {
    config.validate()?;
    if per_dataset == 0 {
        return Err(GpError::InvalidConfig("templates per dataset must be at least 1".into()));
    }
    let per: Vec<Vec<CorpusEntry>> = datasets
        .par_iter()
        .enumerate()
        .map(|(i, (id, data))| harvest(id, data, config, per_dataset, i))
        .collect();
    let entries: Vec<CorpusEntry> = per.into_iter().flatten().collect();
    if entries.len() < config.min_corpus_size {
        return Err(GpError::CorpusTooSmall { found: entries.len(), required: config.min_corpus_size });
    }
    Ok(entries)
}

/// Line-delimited JSON, one entry per line.
pub fn write_corpus_string(entries: &[CorpusEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("corpus entries serialize"));
        out.push('\n');
    }
    out
}

/// Parses and re-validates a corpus file against `vocab`.
pub fn parse_corpus(text: &str, vocab: &Vocab) -> Result<Vec<CorpusEntry>, GpError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |reason: String| GpError::BadCorpusLine { line: i + 1, reason };
            let entry: CorpusEntry = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            PostfixTemplate::new(entry.template.tokens().to_vec(), vocab).map_err(|e| bad(e.to_string()))?;
            Ok(entry)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, find_benchmark};
    use crate::expr::parse_postfix;

    fn one_dataset() -> Vec<(String, Dataset)> {
        let spec = find_benchmark("easy_sin_linear", 1).unwrap();
        let (train, _) = generate_synthetic(&spec).unwrap();
        vec![(spec.name, train)]
    }

    fn small() -> GpConfig {
        GpConfig { population_size: 60, generations: 3, seed: 2, ..GpConfig::default() }
    }

    #[test]
    fn single_template_is_the_best_valid_one() {
        let data = one_dataset();
        let cfg = GpConfig { runs_per_dataset: 1, ..small() };
        let corpus = build_corpus(&data, &cfg, 1).unwrap();
        assert_eq!(corpus.len(), 1);
        let mut rng = derive_rng(cfg.seed, "gp-dataset", 0);
        let evo = evolve(&cfg, data[0].1.x.view(), data[0].1.y.view(), &mut rng);
        let vocab = Vocab::new(2);
        let best = abstract_coefficients(&evo.population[0].tree, &vocab).unwrap();
        assert_eq!(corpus[0].template, best);
    }

    #[test]
    fn runs_are_pooled_before_ranking() {
        let data = one_dataset();
        let cfg = GpConfig { runs_per_dataset: 3, ..small() };
        let corpus = build_corpus(&data, &cfg, 1).unwrap();
        let (x, y) = (data[0].1.x.view(), data[0].1.y.view());
        let base = derive_seed(cfg.seed, "gp-dataset", 0);
        let best = (0..3)
            .map(|run| {
                let mut rng = if run == 0 { derive_rng(cfg.seed, "gp-dataset", 0) } else { derive_rng(base, "gp-run", run) };
                evolve(&cfg, x, y, &mut rng).population.swap_remove(0)
            })
            .min_by(|a, b| a.fitness.total_cmp(&b.fitness))
            .unwrap();
        assert_eq!(corpus[0].template, abstract_coefficients(&best.tree, &Vocab::new(2)).unwrap());
        let single = build_corpus(&data, &GpConfig { runs_per_dataset: 1, ..small() }, 500).unwrap();
        let pooled = build_corpus(&data, &cfg, 500).unwrap();
        assert!(pooled.len() >= single.len());
    }

    #[test]
    fn entries_are_valid_distinct_and_bounded() {
        let data = one_dataset();
        let corpus = build_corpus(&data, &small(), 25).unwrap();
        assert!(corpus.len() <= 25);
        let vocab = Vocab::new(2);
        let mut seen = HashSet::new();
        for e in &corpus {
            parse_postfix(e.template.tokens(), &vocab).unwrap();
            assert!(e.train_r2 >= 0.0);
            assert!(e.template.len() <= 64);
            assert!(seen.insert(e.template.to_string()));
        }
    }

    #[test]
    fn file_round_trip_and_field_order() {
        let corpus = build_corpus(&one_dataset(), &small(), 5).unwrap();
        let text = write_corpus_string(&corpus);
        let first = text.lines().next().unwrap();
        assert!(first.starts_with("{\"dataset\":\"easy_sin_linear\",\"tokens\":\""), "{first}");
        assert!(first.contains(",\"train_r2\":"));
        assert_eq!(parse_corpus(&text, &Vocab::new(2)).unwrap(), corpus);
        assert!(parse_corpus("{\"dataset\":\"a\",\"tokens\":\"x0 add\",\"train_r2\":0.5}", &Vocab::new(2)).is_err());
    }

    #[test]
    fn floor_is_enforced() {
        let cfg = GpConfig { min_corpus_size: 1000, ..small() };
        assert!(matches!(build_corpus(&one_dataset(), &cfg, 3), Err(GpError::CorpusTooSmall { .. })));
    }

    #[test]
    fn corpus_is_deterministic() {
        let a = write_corpus_string(&build_corpus(&one_dataset(), &small(), 20).unwrap());
        let b = write_corpus_string(&build_corpus(&one_dataset(), &small(), 20).unwrap());
        assert_eq!(a, b);
    }
}
