use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::artifacts::Manifest;
use super::commands::fitting_splits;
use super::config::Problem;
use super::results::read_results;
use super::{PipelineError, RunConfig};
use crate::data::Dataset;
use crate::expr::Program;
use crate::gp::parse_corpus;
use crate::metrics::MetricReport;
use crate::prior::PriorModel;
use crate::search::{check_template, probe_points, read_pool};

/// Relative tolerance when recomputing stored metrics.
pub const METRIC_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Corpus,
    Checkpoint,
    Pool,
    Results,
    Manifest,
}

impl ArtifactKind {
    /// Guesses the kind from the file contents.
    pub fn detect(bytes: &[u8]) -> Option<Self> {
        if bytes.starts_with(b"SYMPRIOR") {
            return Some(ArtifactKind::Checkpoint);
        }
        let text = std::str::from_utf8(bytes).ok()?;
        if let Ok(serde_json::Value::Object(obj)) = serde_json::from_str::<serde_json::Value>(text) {
            if obj.contains_key("artifacts") {
                return Some(ArtifactKind::Manifest);
            }
        }
        let first = text.lines().find(|l| !l.trim().is_empty())?;
        let serde_json::Value::Object(obj) = serde_json::from_str(first).ok()? else { return None };
        if obj.contains_key("kind") {
            Some(ArtifactKind::Results)
        } else if obj.contains_key("proxy_score") || obj.contains_key("rejection_stats") {
            Some(ArtifactKind::Pool)
        } else if obj.contains_key("train_r2") {
            Some(ArtifactKind::Corpus)
        } else {
            None
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArtifactKind::Corpus => "corpus",
            ArtifactKind::Checkpoint => "checkpoint",
            ArtifactKind::Pool => "pool",
            ArtifactKind::Results => "results",
            ArtifactKind::Manifest => "manifest",
        })
    }
}

impl FromStr for ArtifactKind {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "corpus" => Ok(ArtifactKind::Corpus),
            "checkpoint" => Ok(ArtifactKind::Checkpoint),
            "pool" => Ok(ArtifactKind::Pool),
            "results" => Ok(ArtifactKind::Results),
            "manifest" => Ok(ArtifactKind::Manifest),
            _ => Err(PipelineError::Config(format!("unknown artifact kind `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub path: PathBuf,
    pub kind: ArtifactKind,
    /// Records (templates, tensors, artifacts) examined.
    pub checked: usize,
    pub problems: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.problems.is_empty()
    }

    /// Turns a failed report into an assertion error.
    pub fn into_result(self) -> Result<Self, PipelineError> {
        if self.is_ok() {
            Ok(self)
        } else {
            Err(PipelineError::Assertion(format!(
                "{} {} failed validation: {}",
                self.kind,
                self.path.display(),
                self.problems.join("; ")
            )))
        }
    }
}

fn close(stored: f64, recomputed: f64) -> bool {
    stored == recomputed || (stored - recomputed).abs() <= METRIC_TOLERANCE * stored.abs().max(recomputed.abs()).max(1.0)
}

fn compare_metrics(label: &str, stored: Option<&MetricReport>, w: &[f64], program: &Program, ds: Option<&Dataset>, problems: &mut Vec<String>) {
    let (Some(stored), Some(ds)) = (stored, ds) else {
        if stored.is_some() {
            problems.push(format!("{label}: metrics stored for a split that does not exist"));
        }
        return;
    };
    let recomputed = program
        .evaluate(w, ds.x.view())
        .map_err(|e| e.to_string())
        .and_then(|p| MetricReport::compute(&p.values, ds.y.as_slice().expect("contiguous")).map_err(|e| e.to_string()));
    match recomputed {
        Err(e) => problems.push(format!("{label}: cannot recompute metrics: {e}")),
        Ok(m) => {
            let pairs = [("mse", stored.mse, m.mse), ("ln_mse", stored.log_mse, m.log_mse), ("r2", stored.r2, m.r2)];
            for (name, a, b) in pairs {
                if !close(a, b) {
                    problems.push(format!("{label}: stored {name} {a} but recomputed {b}"));
                }
            }
            match (stored.pearson, m.pearson) {
                (None, None) => {}
                (Some(a), Some(b)) if close(a, b) => {}
                (a, b) => problems.push(format!("{label}: stored pearson {a:?} but recomputed {b:?}")),
            }
        }
    }
}

fn problem_for(config: &RunConfig, dataset: &str) -> Result<Problem, PipelineError> {
    let target = config.problem()?;
    if target.name == dataset {
        Ok(target)
    } else {
        config.problem_named(Some(dataset))
    }
}

/// Re-checks an artifact against `config`: corpus templates re-parse, a
/// checkpoint loads with matching checksums and vocabulary, every pool
/// candidate passes the sampler filters again, stored result metrics match a
/// recomputation from the coefficients, and manifest checksums match the files.
///
/// Unreadable files are errors; content problems are listed in the report.
pub fn validate(path: &Path, kind: Option<ArtifactKind>, config: &RunConfig) -> Result<ValidationReport, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    let kind = match kind.or_else(|| ArtifactKind::detect(&bytes)) {
        Some(k) => k,
        None => {
            return Err(PipelineError::BadArtifact { path: path.to_path_buf(), reason: "cannot tell the artifact kind".into() })
        }
    };
    let vocab = config.vocab();
    let text = || String::from_utf8_lossy(&bytes).into_owned();
    let mut problems = Vec::new();
    let mut checked = 0;
    match kind {
        ArtifactKind::Corpus => match parse_corpus(&text(), &vocab) {
            Ok(entries) => {
                checked = entries.len();
                for (i, e) in entries.iter().enumerate() {
                    if !e.train_r2.is_finite() {
                        problems.push(format!("entry {}: non-finite train R2", i + 1));
                    }
                }
            }
            Err(e) => problems.push(e.to_string()),
        },
        ArtifactKind::Checkpoint => match PriorModel::from_bytes(&bytes).map_err(PipelineError::from).and_then(|m| {
            m.check_vocab(&vocab)?;
            Ok(m)
        }) {
            Ok(m) => checked = m.num_parameters(),
            Err(e) => problems.push(e.to_string()),
        },
        ArtifactKind::Pool => match read_pool(&text(), &vocab) {
            Ok(pool) => {
                let problem = config.problem()?;
                let sampler = config.sampler_config();
                let input_box = &problem.train.input_box;
                let num_vars = input_box.len().min(vocab.max_vars());
                let probes = probe_points(input_box, sampler.semantic_probe_count, sampler.seed);
                checked = pool.candidates.len();
                let mut previous: Option<&crate::search::Candidate> = None;
                for (i, c) in pool.candidates.iter().enumerate() {
                    if let Err(reason) = check_template(&c.template, &sampler, num_vars, &probes) {
                        problems.push(format!("candidate {} `{}` fails the {reason:?} filter", i + 1, c.template));
                    }
                    if !c.proxy_score.is_finite() {
                        problems.push(format!("candidate {} has a non-finite proxy score", i + 1));
                    }
                    if previous.is_some_and(|p| p.proxy_score < c.proxy_score) {
                        problems.push(format!("candidate {} is out of proxy-score order", i + 1));
                    }
                    previous = Some(c);
                }
                if pool.stats.survivors != pool.candidates.len() {
                    problems.push(format!(
                        "stats report {} survivors but the pool holds {}",
                        pool.stats.survivors,
                        pool.candidates.len()
                    ));
                }
            }
            Err(e) => problems.push(e.to_string()),
        },
        ArtifactKind::Results => match read_results(&text(), &vocab) {
            Ok(records) => {
                checked = records.len();
                for (i, rec) in records.iter().enumerate() {
                    let problem = problem_for(config, &rec.dataset)?;
                    let (train, validation) = fitting_splits(config, &problem);
                    let eq = &rec.equation;
                    let label = |split: &str| format!("record {} `{}` {split}", i + 1, eq.template);
                    if eq.complexity != eq.template.complexity() {
                        problems.push(format!("{}: complexity {} but template has {}", label("header"), eq.complexity, eq.template.complexity()));
                    }
                    if eq.failure.is_some() {
                        continue;
                    }
                    if eq.w.len() != eq.template.num_cof() {
                        problems.push(format!("{}: {} coefficients for {} slots", label("header"), eq.w.len(), eq.template.num_cof()));
                        continue;
                    }
                    let program = Program::from_template(&eq.template);
                    compare_metrics(&label("train"), eq.train.as_ref(), &eq.w, &program, Some(&train), &mut problems);
                    compare_metrics(&label("validation"), eq.validation.as_ref(), &eq.w, &program, validation.as_ref(), &mut problems);
                    compare_metrics(&label("test"), eq.test.as_ref(), &eq.w, &program, Some(&problem.test), &mut problems);
                }
            }
            Err(e) => problems.push(e),
        },
        ArtifactKind::Manifest => match Manifest::load(path) {
            Ok(m) => {
                checked = m.artifacts.len();
                for (name, entry) in &m.artifacts {
                    match super::sha256_file(&entry.path) {
                        Ok(sum) if sum == entry.sha256 => {}
                        Ok(sum) => problems.push(format!("`{name}` checksum {sum} differs from recorded {}", entry.sha256)),
                        Err(e) => problems.push(format!("`{name}`: {e}")),
                    }
                }
            }
            Err(e) => problems.push(e.to_string()),
        },
    }
    Ok(ValidationReport { path: path.to_path_buf(), kind, checked, problems })
}
