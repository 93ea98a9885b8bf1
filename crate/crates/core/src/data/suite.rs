use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BenchmarkSpec, DataError, Tier, DEFAULT_BOX};

/// Desk-scale ground truths: three per tier, with 2, 3 and 4 inputs for easy,
/// medium and hard.
const DESK: [(&str, Tier, usize, &str); 9] = [
    ("easy_sin_linear", Tier::Easy, 2, "2.5 x0 mul 1.3 x1 mul sin add"),
    ("easy_linear", Tier::Easy, 2, "1.5 x0 mul 0.8 x1 mul add"),
    ("easy_product", Tier::Easy, 2, "0.7 x0 x1 mul mul 1.2 add"),
    ("medium_prod_sin", Tier::Medium, 3, "1.2 x0 mul x1 mul 2.0 x2 mul sin add"),
    ("medium_ratio", Tier::Medium, 3, "1.5 x0 mul x1 x2 div add"),
    ("medium_cos_scale", Tier::Medium, 3, "x0 1.1 x1 mul cos mul 0.4 x2 mul add"),
    ("hard_ratio_cos", Tier::Hard, 4, "0.7 x0 mul x1 mul x2 div 1.5 x3 mul cos add"),
    ("hard_sin_prod", Tier::Hard, 4, "x0 x1 mul 0.9 x2 mul sin mul x3 add"),
    ("hard_mixed", Tier::Hard, 4, "1.3 x0 mul x1 add x2 x3 div 0.6 mul sub"),
];

/// The built-in benchmark suite, 200/200 train/test points on `[1, 5]^d`.
pub fn desk_suite(seed: u64) -> Vec<BenchmarkSpec> {
    DESK.iter()
        .enumerate()
        .map(|(i, &(name, tier, d, expr))| BenchmarkSpec {
            name: name.to_string(),
            tier,
            d,
            expression: expr.to_string(),
            input_box: vec![DEFAULT_BOX; d],
            train_n: 200,
            test_n: 200,
            seed: crate::seed::derive_seed(seed, "benchmark", i as u64),
        })
        .collect()
}

pub fn find_benchmark(name: &str, seed: u64) -> Result<BenchmarkSpec, DataError> {
    desk_suite(seed)
        .into_iter()
        .find(|b| b.name == name)
        .ok_or_else(|| DataError::UnknownBenchmark(name.to_string()))
}

/// One line of a benchmark file. Each seed expands to its own spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub name: String,
    pub tier: Tier,
    pub d: usize,
    pub expression: String,
    #[serde(rename = "box")]
    pub input_box: Vec<(f64, f64)>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_n")]
    pub train_n: usize,
    #[serde(default = "default_n")]
    pub test_n: usize,
}

fn default_n() -> usize {
    200
}

pub fn load_benchmark_file(path: impl AsRef<Path>) -> Result<Vec<BenchmarkSpec>, DataError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: BenchmarkRecord = serde_json::from_str(&line)?;
        if rec.input_box.len() != rec.d {
            return Err(DataError::InvalidBenchmark {
                name: rec.name,
                reason: "box length differs from d".into(),
            });
        }
        for &seed in &rec.seeds {
            out.push(BenchmarkSpec {
                name: rec.name.clone(),
                tier: rec.tier,
                d: rec.d,
                expression: rec.expression.clone(),
                input_box: rec.input_box.clone(),
                train_n: rec.train_n,
                test_n: rec.test_n,
                seed,
            });
        }
    }
    Ok(out)
}

pub fn write_benchmark_file(path: impl AsRef<Path>, records: &[BenchmarkRecord]) -> Result<(), DataError> {
    let mut f = std::fs::File::create(path)?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}
