use serde::{Deserialize, Serialize};

use crate::expr::{render_infix, Vocab};
use crate::fit::FittedEquation;

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    /// One per fitted pool candidate, in pool order.
    Fitted,
    /// The final equation (last line).
    Selected,
}

/// One line of a results file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub kind: RecordKind,
    pub dataset: String,
    /// Infix rendering with fitted coefficient values.
    pub infix: String,
    #[serde(flatten)]
    pub equation: FittedEquation,
}

impl ResultRecord {
    pub fn new(kind: RecordKind, dataset: &str, equation: &FittedEquation, keep_time: bool) -> Self {
        let mut equation = equation.clone();
        if !keep_time {
            equation.fit_seconds = None;
        }
        let infix = if equation.w.len() == equation.template.num_cof() {
            render_infix(&equation.template, Some(&equation.w))
        } else {
            render_infix(&equation.template, None)
        };
        ResultRecord { schema_version: RESULTS_SCHEMA_VERSION, kind, dataset: dataset.to_string(), infix, equation }
    }
}

/// Fitted entries, then the selected one if any.
pub fn write_results(
    dataset: &str,
    fitted: &[FittedEquation],
    selected: Option<&FittedEquation>,
    keep_time: bool,
) -> String {
    let mut out = String::new();
    let records = fitted
        .iter()
        .map(|eq| ResultRecord::new(RecordKind::Fitted, dataset, eq, keep_time))
        .chain(selected.map(|eq| ResultRecord::new(RecordKind::Selected, dataset, eq, keep_time)));
    for rec in records {
        out.push_str(&serde_json::to_string(&rec).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Parses a results file, re-validating every template against `vocab`.
pub fn read_results(text: &str, vocab: &Vocab) -> Result<Vec<ResultRecord>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let rec: ResultRecord = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            if rec.schema_version != RESULTS_SCHEMA_VERSION {
                return Err(format!("line {}: unsupported schema_version {}", i + 1, rec.schema_version));
            }
            crate::expr::PostfixTemplate::new(rec.equation.template.tokens().to_vec(), vocab)
                .map_err(|e| format!("line {}: {e}", i + 1))?;
            Ok(rec)
        })
        .collect()
}
