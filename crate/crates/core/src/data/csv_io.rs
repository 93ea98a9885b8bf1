use std::path::Path;

use ndarray::{Array1, Array2};

use super::{DataError, Dataset, Split};

/// Reads a headered numeric CSV. Every column except `target_column` becomes
/// a feature, in header order.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str, split: Split) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(DataError::EmptyFile);
    }
    let target_idx = headers
        .iter()
        .position(|h| h.trim() == target_column)
        .ok_or_else(|| DataError::MissingTarget(target_column.to_string()))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target_idx)
        .map(|(_, h)| h.trim().to_string())
        .collect();
    if names.is_empty() {
        return Err(DataError::Empty);
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_idx + 1;
        for (col, header) in headers.iter().enumerate() {
            let cell = record.get(col).unwrap_or("").trim();
            let value: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| DataError::NonNumericCell { row, col: header.trim().to_string() })?;
            if col == target_idx {
                ys.push(value);
            } else {
                xs.push(value);
            }
        }
    }
    if ys.is_empty() {
        return Err(DataError::EmptyFile);
    }
    let x = Array2::from_shape_vec((ys.len(), names.len()), xs).map_err(|_| DataError::EmptyFile)?;
    Ok(Dataset::new(x, Array1::from(ys), split)?.with_names(names))
}

/// Writes features then the target under `target_name`. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>, target_name: &str) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = dataset.feature_names.iter().map(String::as_str).collect();
    header.push(target_name);
    writer.write_record(&header)?;
    for (row, y) in dataset.x.rows().into_iter().zip(dataset.y.iter()) {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        rec.push(format!("{y}"));
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}
