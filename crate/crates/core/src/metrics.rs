//! Regression metrics: MSE, R², Pearson correlation and the log-MSE reporting
//! form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor applied before taking `ln(MSE)` so exact fits stay finite.
pub const LOG_MSE_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("prediction length {pred} != target length {target}")]
    LengthMismatch { pred: usize, target: usize },
    #[error("metrics need at least one sample")]
    Empty,
    #[error("non-finite value in metric input")]
    NonFiniteInput,
    #[error("target has zero variance")]
    ZeroTargetVariance,
    #[error("negative MSE {0}")]
    NegativeInput(f64),
}

/// Compensated (Neumaier) summation.
fn sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut total = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = total + v;
        if total.abs() >= v.abs() {
            comp += (total - t) + v;
        } else {
            comp += (v - t) + total;
        }
        total = t;
    }
    total + comp
}

fn check(pred: &[f64], target: &[f64]) -> Result<(), MetricError> {
    if pred.len() != target.len() {
        return Err(MetricError::LengthMismatch { pred: pred.len(), target: target.len() });
    }
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    if pred.iter().chain(target).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFiniteInput);
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    sum(v.iter().copied()) / v.len() as f64
}

fn residual_ss(pred: &[f64], target: &[f64]) -> f64 {
    sum(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)))
}

fn centered_ss(v: &[f64]) -> f64 {
    let m = mean(v);
    sum(v.iter().map(|x| (x - m) * (x - m)))
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64, MetricError> {
    check(pred, target)?;
    Ok(residual_ss(pred, target) / pred.len() as f64)
}

/// Coefficient of determination; negative when worse than the target mean.
pub fn r2(pred: &[f64], target: &[f64]) -> Result<f64, MetricError> {
    check(pred, target)?;
    let ss_tot = centered_ss(target);
    if ss_tot == 0.0 {
        return Err(MetricError::ZeroTargetVariance);
    }
    Ok(1.0 - residual_ss(pred, target) / ss_tot)
}

/// Sample correlation, or `None` when either side has zero variance.
pub fn pearson(pred: &[f64], target: &[f64]) -> Result<Option<f64>, MetricError> {
    check(pred, target)?;
    let (mp, mt) = (mean(pred), mean(target));
    let cov = sum(pred.iter().zip(target).map(|(p, t)| (p - mp) * (t - mt)));
    let sp = sum(pred.iter().map(|p| (p - mp) * (p - mp)));
    let st = sum(target.iter().map(|t| (t - mt) * (t - mt)));
    if sp == 0.0 || st == 0.0 {
        return Ok(None);
    }
    // sqrt of the product is exact for sp == st; fall back if it over/underflows.
    let prod = sp * st;
    let denom = if prod.is_finite() && prod > 0.0 { prod.sqrt() } else { sp.sqrt() * st.sqrt() };
    Ok(Some((cov / denom).clamp(-1.0, 1.0)))
}

/// Natural log of `max(mse, 1e-300)`.
pub fn log_mse(mse: f64) -> Result<f64, MetricError> {
    if mse < 0.0 || mse.is_nan() {
        return Err(MetricError::NegativeInput(mse));
    }
    Ok(mse.max(LOG_MSE_FLOOR).ln())
}

/// MSE, ln(MSE), R² and Pearson ρ of one prediction vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub log_mse: f64,
    pub r2: f64,
    /// `None` when undefined (zero-variance predictions).
    pub pearson: Option<f64>,
    pub n: usize,
}

impl MetricReport {
    pub fn compute(pred: &[f64], target: &[f64]) -> Result<Self, MetricError> {
        let mse = mse(pred, target)?;
        Ok(MetricReport {
            mse,
            log_mse: log_mse(mse)?,
            r2: r2(pred, target)?,
            pearson: pearson(pred, target)?,
            n: pred.len(),
        })
    }

    /// Pearson with undefined ranked below every defined value.
    pub fn pearson_or_min(&self) -> f64 {
        self.pearson.unwrap_or(f64::NEG_INFINITY)
    }
}
