use ndarray::Axis;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};
use crate::fit::FittedEquation;
use crate::metrics::MetricReport;
use crate::seed::derive_rng;

/// Noise levels 0%, 10%, ..., 100%.
pub const DEFAULT_ETAS: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Perturbed copy of a dataset plus the features that could not be perturbed.
#[derive(Clone, Debug)]
pub struct Perturbation {
    pub dataset: Dataset,
    /// Features whose training standard deviation is zero; left unchanged.
    pub degenerate_features: Vec<usize>,
}

/// Sample standard deviation (N-1 denominator) of each training feature.
pub fn feature_std(train: &Dataset) -> Vec<f64> {
    let n = train.len();
    train
        .x
        .axis_iter(Axis(1))
        .map(|col| {
            if n < 2 {
                return 0.0;
            }
            let mean = col.sum() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        })
        .collect()
}

/// Adds `N(0, (eta * sigma_j)^2)` noise to every test feature, where `sigma_j`
/// comes from the training split. Targets are untouched.
pub fn perturb_features(test: &Dataset, train: &Dataset, eta: f64, seed: u64) -> Result<Perturbation, DataError> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(DataError::EtaOutOfRange(eta));
    }
    if test.dim() != train.dim() {
        return Err(DataError::DimensionMismatch(test.dim(), train.dim()));
    }
    let sigma = feature_std(train);
    let degenerate: Vec<usize> = sigma.iter().enumerate().filter(|(_, s)| **s == 0.0).map(|(j, _)| j).collect();
    for j in &degenerate {
        log::warn!("feature {j} has zero training variance; left unperturbed");
    }
    let mut out = test.clone();
    if eta == 0.0 {
        return Ok(Perturbation { dataset: out, degenerate_features: degenerate });
    }
    let mut rng = derive_rng(seed, "perturb", 0);
    for mut row in out.x.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            if sigma[j] > 0.0 {
                let noise = Normal::new(0.0, eta * sigma[j]).expect("positive scale");
                *v += noise.sample(&mut rng);
            }
        }
    }
    Ok(Perturbation { dataset: out, degenerate_features: degenerate })
}

/// One row of a noise sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub eta: f64,
    pub ln_mse: f64,
    pub r2: f64,
    pub pearson: Option<f64>,
    pub mse: f64,
}

/// Evaluates a frozen equation on test inputs perturbed at each noise level.
pub fn noise_sweep(
    equation: &FittedEquation,
    train: &Dataset,
    test: &Dataset,
    etas: &[f64],
    seed: u64,
) -> Result<Vec<NoiseRow>, DataError> {
    etas.iter()
        .enumerate()
        .map(|(i, &eta)| {
            let perturbed = perturb_features(test, train, eta, crate::seed::derive_seed(seed, "noise-level", i as u64))?;
            let pred = crate::expr::evaluate(&equation.template, &equation.w, perturbed.dataset.x.view())?;
            let report = MetricReport::compute(&pred.values, test.y.as_slice().expect("contiguous"))?;
            Ok(NoiseRow { eta, ln_mse: report.log_mse, r2: report.r2, pearson: report.pearson, mse: report.mse })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};

    fn random_ds(n: usize, scale: f64, seed: u64, split: Split) -> Dataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 2), |(_, j)| rng.random_range(0.0..1.0) * scale * (j + 1) as f64);
        let y = Array1::from_shape_fn(n, |i| i as f64);
        Dataset::new(x, y, split).unwrap()
    }

    #[test]
    fn zero_eta_is_identity() {
        let train = random_ds(100, 3.0, 1, Split::Train);
        let test = random_ds(50, 3.0, 2, Split::Test);
        let p = perturb_features(&test, &train, 0.0, 9).unwrap();
        assert_eq!(p.dataset, test);
    }

    #[test]
    fn noise_scale_follows_training_std() {
        let train = random_ds(2000, 4.0, 1, Split::Train);
        let test = random_ds(100_000, 1.0, 2, Split::Test);
        let sigma = feature_std(&train);
        let eta = 0.3;
        let p = perturb_features(&test, &train, eta, 4).unwrap();
        let diff = &p.dataset.x - &test.x;
        for j in 0..2 {
            let col = diff.column(j);
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let rel = (sd - eta * sigma[j]).abs() / (eta * sigma[j]);
            assert!(rel < 0.02, "feature {j}: {sd} vs {}", eta * sigma[j]);
        }
        assert_eq!(p.dataset.y, test.y);
    }

    #[test]
    fn noise_distribution_ignores_test_split_statistics() {
        let train = random_ds(500, 2.0, 1, Split::Train);
        let a = random_ds(200, 1.0, 2, Split::Test);
        let b = random_ds(200, 50.0, 3, Split::Test);
        let pa = perturb_features(&a, &train, 0.5, 8).unwrap();
        let pb = perturb_features(&b, &train, 0.5, 8).unwrap();
        let na = &pa.dataset.x - &a.x;
        let nb = &pb.dataset.x - &b.x;
        for (u, v) in na.iter().zip(nb.iter()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_feature_is_left_alone() {
        let x = Array2::from_shape_fn((10, 2), |(i, j)| if j == 0 { 1.0 } else { i as f64 });
        let train = Dataset::new(x.clone(), Array1::zeros(10), Split::Train).unwrap();
        let p = perturb_features(&train, &train, 0.5, 1).unwrap();
        assert_eq!(p.degenerate_features, vec![0]);
        assert_eq!(p.dataset.x.column(0), x.column(0));
        assert_ne!(p.dataset.x.column(1), x.column(1));
    }

    #[test]
    fn eta_range_is_checked() {
        let d = random_ds(10, 1.0, 1, Split::Test);
        assert!(matches!(perturb_features(&d, &d, 1.5, 0), Err(DataError::EtaOutOfRange(_))));
    }
}
