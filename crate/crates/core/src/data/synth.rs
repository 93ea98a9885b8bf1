use ndarray::{Array1, Array2};
use rand::Rng;

use super::{BenchmarkSpec, DataError, Dataset, Split};
use crate::expr::{parse_expression, Program, Vocab};
use crate::seed::derive_rng;

fn sample_split(spec: &BenchmarkSpec, n: usize, label: &str, split: Split) -> Result<Dataset, DataError> {
    let mut rng = derive_rng(spec.seed, label, 0);
    let x = Array2::from_shape_fn((n, spec.d), |(_, j)| {
        let (lo, hi) = spec.input_box[j];
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    });
    let tree = parse_expression(&spec.expression, &Vocab::new(spec.d))?;
    let eval = Program::from_tree(&tree).evaluate(&[], x.view())?;
    if !eval.all_finite() {
        return Err(DataError::NonFiniteTarget);
    }
    let ds = Dataset::new(x, Array1::from(eval.values), split)?;
    Ok(ds.with_box(spec.input_box.clone()))
}

/// Samples noiseless train and test sets from the ground-truth expression,
/// with independent random streams per split.
pub fn generate_synthetic(spec: &BenchmarkSpec) -> Result<(Dataset, Dataset), DataError> {
    if spec.d == 0 || spec.input_box.len() != spec.d {
        return Err(DataError::InvalidBenchmark {
            name: spec.name.clone(),
            reason: format!("box has {} intervals for d = {}", spec.input_box.len(), spec.d),
        });
    }
    if spec.input_box.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(DataError::InvalidBenchmark { name: spec.name.clone(), reason: "bad box".into() });
    }
    let train = sample_split(spec, spec.train_n, "train-split", Split::Train)?;
    let test = sample_split(spec, spec.test_n, "test-split", Split::Test)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Tier;

    fn spec(expr: &str) -> BenchmarkSpec {
        BenchmarkSpec {
            name: "t".into(),
            tier: Tier::Easy,
            d: 2,
            expression: expr.into(),
            input_box: vec![(1.0, 5.0); 2],
            train_n: 200,
            test_n: 200,
            seed: 11,
        }
    }

    #[test]
    fn target_range_matches_interval_bound() {
        // 2.5*x0 in [2.5, 12.5], sin(.) in [-1, 1]
        let (train, test) = generate_synthetic(&spec("2.5 x0 mul 1.3 x1 mul sin add")).unwrap();
        for y in train.y.iter().chain(test.y.iter()) {
            assert!(y.is_finite() && *y >= 1.5 && *y <= 13.5, "{y}");
        }
        assert_eq!(train.len(), 200);
        assert_eq!(test.dim(), 2);
    }

    #[test]
    fn constant_truth_gives_constant_targets() {
        let (train, _) = generate_synthetic(&spec("3.5")).unwrap();
        assert!(train.y.iter().all(|&v| v == 3.5));
    }

    #[test]
    fn deterministic_and_disjoint() {
        let s = spec("x0 x1 add");
        let (a, b) = generate_synthetic(&s).unwrap();
        let (a2, b2) = generate_synthetic(&s).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        for ra in a.x.rows() {
            assert!(b.x.rows().into_iter().all(|rb| rb != ra));
        }
    }

    #[test]
    fn undefined_truth_is_rejected() {
        assert!(matches!(
            generate_synthetic(&spec("x0 x0 x0 sub div")),
            Err(DataError::NonFiniteTarget)
        ));
    }
}
