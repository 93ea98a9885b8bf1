use ndarray::Array2;
use rand::Rng;

use super::RejectReason;
use crate::expr::{BinaryOp, ExprTree, PostfixTemplate, Program};
use crate::seed::derive_rng;

/// `true` if some division's denominator is `A - A` for a coefficient-free
/// subtree `A` (identically zero whatever the inputs).
pub fn zero_denominator(tree: &ExprTree) -> bool {
    match tree {
        ExprTree::Binary(op, l, r) => {
            if *op == BinaryOp::Div {
                if let ExprTree::Binary(BinaryOp::Sub, a, b) = r.as_ref() {
                    if a == b && a.cof_count() == 0 {
                        return true;
                    }
                }
            }
            zero_denominator(l) || zero_denominator(r)
        }
        ExprTree::Unary(_, c) => zero_denominator(c),
        _ => false,
    }
}

/// `count` points uniform over `input_box`, one row per point.
pub fn probe_points(input_box: &[(f64, f64)], count: usize, seed: u64) -> Array2<f64> {
    let mut rng = derive_rng(seed, "semantic-probe", 0);
    Array2::from_shape_fn((count, input_box.len()), |(_, j)| {
        let (lo, hi) = input_box[j];
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    })
}

/// Rejects templates that are undefined everywhere they are probed: a
/// syntactically zero denominator, or non-finite output at every probe
/// point with all coefficients set to one.
pub fn semantic_filter(template: &PostfixTemplate, probes: &Array2<f64>) -> Result<(), RejectReason> {
    if zero_denominator(&template.to_tree()) {
        return Err(RejectReason::Semantic);
    }
    let w = vec![1.0; template.num_cof()];
    let eval = Program::from_template(template).evaluate(&w, probes.view()).map_err(|_| RejectReason::Syntax)?;
    if eval.finite_mask.iter().any(|&f| f) {
        Ok(())
    } else {
        Err(RejectReason::Semantic)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Vocab;

    fn t(s: &str) -> PostfixTemplate {
        PostfixTemplate::parse(s, &Vocab::new(2)).unwrap()
    }

    #[test]
    fn verdicts() {
        let probes = probe_points(&[(1.0, 5.0), (1.0, 5.0)], 16, 0);
        assert_eq!(semantic_filter(&t("x0 x0 x0 sub div"), &probes), Err(RejectReason::Semantic));
        assert_eq!(semantic_filter(&t("x0 x1 add"), &probes), Ok(()));
        // Unit coefficients make this 1/(1-1) everywhere.
        assert_eq!(semantic_filter(&t("x0 COF COF sub div"), &probes), Err(RejectReason::Semantic));
        // Not a zero pattern structurally, but can vanish: still defined at most probes.
        assert_eq!(semantic_filter(&t("x0 x0 x1 sub div"), &probes), Ok(()));
        assert!(zero_denominator(&t("x1 x0 sin x0 sin sub div cos").to_tree()));
        assert!(!zero_denominator(&t("x1 COF COF sub div").to_tree()));
    }

    #[test]
    fn probes_stay_in_box() {
        let p = probe_points(&[(1.0, 2.0), (-3.0, -1.0)], 64, 5);
        assert!(p.column(0).iter().all(|v| (1.0..2.0).contains(v)));
        assert!(p.column(1).iter().all(|v| (-3.0..-1.0).contains(v)));
        assert_eq!(p, probe_points(&[(1.0, 2.0), (-3.0, -1.0)], 64, 5));
    }
}
