use rand::Rng;

use super::GpConfig;
use crate::expr::{BinaryOp, ExprTree, UnaryOp};

const NUM_FUNCTIONS: usize = 6;

fn random_terminal<R: Rng>(d: usize, range: (f64, f64), rng: &mut R) -> ExprTree {
    // one slot per variable plus one for constants
    let pick = rng.random_range(0..=d);
    if pick == d {
        ExprTree::Const(rng.random_range(range.0..range.1))
    } else {
        ExprTree::Var(pick)
    }
}

/// Random tree of at most `depth` levels. `full` forces functions until the
/// last level; otherwise every level below the first may stop at a terminal.
pub fn random_tree<R: Rng>(depth: usize, full: bool, d: usize, range: (f64, f64), rng: &mut R) -> ExprTree {
    if depth <= 1 {
        return random_terminal(d, range, rng);
    }
    let n_terminals = d + 1;
    if !full && rng.random_range(0..n_terminals + NUM_FUNCTIONS) < n_terminals {
        return random_terminal(d, range, rng);
    }
    let f = rng.random_range(0..NUM_FUNCTIONS);
    if f < UnaryOp::ALL.len() {
        ExprTree::unary(UnaryOp::ALL[f], random_tree(depth - 1, full, d, range, rng))
    } else {
        let op = BinaryOp::ALL[f - UnaryOp::ALL.len()];
        let l = random_tree(depth - 1, full, d, range, rng);
        let r = random_tree(depth - 1, full, d, range, rng);
        ExprTree::binary(op, l, r)
    }
}

/// Ramped half-and-half: depths cycle through `min(2, max_depth)..=max_depth`
/// and alternate between full and grow construction.
pub fn init_population<R: Rng>(config: &GpConfig, d: usize, rng: &mut R) -> Vec<ExprTree> {
    assert!(d >= 1, "need at least one input variable");
    let lo = config.max_depth.min(2);
    let span = config.max_depth - lo + 1;
    (0..config.population_size)
        .map(|i| {
            let depth = lo + (i / 2) % span;
            random_tree(depth, i % 2 == 0, d, config.constant_range, rng)
        })
        .collect()
}
