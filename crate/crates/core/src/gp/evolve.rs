use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::init::{init_population, random_tree};
use super::GpConfig;
use crate::expr::{penalized_mse, BinaryOp, ExprTree, Program, UnaryOp, DEFAULT_NONFINITE_PENALTY};

/// Penalized fitness (lower is better): `RMSE + parsimony * node_count`.
///
/// Non-finite predictions are charged the expression-level penalty inside the
/// MSE before the square root.
pub fn fitness(tree: &ExprTree, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, parsimony: f64) -> f64 {
    let mse = Program::from_tree(tree)
        .evaluate(&[], x)
        .ok()
        .and_then(|r| penalized_mse(&r.values, y, DEFAULT_NONFINITE_PENALTY).ok())
        .unwrap_or(DEFAULT_NONFINITE_PENALTY);
    mse.sqrt() + parsimony * tree.node_count() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub tree: ExprTree,
    pub fitness: f64,
}

#[derive(Clone, Debug)]
pub struct Evolution {
    /// Final population, best first.
    pub population: Vec<Individual>,
    /// Best individual of every generation, starting with the initial one.
    pub champions: Vec<Individual>,
    /// Best fitness per generation (same indexing as `champions`).
    pub best_history: Vec<f64>,
}

fn score(trees: Vec<ExprTree>, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, parsimony: f64) -> Vec<Individual> {
    trees
        .into_par_iter()
        .map(|tree| {
            let fitness = fitness(&tree, x, y, parsimony);
            Individual { tree, fitness }
        })
        .collect()
}

fn best_index(pop: &[Individual]) -> usize {
    // first minimum wins ties
    let mut best = 0;
    for (i, ind) in pop.iter().enumerate().skip(1) {
        if ind.fitness < pop[best].fitness {
            best = i;
        }
    }
    best
}

fn tournament<'a>(pop: &'a [Individual], size: usize, rng: &mut ChaCha8Rng) -> &'a Individual {
    let mut best = rng.random_range(0..pop.len());
    for _ in 1..size {
        let c = rng.random_range(0..pop.len());
        if pop[c].fitness < pop[best].fitness || (pop[c].fitness == pop[best].fitness && c < best) {
            best = c;
        }
    }
    &pop[best]
}

fn subtree_crossover(parent: &ExprTree, donor: &ExprTree, rng: &mut ChaCha8Rng) -> ExprTree {
    let at = rng.random_range(0..parent.node_count());
    let from = rng.random_range(0..donor.node_count());
    parent.with_subtree(at, donor.subtree(from).expect("index in range"))
}

fn subtree_mutation(parent: &ExprTree, config: &GpConfig, d: usize, rng: &mut ChaCha8Rng) -> ExprTree {
    let at = rng.random_range(0..parent.node_count());
    let level = parent.node_level(at).expect("index in range");
    let room = config.max_depth.saturating_sub(level).max(1);
    let fresh = random_tree(room, false, d, config.constant_range, rng);
    parent.with_subtree(at, &fresh)
}

fn point_mutation(parent: &ExprTree, config: &GpConfig, d: usize, rng: &mut ChaCha8Rng) -> ExprTree {
    let mut child = parent.clone();
    let at = rng.random_range(0..child.node_count());
    let node = child.subtree_mut(at).expect("index in range");
    match node {
        ExprTree::Const(c) => {
            let step = Normal::new(0.0, config.constant_mutation_sigma).expect("positive sigma");
            *c += step.sample(rng);
        }
        ExprTree::Var(v) => *v = rng.random_range(0..d),
        ExprTree::Cof(_) => {}
        ExprTree::Unary(op, _) => {
            *op = match op {
                UnaryOp::Sin => UnaryOp::Cos,
                UnaryOp::Cos => UnaryOp::Sin,
            }
        }
        ExprTree::Binary(op, _, _) => {
            let others: Vec<BinaryOp> = BinaryOp::ALL.iter().copied().filter(|o| o != op).collect();
            *op = others[rng.random_range(0..others.len())];
        }
    }
    child
}

/// Runs `config.generations` generations of GP on `(x, y)`.
///
/// The best individual of each generation is copied into the next unchanged,
/// so the best fitness never increases. Offspring deeper than `max_depth` are
/// replaced by a copy of their first parent. All randomness is drawn in this
/// sequential loop; fitness evaluation runs in parallel.
pub fn evolve(config: &GpConfig, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, rng: &mut ChaCha8Rng) -> Evolution {
    let d = x.ncols();
    let parsimony = config.parsimony_coefficient;
    let mut pop = score(init_population(config, d, rng), x, y, parsimony);
    let mut champions = Vec::with_capacity(config.generations + 1);
    let mut best_history = Vec::with_capacity(config.generations + 1);

    let record = |pop: &[Individual], champions: &mut Vec<Individual>, hist: &mut Vec<f64>| {
        let b = &pop[best_index(pop)];
        hist.push(b.fitness);
        champions.push(b.clone());
    };
    record(&pop, &mut champions, &mut best_history);

    let p_cross = config.crossover_prob;
    let p_sub = p_cross + config.subtree_mutation_prob;
    let p_point = p_sub + config.point_mutation_prob;

    for _ in 0..config.generations {
        let elite = pop[best_index(&pop)].clone();
        let mut children = Vec::with_capacity(config.population_size - 1);
        while children.len() + 1 < config.population_size {
            let parent = tournament(&pop, config.tournament_size, rng);
            let r: f64 = rng.random();
            let child = if r < p_cross {
                let donor = tournament(&pop, config.tournament_size, rng);
                subtree_crossover(&parent.tree, &donor.tree, rng)
            } else if r < p_sub {
                subtree_mutation(&parent.tree, config, d, rng)
            } else if r < p_point {
                point_mutation(&parent.tree, config, d, rng)
            } else {
                parent.tree.clone()
            };
            children.push(if child.depth() > config.max_depth { parent.tree.clone() } else { child });
        }
        let mut next = vec![elite];
        next.extend(score(children, x, y, parsimony));
        pop = next;
        record(&pop, &mut champions, &mut best_history);
    }

    pop.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
    Evolution { population: pop, champions, best_history }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::r2;
    use ndarray::{Array1, Array2};
    use rand::SeedableRng;

    fn line_data() -> (Array2<f64>, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = Array2::from_shape_fn((100, 1), |_| rng.random_range(1.0..5.0));
        let y = x.column(0).mapv(|v| 2.0 * v);
        (x, y)
    }

    #[test]
    fn fitness_cases() {
        let (x, y) = line_data();
        let exact = ExprTree::binary(BinaryOp::Add, ExprTree::Var(0), ExprTree::Var(0));
        assert_eq!(fitness(&exact, x.view(), y.view(), 0.0), 0.0);
        let c = Array1::from_elem(100, 3.0);
        assert!((fitness(&ExprTree::Const(3.0), x.view(), c.view(), 0.001) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn fitness_matches_independent_recomputation() {
        let (x, y) = line_data();
        let tree = ExprTree::binary(
            BinaryOp::Div,
            ExprTree::unary(UnaryOp::Sin, ExprTree::Var(0)),
            ExprTree::binary(BinaryOp::Sub, ExprTree::Var(0), ExprTree::Const(3.0)),
        );
        let mut ss = 0.0;
        for i in 0..100 {
            let v = x[[i, 0]];
            let f = v.sin() / (v - 3.0);
            let r = f - y[i];
            ss += if (r * r).is_finite() { r * r } else { DEFAULT_NONFINITE_PENALTY };
        }
        let want = (ss / 100.0).sqrt() + 0.01 * 6.0;
        assert!((fitness(&tree, x.view(), y.view(), 0.01) - want).abs() < 1e-12);
    }

    #[test]
    fn zero_generations_returns_initial_population() {
        let (x, y) = line_data();
        let cfg = GpConfig { generations: 0, population_size: 30, ..GpConfig::default() };
        let evo = evolve(&cfg, x.view(), y.view(), &mut ChaCha8Rng::seed_from_u64(4));
        let mut init = init_population(&cfg, 1, &mut ChaCha8Rng::seed_from_u64(4));
        init.sort_by(|a, b| {
            fitness(a, x.view(), y.view(), cfg.parsimony_coefficient)
                .total_cmp(&fitness(b, x.view(), y.view(), cfg.parsimony_coefficient))
        });
        let got: Vec<_> = evo.population.iter().map(|i| i.tree.clone()).collect();
        assert_eq!(got, init);
        assert_eq!(evo.champions.len(), 1);
    }

    #[test]
    fn elitism_keeps_best_fitness_monotone_and_depth_bounded() {
        let (x, y) = line_data();
        let cfg = GpConfig { population_size: 100, generations: 15, ..GpConfig::default() };
        let evo = evolve(&cfg, x.view(), y.view(), &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(evo.best_history.len(), 16);
        for w in evo.best_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(evo.population.iter().all(|i| i.tree.depth() <= cfg.max_depth));
        assert!(evo.population.windows(2).all(|w| w[0].fitness <= w[1].fitness));
    }

    #[test]
    fn linear_target_is_recovered() {
        let (x, y) = line_data();
        let cfg = GpConfig { population_size: 200, generations: 10, seed: 1, ..GpConfig::default() };
        let evo = evolve(&cfg, x.view(), y.view(), &mut ChaCha8Rng::seed_from_u64(cfg.seed));
        let best = &evo.population[0].tree;
        let pred = Program::from_tree(best).evaluate(&[], x.view()).unwrap();
        let score = r2(&pred.values, y.as_slice().unwrap()).unwrap();
        assert!(score >= 0.99, "R2 {score}");
    }

    #[test]
    fn evolution_is_deterministic() {
        let (x, y) = line_data();
        let cfg = GpConfig { population_size: 60, generations: 4, ..GpConfig::default() };
        let a = evolve(&cfg, x.view(), y.view(), &mut ChaCha8Rng::seed_from_u64(9));
        let b = evolve(&cfg, x.view(), y.view(), &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.population, b.population);
        assert_eq!(a.best_history, b.best_history);
    }
}
