use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{FitConfig, FitError, Optimizer};
use crate::expr::{ExprError, PostfixTemplate, Program};
use crate::seed::derive_rng;

/// Result of fitting one template.
#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub w: Vec<f64>,
    pub train_mse: f64,
    /// `(iteration, loss)` of the winning restart: every iteration for the
    /// gradient fitter, accepted moves for hill-climbing.
    pub trace: Vec<(usize, f64)>,
    /// Loss evaluations charged across all restarts.
    pub evaluations: usize,
}

struct Restart {
    loss: f64,
    w: Vec<f64>,
    trace: Vec<(usize, f64)>,
}

/// Restart RNG; both optimizers draw the starting point from it first, so the
/// same seed gives both the same initializations.
fn restart_rng(config: &FitConfig, restart: usize) -> ChaCha8Rng {
    derive_rng(config.seed, "fit-restart", restart as u64)
}

fn init_w(m: usize, config: &FitConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (lo, hi) = config.init_range;
    (0..m).map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo }).collect()
}

/// Loss, or `+inf` when every prediction is non-finite.
fn loss_or_inf(program: &Program, w: &[f64], x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, penalty: f64) -> Result<f64, FitError> {
    match program.loss(w, x, y, penalty) {
        Ok(l) => Ok(l),
        Err(ExprError::AllSamplesNonFinite) => Ok(f64::INFINITY),
        Err(e) => Err(e.into()),
    }
}

/// Lowest loss wins; exact ties go to the smaller coefficient bit pattern so
/// the choice does not depend on restart order.
fn pick_best(restarts: Vec<Restart>) -> Option<Restart> {
    restarts.into_iter().filter(|r| r.loss.is_finite()).min_by(|a, b| {
        a.loss.total_cmp(&b.loss).then_with(|| {
            let ab: Vec<u64> = a.w.iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.w.iter().map(|v| v.to_bits()).collect();
            ab.cmp(&bb)
        })
    })
}

fn fixed_template(program: &Program, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, penalty: f64) -> Result<FitOutcome, FitError> {
    let loss = loss_or_inf(program, &[], x, y, penalty)?;
    if !loss.is_finite() {
        return Err(FitError::AllRestartsNonFinite);
    }
    Ok(FitOutcome { w: Vec::new(), train_mse: loss, trace: vec![(0, loss)], evaluations: 1 })
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam on the penalized MSE from `num_restarts` uniform starting points.
///
/// A restart stops after `max_iters` iterations, or once its best loss has
/// not improved by more than `plateau_tol` for `plateau_patience`
/// iterations. The best point seen in any restart is returned, so the result
/// is never worse than the best starting point.
pub fn fit_gradient(
    template: &PostfixTemplate,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    config: &FitConfig,
) -> Result<FitOutcome, FitError> {
    config.validate()?;
    let program = Program::from_template(template);
    let penalty = config.nonfinite_penalty;
    let m = template.num_cof();
    if m == 0 {
        return fixed_template(&program, x, y, penalty);
    }
    let mut evaluations = 0;
    let mut restarts = Vec::with_capacity(config.num_restarts);
    for r in 0..config.num_restarts {
        let mut rng = restart_rng(config, r);
        let mut w = init_w(m, config, &mut rng);
        let (mut mom, mut vel) = (vec![0.0; m], vec![0.0; m]);
        let mut best = Restart { loss: f64::INFINITY, w: w.clone(), trace: Vec::new() };
        let mut plateau_ref = f64::INFINITY;
        let mut since = 0;
        for it in 0..config.max_iters {
            let (loss, grad) = match program.loss_and_grad(&w, x, y, penalty) {
                Ok(v) => v,
                Err(ExprError::AllSamplesNonFinite) => {
                    evaluations += 2;
                    break;
                }
                Err(e) => return Err(e.into()),
            };
            evaluations += 2;
            if !loss.is_finite() {
                break;
            }
            if config.record_trace {
                best.trace.push((it, loss));
            }
            if loss < best.loss {
                best.loss = loss;
                best.w.clone_from(&w);
            }
            if loss < plateau_ref - config.plateau_tol {
                plateau_ref = loss;
                since = 0;
            } else {
                since += 1;
                if since >= config.plateau_patience {
                    break;
                }
            }
            if it + 1 == config.max_iters || grad.iter().any(|g| !g.is_finite()) {
                break;
            }
            let t = (it + 1) as i32;
            let (c1, c2) = (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t));
            for k in 0..m {
                mom[k] = BETA1 * mom[k] + (1.0 - BETA1) * grad[k];
                vel[k] = BETA2 * vel[k] + (1.0 - BETA2) * grad[k] * grad[k];
                w[k] -= config.learning_rate * (mom[k] / c1) / ((vel[k] / c2).sqrt() + ADAM_EPS);
            }
            if w.iter().any(|v| !v.is_finite()) {
                break;
            }
        }
        restarts.push(best);
    }
    let best = pick_best(restarts).ok_or(FitError::AllRestartsNonFinite)?;
    Ok(FitOutcome { w: best.w, train_mse: best.loss, trace: best.trace, evaluations })
}

/// Random-perturbation search: `w' = w + N(0, hc_step_sigma^2)` per
/// coordinate, accepted only if the loss strictly decreases.
///
/// Exactly `hill_climb_budget()` loss evaluations are spent (split as evenly
/// as possible across restarts; each restart's start point costs one).
pub fn fit_hillclimb(
    template: &PostfixTemplate,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    config: &FitConfig,
) -> Result<FitOutcome, FitError> {
    config.validate()?;
    let program = Program::from_template(template);
    let penalty = config.nonfinite_penalty;
    let m = template.num_cof();
    if m == 0 {
        return fixed_template(&program, x, y, penalty);
    }
    let budget = config.hill_climb_budget();
    let step = Normal::new(0.0, config.hc_step_sigma).expect("validated sigma");
    let n_restarts = config.num_restarts;
    let mut evaluations = 0;
    let mut restarts = Vec::with_capacity(n_restarts);
    for r in 0..n_restarts {
        let share = budget / n_restarts + usize::from(r < budget % n_restarts);
        if share == 0 {
            continue;
        }
        let mut rng = restart_rng(config, r);
        let mut w = init_w(m, config, &mut rng);
        let mut loss = loss_or_inf(&program, &w, x, y, penalty)?;
        evaluations += 1;
        let mut trace = if loss.is_finite() { vec![(0, loss)] } else { Vec::new() };
        for e in 1..share {
            let proposal: Vec<f64> = w.iter().map(|v| v + step.sample(&mut rng)).collect();
            let candidate = loss_or_inf(&program, &proposal, x, y, penalty)?;
            evaluations += 1;
            if candidate < loss {
                loss = candidate;
                w = proposal;
                trace.push((e, loss));
            }
        }
        restarts.push(Restart { loss, w, trace });
    }
    let best = pick_best(restarts).ok_or(FitError::AllRestartsNonFinite)?;
    let trace = if config.record_trace { best.trace } else { Vec::new() };
    Ok(FitOutcome { w: best.w, train_mse: best.loss, trace, evaluations })
}

/// Dispatches on `config.optimizer`.
pub fn fit_one(
    template: &PostfixTemplate,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    config: &FitConfig,
) -> Result<FitOutcome, FitError> {
    match config.optimizer {
        Optimizer::Gradient => fit_gradient(template, x, y, config),
        Optimizer::HillClimb => fit_hillclimb(template, x, y, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Vocab;
    use ndarray::{Array1, Array2};

    fn t(s: &str) -> PostfixTemplate {
        PostfixTemplate::parse(s, &Vocab::new(2)).unwrap()
    }

    fn sin_linear_data(n: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = derive_rng(seed, "data", 0);
        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(1.0..5.0));
        let y = x.rows().into_iter().map(|r| 2.5 * r[0] + (1.3_f64 * r[1]).sin()).collect();
        (x, y)
    }

    #[test]
    fn constant_template_fits_the_mean() {
        let x = Array2::from_elem((20, 1), 1.0);
        let y = Array1::from_elem(20, 5.0);
        let out = fit_gradient(&t("COF"), x.view(), y.view(), &FitConfig::default()).unwrap();
        assert!((out.w[0] - 5.0).abs() <= 1e-6, "{:?}", out.w);
        assert!(out.train_mse <= 1e-10);

        let hc = FitConfig { loss_eval_budget: Some(1000), num_restarts: 1, record_trace: true, ..Default::default() };
        let out = fit_hillclimb(&t("COF"), x.view(), y.view(), &hc).unwrap();
        assert!((out.w[0] - 5.0).abs() <= 0.05, "{:?}", out.w);
        assert_eq!(out.evaluations, 1000);
        assert!(out.trace.windows(2).all(|p| p[1].1 < p[0].1));
    }

    #[test]
    fn sin_linear_template_reaches_low_mse() {
        let (x, y) = sin_linear_data(200, 1);
        let out = fit_gradient(&t("COF x0 mul COF x1 mul sin add"), x.view(), y.view(), &FitConfig::default()).unwrap();
        assert!(out.train_mse <= 1e-4, "mse {} at {:?}", out.train_mse, out.w);
    }

    #[test]
    fn parameter_free_template_returns_its_mse() {
        let (x, y) = sin_linear_data(50, 2);
        let tpl = t("x0 x1 add");
        let direct = Program::from_template(&tpl).loss(&[], x.view(), y.view(), 1e6).unwrap();
        for opt in [Optimizer::Gradient, Optimizer::HillClimb] {
            let out = fit_one(&tpl, x.view(), y.view(), &FitConfig { optimizer: opt, ..Default::default() }).unwrap();
            assert!(out.w.is_empty());
            assert_eq!(out.train_mse, direct);
            assert_eq!(out.evaluations, 1);
        }
    }

    #[test]
    fn hill_climb_budget_is_exact() {
        let (x, y) = sin_linear_data(30, 3);
        for budget in [1, 4, 5, 7, 123] {
            let config = FitConfig { loss_eval_budget: Some(budget), ..Default::default() };
            let out = fit_hillclimb(&t("COF x0 mul COF add"), x.view(), y.view(), &config).unwrap();
            assert_eq!(out.evaluations, budget);
        }
    }

    #[test]
    fn never_worse_than_best_start() {
        let (x, y) = sin_linear_data(40, 4);
        let tpl = t("COF x0 COF add div COF x1 mul cos mul");
        let config = FitConfig { max_iters: 50, ..Default::default() };
        let out = fit_gradient(&tpl, x.view(), y.view(), &config).unwrap();
        let program = Program::from_template(&tpl);
        let best_start = (0..config.num_restarts)
            .map(|r| {
                let w = init_w(3, &config, &mut restart_rng(&config, r));
                loss_or_inf(&program, &w, x.view(), y.view(), config.nonfinite_penalty).unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(out.train_mse <= best_start);
        assert_eq!(out.evaluations % 2, 0);
    }

    #[test]
    fn everywhere_undefined_template_fails() {
        let (x, y) = sin_linear_data(10, 5);
        let err = fit_gradient(&t("x0 x0 x0 sub div"), x.view(), y.view(), &FitConfig::default()).unwrap_err();
        assert_eq!(err, FitError::AllRestartsNonFinite);
    }
}
