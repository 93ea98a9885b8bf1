use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{PriorConfig, PriorError, PriorModel};
use crate::expr::{PostfixTemplate, Vocab};
use crate::seed::{derive_rng, stable_hash};

/// Fraction of the corpus (by token-string hash) held out for validation is
/// `1 / HELDOUT_MODULUS`.
const HELDOUT_MODULUS: u64 = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_ce: f64,
    pub heldout_ce: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_size: usize,
    pub heldout_size: usize,
    /// Cross-entropies of the untrained model.
    pub initial_train_ce: f64,
    pub initial_heldout_ce: Option<f64>,
    pub history: Vec<EpochStats>,
}

impl TrainReport {
    pub fn final_train_ce(&self) -> f64 {
        self.history.last().map_or(self.initial_train_ce, |e| e.train_ce)
    }

    pub fn final_heldout_ce(&self) -> Option<f64> {
        self.history.last().map_or(self.initial_heldout_ce, |e| e.heldout_ce)
    }
}

fn is_heldout(t: &PostfixTemplate) -> bool {
    stable_hash(&t.to_string()).is_multiple_of(HELDOUT_MODULUS)
}

struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    step: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(params: &[Array2<f64>]) -> Self {
        let zeros = || params.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
        Adam { m: zeros(), v: zeros(), step: 0 }
    }

    fn update(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            });
        }
    }
}

/// Trains a fresh model on `corpus` by mini-batch Adam on the mean per-token
/// cross-entropy.
///
/// A tenth of the distinct templates (chosen by hash of the token string) is
/// held out. If that leaves nothing to train on, every template is used for
/// training and no held-out loss is reported.
pub fn train(
    config: &PriorConfig,
    vocab: Vocab,
    corpus: &[PostfixTemplate],
) -> Result<(PriorModel, TrainReport), PriorError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(PriorError::EmptyCorpus);
    }
    for t in corpus {
        if t.len() + 2 > config.max_seq_len {
            return Err(PriorError::SequenceTooLong { len: t.len() + 2, max: config.max_seq_len });
        }
    }
    let (mut train_set, mut heldout): (Vec<&PostfixTemplate>, Vec<&PostfixTemplate>) =
        corpus.iter().partition(|t| !is_heldout(t));
    if train_set.is_empty() {
        train_set = std::mem::take(&mut heldout);
    }
    let heldout: Vec<PostfixTemplate> = heldout.into_iter().cloned().collect();
    let train_owned: Vec<PostfixTemplate> = train_set.iter().map(|t| (*t).clone()).collect();

    let mut init_rng = derive_rng(config.seed, "prior-init", 0);
    let mut model = PriorModel::init(config, vocab, &mut init_rng)?;
    let mut shuffle_rng = derive_rng(config.seed, "prior-shuffle", 0);
    let mut dropout_rng = derive_rng(config.seed, "prior-dropout", 0);

    let heldout_ce = |m: &PriorModel| -> Result<Option<f64>, PriorError> {
        if heldout.is_empty() {
            Ok(None)
        } else {
            m.mean_cross_entropy(&heldout).map(Some)
        }
    };
    let initial_train_ce = model.mean_cross_entropy(&train_owned)?;
    let initial_heldout_ce = heldout_ce(&model)?;

    let mut adam = Adam::new(model.params());
    let mut order: Vec<usize> = (0..train_owned.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0usize;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut epoch_loss, mut epoch_tokens) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let seqs: Vec<&[_]> = batch.iter().map(|&i| train_owned[i].tokens()).collect();
            let dropout = (config.dropout > 0.0).then_some(&mut dropout_rng);
            let (loss, count, mut grads) = model.loss_and_grads(&seqs, dropout)?;
            let inv = 1.0 / count as f64;
            let mut norm_sq = 0.0;
            for g in grads.iter_mut() {
                *g *= inv;
                norm_sq += g.iter().map(|v| v * v).sum::<f64>();
            }
            let grad_norm = norm_sq.sqrt();
            step += 1;
            let lr = config.learning_rate * if config.warmup_steps == 0 {
                1.0
            } else {
                (step as f64 / config.warmup_steps as f64).min(1.0)
            };
            if !loss.is_finite() || !grad_norm.is_finite() {
                return Err(PriorError::NonFiniteLoss { epoch, step, lr, grad_norm });
            }
            if grad_norm > config.grad_clip {
                let s = config.grad_clip / grad_norm;
                for g in grads.iter_mut() {
                    *g *= s;
                }
            }
            adam.update(model.params_mut(), &grads, lr);
            epoch_loss += loss;
            epoch_tokens += count;
        }
        let stats = EpochStats {
            epoch,
            train_ce: epoch_loss / epoch_tokens as f64,
            heldout_ce: heldout_ce(&model)?,
        };
        log::debug!("prior epoch {epoch}: train {:.4} heldout {:?}", stats.train_ce, stats.heldout_ce);
        history.push(stats);
    }

    let report = TrainReport {
        train_size: train_owned.len(),
        heldout_size: heldout.len(),
        initial_train_ce,
        initial_heldout_ce,
        history,
    };
    Ok((model, report))
}

/// Writes `epoch,train_ce,heldout_ce`; epoch 0 is the untrained model. A
/// missing held-out loss is an empty field.
pub fn write_training_log<W: Write>(report: &TrainReport, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_ce", "heldout_ce"])?;
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
    w.write_record(["0".to_string(), format!("{}", report.initial_train_ce), fmt(report.initial_heldout_ce)])?;
    for e in &report.history {
        w.write_record([e.epoch.to_string(), format!("{}", e.train_ce), fmt(e.heldout_ce)])?;
    }
    w.flush()?;
    Ok(())
}

