//! Decoder-only Transformer prior over postfix templates.
//!
//! Sequences are wrapped as `BOS t1 .. tn EOS`; the model predicts each next
//! token from its prefix. Training, gradient computation and inference share
//! one forward implementation built on [`tape`].

mod checkpoint;
mod tape;
mod train;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{PostfixTemplate, Token, Vocab};
use tape::{Tape, Var};

pub use checkpoint::CHECKPOINT_VERSION;
pub use train::{train, write_training_log, EpochStats, TrainReport};

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("invalid prior config: {0}")]
    InvalidConfig(String),
    #[error("sequence of {len} positions exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("vocabulary fingerprint {found:#018x} does not match expected {expected:#018x}")]
    VocabMismatch { expected: u64, found: u64 },
    #[error("prefix must start with BOS")]
    MissingBos,
    #[error("token {0} is not in the model vocabulary")]
    UnknownToken(Token),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("non-finite loss at epoch {epoch}, step {step} (lr {lr:e}, grad norm {grad_norm:e})")]
    NonFiniteLoss { epoch: usize, step: usize, lr: f64, grad_norm: f64 },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub d_model: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    /// Longest wrapped sequence (template length + 2).
    pub max_seq_len: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub warmup_steps: usize,
    pub grad_clip: f64,
    pub init_scale: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            d_model: 64,
            num_layers: 2,
            num_heads: 4,
            ffn_dim: 128,
            max_seq_len: 66,
            dropout: 0.0,
            learning_rate: 3e-4,
            batch_size: 16,
            epochs: 60,
            seed: 0,
            warmup_steps: 100,
            grad_clip: 1.0,
            init_scale: 0.02,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<(), PriorError> {
        let bad = |m: &str| Err(PriorError::InvalidConfig(m.to_string()));
        if self.d_model == 0 || self.num_heads == 0 || !self.d_model.is_multiple_of(self.num_heads) {
            return bad("d_model must be a positive multiple of num_heads");
        }
        if self.ffn_dim == 0 {
            return bad("ffn_dim must be positive");
        }
        if self.max_seq_len < 3 {
            return bad("max_seq_len must be at least 3");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.grad_clip > 0.0) || !(self.init_scale > 0.0) {
            return bad("grad_clip and init_scale must be positive");
        }
        Ok(())
    }
}

const PER_LAYER: usize = 16;
const LAYER_NAMES: [&str; PER_LAYER] = [
    "ln1.gamma", "ln1.beta", "attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv", "attn.bv",
    "attn.wo", "attn.bo", "ln2.gamma", "ln2.beta", "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2",
];

#[derive(Clone, Copy)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

/// Names, shapes and initialisers of every parameter, in storage order.
fn param_layout(config: &PriorConfig, vocab_len: usize) -> Vec<(String, (usize, usize), Init)> {
    let d = config.d_model;
    let f = config.ffn_dim;
    let mut out = vec![
        ("tok_emb".to_string(), (vocab_len, d), Init::Normal),
        ("pos_emb".to_string(), (config.max_seq_len, d), Init::Normal),
    ];
    for l in 0..config.num_layers {
        let shapes = [
            ((1, d), Init::Ones),
            ((1, d), Init::Zeros),
            ((d, d), Init::Normal),
            ((1, d), Init::Zeros),
            ((d, d), Init::Normal),
            ((1, d), Init::Zeros),
            ((d, d), Init::Normal),
            ((1, d), Init::Zeros),
            ((d, d), Init::Normal),
            ((1, d), Init::Zeros),
            ((1, d), Init::Ones),
            ((1, d), Init::Zeros),
            ((d, f), Init::Normal),
            ((1, f), Init::Zeros),
            ((f, d), Init::Normal),
            ((1, d), Init::Zeros),
        ];
        for (name, (shape, init)) in LAYER_NAMES.iter().zip(shapes) {
            out.push((format!("layer{l}.{name}"), shape, init));
        }
    }
    out.push(("lnf.gamma".to_string(), (1, d), Init::Ones));
    out.push(("lnf.beta".to_string(), (1, d), Init::Zeros));
    out.push(("head.w".to_string(), (d, vocab_len), Init::Normal));
    out.push(("head.b".to_string(), (1, vocab_len), Init::Zeros));
    out
}

/// Autoregressive Transformer weights plus the vocabulary they were trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorModel {
    config: PriorConfig,
    vocab: Vocab,
    params: Vec<Array2<f64>>,
}

/// Dropout settings for a training forward pass.
pub(crate) struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

impl PriorModel {
    /// Fresh weights: `N(0, init_scale)` matrices, zero biases, unit norms.
    pub fn init(config: &PriorConfig, vocab: Vocab, rng: &mut ChaCha8Rng) -> Result<Self, PriorError> {
        config.validate()?;
        let normal = Normal::new(0.0, config.init_scale).expect("validated scale");
        let params = param_layout(config, vocab.len())
            .into_iter()
            .map(|(_, shape, init)| match init {
                Init::Normal => Array2::from_shape_simple_fn(shape, || normal.sample(rng)),
                Init::Zeros => Array2::zeros(shape),
                Init::Ones => Array2::ones(shape),
            })
            .collect();
        Ok(PriorModel { config: config.clone(), vocab, params })
    }

    pub fn config(&self) -> &PriorConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub(crate) fn params(&self) -> &[Array2<f64>] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.params
    }

    pub(crate) fn param_names(&self) -> Vec<String> {
        param_layout(&self.config, self.vocab.len()).into_iter().map(|(n, _, _)| n).collect()
    }

    /// Errors unless `vocab` is the one the model was built for.
    pub fn check_vocab(&self, vocab: &Vocab) -> Result<(), PriorError> {
        let (expected, found) = (self.vocab.fingerprint(), vocab.fingerprint());
        if expected != found {
            return Err(PriorError::VocabMismatch { expected, found });
        }
        Ok(())
    }

    fn ids(&self, tokens: &[Token]) -> Result<Vec<usize>, PriorError> {
        tokens.iter().map(|&t| self.vocab.id(t).ok_or(PriorError::UnknownToken(t))).collect()
    }

    /// Builds the forward graph for `ids` and returns the `T x |V|` logits.
    pub(crate) fn build(&self, tape: &mut Tape<'_>, ids: &[usize], mut dropout: Option<Dropout<'_>>) -> Var {
        let c = &self.config;
        let t_len = ids.len();
        let dh = c.d_model / c.num_heads;
        let positions: Vec<usize> = (0..t_len).collect();

        let mut drop = |tape: &mut Tape<'_>, v: Var| -> Var {
            match dropout.as_mut() {
                Some(dp) if dp.rate > 0.0 => {
                    let keep = 1.0 - dp.rate;
                    let shape = tape.value(v).raw_dim();
                    let mask = Array2::from_shape_simple_fn(shape, || {
                        if dp.rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    tape.mask(v, mask)
                }
                _ => v,
            }
        };

        let tok = tape.param(0);
        let pos = tape.param(1);
        let te = tape.embed(tok, ids);
        let pe = tape.embed(pos, &positions);
        let mut x = tape.add(te, pe);
        x = drop(tape, x);

        let scale = 1.0 / (dh as f64).sqrt();
        for l in 0..c.num_layers {
            let base = 2 + l * PER_LAYER;
            let p: Vec<Var> = (0..PER_LAYER).map(|i| tape.param(base + i)).collect();

            let h = tape.layer_norm(x, p[0], p[1]);
            let q = tape.matmul(h, p[2]);
            let q = tape.add_row(q, p[3]);
            let k = tape.matmul(h, p[4]);
            let k = tape.add_row(k, p[5]);
            let v = tape.matmul(h, p[6]);
            let v = tape.add_row(v, p[7]);
            let mut heads = Vec::with_capacity(c.num_heads);
            for hd in 0..c.num_heads {
                let qh = tape.cols(q, hd * dh, dh);
                let kh = tape.cols(k, hd * dh, dh);
                let vh = tape.cols(v, hd * dh, dh);
                let scores = tape.matmul_t(qh, kh);
                let scores = tape.scale(scores, scale);
                let attn = tape.causal_softmax(scores);
                heads.push(tape.matmul(attn, vh));
            }
            let joined = if heads.len() == 1 { heads[0] } else { tape.concat(&heads) };
            let a = tape.matmul(joined, p[8]);
            let a = tape.add_row(a, p[9]);
            let a = drop(tape, a);
            x = tape.add(x, a);

            let h2 = tape.layer_norm(x, p[10], p[11]);
            let f = tape.matmul(h2, p[12]);
            let f = tape.add_row(f, p[13]);
            let f = tape.relu(f);
            let f = tape.matmul(f, p[14]);
            let f = tape.add_row(f, p[15]);
            let f = drop(tape, f);
            x = tape.add(x, f);
        }

        let n = self.params.len();
        let (g, b, w, hb) = (tape.param(n - 4), tape.param(n - 3), tape.param(n - 2), tape.param(n - 1));
        let hf = tape.layer_norm(x, g, b);
        let logits = tape.matmul(hf, w);
        tape.add_row(logits, hb)
    }

    fn check_prefix(&self, prefix: &[Token]) -> Result<Vec<usize>, PriorError> {
        if prefix.first() != Some(&Token::Bos) {
            return Err(PriorError::MissingBos);
        }
        if prefix.len() >= self.config.max_seq_len {
            return Err(PriorError::SequenceTooLong { len: prefix.len() + 1, max: self.config.max_seq_len });
        }
        self.ids(prefix)
    }

    /// Next-token logits after `prefix` (which starts with BOS).
    pub fn next_logits(&self, prefix: &[Token]) -> Result<Vec<f64>, PriorError> {
        let ids = self.check_prefix(prefix)?;
        let mut tape = Tape::new(&self.params);
        let logits = self.build(&mut tape, &ids, None);
        let row = tape.value(logits).row(ids.len() - 1).to_vec();
        Ok(row)
    }

    /// `p(next | prefix)` over the whole vocabulary, indexed by token id.
    pub fn forward(&self, prefix: &[Token]) -> Result<Vec<f64>, PriorError> {
        Ok(softmax(&self.next_logits(prefix)?))
    }

    /// Total and count of next-token negative log-likelihoods over the
    /// BOS/EOS-wrapped sequence.
    pub(crate) fn sequence_nll(&self, tokens: &[Token]) -> Result<(f64, usize), PriorError> {
        let (inputs, targets) = self.wrap(tokens)?;
        let mut tape = Tape::new(&self.params);
        let logits = self.build(&mut tape, &inputs, None);
        let loss = tape.cross_entropy(logits, &targets);
        Ok((tape.value(loss)[[0, 0]], targets.len()))
    }

    /// Input ids `BOS t1..tn` and target ids `t1..tn EOS`.
    pub(crate) fn wrap(&self, tokens: &[Token]) -> Result<(Vec<usize>, Vec<usize>), PriorError> {
        let len = tokens.len() + 2;
        if len > self.config.max_seq_len {
            return Err(PriorError::SequenceTooLong { len, max: self.config.max_seq_len });
        }
        let body = self.ids(tokens)?;
        let bos = self.vocab.id(Token::Bos).expect("marker");
        let eos = self.vocab.id(Token::Eos).expect("marker");
        let mut inputs = Vec::with_capacity(body.len() + 1);
        inputs.push(bos);
        inputs.extend_from_slice(&body);
        let mut targets = body;
        targets.push(eos);
        Ok((inputs, targets))
    }

    /// `log p(template)`: the sum of next-token log-probabilities over the
    /// wrapped sequence, EOS included.
    pub fn log_prob(&self, template: &PostfixTemplate) -> Result<f64, PriorError> {
        Ok(-self.sequence_nll(template.tokens())?.0)
    }

    /// Mean next-token cross-entropy of `templates` (nats/token).
    pub fn mean_cross_entropy(&self, templates: &[PostfixTemplate]) -> Result<f64, PriorError> {
        let (mut total, mut count) = (0.0, 0usize);
        for t in templates {
            let (nll, n) = self.sequence_nll(t.tokens())?;
            total += nll;
            count += n;
        }
        Ok(if count == 0 { f64::NAN } else { total / count as f64 })
    }

    /// Summed loss over `sequences` and its parameter gradient (unscaled).
    pub(crate) fn loss_and_grads(
        &self,
        sequences: &[&[Token]],
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, usize, Vec<Array2<f64>>), PriorError> {
        let mut grads: Vec<Array2<f64>> = self.params.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
        let (mut total, mut count) = (0.0, 0usize);
        for seq in sequences {
            let (inputs, targets) = self.wrap(seq)?;
            let mut tape = Tape::new(&self.params);
            let dp = dropout.as_deref_mut().map(|rng| Dropout { rate: self.config.dropout, rng });
            let logits = self.build(&mut tape, &inputs, dp);
            let loss = tape.cross_entropy(logits, &targets);
            total += tape.value(loss)[[0, 0]];
            count += targets.len();
            tape.backward(loss, &mut grads);
        }
        Ok((total, count, grads))
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
