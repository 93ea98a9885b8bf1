use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{MaskMode, NextTokenModel, SamplerConfig, SearchError};
use crate::expr::{Token, Vocab};

/// Decoder bookkeeping after the tokens emitted so far (BOS excluded).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecodeState {
    pub len: usize,
    pub depth: usize,
    pub operands: usize,
    pub trig: usize,
}

impl DecodeState {
    /// State after appending `tok`. In unmasked decoding the depth may go
    /// "negative"; it saturates at zero and the sequence is rejected later.
    pub fn push(self, tok: Token) -> DecodeState {
        let mut next = self;
        next.len += 1;
        match tok.arity() {
            Some(0) => {
                next.depth += 1;
                next.operands += 1;
            }
            Some(1) => next.trig += usize::from(tok.is_trig()),
            Some(2) => next.depth = next.depth.saturating_sub(1),
            _ => {}
        }
        next
    }
}

/// Admissible next tokens, indexed by vocabulary id.
pub fn allowed_tokens(vocab: &Vocab, config: &SamplerConfig, num_vars: usize, state: DecodeState) -> Vec<bool> {
    vocab
        .tokens()
        .into_iter()
        .map(|tok| {
            if matches!(tok, Token::Pad | Token::Bos) {
                return false;
            }
            if let Token::Var(i) = tok {
                if i as usize >= num_vars {
                    return false;
                }
            }
            if config.masks == MaskMode::Off {
                return true;
            }
            if tok == Token::Eos {
                return state.depth == 1;
            }
            if state.len >= config.max_len {
                return false;
            }
            // Tokens left after this one; the stack must be reducible to one
            // entry with at most that many binary operators.
            let remaining = config.max_len - state.len - 1;
            let new_depth = match tok.arity() {
                Some(0) => {
                    if state.operands >= config.max_term {
                        return false;
                    }
                    state.depth + 1
                }
                Some(1) => {
                    if state.depth < 1 || (tok.is_trig() && state.trig >= config.max_trig_vars) {
                        return false;
                    }
                    state.depth
                }
                Some(2) => {
                    if state.depth < 2 {
                        return false;
                    }
                    state.depth - 1
                }
                _ => return false,
            };
            new_depth - 1 <= remaining
        })
        .collect()
}

/// Sampling distribution over vocabulary ids: restrict to `allowed`, keep
/// the `top_k` largest logits (ties to the lower id), then
/// `softmax(logit / temperature)`. `None` when nothing is admissible.
pub fn next_distribution(logits: &[f64], allowed: &[bool], temperature: f64, top_k: usize) -> Option<Vec<f64>> {
    let mut ids: Vec<usize> = (0..logits.len()).filter(|&i| allowed[i] && !logits[i].is_nan()).collect();
    ids.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    ids.truncate(top_k);
    let max = ids.first().map(|&i| logits[i])?;
    if max == f64::NEG_INFINITY {
        return None;
    }
    let mut probs = vec![0.0; logits.len()];
    let mut z = 0.0;
    for &i in &ids {
        let e = ((logits[i] - max) / temperature).exp();
        probs[i] = e;
        z += e;
    }
    probs.iter_mut().for_each(|p| *p /= z);
    Some(probs)
}

/// One decoded sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub tokens: Vec<Token>,
    pub proxy_score: f64,
    /// Whether decoding stopped on an emitted EOS (rather than at `max_len`).
    pub eos: bool,
}

fn draw(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

fn decode_once(
    model: &dyn NextTokenModel,
    config: &SamplerConfig,
    num_vars: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Sample>, SearchError> {
    let vocab = *model.vocab();
    let mut prefix = vec![Token::Bos];
    let mut state = DecodeState::default();
    let mut score = 0.0;
    while state.len < config.max_len {
        let logits = model.next_logits(&prefix)?;
        let allowed = allowed_tokens(&vocab, config, num_vars, state);
        let Some(probs) = next_distribution(&logits, &allowed, config.temperature, config.top_k) else {
            return Ok(None);
        };
        let id = draw(&probs, rng);
        score += probs[id].ln();
        let tok = vocab.token(id).expect("id from vocab");
        if tok == Token::Eos {
            return Ok(Some(Sample { tokens: prefix.split_off(1), proxy_score: score, eos: true }));
        }
        prefix.push(tok);
        state = state.push(tok);
    }
    Ok(Some(Sample { tokens: prefix.split_off(1), proxy_score: score, eos: false }))
}

/// Decodes one sequence, restarting from scratch when the masks leave no
/// admissible token (up to `dead_end_retries` attempts).
pub fn sample_one(
    model: &dyn NextTokenModel,
    config: &SamplerConfig,
    num_vars: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Sample, SearchError> {
    let attempts = config.dead_end_retries.max(1);
    for _ in 0..attempts {
        if let Some(sample) = decode_once(model, config, num_vars, rng)? {
            return Ok(sample);
        }
    }
    Err(SearchError::DeadEnd { retries: attempts })
}

/// Recomputes the proxy score of `tokens` (followed by EOS when `eos`) from
/// the model's distributions under the same masks. `None` if some token is
/// inadmissible.
pub fn score_sequence(
    model: &dyn NextTokenModel,
    config: &SamplerConfig,
    num_vars: usize,
    tokens: &[Token],
    eos: bool,
) -> Result<Option<f64>, SearchError> {
    let vocab = *model.vocab();
    let mut prefix = vec![Token::Bos];
    let mut state = DecodeState::default();
    let mut score = 0.0;
    let tail = eos.then_some(Token::Eos);
    for &tok in tokens.iter().chain(tail.iter()) {
        let logits = model.next_logits(&prefix)?;
        let allowed = allowed_tokens(&vocab, config, num_vars, state);
        let Some(probs) = next_distribution(&logits, &allowed, config.temperature, config.top_k) else {
            return Ok(None);
        };
        let Some(id) = vocab.id(tok) else { return Ok(None) };
        if probs[id] <= 0.0 {
            return Ok(None);
        }
        score += probs[id].ln();
        prefix.push(tok);
        state = state.push(tok);
    }
    Ok(Some(score))
}
