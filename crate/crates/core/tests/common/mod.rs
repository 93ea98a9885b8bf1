//! Independent reference implementations used by the integration tests.
//! Nothing here calls the library code it is checking.
#![allow(dead_code)]

use symreg_core::expr::{BinaryOp, ExprTree, Token, UnaryOp, Vocab};
use symreg_core::search::SamplerConfig;

/// Every token of a `d`-variable vocabulary, markers included.
pub fn all_tokens(d: usize) -> Vec<Token> {
    let mut out = vec![Token::Pad, Token::Bos, Token::Eos, Token::Cof];
    out.extend((0..d).map(Token::var));
    out.extend([Token::ADD, Token::SUB, Token::MUL, Token::DIV, Token::SIN, Token::COS]);
    out
}

fn arity(tok: Token) -> Option<usize> {
    match tok {
        Token::Cof | Token::Var(_) => Some(0),
        Token::Unary(_) => Some(1),
        Token::Binary(_) => Some(2),
        Token::Pad | Token::Bos | Token::Eos => None,
    }
}

/// Start index of the subtree whose root is `tokens[end]`, built right to
/// left by recursive descent.
fn subtree_start(tokens: &[Token], end: usize) -> Option<usize> {
    match arity(tokens[end])? {
        0 => Some(end),
        1 => subtree_start(tokens, end.checked_sub(1)?),
        _ => {
            let right = subtree_start(tokens, end.checked_sub(1)?)?;
            subtree_start(tokens, right.checked_sub(1)?)
        }
    }
}

/// A sequence is a valid postfix expression iff one tree spans all of it.
pub fn is_valid_postfix(tokens: &[Token]) -> bool {
    !tokens.is_empty() && subtree_start(tokens, tokens.len() - 1) == Some(0)
}

/// Every tree of at most `depth` levels over leaves `COF, x0..x(d-1)`,
/// with COF slots numbered in postfix order.
pub fn enumerate_trees(depth: usize, d: usize) -> Vec<ExprTree> {
    let mut leaves = vec![ExprTree::Cof(0)];
    leaves.extend((0..d).map(ExprTree::Var));
    let mut level = leaves.clone();
    for _ in 1..depth {
        let mut next = leaves.clone();
        for c in &level {
            for op in [UnaryOp::Sin, UnaryOp::Cos] {
                next.push(ExprTree::unary(op, c.clone()));
            }
        }
        for l in &level {
            for r in &level {
                for op in [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div] {
                    next.push(ExprTree::binary(op, l.clone(), r.clone()));
                }
            }
        }
        level = next;
    }
    level.into_iter().map(renumber).collect()
}

/// Numbers COF slots 0, 1, .. in postfix order.
pub fn renumber(tree: ExprTree) -> ExprTree {
    fn go(t: ExprTree, next: &mut usize) -> ExprTree {
        match t {
            ExprTree::Cof(_) => {
                *next += 1;
                ExprTree::Cof(*next - 1)
            }
            ExprTree::Unary(op, c) => ExprTree::unary(op, go(*c, next)),
            ExprTree::Binary(op, l, r) => {
                let l = go(*l, next);
                let r = go(*r, next);
                ExprTree::binary(op, l, r)
            }
            other => other,
        }
    }
    go(tree, &mut 0)
}

/// Postfix tokens of a tree, written out directly.
pub fn postfix_of(tree: &ExprTree) -> Vec<Token> {
    match tree {
        ExprTree::Cof(_) | ExprTree::Const(_) => vec![Token::Cof],
        ExprTree::Var(i) => vec![Token::var(*i)],
        ExprTree::Unary(op, c) => {
            let mut v = postfix_of(c);
            v.push(Token::Unary(*op));
            v
        }
        ExprTree::Binary(op, l, r) => {
            let mut v = postfix_of(l);
            v.extend(postfix_of(r));
            v.push(Token::Binary(*op));
            v
        }
    }
}

/// Direct recursive evaluation of a template at one input row.
pub fn eval_tree(tree: &ExprTree, w: &[f64], x: &[f64]) -> f64 {
    match tree {
        ExprTree::Cof(i) => w[*i],
        ExprTree::Const(c) => *c,
        ExprTree::Var(j) => x[*j],
        ExprTree::Unary(UnaryOp::Sin, c) => eval_tree(c, w, x).sin(),
        ExprTree::Unary(UnaryOp::Cos, c) => eval_tree(c, w, x).cos(),
        ExprTree::Binary(op, l, r) => {
            let (a, b) = (eval_tree(l, w, x), eval_tree(r, w, x));
            match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => a / b,
            }
        }
    }
}

/// Plain mean squared error of a template over rows of `x`.
pub fn tree_mse(tree: &ExprTree, w: &[f64], x: &[Vec<f64>], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for (row, t) in x.iter().zip(y) {
        let e = eval_tree(tree, w, row) - t;
        s += e * e;
    }
    s / y.len() as f64
}

/// Central differences with step `1e-6 * (1 + |w_i|)`.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, w: &[f64]) -> Vec<f64> {
    (0..w.len())
        .map(|i| {
            let h = 1e-6 * (1.0 + w[i].abs());
            let mut p = w.to_vec();
            let mut m = w.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

pub fn naive_mse(p: &[f64], t: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += (p[i] - t[i]) * (p[i] - t[i]);
    }
    s / p.len() as f64
}

pub fn naive_r2(p: &[f64], t: &[f64]) -> f64 {
    let mut mean = 0.0;
    for v in t {
        mean += v;
    }
    mean /= t.len() as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for i in 0..p.len() {
        ss_res += (t[i] - p[i]) * (t[i] - p[i]);
        ss_tot += (t[i] - mean) * (t[i] - mean);
    }
    1.0 - ss_res / ss_tot
}

pub fn naive_pearson(p: &[f64], t: &[f64]) -> f64 {
    let n = p.len() as f64;
    let (mut mp, mut mt) = (0.0, 0.0);
    for i in 0..p.len() {
        mp += p[i];
        mt += t[i];
    }
    mp /= n;
    mt /= n;
    let (mut c, mut vp, mut vt) = (0.0, 0.0, 0.0);
    for i in 0..p.len() {
        c += (p[i] - mp) * (t[i] - mt);
        vp += (p[i] - mp) * (p[i] - mp);
        vt += (t[i] - mt) * (t[i] - mt);
    }
    c / (vp.sqrt() * vt.sqrt())
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Decoding-mask rules restated from the sampler contract: which tokens may
/// follow `prefix` (BOS excluded) under grammar masks.
pub fn admissible(vocab: &Vocab, cfg: &SamplerConfig, num_vars: usize, prefix: &[Token]) -> Vec<bool> {
    let (mut depth, mut operands, mut trig) = (0i64, 0usize, 0usize);
    for &t in prefix {
        match arity(t) {
            Some(0) => {
                depth += 1;
                operands += 1;
            }
            Some(1) => trig += 1,
            Some(2) => depth -= 1,
            _ => {}
        }
    }
    let len = prefix.len();
    vocab
        .tokens()
        .into_iter()
        .map(|t| match t {
            Token::Pad | Token::Bos => false,
            Token::Var(i) if i as usize >= num_vars => false,
            Token::Eos => depth == 1,
            _ if len >= cfg.max_len => false,
            _ => {
                // after this token, (new_depth - 1) binary ops must still fit
                let left = (cfg.max_len - len - 1) as i64;
                match arity(t) {
                    Some(0) => operands < cfg.max_term && depth <= left,
                    Some(1) => depth >= 1 && trig < cfg.max_trig_vars && depth - 1 <= left,
                    Some(2) => depth >= 2 && depth - 2 <= left,
                    _ => false,
                }
            }
        })
        .collect()
}

/// Temperature/top-k renormalized distribution over admissible ids, written
/// from the definition (ties broken toward the lower id).
pub fn truncated_softmax(logits: &[f64], allowed: &[bool], temperature: f64, top_k: usize) -> Vec<f64> {
    let mut ids: Vec<usize> = (0..logits.len()).filter(|&i| allowed[i]).collect();
    ids.sort_by(|&a, &b| logits[b].partial_cmp(&logits[a]).unwrap().then(a.cmp(&b)));
    ids.truncate(top_k);
    let mut out = vec![0.0; logits.len()];
    let m = ids.iter().map(|&i| logits[i]).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = ids.iter().map(|&i| ((logits[i] - m) / temperature).exp()).sum();
    for &i in &ids {
        out[i] = ((logits[i] - m) / temperature).exp() / z;
    }
    out
}
