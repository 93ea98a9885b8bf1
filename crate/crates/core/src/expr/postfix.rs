use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::tree::ExprTree;
use super::vocab::{join_tokens, Token, Vocab};
use super::ExprError;

/// Stack-depth scan shared by the parser and the samplers.
///
/// Returns the final depth, or the position of the first underflowing token.
pub fn stack_depth(tokens: &[Token]) -> Result<usize, ExprError> {
    let mut depth = 0usize;
    for (position, &tok) in tokens.iter().enumerate() {
        let arity = tok.arity().ok_or(ExprError::MarkerToken { position })?;
        if depth < arity {
            return Err(ExprError::StackUnderflow { position, token: tok.to_string() });
        }
        depth = depth - arity + 1;
    }
    Ok(depth)
}

/// Parses a postfix token sequence into its unique expression tree.
///
/// Coefficient slots are numbered in token order.
pub fn parse_postfix(tokens: &[Token], vocab: &Vocab) -> Result<ExprTree, ExprError> {
    let mut stack: Vec<ExprTree> = Vec::with_capacity(tokens.len());
    let mut next_slot = 0;
    for (position, &tok) in tokens.iter().enumerate() {
        if !vocab.contains(tok) {
            return Err(ExprError::UnknownToken(tok.to_string()));
        }
        let node = match tok {
            Token::Pad | Token::Bos | Token::Eos => {
                return Err(ExprError::MarkerToken { position })
            }
            Token::Cof => {
                next_slot += 1;
                ExprTree::Cof(next_slot - 1)
            }
            Token::Var(i) => ExprTree::Var(i as usize),
            Token::Unary(op) => {
                let child = stack
                    .pop()
                    .ok_or_else(|| ExprError::StackUnderflow { position, token: tok.to_string() })?;
                ExprTree::unary(op, child)
            }
            Token::Binary(op) => {
                if stack.len() < 2 {
                    return Err(ExprError::StackUnderflow { position, token: tok.to_string() });
                }
                let right = stack.pop().expect("checked");
                let left = stack.pop().expect("checked");
                ExprTree::binary(op, left, right)
            }
        };
        stack.push(node);
    }
    match stack.len() {
        0 => Err(ExprError::EmptySequence),
        1 => Ok(stack.pop().expect("one element")),
        depth => Err(ExprError::LeftoverOperands { depth }),
    }
}

/// Parses postfix text that may contain numeric literals, e.g.
/// `2.5 x0 mul 1.3 x1 mul sin add`. Literals become `Const` leaves.
pub fn parse_expression(text: &str, vocab: &Vocab) -> Result<ExprTree, ExprError> {
    let mut stack: Vec<ExprTree> = Vec::new();
    let mut next_slot = 0;
    for (position, word) in text.split_whitespace().enumerate() {
        if let Ok(tok) = word.parse::<Token>() {
            if !vocab.contains(tok) {
                return Err(ExprError::UnknownToken(word.to_string()));
            }
            let node = match tok {
                Token::Pad | Token::Bos | Token::Eos => {
                    return Err(ExprError::MarkerToken { position })
                }
                Token::Cof => {
                    next_slot += 1;
                    ExprTree::Cof(next_slot - 1)
                }
                Token::Var(i) => ExprTree::Var(i as usize),
                Token::Unary(op) => {
                    let c = stack.pop().ok_or_else(|| ExprError::StackUnderflow {
                        position,
                        token: word.to_string(),
                    })?;
                    ExprTree::unary(op, c)
                }
                Token::Binary(op) => {
                    if stack.len() < 2 {
                        return Err(ExprError::StackUnderflow { position, token: word.to_string() });
                    }
                    let r = stack.pop().expect("checked");
                    let l = stack.pop().expect("checked");
                    ExprTree::binary(op, l, r)
                }
            };
            stack.push(node);
        } else {
            let value: f64 =
                word.parse().map_err(|_| ExprError::UnknownToken(word.to_string()))?;
            if !value.is_finite() {
                return Err(ExprError::UnknownToken(word.to_string()));
            }
            stack.push(ExprTree::Const(value));
        }
    }
    match stack.len() {
        0 => Err(ExprError::EmptySequence),
        1 => Ok(stack.pop().expect("one element")),
        depth => Err(ExprError::LeftoverOperands { depth }),
    }
}

/// Postfix text of a tree with literal constants written out.
pub fn expression_text(tree: &ExprTree) -> String {
    fn walk(node: &ExprTree, out: &mut Vec<String>) {
        match node {
            ExprTree::Var(i) => out.push(format!("x{i}")),
            ExprTree::Const(c) => out.push(format!("{c}")),
            ExprTree::Cof(_) => out.push("COF".into()),
            ExprTree::Unary(op, c) => {
                walk(c, out);
                out.push(op.name().into());
            }
            ExprTree::Binary(op, l, r) => {
                walk(l, out);
                walk(r, out);
                out.push(op.name().into());
            }
        }
    }
    let mut parts = Vec::new();
    walk(tree, &mut parts);
    parts.join(" ")
}

/// A stack-valid, coefficient-abstracted postfix token sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PostfixTemplate {
    tokens: Vec<Token>,
    num_cof: usize,
}

impl PostfixTemplate {
    /// Validates `tokens` as a single well-formed expression.
    pub fn new(tokens: Vec<Token>, vocab: &Vocab) -> Result<Self, ExprError> {
        parse_postfix(&tokens, vocab)?;
        let num_cof = tokens.iter().filter(|t| **t == Token::Cof).count();
        Ok(PostfixTemplate { tokens, num_cof })
    }

    /// Parses a space-separated template line.
    pub fn parse(line: &str, vocab: &Vocab) -> Result<Self, ExprError> {
        Self::new(vocab.parse_tokens(line)?, vocab)
    }

    /// Builds a template from a tree whose constants are already abstracted.
    pub fn from_tree(tree: &ExprTree, vocab: &Vocab) -> Result<Self, ExprError> {
        if tree.const_count() > 0 {
            return Err(ExprError::ContainsRawConstant);
        }
        if let Some(v) = tree.max_var() {
            if v >= vocab.max_vars() {
                return Err(ExprError::UnknownToken(format!("x{v}")));
            }
        }
        let mut tokens = Vec::with_capacity(tree.node_count());
        tree.postfix_tokens(&mut tokens);
        let num_cof = tree.cof_count();
        Ok(PostfixTemplate { tokens, num_cof })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_cof(&self) -> usize {
        self.num_cof
    }

    /// Template complexity: the token count.
    pub fn complexity(&self) -> usize {
        self.tokens.len()
    }

    /// Variables plus coefficient slots.
    pub fn operand_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_operand()).count()
    }

    /// Number of `sin`/`cos` tokens.
    pub fn trig_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_trig()).count()
    }

    pub fn max_var(&self) -> Option<usize> {
        self.tokens
            .iter()
            .filter_map(|t| match t {
                Token::Var(i) => Some(*i as usize),
                _ => None,
            })
            .max()
    }

    pub fn to_tree(&self) -> ExprTree {
        // Validated at construction, so any vocabulary wide enough works.
        let width = self.max_var().map_or(1, |v| v + 1);
        parse_postfix(&self.tokens, &Vocab::new(width)).expect("template validated at construction")
    }
}

impl fmt::Display for PostfixTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&join_tokens(&self.tokens))
    }
}

impl Serialize for PostfixTemplate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PostfixTemplate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        let tokens = text
            .split_whitespace()
            .map(|w| w.parse::<Token>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(serde::de::Error::custom)?;
        let width = tokens
            .iter()
            .filter_map(|t| match t {
                Token::Var(i) => Some(*i as usize + 1),
                _ => None,
            })
            .max()
            .unwrap_or(1);
        PostfixTemplate::new(tokens, &Vocab::new(width)).map_err(serde::de::Error::custom)
    }
}

/// Serializes an abstracted tree into its postfix template.
pub fn to_postfix(tree: &ExprTree, vocab: &Vocab) -> Result<PostfixTemplate, ExprError> {
    PostfixTemplate::from_tree(tree, vocab)
}

/// Replaces every literal constant with `COF` and serializes to postfix.
pub fn abstract_coefficients(tree: &ExprTree, vocab: &Vocab) -> Result<PostfixTemplate, ExprError> {
    PostfixTemplate::from_tree(&tree.abstracted(), vocab)
}
