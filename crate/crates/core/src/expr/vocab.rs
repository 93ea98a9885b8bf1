use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::ExprError;

/// Unary primitives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnaryOp {
    Sin,
    Cos,
}

/// Binary primitives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 2] = [UnaryOp::Sin, UnaryOp::Cos];

    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        match self {
            UnaryOp::Sin => a.sin(),
            UnaryOp::Cos => a.cos(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
        }
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 4] = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div];

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        }
    }
}

/// A symbol of the postfix alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    Pad,
    Bos,
    Eos,
    /// Coefficient placeholder.
    Cof,
    Var(u16),
    Unary(UnaryOp),
    Binary(BinaryOp),
}

impl Token {
    pub const ADD: Token = Token::Binary(BinaryOp::Add);
    pub const SUB: Token = Token::Binary(BinaryOp::Sub);
    pub const MUL: Token = Token::Binary(BinaryOp::Mul);
    pub const DIV: Token = Token::Binary(BinaryOp::Div);
    pub const SIN: Token = Token::Unary(UnaryOp::Sin);
    pub const COS: Token = Token::Unary(UnaryOp::Cos);

    pub fn var(index: usize) -> Token {
        Token::Var(index as u16)
    }

    /// Operand count, or `None` for sequence markers.
    pub fn arity(self) -> Option<usize> {
        match self {
            Token::Pad | Token::Bos | Token::Eos => None,
            Token::Cof | Token::Var(_) => Some(0),
            Token::Unary(_) => Some(1),
            Token::Binary(_) => Some(2),
        }
    }

    pub fn is_marker(self) -> bool {
        self.arity().is_none()
    }

    /// Variables and coefficient slots.
    pub fn is_operand(self) -> bool {
        self.arity() == Some(0)
    }

    pub fn is_trig(self) -> bool {
        matches!(self, Token::Unary(_))
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Pad => f.write_str("PAD"),
            Token::Bos => f.write_str("BOS"),
            Token::Eos => f.write_str("EOS"),
            Token::Cof => f.write_str("COF"),
            Token::Var(i) => write!(f, "x{i}"),
            Token::Unary(op) => f.write_str(op.name()),
            Token::Binary(op) => f.write_str(op.name()),
        }
    }
}

impl FromStr for Token {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "PAD" => Token::Pad,
            "BOS" => Token::Bos,
            "EOS" => Token::Eos,
            "COF" => Token::Cof,
            "add" => Token::ADD,
            "sub" => Token::SUB,
            "mul" => Token::MUL,
            "div" => Token::DIV,
            "sin" => Token::SIN,
            "cos" => Token::COS,
            other => {
                let idx = other
                    .strip_prefix('x')
                    .filter(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
                    .and_then(|rest| rest.parse::<u16>().ok())
                    .ok_or_else(|| ExprError::UnknownToken(other.to_string()))?;
                Token::Var(idx)
            }
        })
    }
}

/// Dense token numbering for a fixed number of input variables.
///
/// Layout: `PAD BOS EOS COF x0 .. x(D-1) add sub mul div sin cos`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Vocab {
    max_vars: usize,
}

const NUM_MARKERS: usize = 3;
const NUM_OPS: usize = 6;

impl Vocab {
    pub fn new(max_vars: usize) -> Self {
        assert!(max_vars >= 1 && max_vars <= u16::MAX as usize, "max_vars out of range");
        Vocab { max_vars }
    }

    pub fn max_vars(&self) -> usize {
        self.max_vars
    }

    pub fn len(&self) -> usize {
        NUM_MARKERS + 1 + self.max_vars + NUM_OPS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, token: Token) -> bool {
        match token {
            Token::Var(i) => (i as usize) < self.max_vars,
            _ => true,
        }
    }

    pub fn id(&self, token: Token) -> Option<usize> {
        let ops_base = NUM_MARKERS + 1 + self.max_vars;
        Some(match token {
            Token::Pad => 0,
            Token::Bos => 1,
            Token::Eos => 2,
            Token::Cof => 3,
            Token::Var(i) if (i as usize) < self.max_vars => 4 + i as usize,
            Token::Var(_) => return None,
            Token::Binary(BinaryOp::Add) => ops_base,
            Token::Binary(BinaryOp::Sub) => ops_base + 1,
            Token::Binary(BinaryOp::Mul) => ops_base + 2,
            Token::Binary(BinaryOp::Div) => ops_base + 3,
            Token::Unary(UnaryOp::Sin) => ops_base + 4,
            Token::Unary(UnaryOp::Cos) => ops_base + 5,
        })
    }

    pub fn token(&self, id: usize) -> Option<Token> {
        let ops_base = NUM_MARKERS + 1 + self.max_vars;
        Some(match id {
            0 => Token::Pad,
            1 => Token::Bos,
            2 => Token::Eos,
            3 => Token::Cof,
            i if i < ops_base => Token::Var((i - 4) as u16),
            i if i == ops_base => Token::ADD,
            i if i == ops_base + 1 => Token::SUB,
            i if i == ops_base + 2 => Token::MUL,
            i if i == ops_base + 3 => Token::DIV,
            i if i == ops_base + 4 => Token::SIN,
            i if i == ops_base + 5 => Token::COS,
            _ => return None,
        })
    }

    /// All tokens in id order.
    pub fn tokens(&self) -> Vec<Token> {
        (0..self.len()).filter_map(|i| self.token(i)).collect()
    }

    /// Non-marker tokens in id order.
    pub fn expression_tokens(&self) -> Vec<Token> {
        self.tokens().into_iter().filter(|t| !t.is_marker()).collect()
    }

    /// Hash of the ordered token names; checkpoints and corpora carry it.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        for tok in self.tokens() {
            hasher.update(tok.to_string().as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }

    /// Splits a whitespace-separated line into vocabulary tokens.
    pub fn parse_tokens(&self, line: &str) -> Result<Vec<Token>, ExprError> {
        line.split_whitespace()
            .map(|word| {
                let tok: Token = word.parse()?;
                if self.contains(tok) {
                    Ok(tok)
                } else {
                    Err(ExprError::UnknownToken(word.to_string()))
                }
            })
            .collect()
    }
}

/// Space-joined token names.
pub fn join_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&t.to_string());
    }
    out
}
