//! Tokens, expression trees, postfix templates, evaluation and coefficient
//! gradients.

mod eval;
mod postfix;
mod render;
mod tree;
mod vocab;

use thiserror::Error;

pub use eval::{evaluate, grad_w, penalized_mse, EvalResult, Program, DEFAULT_NONFINITE_PENALTY};
pub use postfix::{
    abstract_coefficients, expression_text, parse_expression, parse_postfix, stack_depth,
    to_postfix, PostfixTemplate,
};
pub use render::{render_infix, render_tree};
pub use tree::ExprTree;
pub use vocab::{join_tokens, BinaryOp, Token, UnaryOp, Vocab};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("operator `{token}` at position {position} has too few operands")]
    StackUnderflow { position: usize, token: String },
    #[error("sequence leaves {depth} operands on the stack")]
    LeftoverOperands { depth: usize },
    #[error("empty token sequence")]
    EmptySequence,
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("sequence marker at position {position} inside an expression")]
    MarkerToken { position: usize },
    #[error("tree still contains a literal constant")]
    ContainsRawConstant,
    #[error("expression needs {needed} input columns, data has {found}")]
    DimensionMismatch { needed: usize, found: usize },
    #[error("expected {expected} coefficients, got {found}")]
    CoefficientCount { expected: usize, found: usize },
    #[error("{rows} input rows but {targets} targets")]
    TargetLength { rows: usize, targets: usize },
    #[error("operator arity does not match the operand stack")]
    ArityMismatch,
    #[error("every sample evaluated to a non-finite value")]
    AllSamplesNonFinite,
}
