//! Symbolic regression by sampling coefficient-abstracted postfix templates
//! from a learned autoregressive prior, then fitting their coefficients.
//!
//! The stages are:
//!
//! 1. [`gp`] bootstraps a corpus of templates with a small genetic-programming
//!    regressor, abstracting every constant into a `COF` slot.
//! 2. [`prior`] trains a decoder-only Transformer on that corpus.
//! 3. [`search`] samples templates under temperature, top-k and grammar masks
//!    and filters them.
//! 4. [`fit`] fits coefficients by gradient descent and picks the final
//!    equation under a complexity budget.
//!
//! [`pipeline`] wires the stages together and persists every artifact.

pub mod data;
pub mod expr;
pub mod fit;
pub mod gp;
pub mod metrics;
pub mod pipeline;
pub mod prior;
pub mod search;
pub mod seed;

pub use data::{BenchmarkSpec, Dataset, Split};
pub use expr::{
    evaluate, grad_w, parse_postfix, render_infix, to_postfix, EvalResult, ExprError, ExprTree,
    PostfixTemplate, Token, Vocab,
};
pub use fit::{FitConfig, FittedEquation};
pub use gp::{CorpusEntry, GpConfig};
pub use metrics::MetricReport;
pub use prior::{PriorConfig, PriorModel};
pub use search::{Candidate, SamplerConfig};
