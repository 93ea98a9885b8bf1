use ndarray::{ArrayView1, ArrayView2};

use super::postfix::PostfixTemplate;
use super::tree::ExprTree;
use super::vocab::{BinaryOp, Token, UnaryOp};
use super::ExprError;

/// Loss charged per sample whose prediction is not finite.
pub const DEFAULT_NONFINITE_PENALTY: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Instr {
    Var(usize),
    Const(f64),
    Coef(usize),
    Unary(UnaryOp),
    Binary(BinaryOp),
}

/// A tree flattened into postfix instructions, with child links for the
/// reverse sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    instrs: Vec<Instr>,
    // children[i] = operand node indices of instruction i (unused slots = usize::MAX)
    children: Vec<[usize; 2]>,
    num_coef: usize,
    max_var: Option<usize>,
}

/// Per-sample outputs plus a finiteness flag for each.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub values: Vec<f64>,
    /// `true` where `values[i]` is finite.
    pub finite_mask: Vec<bool>,
}

impl EvalResult {
    pub fn all_finite(&self) -> bool {
        self.finite_mask.iter().all(|&f| f)
    }

    pub fn nonfinite_count(&self) -> usize {
        self.finite_mask.iter().filter(|&&f| !f).count()
    }
}

impl Program {
    pub fn from_template(template: &PostfixTemplate) -> Self {
        let mut slot = 0;
        let instrs = template
            .tokens()
            .iter()
            .map(|&t| match t {
                Token::Var(i) => Instr::Var(i as usize),
                Token::Cof => {
                    slot += 1;
                    Instr::Coef(slot - 1)
                }
                Token::Unary(op) => Instr::Unary(op),
                Token::Binary(op) => Instr::Binary(op),
                Token::Pad | Token::Bos | Token::Eos => unreachable!("templates hold no markers"),
            })
            .collect();
        Self::link(instrs)
    }

    pub fn from_tree(tree: &ExprTree) -> Self {
        fn walk(node: &ExprTree, out: &mut Vec<Instr>) {
            match node {
                ExprTree::Var(i) => out.push(Instr::Var(*i)),
                ExprTree::Const(c) => out.push(Instr::Const(*c)),
                ExprTree::Cof(k) => out.push(Instr::Coef(*k)),
                ExprTree::Unary(op, c) => {
                    walk(c, out);
                    out.push(Instr::Unary(*op));
                }
                ExprTree::Binary(op, l, r) => {
                    walk(l, out);
                    walk(r, out);
                    out.push(Instr::Binary(*op));
                }
            }
        }
        let mut instrs = Vec::with_capacity(tree.node_count());
        walk(tree, &mut instrs);
        Self::link(instrs)
    }

    fn link(instrs: Vec<Instr>) -> Self {
        let mut stack = Vec::new();
        let mut children = Vec::with_capacity(instrs.len());
        let mut num_coef = 0;
        let mut max_var: Option<usize> = None;
        for (i, ins) in instrs.iter().enumerate() {
            let links = match ins {
                Instr::Var(v) => {
                    max_var = max_var.max(Some(*v));
                    [usize::MAX; 2]
                }
                Instr::Coef(k) => {
                    num_coef = num_coef.max(k + 1);
                    [usize::MAX; 2]
                }
                Instr::Const(_) => [usize::MAX; 2],
                Instr::Unary(_) => [stack.pop().expect("valid program"), usize::MAX],
                Instr::Binary(_) => {
                    let r = stack.pop().expect("valid program");
                    let l = stack.pop().expect("valid program");
                    [l, r]
                }
            };
            children.push(links);
            stack.push(i);
        }
        Program { instrs, children, num_coef, max_var }
    }

    pub fn num_coef(&self) -> usize {
        self.num_coef
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    fn check(&self, w: &[f64], x: &ArrayView2<'_, f64>) -> Result<(), ExprError> {
        if w.len() != self.num_coef {
            return Err(ExprError::CoefficientCount { expected: self.num_coef, found: w.len() });
        }
        if let Some(v) = self.max_var {
            if v >= x.ncols() {
                return Err(ExprError::DimensionMismatch { needed: v + 1, found: x.ncols() });
            }
        }
        Ok(())
    }

    /// Values of every node (postfix order) for every sample.
    fn forward_nodes(&self, w: &[f64], x: &ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
        let n = x.nrows();
        let mut nodes: Vec<Vec<f64>> = Vec::with_capacity(self.instrs.len());
        for (i, ins) in self.instrs.iter().enumerate() {
            let col = match *ins {
                Instr::Var(v) => x.column(v).to_vec(),
                Instr::Const(c) => vec![c; n],
                Instr::Coef(k) => vec![w[k]; n],
                Instr::Unary(op) => {
                    nodes[self.children[i][0]].iter().map(|&a| op.apply(a)).collect()
                }
                Instr::Binary(op) => {
                    let [l, r] = self.children[i];
                    nodes[l].iter().zip(&nodes[r]).map(|(&a, &b)| op.apply(a, b)).collect()
                }
            };
            nodes.push(col);
        }
        nodes
    }

    /// Evaluates the program on every row of `x`.
    ///
    /// Division is unprotected: blow-ups are reported and flagged, not clamped.
    pub fn evaluate(&self, w: &[f64], x: ArrayView2<'_, f64>) -> Result<EvalResult, ExprError> {
        self.check(w, &x)?;
        let n = x.nrows();
        let mut stack: Vec<Vec<f64>> = Vec::new();
        for ins in &self.instrs {
            match *ins {
                Instr::Var(v) => stack.push(x.column(v).to_vec()),
                Instr::Const(c) => stack.push(vec![c; n]),
                Instr::Coef(k) => stack.push(vec![w[k]; n]),
                Instr::Unary(op) => {
                    let top = stack.last_mut().ok_or(ExprError::ArityMismatch)?;
                    top.iter_mut().for_each(|a| *a = op.apply(*a));
                }
                Instr::Binary(op) => {
                    let b = stack.pop().ok_or(ExprError::ArityMismatch)?;
                    let a = stack.last_mut().ok_or(ExprError::ArityMismatch)?;
                    a.iter_mut().zip(&b).for_each(|(a, &b)| *a = op.apply(*a, b));
                }
            }
        }
        if stack.len() != 1 {
            return Err(ExprError::ArityMismatch);
        }
        let values = stack.pop().expect("one column");
        let finite_mask = values.iter().map(|v| v.is_finite()).collect();
        Ok(EvalResult { values, finite_mask })
    }

    /// Penalized mean squared error.
    pub fn loss(
        &self,
        w: &[f64],
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        penalty: f64,
    ) -> Result<f64, ExprError> {
        if y.len() != x.nrows() {
            return Err(ExprError::TargetLength { rows: x.nrows(), targets: y.len() });
        }
        let eval = self.evaluate(w, x)?;
        penalized_mse(&eval.values, y, penalty)
    }

    /// Penalized MSE and its exact gradient with respect to the coefficients,
    /// by a reverse sweep over the instruction list.
    pub fn loss_and_grad(
        &self,
        w: &[f64],
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        penalty: f64,
    ) -> Result<(f64, Vec<f64>), ExprError> {
        self.check(w, &x)?;
        if y.len() != x.nrows() {
            return Err(ExprError::TargetLength { rows: x.nrows(), targets: y.len() });
        }
        let n = x.nrows();
        let nodes = self.forward_nodes(w, &x);
        let out = nodes.last().ok_or(ExprError::ArityMismatch)?;
        let loss = penalized_mse(out, y, penalty)?;

        let mut adj: Vec<Vec<f64>> = vec![Vec::new(); nodes.len()];
        let root = nodes.len() - 1;
        adj[root] = out
            .iter()
            .zip(y.iter())
            .map(|(&f, &t)| {
                let r = f - t;
                if (r * r).is_finite() {
                    2.0 * r / n as f64
                } else {
                    0.0
                }
            })
            .collect();
        let mut grad = vec![0.0; self.num_coef];
        for i in (0..nodes.len()).rev() {
            let g = std::mem::take(&mut adj[i]);
            if g.is_empty() {
                continue;
            }
            match self.instrs[i] {
                Instr::Var(_) | Instr::Const(_) => {}
                Instr::Coef(k) => grad[k] += g.iter().sum::<f64>(),
                Instr::Unary(op) => {
                    let c = self.children[i][0];
                    let a = &nodes[c];
                    let local: Vec<f64> = g
                        .iter()
                        .zip(a)
                        .map(|(&g, &a)| match op {
                            UnaryOp::Sin => scaled(g, a.cos()),
                            UnaryOp::Cos => scaled(g, -a.sin()),
                        })
                        .collect();
                    accumulate(&mut adj[c], &local);
                }
                Instr::Binary(op) => {
                    let [l, r] = self.children[i];
                    let (a, b) = (&nodes[l], &nodes[r]);
                    let (dl, dr): (Vec<f64>, Vec<f64>) = g
                        .iter()
                        .zip(a.iter().zip(b))
                        .map(|(&g, (&a, &b))| match op {
                            BinaryOp::Add => (g, g),
                            BinaryOp::Sub => (g, -g),
                            BinaryOp::Mul => (scaled(g, b), scaled(g, a)),
                            BinaryOp::Div => (scaled(g, 1.0 / b), scaled(g, -a / (b * b))),
                        })
                        .unzip();
                    accumulate(&mut adj[l], &dl);
                    accumulate(&mut adj[r], &dr);
                }
            }
        }
        Ok((loss, grad))
    }
}

// A zero adjoint contributes nothing, even through an infinite local slope.
#[inline]
fn scaled(adjoint: f64, slope: f64) -> f64 {
    if adjoint == 0.0 {
        0.0
    } else {
        adjoint * slope
    }
}

fn accumulate(dst: &mut Vec<f64>, src: &[f64]) {
    if dst.is_empty() {
        dst.extend_from_slice(src);
    } else {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
    }
}

/// `(1/N) * (sum of squared residuals over finite samples + penalty * non-finite count)`.
pub fn penalized_mse(pred: &[f64], y: ArrayView1<'_, f64>, penalty: f64) -> Result<f64, ExprError> {
    if pred.len() != y.len() {
        return Err(ExprError::TargetLength { rows: pred.len(), targets: y.len() });
    }
    let mut total = 0.0;
    let mut bad = 0usize;
    for (&f, &t) in pred.iter().zip(y.iter()) {
        let sq = (f - t) * (f - t);
        if sq.is_finite() {
            total += sq;
        } else {
            bad += 1;
        }
    }
    if bad == pred.len() {
        return Err(ExprError::AllSamplesNonFinite);
    }
    Ok((total + penalty * bad as f64) / pred.len() as f64)
}

/// Evaluates `template` with coefficients `w` on every row of `x`.
pub fn evaluate(
    template: &PostfixTemplate,
    w: &[f64],
    x: ArrayView2<'_, f64>,
) -> Result<EvalResult, ExprError> {
    Program::from_template(template).evaluate(w, x)
}

/// Penalized MSE of `template` on `(x, y)` and its gradient in `w`.
pub fn grad_w(
    template: &PostfixTemplate,
    w: &[f64],
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
) -> Result<(f64, Vec<f64>), ExprError> {
    Program::from_template(template).loss_and_grad(w, x, y, DEFAULT_NONFINITE_PENALTY)
}
