//! Reverse-mode differentiation over dense row-major matrices, limited to the
//! operations the decoder needs.

use ndarray::{s, Array2, Axis};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Var(usize);

enum Op {
    Param(usize),
    /// Rows of a parameter table gathered by id.
    Embed { table: Var, ids: Vec<usize> },
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulT(Var, Var),
    /// Adds a `1 x n` row to every row.
    AddRow(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    /// Elementwise product with a constant (dropout masks).
    Mask(Var, Array2<f64>),
    Relu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Array2<f64>, inv_std: Vec<f64> },
    Cols { x: Var, start: usize },
    Concat(Vec<Var>),
    CausalSoftmax(Var),
    /// Sum over rows of `-log softmax(row)[target]`; a `1 x 1` value.
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Array2<f64> },
}

struct Node {
    value: Option<Array2<f64>>,
    op: Op,
}

pub(crate) struct Tape<'p> {
    params: &'p [Array2<f64>],
    nodes: Vec<Node>,
}

pub(crate) const LN_EPS: f64 = 1e-5;

fn softmax_rows_inplace(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Array2<f64>]) -> Self {
        Tape { params, nodes: Vec::with_capacity(256) }
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(val), _) => val,
            (None, Op::Param(i)) => &self.params[*i],
            _ => unreachable!("only parameters are stored by reference"),
        }
    }

    pub fn param(&mut self, index: usize) -> Var {
        self.nodes.push(Node { value: None, op: Op::Param(index) });
        Var(self.nodes.len() - 1)
    }

    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let value = t.select(Axis(0), ids);
        self.push(value, Op::Embed { table, ids: ids.to_vec() })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        self.push(value, Op::MatMulT(a, b))
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let value = self.value(x) + self.value(bias);
        self.push(value, Op::AddRow(x, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let value = self.value(x) * s;
        self.push(value, Op::Scale(x, s))
    }

    pub fn mask(&mut self, x: Var, mask: Array2<f64>) -> Var {
        let value = self.value(x) * &mask;
        self.push(value, Op::Mask(x, mask))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.max(0.0));
        self.push(value, Op::Relu(x))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
            inv_std.push(inv);
        }
        let value = &xhat * self.value(gamma) + self.value(beta);
        self.push(value, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    pub fn cols(&mut self, x: Var, start: usize, width: usize) -> Var {
        let value = self.value(x).slice(s![.., start..start + width]).to_owned();
        self.push(value, Op::Cols { x, start })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("equal row counts");
        self.push(value, Op::Concat(parts.to_vec()))
    }

    /// Row-wise softmax where row `i` only sees columns `0..=i`.
    pub fn causal_softmax(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        for (i, mut row) in value.rows_mut().into_iter().enumerate() {
            row.slice_mut(s![i + 1..]).fill(f64::NEG_INFINITY);
        }
        softmax_rows_inplace(&mut value);
        self.push(value, Op::CausalSoftmax(x))
    }

    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let mut probs = self.value(logits).clone();
        softmax_rows_inplace(&mut probs);
        let lv = self.value(logits);
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let row = lv.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
        }
        let value = Array2::from_elem((1, 1), total);
        self.push(value, Op::CrossEntropy { logits, targets: targets.to_vec(), probs })
    }

    /// Back-propagates from the scalar `loss` and adds parameter gradients
    /// into `grads` (same layout as the parameter slice).
    pub fn backward(&self, loss: Var, grads: &mut [Array2<f64>]) {
        let mut adj: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Array2::ones((1, 1)));

        fn acc(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
            match slot {
                Some(existing) => *existing += &g,
                None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Param(p) => grads[*p] += &g,
                Op::Embed { table, ids } => {
                    let shape = self.value(*table).raw_dim();
                    let mut dt = Array2::zeros(shape);
                    for (r, &id) in ids.iter().enumerate() {
                        let mut dst = dt.row_mut(id);
                        dst += &g.row(r);
                    }
                    acc(&mut adj[table.0], dt);
                }
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&g);
                    acc(&mut adj[a.0], da);
                    acc(&mut adj[b.0], db);
                }
                Op::MatMulT(a, b) => {
                    let da = g.dot(self.value(*b));
                    let db = g.t().dot(self.value(*a));
                    acc(&mut adj[a.0], da);
                    acc(&mut adj[b.0], db);
                }
                Op::AddRow(x, bias) => {
                    let db = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut adj[bias.0], db);
                    acc(&mut adj[x.0], g);
                }
                Op::Add(a, b) => {
                    acc(&mut adj[a.0], g.clone());
                    acc(&mut adj[b.0], g);
                }
                Op::Scale(x, s) => acc(&mut adj[x.0], g * *s),
                Op::Mask(x, m) => acc(&mut adj[x.0], g * m),
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let mut d = g;
                    d.zip_mut_with(xv, |d, &v| {
                        if v <= 0.0 {
                            *d = 0.0
                        }
                    });
                    acc(&mut adj[x.0], d);
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let gv = self.value(*gamma);
                    let dgamma = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dbeta = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dxhat = &g * gv;
                    let n = xhat.ncols() as f64;
                    let mut dx = Array2::zeros(xhat.raw_dim());
                    for r in 0..xhat.nrows() {
                        let dh = dxhat.row(r);
                        let xh = xhat.row(r);
                        let sum_dh = dh.sum();
                        let sum_dh_xh = dh.dot(&xh);
                        let inv = inv_std[r];
                        for c in 0..xhat.ncols() {
                            dx[[r, c]] = inv / n * (n * dh[c] - sum_dh - xh[c] * sum_dh_xh);
                        }
                    }
                    acc(&mut adj[gamma.0], dgamma);
                    acc(&mut adj[beta.0], dbeta);
                    acc(&mut adj[x.0], dx);
                }
                Op::Cols { x, start } => {
                    let mut dx = Array2::zeros(self.value(*x).raw_dim());
                    let w = g.ncols();
                    dx.slice_mut(s![.., *start..*start + w]).assign(&g);
                    acc(&mut adj[x.0], dx);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        acc(&mut adj[p.0], g.slice(s![.., off..off + w]).to_owned());
                        off += w;
                    }
                }
                Op::CausalSoftmax(x) => {
                    let p = self.nodes[i].value.as_ref().expect("stored");
                    let mut dx = &g * p;
                    for (mut row, prow) in dx.rows_mut().into_iter().zip(p.rows()) {
                        let dot: f64 = row.sum();
                        row.zip_mut_with(&prow, |d, &pv| *d -= pv * dot);
                    }
                    acc(&mut adj[x.0], dx);
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let scale = g[[0, 0]];
                    let mut d = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        d[[r, t]] -= 1.0;
                    }
                    acc(&mut adj[logits.0], d * scale);
                }
            }
        }
    }
}
