use super::vocab::{BinaryOp, Token, UnaryOp};

/// Expression tree over the primitive set.
///
/// `Const` leaves carry literal values (GP individuals, ground-truth
/// expressions); `Cof` leaves are coefficient slots numbered in postfix order.
#[derive(Clone, Debug, PartialEq)]
pub enum ExprTree {
    Var(usize),
    Const(f64),
    Cof(usize),
    Unary(UnaryOp, Box<ExprTree>),
    Binary(BinaryOp, Box<ExprTree>, Box<ExprTree>),
}

impl ExprTree {
    pub fn unary(op: UnaryOp, child: ExprTree) -> Self {
        ExprTree::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, left: ExprTree, right: ExprTree) -> Self {
        ExprTree::Binary(op, Box::new(left), Box::new(right))
    }

    pub fn node_count(&self) -> usize {
        match self {
            ExprTree::Var(_) | ExprTree::Const(_) | ExprTree::Cof(_) => 1,
            ExprTree::Unary(_, c) => 1 + c.node_count(),
            ExprTree::Binary(_, l, r) => 1 + l.node_count() + r.node_count(),
        }
    }

    /// Number of levels; a single leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            ExprTree::Var(_) | ExprTree::Const(_) | ExprTree::Cof(_) => 1,
            ExprTree::Unary(_, c) => 1 + c.depth(),
            ExprTree::Binary(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, ExprTree::Var(_) | ExprTree::Const(_) | ExprTree::Cof(_))
    }

    pub fn const_count(&self) -> usize {
        self.count_where(&|n| matches!(n, ExprTree::Const(_)))
    }

    pub fn cof_count(&self) -> usize {
        self.count_where(&|n| matches!(n, ExprTree::Cof(_)))
    }

    fn count_where(&self, pred: &dyn Fn(&ExprTree) -> bool) -> usize {
        let own = usize::from(pred(self));
        own + match self {
            ExprTree::Unary(_, c) => c.count_where(pred),
            ExprTree::Binary(_, l, r) => l.count_where(pred) + r.count_where(pred),
            _ => 0,
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            ExprTree::Var(i) => Some(*i),
            ExprTree::Const(_) | ExprTree::Cof(_) => None,
            ExprTree::Unary(_, c) => c.max_var(),
            ExprTree::Binary(_, l, r) => l.max_var().max(r.max_var()),
        }
    }

    /// Postfix walk yielding each node's token; literal constants map to `COF`.
    pub fn postfix_tokens(&self, out: &mut Vec<Token>) {
        match self {
            ExprTree::Var(i) => out.push(Token::var(*i)),
            ExprTree::Const(_) | ExprTree::Cof(_) => out.push(Token::Cof),
            ExprTree::Unary(op, c) => {
                c.postfix_tokens(out);
                out.push(Token::Unary(*op));
            }
            ExprTree::Binary(op, l, r) => {
                l.postfix_tokens(out);
                r.postfix_tokens(out);
                out.push(Token::Binary(*op));
            }
        }
    }

    /// Replaces literal constants by coefficient slots and renumbers every
    /// slot left to right in postfix order.
    pub fn abstracted(&self) -> ExprTree {
        let mut next = 0;
        self.renumber(&mut next)
    }

    fn renumber(&self, next: &mut usize) -> ExprTree {
        match self {
            ExprTree::Var(i) => ExprTree::Var(*i),
            ExprTree::Const(_) | ExprTree::Cof(_) => {
                let slot = *next;
                *next += 1;
                ExprTree::Cof(slot)
            }
            ExprTree::Unary(op, c) => ExprTree::unary(*op, c.renumber(next)),
            ExprTree::Binary(op, l, r) => {
                let l = l.renumber(next);
                let r = r.renumber(next);
                ExprTree::binary(*op, l, r)
            }
        }
    }

    /// Substitutes coefficient slot `k` with `Const(coefs[k])`.
    pub fn instantiate(&self, coefs: &[f64]) -> ExprTree {
        match self {
            ExprTree::Cof(k) => ExprTree::Const(coefs[*k]),
            ExprTree::Var(_) | ExprTree::Const(_) => self.clone(),
            ExprTree::Unary(op, c) => ExprTree::unary(*op, c.instantiate(coefs)),
            ExprTree::Binary(op, l, r) => {
                ExprTree::binary(*op, l.instantiate(coefs), r.instantiate(coefs))
            }
        }
    }

    /// Subtree at preorder position `index`.
    pub fn subtree(&self, index: usize) -> Option<&ExprTree> {
        let mut remaining = index;
        self.find_preorder(&mut remaining)
    }

    fn find_preorder(&self, remaining: &mut usize) -> Option<&ExprTree> {
        if *remaining == 0 {
            return Some(self);
        }
        *remaining -= 1;
        match self {
            ExprTree::Unary(_, c) => c.find_preorder(remaining),
            ExprTree::Binary(_, l, r) => l
                .find_preorder(remaining)
                .or_else(|| r.find_preorder(remaining)),
            _ => None,
        }
    }

    /// Depth (levels above) of the node at preorder position `index`; root is 0.
    pub fn node_level(&self, index: usize) -> Option<usize> {
        fn walk(node: &ExprTree, remaining: &mut usize, level: usize) -> Option<usize> {
            if *remaining == 0 {
                return Some(level);
            }
            *remaining -= 1;
            match node {
                ExprTree::Unary(_, c) => walk(c, remaining, level + 1),
                ExprTree::Binary(_, l, r) => {
                    walk(l, remaining, level + 1).or_else(|| walk(r, remaining, level + 1))
                }
                _ => None,
            }
        }
        let mut remaining = index;
        walk(self, &mut remaining, 0)
    }

    /// Copy of `self` with the preorder node `index` replaced by `replacement`.
    pub fn with_subtree(&self, index: usize, replacement: &ExprTree) -> ExprTree {
        fn walk(node: &ExprTree, remaining: &mut Option<usize>, rep: &ExprTree) -> ExprTree {
            match remaining {
                Some(0) => {
                    *remaining = None;
                    return rep.clone();
                }
                Some(n) => *n -= 1,
                None => return node.clone(),
            }
            match node {
                ExprTree::Unary(op, c) => ExprTree::unary(*op, walk(c, remaining, rep)),
                ExprTree::Binary(op, l, r) => {
                    let l = walk(l, remaining, rep);
                    let r = walk(r, remaining, rep);
                    ExprTree::binary(*op, l, r)
                }
                leaf => leaf.clone(),
            }
        }
        let mut remaining = Some(index);
        walk(self, &mut remaining, replacement)
    }

    /// Mutable reference to the preorder node `index`.
    pub fn subtree_mut(&mut self, index: usize) -> Option<&mut ExprTree> {
        fn walk<'a>(node: &'a mut ExprTree, remaining: &mut usize) -> Option<&'a mut ExprTree> {
            if *remaining == 0 {
                return Some(node);
            }
            *remaining -= 1;
            match node {
                ExprTree::Unary(_, c) => walk(c, remaining),
                ExprTree::Binary(_, l, r) => {
                    let left_size = l.node_count();
                    if *remaining < left_size {
                        walk(l, remaining)
                    } else {
                        *remaining -= left_size;
                        walk(r, remaining)
                    }
                }
                _ => None,
            }
        }
        let mut remaining = index;
        walk(self, &mut remaining)
    }
}
