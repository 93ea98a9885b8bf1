use super::postfix::PostfixTemplate;
use super::tree::ExprTree;

/// Fully parenthesized infix form. Coefficient slots print as their value in
/// `coefs` when given, else as `COF`.
pub fn render_infix(template: &PostfixTemplate, coefs: Option<&[f64]>) -> String {
    render_tree(&template.to_tree(), coefs)
}

pub fn render_tree(tree: &ExprTree, coefs: Option<&[f64]>) -> String {
    let mut out = String::new();
    write_node(tree, coefs, &mut out);
    out
}

fn write_node(node: &ExprTree, coefs: Option<&[f64]>, out: &mut String) {
    match node {
        ExprTree::Var(i) => out.push_str(&format!("x{i}")),
        ExprTree::Const(c) => out.push_str(&format!("{c}")),
        ExprTree::Cof(k) => match coefs.and_then(|w| w.get(*k)) {
            Some(v) => out.push_str(&format!("{v}")),
            None => out.push_str("COF"),
        },
        ExprTree::Unary(op, c) => {
            out.push_str(op.name());
            out.push('(');
            write_node(c, coefs, out);
            out.push(')');
        }
        ExprTree::Binary(op, l, r) => {
            out.push('(');
            write_node(l, coefs, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_node(r, coefs, out);
            out.push(')');
        }
    }
}
