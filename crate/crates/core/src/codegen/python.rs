//! Python rendering helpers: identifiers, literals and guard expressions.

use std::collections::BTreeMap;

use crate::model::{BinOp, Expr, ExprKind, TypeRef, UnaryOp, Value};
use crate::syntax::quote;

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del",
    "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal",
    "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
];

/// Maps `name` to a valid Python identifier: other characters become `_`,
/// a leading digit gains a `_` prefix, keywords gain a `_` suffix.
pub fn py_ident(name: &str) -> String {
    let mut s: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit()) {
        s.insert(0, '_');
    }
    if KEYWORDS.contains(&s.as_str()) {
        s.push('_');
    }
    s
}

/// Assigns collision-free identifiers to `names` in order; returns
/// `(name, ident)` pairs.
pub fn unique_idents<'a>(names: impl IntoIterator<Item = &'a str>) -> Vec<(&'a str, String)> {
    let mut used: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for n in names {
        let base = py_ident(n);
        let mut id = base.clone();
        let mut k = 1;
        while used.contains_key(&id) {
            k += 1;
            id = format!("{base}_{k}");
        }
        used.insert(id.clone(), 1);
        out.push((n, id));
    }
    out
}

pub fn py_str(s: &str) -> String {
    quote(s)
}

fn py_real(r: f64) -> String {
    format!("{r:?}")
}

pub fn py_value(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Real(r) => py_real(*r),
        Value::Str(s) | Value::Token(s) => py_str(s),
        Value::Bool(true) => "True".into(),
        Value::Bool(false) => "False".into(),
        Value::List(items) => format!("[{}]", items.iter().map(py_value).collect::<Vec<_>>().join(", ")),
        Value::Tree(t) => {
            let inner: Vec<String> = t.iter().map(|(k, v)| format!("{}: {}", py_str(k), py_value(v))).collect();
            format!("{{{}}}", inner.join(", "))
        }
    }
}

/// Where a variable in a guard or action lives.
pub struct Scope<'a> {
    /// Trigger parameter names, bound to `m[...]`.
    pub params: &'a [String],
    pub types: &'a dyn Fn(&str) -> Option<TypeRef>,
}

fn is_int(e: &Expr, scope: &Scope) -> bool {
    matches!(crate::analysis::types::type_of(e, scope.types), Ok(TypeRef::Int))
}

pub fn py_expr(e: &Expr, scope: &Scope) -> String {
    match &e.kind {
        ExprKind::Int(i) => i.to_string(),
        ExprKind::Real(r) => py_real(*r),
        ExprKind::Bool(true) => "True".into(),
        ExprKind::Bool(false) => "False".into(),
        ExprKind::Str(s) => py_str(s),
        ExprKind::Var(v) if scope.params.contains(v) => format!("m[{}]", py_str(v)),
        ExprKind::Var(v) => format!("p[{}]", py_str(v)),
        ExprKind::Unary(UnaryOp::Neg, a) => format!("(-{})", py_expr(a, scope)),
        ExprKind::Unary(UnaryOp::Not, a) => format!("(not {})", py_expr(a, scope)),
        ExprKind::Binary(op, a, b) => {
            let (x, y) = (py_expr(a, scope), py_expr(b, scope));
            match op {
                BinOp::Div if is_int(a, scope) && is_int(b, scope) => format!("glue.idiv({x}, {y})"),
                BinOp::Rem if is_int(a, scope) && is_int(b, scope) => format!("glue.irem({x}, {y})"),
                BinOp::And => format!("({x} and {y})"),
                BinOp::Or => format!("({x} or {y})"),
                op => format!("({x} {} {y})", op.symbol()),
            }
        }
        ExprKind::Call(f, args) => {
            let args: Vec<String> = args.iter().map(|a| py_expr(a, scope)).collect();
            format!("glue.{}({})", py_ident(f), args.join(", "))
        }
    }
}
