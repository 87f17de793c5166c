//! Static typing of guard and action expressions.

use crate::diag::Diagnostic;
use crate::model::system::BUILTIN_FUNCTIONS;
use crate::model::{BinOp, Expr, ExprKind, TypeRef, UnaryOp};

fn numeric_join(a: &TypeRef, b: &TypeRef) -> Option<TypeRef> {
    match (a, b) {
        (TypeRef::Int, TypeRef::Int) => Some(TypeRef::Int),
        (TypeRef::Int | TypeRef::Real, TypeRef::Int | TypeRef::Real) => Some(TypeRef::Real),
        _ => None,
    }
}

/// Whether a value of type `from` may be stored in or passed as `to`.
/// Tensors accept tensors of the same concrete shape, and strings, which
/// act as opaque sample references during simulation.
pub fn assignable(from: &TypeRef, to: &TypeRef) -> bool {
    match (from, to) {
        (TypeRef::Int, TypeRef::Real) => true,
        (TypeRef::Tensor(a), TypeRef::Tensor(b)) => a.dims == b.dims,
        (TypeRef::Str, TypeRef::Tensor(_)) => true,
        (a, b) => a == b,
    }
}

/// Infers the type of `e`; `env` resolves variable names.
pub fn type_of(e: &Expr, env: &dyn Fn(&str) -> Option<TypeRef>) -> Result<TypeRef, Diagnostic> {
    let err = |msg: String| Diagnostic::error("E-TYPE", msg, e.span.clone());
    match &e.kind {
        ExprKind::Int(_) => Ok(TypeRef::Int),
        ExprKind::Real(_) => Ok(TypeRef::Real),
        ExprKind::Bool(_) => Ok(TypeRef::Bool),
        ExprKind::Str(_) => Ok(TypeRef::Str),
        ExprKind::Var(v) => {
            env(v).ok_or_else(|| Diagnostic::error("E-UNKNOWN-NAME", format!("unknown name `{v}`"), e.span.clone()))
        }
        ExprKind::Unary(op, inner) => {
            let t = type_of(inner, env)?;
            match (op, &t) {
                (UnaryOp::Neg, TypeRef::Int | TypeRef::Real) => Ok(t),
                (UnaryOp::Not, TypeRef::Bool) => Ok(t),
                (UnaryOp::Neg, _) => Err(err(format!("cannot negate a value of type {t}"))),
                (UnaryOp::Not, _) => Err(err(format!("`!` expects Bool, found {t}"))),
            }
        }
        ExprKind::Binary(op, a, b) => {
            let ta = type_of(a, env)?;
            let tb = type_of(b, env)?;
            let mismatch = || err(format!("operator `{}` cannot combine {ta} and {tb}", op.symbol()));
            match op {
                BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem => numeric_join(&ta, &tb).ok_or_else(mismatch),
                BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                    numeric_join(&ta, &tb).map(|_| TypeRef::Bool).ok_or_else(mismatch)
                }
                BinOp::Eq | BinOp::Ne => {
                    let ok = numeric_join(&ta, &tb).is_some()
                        || matches!((&ta, &tb), (TypeRef::Bool, TypeRef::Bool) | (TypeRef::Str, TypeRef::Str));
                    if ok {
                        Ok(TypeRef::Bool)
                    } else {
                        Err(mismatch())
                    }
                }
                BinOp::And | BinOp::Or => match (&ta, &tb) {
                    (TypeRef::Bool, TypeRef::Bool) => Ok(TypeRef::Bool),
                    _ => Err(mismatch()),
                },
            }
        }
        ExprKind::Call(f, args) => {
            let Some((_, arity)) = BUILTIN_FUNCTIONS.iter().find(|(n, _)| n == f) else {
                return Err(Diagnostic::error("E-UNKNOWN-NAME", format!("unknown function `{f}`"), e.span.clone()));
            };
            if args.len() != *arity {
                return Err(err(format!("`{f}` takes {arity} argument(s), found {}", args.len())));
            }
            let t = type_of(&args[0], env)?;
            match (f.as_str(), &t) {
                ("argmax" | "len", TypeRef::Tensor(_)) => Ok(TypeRef::Int),
                ("abs", TypeRef::Int | TypeRef::Real) => Ok(t),
                _ => Err(err(format!("`{f}` does not accept {t}"))),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parser::Parser;

    fn ty(src: &str) -> Result<TypeRef, Diagnostic> {
        let mut p = Parser::new(src, "t");
        let e = p.expr().unwrap();
        let env = |v: &str| match v {
            "n" => Some(TypeRef::Int),
            "x" => Some(TypeRef::Real),
            "s" => Some(TypeRef::Tensor(crate::syntax::parser::Parser::new("Q(0:1)^{4}", "t").tensor_type().unwrap())),
            _ => None,
        };
        type_of(&e, &env)
    }

    #[test]
    fn typing_rules() {
        assert_eq!(ty("n + 1").unwrap(), TypeRef::Int);
        assert_eq!(ty("n * x").unwrap(), TypeRef::Real);
        assert_eq!(ty("argmax(s) == 2 && !(x < 0.5)").unwrap(), TypeRef::Bool);
        assert_eq!(ty("abs(-n)").unwrap(), TypeRef::Int);
        assert_eq!(ty("n && true").unwrap_err().code, "E-TYPE");
        assert_eq!(ty("missing > 1").unwrap_err().code, "E-UNKNOWN-NAME");
        assert_eq!(ty("argmax(n)").unwrap_err().code, "E-TYPE");
        assert_eq!(ty("\"a\" == 1").unwrap_err().code, "E-TYPE");
    }
}
