//! Runtime values and expression evaluation.

use std::collections::BTreeMap;
use std::fmt;

use crate::model::{BinOp, Expr, ExprKind, TypeRef, UnaryOp, Value};
use crate::syntax::quote;

#[derive(Debug, Clone, PartialEq)]
pub enum SimValue {
    Int(i64),
    Real(f64),
    Bool(bool),
    /// Also used for opaque sample ids standing in for tensors.
    Str(String),
    Tensor(Vec<f64>),
}

impl fmt::Display for SimValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimValue::Int(i) => write!(f, "{i}"),
            SimValue::Real(r) => write!(f, "{r:?}"),
            SimValue::Bool(b) => write!(f, "{b}"),
            SimValue::Str(s) => f.write_str(&quote(s)),
            SimValue::Tensor(xs) => {
                f.write_str("(")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x:?}")?;
                }
                f.write_str(")")
            }
        }
    }
}

pub fn format_args(args: &[SimValue]) -> String {
    args.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl SimValue {
    /// Default for a property without initializer.
    pub fn zero(ty: &TypeRef) -> Self {
        match ty {
            TypeRef::Int => SimValue::Int(0),
            TypeRef::Real => SimValue::Real(0.0),
            TypeRef::Bool => SimValue::Bool(false),
            TypeRef::Str => SimValue::Str(String::new()),
            TypeRef::Tensor(t) => {
                let n = t.dims.iter().map(|d| d.value().unwrap_or(0) as usize).product();
                SimValue::Tensor(vec![0.0; n])
            }
        }
    }

    /// Scenario literal: numbers, booleans, strings and numeric lists.
    pub fn from_value(v: &Value) -> Option<Self> {
        Some(match v {
            Value::Int(i) => SimValue::Int(*i),
            Value::Real(r) => SimValue::Real(*r),
            Value::Bool(b) => SimValue::Bool(*b),
            Value::Str(s) | Value::Token(s) => SimValue::Str(s.clone()),
            Value::List(xs) => SimValue::Tensor(xs.iter().map(Value::as_f64).collect::<Option<_>>()?),
            Value::Tree(_) => return None,
        })
    }

    fn num(&self) -> Option<f64> {
        match self {
            SimValue::Int(i) => Some(*i as f64),
            SimValue::Real(r) => Some(*r),
            _ => None,
        }
    }
}

pub type Env<'a> = (&'a BTreeMap<String, SimValue>, &'a BTreeMap<String, SimValue>);

fn lookup(name: &str, env: Env) -> Result<SimValue, String> {
    env.0.get(name).or_else(|| env.1.get(name)).cloned().ok_or_else(|| format!("unbound variable `{name}`"))
}

fn arith(op: BinOp, a: &SimValue, b: &SimValue) -> Result<SimValue, String> {
    use SimValue::*;
    if let (Int(x), Int(y)) = (a, b) {
        let (x, y) = (*x, *y);
        return match op {
            BinOp::Add => Ok(Int(x.wrapping_add(y))),
            BinOp::Sub => Ok(Int(x.wrapping_sub(y))),
            BinOp::Mul => Ok(Int(x.wrapping_mul(y))),
            BinOp::Div | BinOp::Rem if y == 0 => Err("integer division by zero".into()),
            // truncating, like the generated glue's idiv/irem
            BinOp::Div => Ok(Int(x.wrapping_div(y))),
            BinOp::Rem => Ok(Int(x.wrapping_rem(y))),
            _ => unreachable!(),
        };
    }
    let (Some(x), Some(y)) = (a.num(), b.num()) else {
        return Err(format!("`{}` needs numbers, got {a} and {b}", op.symbol()));
    };
    Ok(Real(match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div => x / y,
        BinOp::Rem => x % y,
        _ => unreachable!(),
    }))
}

fn compare(op: BinOp, a: &SimValue, b: &SimValue) -> Result<bool, String> {
    let ord = match (a, b) {
        (SimValue::Int(x), SimValue::Int(y)) => x.partial_cmp(y),
        (SimValue::Str(x), SimValue::Str(y)) => x.partial_cmp(y),
        (SimValue::Bool(x), SimValue::Bool(y)) => x.partial_cmp(y),
        _ => match (a.num(), b.num()) {
            (Some(x), Some(y)) => x.partial_cmp(&y),
            _ if matches!(op, BinOp::Eq | BinOp::Ne) => return Ok((a == b) == (op == BinOp::Eq)),
            _ => return Err(format!("cannot compare {a} and {b}")),
        },
    };
    use std::cmp::Ordering::*;
    Ok(match (op, ord) {
        (BinOp::Ne, o) => o != Some(Equal),
        (_, None) => false,
        (BinOp::Eq, Some(o)) => o == Equal,
        (BinOp::Lt, Some(o)) => o == Less,
        (BinOp::Le, Some(o)) => o != Greater,
        (BinOp::Gt, Some(o)) => o == Greater,
        (BinOp::Ge, Some(o)) => o != Less,
        _ => unreachable!(),
    })
}

fn truth(v: &SimValue) -> Result<bool, String> {
    match v {
        SimValue::Bool(b) => Ok(*b),
        other => Err(format!("expected a boolean, got {other}")),
    }
}

fn call(f: &str, args: &[SimValue]) -> Result<SimValue, String> {
    match (f, args) {
        ("argmax", [SimValue::Tensor(xs)]) => {
            let mut best = 0;
            for (i, x) in xs.iter().enumerate() {
                if *x > xs[best] {
                    best = i;
                }
            }
            if xs.is_empty() {
                return Err("argmax of an empty tensor".into());
            }
            Ok(SimValue::Int(best as i64))
        }
        ("len", [SimValue::Tensor(xs)]) => Ok(SimValue::Int(xs.len() as i64)),
        ("len", [SimValue::Str(s)]) => Ok(SimValue::Int(s.chars().count() as i64)),
        ("abs", [SimValue::Int(i)]) => Ok(SimValue::Int(i.wrapping_abs())),
        ("abs", [SimValue::Real(r)]) => Ok(SimValue::Real(r.abs())),
        _ => Err(format!("cannot apply `{f}` to ({})", format_args(args))),
    }
}

/// Evaluates `e` with trigger parameters shadowing properties.
pub fn eval(e: &Expr, env: Env) -> Result<SimValue, String> {
    Ok(match &e.kind {
        ExprKind::Int(i) => SimValue::Int(*i),
        ExprKind::Real(r) => SimValue::Real(*r),
        ExprKind::Bool(b) => SimValue::Bool(*b),
        ExprKind::Str(s) => SimValue::Str(s.clone()),
        ExprKind::Var(v) => lookup(v, env)?,
        ExprKind::Unary(UnaryOp::Not, a) => SimValue::Bool(!truth(&eval(a, env)?)?),
        ExprKind::Unary(UnaryOp::Neg, a) => match eval(a, env)? {
            SimValue::Int(i) => SimValue::Int(i.wrapping_neg()),
            SimValue::Real(r) => SimValue::Real(-r),
            other => return Err(format!("cannot negate {other}")),
        },
        ExprKind::Binary(BinOp::And, a, b) => SimValue::Bool(truth(&eval(a, env)?)? && truth(&eval(b, env)?)?),
        ExprKind::Binary(BinOp::Or, a, b) => SimValue::Bool(truth(&eval(a, env)?)? || truth(&eval(b, env)?)?),
        ExprKind::Binary(op, a, b) => {
            let (x, y) = (eval(a, env)?, eval(b, env)?);
            match op {
                BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem => arith(*op, &x, &y)?,
                _ => SimValue::Bool(compare(*op, &x, &y)?),
            }
        }
        ExprKind::Call(f, args) => {
            let vs: Vec<SimValue> = args.iter().map(|a| eval(a, env)).collect::<Result<_, _>>()?;
            call(f, &vs)?
        }
    })
}

pub fn eval_guard(e: &Expr, env: Env) -> Result<bool, String> {
    truth(&eval(e, env)?)
}
