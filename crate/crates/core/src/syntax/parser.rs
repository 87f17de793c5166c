//! Token cursor and grammar pieces shared by the three sub-languages.

use std::sync::Arc;

use super::lexer::{tokenize, Tok, Token};
use crate::diag::{Diagnostic, Span};
use crate::model::{
    BinOp, ConfigTree, Dim, ElementKind, ElementRange, Expr, ExprKind, TensorType, TypeRef, UnaryOp, Value,
};

/// Marker for a failed production; the diagnostic was already recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fail;

pub type PResult<T> = Result<T, Fail>;

const MAX_DEPTH: usize = 64;

pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
    depth: usize,
    nesting: usize,
    pub file: Arc<str>,
    pub diags: Vec<Diagnostic>,
}

impl Parser {
    pub fn new(text: &str, file: &str) -> Self {
        let file: Arc<str> = Arc::from(file);
        let (toks, diags) = tokenize(text, &file);
        Parser { toks, pos: 0, depth: 0, nesting: 0, file, diags }
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub fn peek_nth(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    pub fn span(&self) -> Span {
        self.toks[self.pos].span.clone()
    }

    pub fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span.clone()
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        match t.tok {
            Tok::Punct("{") => self.depth += 1,
            Tok::Punct("}") => self.depth = self.depth.saturating_sub(1),
            Tok::Eof => return t,
            _ => {}
        }
        self.pos += 1;
        t
    }

    pub fn at(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    pub fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub fn eat(&mut self, p: &str) -> bool {
        if self.at(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn error_here(&mut self, msg: impl Into<String>) -> Fail {
        let span = self.span();
        self.diags.push(Diagnostic::error("E-SYNTAX", msg, span));
        Fail
    }

    pub fn error_at(&mut self, code: &'static str, msg: impl Into<String>, span: Span) {
        self.diags.push(Diagnostic::error(code, msg, span));
    }

    fn expected(&mut self, what: &str) -> Fail {
        let found = self.peek().describe();
        self.error_here(format!("expected {what}, found {found}"))
    }

    pub fn expect(&mut self, p: &str) -> PResult<Span> {
        if self.at(p) {
            Ok(self.bump().span)
        } else {
            Err(self.expected(&format!("`{p}`")))
        }
    }

    pub fn expect_kw(&mut self, kw: &str) -> PResult<Span> {
        if self.at_kw(kw) {
            Ok(self.bump().span)
        } else {
            Err(self.expected(&format!("`{kw}`")))
        }
    }

    pub fn ident(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) => Ok((s, self.bump().span)),
            _ => Err(self.expected(what)),
        }
    }

    pub fn string(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Str(s) => Ok((s, self.bump().span)),
            _ => Err(self.expected(what)),
        }
    }

    /// Skips to the next top-level declaration keyword at brace depth zero.
    pub fn recover(&mut self, keywords: &[&str]) {
        loop {
            match self.peek() {
                Tok::Eof => return,
                Tok::Ident(s) if self.depth == 0 && keywords.contains(&s.as_str()) => return,
                _ => {
                    self.bump();
                }
            }
        }
    }

    /// Skips the remainder of the current braced block, leaving the cursor
    /// after its closing brace (or at EOF).
    pub fn skip_block(&mut self, block_depth: usize) {
        while !self.at_eof() {
            let closing = self.at("}") && self.depth == block_depth;
            self.bump();
            if closing {
                return;
            }
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    fn enter(&mut self) -> PResult<()> {
        self.nesting += 1;
        if self.nesting > MAX_DEPTH {
            return Err(self.error_here("nesting too deep"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.nesting -= 1;
    }

    pub fn finish(self) -> Vec<Diagnostic> {
        self.diags
    }

    // ---- numbers, tensor types, value types ----

    pub fn signed_number(&mut self) -> PResult<f64> {
        let neg = self.eat("-");
        let v = match *self.peek() {
            Tok::Int(v) => v as f64,
            Tok::Real(v) => v,
            _ => return Err(self.expected("number")),
        };
        self.bump();
        Ok(if neg { -v } else { v })
    }

    pub fn dim(&mut self) -> PResult<Dim> {
        match self.peek().clone() {
            Tok::Int(v) if v >= 0 => {
                self.bump();
                Ok(Dim::Lit(v as u64))
            }
            Tok::Ident(s) => {
                self.bump();
                Ok(Dim::Sym(s))
            }
            _ => Err(self.expected("dimension")),
        }
    }

    pub fn at_tensor_type(&self) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == "Q" || s == "Z") && matches!(self.peek_nth(1), Tok::Punct("("))
    }

    /// `Q(lo:hi)^{d1,d2,...}` or `Z(...)`.
    pub fn tensor_type(&mut self) -> PResult<TensorType> {
        let start = self.span();
        let kind = match self.ident("tensor element kind `Q` or `Z`")?.0.as_str() {
            "Q" => ElementKind::Real,
            "Z" => ElementKind::Integer,
            other => {
                let msg = format!("unknown element kind `{other}`, expected `Q` or `Z`");
                self.error_at("E-SYNTAX", msg, start);
                return Err(Fail);
            }
        };
        self.expect("(")?;
        let lo = self.signed_number()?;
        self.expect(":")?;
        let hi = self.signed_number()?;
        self.expect(")")?;
        self.expect("^")?;
        self.expect("{")?;
        let mut dims = vec![self.dim()?];
        while self.eat(",") {
            dims.push(self.dim()?);
        }
        self.expect("}")?;
        let ty = TensorType::new(ElementRange::new(kind, lo, hi), dims);
        if let Err(msg) = ty.check() {
            let span = start.to(&self.prev_span());
            self.error_at("E-TYPE", msg, span);
        }
        Ok(ty)
    }

    pub fn type_ref(&mut self) -> PResult<TypeRef> {
        if self.at_tensor_type() {
            return Ok(TypeRef::Tensor(self.tensor_type()?));
        }
        let (name, span) = self.ident("type")?;
        Ok(match name.as_str() {
            "Int" => TypeRef::Int,
            "Real" => TypeRef::Real,
            "Bool" => TypeRef::Bool,
            "Str" => TypeRef::Str,
            other => {
                self.error_at("E-TYPE", format!("unknown type `{other}`"), span);
                return Err(Fail);
            }
        })
    }

    // ---- configuration values ----

    /// Entries up to `}` (when `braced`) or end of input.
    pub fn config_entries(&mut self, braced: bool) -> PResult<ConfigTree> {
        self.enter()?;
        let result = self.config_entries_inner(braced);
        self.leave();
        result
    }

    fn config_entries_inner(&mut self, braced: bool) -> PResult<ConfigTree> {
        let mut tree = ConfigTree::new();
        loop {
            while self.eat(",") || self.eat(";") {}
            if braced && self.at("}") {
                break;
            }
            if self.at_eof() {
                if braced {
                    return Err(self.expected("`}`"));
                }
                break;
            }
            let (key, key_span) = self.ident("key")?;
            let value = if self.at("{") {
                self.config_block()?
            } else {
                self.expect(":")?;
                self.value()?
            };
            if let Some(prev) = tree.get_entry(&key) {
                let d = Diagnostic::error("E-DUPLICATE-KEY", format!("duplicate key `{key}`"), key_span.clone())
                    .with_related(prev.span.clone());
                self.diags.push(d);
            } else {
                tree.insert_spanned(key, value, key_span);
            }
        }
        Ok(tree)
    }

    fn config_block(&mut self) -> PResult<Value> {
        self.expect("{")?;
        let tree = self.config_entries(true)?;
        self.expect("}")?;
        Ok(Value::Tree(tree))
    }

    pub fn value(&mut self) -> PResult<Value> {
        self.enter()?;
        let v = self.value_inner();
        self.leave();
        v
    }

    fn value_inner(&mut self) -> PResult<Value> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Value::Int(v))
            }
            Tok::Real(v) => {
                self.bump();
                Ok(Value::Real(v))
            }
            Tok::Punct("-") => match self.peek_nth(1).clone() {
                Tok::Int(v) => {
                    self.bump();
                    self.bump();
                    Ok(Value::Int(-v))
                }
                Tok::Real(v) => {
                    self.bump();
                    self.bump();
                    Ok(Value::Real(-v))
                }
                _ => Err(self.expected("value")),
            },
            Tok::Str(s) => {
                self.bump();
                Ok(Value::Str(s))
            }
            Tok::Ident(s) => {
                self.bump();
                Ok(match s.as_str() {
                    "true" => Value::Bool(true),
                    "false" => Value::Bool(false),
                    _ => Value::Token(s),
                })
            }
            Tok::Punct("(") => {
                self.bump();
                let mut items = Vec::new();
                if !self.at(")") {
                    items.push(self.value()?);
                    while self.eat(",") {
                        if self.at(")") {
                            break;
                        }
                        items.push(self.value()?);
                    }
                }
                self.expect(")")?;
                Ok(Value::List(items))
            }
            Tok::Punct("{") => self.config_block(),
            _ => Err(self.expected("value")),
        }
    }

    // ---- expressions ----

    pub fn expr(&mut self) -> PResult<Expr> {
        self.enter()?;
        let e = self.expr_bp(0);
        self.leave();
        e
    }

    fn binop(&self) -> Option<BinOp> {
        let op = match self.peek() {
            Tok::Punct(p) => match *p {
                "+" => BinOp::Add,
                "-" => BinOp::Sub,
                "*" => BinOp::Mul,
                "/" => BinOp::Div,
                "%" => BinOp::Rem,
                "==" => BinOp::Eq,
                "!=" => BinOp::Ne,
                "<" => BinOp::Lt,
                "<=" => BinOp::Le,
                ">" => BinOp::Gt,
                ">=" => BinOp::Ge,
                "&&" => BinOp::And,
                "||" => BinOp::Or,
                _ => return None,
            },
            _ => return None,
        };
        Some(op)
    }

    fn expr_bp(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec <= min_prec {
                break;
            }
            self.bump();
            self.enter()?;
            let rhs = self.expr_bp(prec);
            self.leave();
            let rhs = rhs?;
            let span = lhs.span.to(&rhs.span);
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let start = self.span();
        if self.at("-") {
            match self.peek_nth(1).clone() {
                Tok::Int(v) => {
                    self.bump();
                    let end = self.bump().span;
                    return Ok(Expr::new(ExprKind::Int(-v), start.to(&end)));
                }
                Tok::Real(v) => {
                    self.bump();
                    let end = self.bump().span;
                    return Ok(Expr::new(ExprKind::Real(-v), start.to(&end)));
                }
                _ => {}
            }
        }
        let op = if self.eat("-") {
            Some(UnaryOp::Neg)
        } else if self.eat("!") {
            Some(UnaryOp::Not)
        } else {
            None
        };
        if let Some(op) = op {
            self.enter()?;
            let inner = self.unary();
            self.leave();
            let inner = inner?;
            let span = start.to(&inner.span);
            return Ok(Expr::new(ExprKind::Unary(op, Box::new(inner)), span));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let start = self.span();
        let kind = match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                ExprKind::Int(v)
            }
            Tok::Real(v) => {
                self.bump();
                ExprKind::Real(v)
            }
            Tok::Str(s) => {
                self.bump();
                ExprKind::Str(s)
            }
            Tok::Ident(s) => {
                self.bump();
                match s.as_str() {
                    "true" => ExprKind::Bool(true),
                    "false" => ExprKind::Bool(false),
                    _ if self.at("(") => {
                        self.bump();
                        let mut args = Vec::new();
                        if !self.at(")") {
                            args.push(self.expr()?);
                            while self.eat(",") {
                                args.push(self.expr()?);
                            }
                        }
                        self.expect(")")?;
                        ExprKind::Call(s, args)
                    }
                    _ => ExprKind::Var(s),
                }
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect(")")?;
                return Ok(e);
            }
            _ => return Err(self.expected("expression")),
        };
        Ok(Expr::new(kind, start.to(&self.prev_span())))
    }
}
