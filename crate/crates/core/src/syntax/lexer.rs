use std::sync::Arc;

use crate::diag::{Diagnostic, SourcePos, Span};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Real(f64),
    Str(String),
    Punct(&'static str),
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(v) => format!("`{v}`"),
            Tok::Real(v) => format!("`{v}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of file".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

const PUNCTS: &[&str] = &[
    "->", "==", "!=", "<=", ">=", "&&", "||", "{", "}", "(", ")", "[", "]", "<", ">", ",", ";", ":", "=", "?", "!", "/",
    "^", ".", "@", "+", "-", "*", "%",
];

struct Cursor<'a> {
    src: &'a str,
    offset: usize,
    line: u32,
    column: u32,
}

impl Cursor<'_> {
    fn pos(&self) -> SourcePos {
        SourcePos { line: self.line, column: self.column, offset: self.offset }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.offset..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.offset..].chars().nth(n)
    }

    fn rest(&self) -> &str {
        &self.src[self.offset..]
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.offset += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }
}

/// Splits `src` into tokens. Never fails: malformed input yields
/// diagnostics and is skipped. The token list always ends with `Eof`.
pub fn tokenize(src: &str, file: &Arc<str>) -> (Vec<Token>, Vec<Diagnostic>) {
    let mut cur = Cursor { src, offset: 0, line: 1, column: 1 };
    let mut toks = Vec::new();
    let mut diags = Vec::new();
    let span = |start: SourcePos, cur: &Cursor| Span::new(file.clone(), start, cur.pos());

    while let Some(c) = cur.peek() {
        let start = cur.pos();
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if cur.rest().starts_with("//") {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if cur.rest().starts_with("/*") {
            cur.bump();
            cur.bump();
            loop {
                if cur.rest().starts_with("*/") {
                    cur.bump();
                    cur.bump();
                    break;
                }
                if cur.bump().is_none() {
                    diags.push(Diagnostic::error("E-LEX", "unterminated block comment", span(start, &cur)));
                    break;
                }
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(c) = cur.peek().filter(|c| c.is_ascii_alphanumeric() || *c == '_') {
                s.push(c);
                cur.bump();
            }
            toks.push(Token { tok: Tok::Ident(s), span: span(start, &cur) });
            continue;
        }
        if c.is_ascii_digit() {
            let tok = lex_number(&mut cur);
            let sp = span(start, &cur);
            match tok {
                Ok(t) => toks.push(Token { tok: t, span: sp }),
                Err(msg) => {
                    diags.push(Diagnostic::error("E-LEX", msg, sp.clone()));
                    toks.push(Token { tok: Tok::Int(0), span: sp });
                }
            }
            continue;
        }
        if c == '"' {
            cur.bump();
            let mut s = String::new();
            let mut closed = false;
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
                match c {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' => match cur.bump() {
                        Some('n') => s.push('\n'),
                        Some('t') => s.push('\t'),
                        Some('r') => s.push('\r'),
                        Some('"') => s.push('"'),
                        Some('\\') => s.push('\\'),
                        Some(other) => {
                            diags.push(Diagnostic::error(
                                "E-LEX",
                                format!("unknown escape `\\{other}`"),
                                span(start, &cur),
                            ));
                        }
                        None => break,
                    },
                    c => s.push(c),
                }
            }
            if !closed {
                diags.push(Diagnostic::error("E-LEX", "unterminated string literal", span(start, &cur)));
            }
            toks.push(Token { tok: Tok::Str(s), span: span(start, &cur) });
            continue;
        }
        if let Some(p) = PUNCTS.iter().find(|p| cur.rest().starts_with(**p)) {
            for _ in 0..p.len() {
                cur.bump();
            }
            toks.push(Token { tok: Tok::Punct(p), span: span(start, &cur) });
            continue;
        }
        cur.bump();
        diags.push(Diagnostic::error("E-LEX", format!("unexpected character {c:?}"), span(start, &cur)));
    }
    let end = cur.pos();
    toks.push(Token { tok: Tok::Eof, span: Span::new(file.clone(), end, end) });
    (toks, diags)
}

fn lex_number(cur: &mut Cursor) -> Result<Tok, String> {
    let start = cur.offset;
    let mut is_real = false;
    while cur.peek().is_some_and(|c| c.is_ascii_digit()) {
        cur.bump();
    }
    if cur.peek() == Some('.') && cur.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
        is_real = true;
        cur.bump();
        while cur.peek().is_some_and(|c| c.is_ascii_digit()) {
            cur.bump();
        }
    }
    if matches!(cur.peek(), Some('e' | 'E')) {
        let digit_at = if matches!(cur.peek_at(1), Some('+' | '-')) { 2 } else { 1 };
        if cur.peek_at(digit_at).is_some_and(|c| c.is_ascii_digit()) {
            is_real = true;
            for _ in 0..digit_at {
                cur.bump();
            }
            while cur.peek().is_some_and(|c| c.is_ascii_digit()) {
                cur.bump();
            }
        }
    }
    let text = &cur.src[start..cur.offset];
    if is_real {
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Tok::Real(v)),
            _ => Err(format!("real literal `{text}` out of range")),
        }
    } else {
        text.parse::<i64>().map(Tok::Int).map_err(|_| format!("integer literal `{text}` out of range"))
    }
}
