//! Source positions and diagnostics shared by every pass.

use std::fmt;
use std::sync::Arc;

/// A position inside a source file. Line and column are 1-based; `offset`
/// is the byte offset from the start of the file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SourcePos {
    pub line: u32,
    pub column: u32,
    pub offset: usize,
}

impl SourcePos {
    pub const START: SourcePos = SourcePos { line: 1, column: 1, offset: 0 };
}

/// A region of a named source file.
///
/// Equality on spans is always `true` so that syntax trees compare
/// structurally with `==` regardless of where they were parsed from. Use
/// [`Span::same_location`] when the location itself matters.
#[derive(Clone, Default)]
pub struct Span {
    pub file: Arc<str>,
    pub start: SourcePos,
    pub end: SourcePos,
}

impl Span {
    pub fn new(file: Arc<str>, start: SourcePos, end: SourcePos) -> Self {
        Span { file, start, end }
    }

    /// A zero-width span at the start of `file`.
    pub fn file_start(file: Arc<str>) -> Self {
        Span { file, start: SourcePos::START, end: SourcePos::START }
    }

    pub fn to(&self, other: &Span) -> Span {
        Span { file: self.file.clone(), start: self.start, end: other.end.max(self.end) }
    }

    pub fn same_location(&self, other: &Span) -> bool {
        self.file == other.file && self.start == other.start && self.end == other.end
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl Eq for Span {}

impl fmt::Debug for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.start.line, self.start.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Error,
    Warning,
    Info,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Info => "info",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A finding from a parser or analysis pass. `code` is a stable identifier
/// such as `E-SYNTAX` or `W-UNREACHABLE`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
    pub span: Span,
    /// Secondary locations, e.g. the first declaration of a duplicate.
    pub related: Vec<Span>,
    pub hint: Option<String>,
}

impl Diagnostic {
    pub fn new(severity: Severity, code: &'static str, message: impl Into<String>, span: Span) -> Self {
        Diagnostic { severity, code, message: message.into(), span, related: Vec::new(), hint: None }
    }

    pub fn error(code: &'static str, message: impl Into<String>, span: Span) -> Self {
        Self::new(Severity::Error, code, message, span)
    }

    pub fn warning(code: &'static str, message: impl Into<String>, span: Span) -> Self {
        Self::new(Severity::Warning, code, message, span)
    }

    pub fn info(code: &'static str, message: impl Into<String>, span: Span) -> Self {
        Self::new(Severity::Info, code, message, span)
    }

    pub fn with_related(mut self, span: Span) -> Self {
        self.related.push(span);
        self
    }

    pub fn with_hint(mut self, hint: impl Into<String>) -> Self {
        self.hint = Some(hint.into());
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// `file:line:col: severity[code]: message`
    pub fn render(&self) -> String {
        let mut out = format!(
            "{}:{}:{}: {}[{}]: {}",
            self.span.file,
            self.span.start.line,
            self.span.start.column,
            self.severity,
            self.code,
            self.message
        );
        for rel in &self.related {
            out.push_str(&format!(" (see {}:{}:{})", rel.file, rel.start.line, rel.start.column));
        }
        if let Some(hint) = &self.hint {
            out.push_str(&format!(" [hint: {hint}]"));
        }
        out
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}

/// Orders diagnostics by (file, offset), then severity and code, keeping
/// emission order as the last tie-breaker.
pub fn sort_diagnostics(diags: &mut [Diagnostic]) {
    diags.sort_by(|a, b| {
        (&a.span.file, a.span.start.offset, a.severity, a.code).cmp(&(
            &b.span.file,
            b.span.start.offset,
            b.severity,
            b.code,
        ))
    });
}
