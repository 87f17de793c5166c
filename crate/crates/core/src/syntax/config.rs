//! Parser for training configurations (`.tcl`) and the shared nested
//! key-value value syntax.
//!
//! ```text
//! num_epoch: 5
//! batch_size: 64
//! optimizer { type: adam learning_rate: 0.001 }
//! hidden_layer_sizes: (128, 64)
//! ```

use super::parser::Parser;
use crate::diag::{has_errors, Diagnostic, Span};
use crate::model::{ConfigDecl, ConfigTree, Value, DEFAULT_CONFIG_SCHEMA};

/// Parses a whole document of `key: value` / `key { … }` entries.
pub fn parse_config(text: &str, file: &str) -> (Option<ConfigTree>, Vec<Diagnostic>) {
    let mut p = Parser::new(text, file);
    let result = p.config_entries(false);
    let diags = p.finish();
    match result {
        Ok(tree) if !has_errors(&diags) => (Some(tree), diags),
        _ => (None, diags),
    }
}

/// Parses a single value, e.g. a bridge payload `{ output: (0.1, 0.9) }`.
pub fn parse_value(text: &str) -> Result<Value, Diagnostic> {
    let mut p = Parser::new(text, "<value>");
    let v = p.value();
    if v.is_ok() && !p.at_eof() {
        let found = p.peek().describe();
        p.error_here(format!("unexpected trailing {found}"));
    }
    let diags = p.finish();
    match (v, diags.into_iter().find(Diagnostic::is_error)) {
        (Ok(v), None) => Ok(v),
        (_, Some(d)) => Err(d),
        (Err(_), None) => Err(Diagnostic::error("E-SYNTAX", "malformed value", Span::default())),
    }
}

/// A config file named by its stem; the reserved top-level key `schema`
/// selects the validation schema.
pub fn config_decl(name: &str, mut tree: ConfigTree, file: &str) -> (ConfigDecl, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    let span = Span::file_start(file.into());
    let schema_span = tree.get_entry("schema").map(|e| e.span.clone());
    let schema = match tree.remove("schema") {
        None => DEFAULT_CONFIG_SCHEMA.to_string(),
        Some(Value::Token(s) | Value::Str(s)) => s,
        Some(other) => {
            diags.push(Diagnostic::error(
                "E-TYPE",
                format!("`schema` expects a schema name, found {}", other.type_name()),
                schema_span.unwrap_or_else(|| span.clone()),
            ));
            DEFAULT_CONFIG_SCHEMA.to_string()
        }
    };
    (ConfigDecl { name: name.to_string(), schema, tree, span }, diags)
}
