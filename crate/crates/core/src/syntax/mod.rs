//! Lexing, parsing and printing of the four source languages: network
//! architectures (`.nal`), training configurations (`.tcl`), systems
//! (`.scl`) and the project manifest.

pub mod config;
pub mod lexer;
pub mod manifest;
pub mod network;
pub mod parser;
pub mod printer;
pub mod project;
pub mod system;

pub use config::{config_decl, parse_config, parse_value};
pub use manifest::{parse_manifest, print_manifest, MANIFEST_FILE};
pub use network::{parse_network, parse_networks};
pub use printer::{print_config, print_config_decl, print_expr, print_network, print_system, print_value};
pub use project::{load_project, load_project_from_sources, LoadError};
pub use system::{parse_system, SystemFile};

/// Double-quoted string literal with the escapes the lexer understands.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
