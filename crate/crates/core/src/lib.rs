//! Toolchain for component systems that mix hand-written logic with
//! learned models: parsing, analysis, code generation, incremental builds
//! and deterministic simulation.

pub mod analysis;
pub mod build;
pub mod codegen;
pub mod diag;
pub mod model;
pub mod sim;
pub mod syntax;
pub mod weights;

pub use diag::{Diagnostic, Severity, SourcePos, Span};
pub use model::*;
