//! Shared fixtures for the benchmarks.

use std::path::PathBuf;

pub fn calculator() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../samples/calculator")
}
