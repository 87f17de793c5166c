//! Deterministic generation of training programs, runtime glue and stub
//! interfaces into a `gen/` tree.

pub mod backend;
pub mod glue;
pub mod lower;
pub mod python;
pub mod stubs;

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use backend::{backend, BackendAdapter, Capabilities, ReferenceBackend};
pub use glue::generate_thing_glue;
pub use lower::{lower_mlp, preprocess_plan, training_spec, ImportSpec, MlpSpec, PreprocessPlan, PreprocessStep};
pub use stubs::generate_component_stubs;

use crate::analysis::{Analysis, TrainableUnit};
use crate::model::ConfigTree;

pub const TOOLCHAIN_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const GEN_DIR: &str = "gen";

#[derive(Debug, Error, PartialEq)]
pub enum CodegenError {
    #[error("backend `{backend}` does not support {feature}")]
    UnsupportedCapability { backend: String, feature: String },
    #[error("analysis reported {0} error(s); nothing generated")]
    AnalysisErrors(usize),
    #[error("{0}: {1}")]
    Plan(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FileKind {
    TrainingProgram,
    RuntimeGlue,
    StubInterface,
    Manifest,
}

impl FileKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FileKind::TrainingProgram => "training-program",
            FileKind::RuntimeGlue => "runtime-glue",
            FileKind::StubInterface => "stub-interface",
            FileKind::Manifest => "manifest",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedFile {
    /// Relative to `gen/`, `/`-separated.
    pub path: String,
    pub content: String,
    pub kind: FileKind,
}

impl GeneratedFile {
    pub fn new(path: impl Into<String>, content: impl Into<String>, kind: FileKind) -> Self {
        GeneratedFile { path: path.into(), content: content.into(), kind }
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.content.as_bytes()))
    }
}

/// Path-sorted generated files with unique paths.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeneratedFileSet {
    pub files: Vec<GeneratedFile>,
}

impl GeneratedFileSet {
    pub fn from_files(mut files: Vec<GeneratedFile>) -> Self {
        files.sort_by(|a, b| a.path.cmp(&b.path));
        files.dedup_by(|a, b| a.path == b.path);
        GeneratedFileSet { files }
    }

    pub fn get(&self, path: &str) -> Option<&GeneratedFile> {
        self.files.iter().find(|f| f.path == path)
    }

    pub fn of_kind(&self, kind: FileKind) -> impl Iterator<Item = &GeneratedFile> {
        self.files.iter().filter(move |f| f.kind == kind)
    }

    /// Writes every file below `dir`, removing generated files that are no
    /// longer part of the set.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        if dir.exists() {
            std::fs::remove_dir_all(dir)?;
        }
        for f in &self.files {
            let path = dir.join(&f.path);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, &f.content)?;
        }
        Ok(())
    }
}

pub(crate) fn header(comment: &str, backend: &str) -> String {
    format!("{comment} generated by mlcforge {TOOLCHAIN_VERSION} for backend {backend}; do not edit\n")
}

fn manifest(files: &[GeneratedFile]) -> GeneratedFile {
    let mut out = String::new();
    for f in files {
        out.push_str(&format!("{}\t{}\t{}\n", f.path, f.kind.as_str(), f.digest()));
    }
    GeneratedFile::new("MANIFEST", out, FileKind::Manifest)
}

fn check_capabilities(unit: &TrainableUnit, backend: &dyn BackendAdapter) -> Result<(), CodegenError> {
    let unsupported =
        |feature: String| CodegenError::UnsupportedCapability { backend: backend.id().to_string(), feature };
    if unit.backend != backend.id() {
        return Err(unsupported(format!("units targeting backend `{}` ({})", unit.backend, unit.name)));
    }
    let caps = backend.capabilities();
    if !caps.algorithms.contains(&unit.algorithm.as_str()) {
        return Err(unsupported(format!("algorithm `{}` ({})", unit.algorithm, unit.name)));
    }
    if let Some(arch) = &unit.arch {
        if let Some(l) = arch.layers().find(|l| !caps.supports_layer(&l.kind)) {
            return Err(unsupported(format!("layer {} ({})", l.kind.name(), unit.name)));
        }
    }
    Ok(())
}

/// Lowered artifacts for one trainable unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitProgram {
    pub mlp: MlpSpec,
    pub plan: PreprocessPlan,
    pub spec: ConfigTree,
}

pub fn lower_unit(unit: &TrainableUnit, backend: &dyn BackendAdapter, root: &Path) -> Result<UnitProgram, CodegenError> {
    check_capabilities(unit, backend)?;
    let mlp = lower_mlp(unit, backend.id(), root)?;
    let plan = preprocess_plan(unit)?;
    let spec = training_spec(unit, &mlp, &plan, backend.id());
    Ok(UnitProgram { mlp, plan, spec })
}

pub fn generate_training_program(
    unit: &TrainableUnit,
    backend: &dyn BackendAdapter,
    root: &Path,
) -> Result<GeneratedFileSet, CodegenError> {
    let p = lower_unit(unit, backend, root)?;
    Ok(GeneratedFileSet::from_files(backend.emit_training(unit, &p.mlp, &p.plan, &p.spec)))
}

/// Everything for an analysis-clean project, plus `MANIFEST`.
pub fn generate(analysis: &Analysis, backend: &dyn BackendAdapter) -> Result<GeneratedFileSet, CodegenError> {
    let errors = analysis.diagnostics.iter().filter(|d| d.is_error()).count();
    if errors > 0 {
        return Err(CodegenError::AnalysisErrors(errors));
    }
    let unit = &analysis.unit;
    let mut files = Vec::new();
    for tu in &analysis.units {
        files.extend(generate_training_program(tu, backend, &unit.root)?.files);
    }
    for thing in &unit.things {
        files.push(generate_thing_glue(thing, backend.id()));
    }
    for g in &unit.pipelines {
        files.extend(generate_component_stubs(g, backend.id()));
    }
    let mut set = GeneratedFileSet::from_files(files);
    let m = manifest(&set.files);
    set.files.push(m);
    set.files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(set)
}
