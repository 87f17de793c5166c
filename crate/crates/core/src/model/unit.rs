use std::collections::BTreeMap;
use std::path::PathBuf;

use super::config::ConfigTree;
use super::network::NetworkArch;
use super::system::{InstanceKind, PipelineGraph, ThingDef};
use crate::diag::Span;

/// Flat `key = value` project manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectManifest {
    pub name: String,
    pub network_globs: Vec<String>,
    pub config_globs: Vec<String>,
    pub system_globs: Vec<String>,
    pub backend: String,
    pub automl: bool,
    pub store: String,
    /// Dataset paths (relative to the project root) holding sequential data.
    pub sequential: Vec<String>,
    /// Command that serves the bridge protocol on stdio.
    pub launcher: Option<String>,
    /// Any keys the toolchain does not interpret.
    pub extra: BTreeMap<String, String>,
}

impl Default for ProjectManifest {
    fn default() -> Self {
        ProjectManifest {
            name: String::new(),
            network_globs: vec!["**/*.nal".into()],
            config_globs: vec!["**/*.tcl".into()],
            system_globs: vec!["**/*.scl".into()],
            backend: super::system::DEFAULT_BACKEND.into(),
            automl: false,
            store: ".mlc-store".into(),
            sequential: Vec::new(),
            launcher: None,
            extra: BTreeMap::new(),
        }
    }
}

/// A named training configuration: one `.tcl` file, named by its file stem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDecl {
    pub name: String,
    pub schema: String,
    pub tree: ConfigTree,
    pub span: Span,
}

pub const DEFAULT_CONFIG_SCHEMA: &str = "supervised";

#[derive(Debug, Clone, PartialEq)]
pub struct SourceFile {
    /// Path relative to the project root, `/`-separated.
    pub path: String,
    pub text: String,
}

/// Everything parsed from one project.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelUnit {
    pub root: PathBuf,
    pub manifest: ProjectManifest,
    pub networks: Vec<NetworkArch>,
    pub configs: Vec<ConfigDecl>,
    pub things: Vec<ThingDef>,
    pub pipelines: Vec<PipelineGraph>,
    pub sources: Vec<SourceFile>,
    pub valid: bool,
}

impl ModelUnit {
    pub fn network(&self, name: &str) -> Option<&NetworkArch> {
        self.networks.iter().find(|n| n.name == name)
    }

    pub fn thing(&self, name: &str) -> Option<&ThingDef> {
        self.things.iter().find(|t| t.name == name)
    }

    pub fn config(&self, name: &str) -> Option<&ConfigDecl> {
        self.configs.iter().find(|c| c.name == name)
    }

    pub fn config_mut(&mut self, name: &str) -> Option<&mut ConfigDecl> {
        self.configs.iter_mut().find(|c| c.name == name)
    }

    pub fn pipeline(&self) -> Option<&PipelineGraph> {
        self.pipelines.first()
    }

    /// Resolves a pipeline instance to the thing it instantiates, if any.
    pub fn instance_thing(&self, kind: &InstanceKind) -> Option<&ThingDef> {
        match kind {
            InstanceKind::Component { type_name, .. } => self.thing(type_name),
            InstanceKind::Stub { .. } => None,
        }
    }

    pub fn instance_network(&self, kind: &InstanceKind) -> Option<&NetworkArch> {
        match kind {
            InstanceKind::Component { type_name, .. } => self.network(type_name),
            InstanceKind::Stub { .. } => None,
        }
    }

    pub fn is_sequential(&self, dataset: &str) -> bool {
        self.manifest.sequential.iter().any(|s| s == dataset)
    }
}
