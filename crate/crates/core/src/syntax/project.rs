//! Project loading: manifest, glob expansion, parsing and cross-file name
//! resolution into one [`ModelUnit`].

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{config_decl, parse_config, parse_manifest, parse_networks, parse_system, MANIFEST_FILE};
use crate::diag::{has_errors, sort_diagnostics, Diagnostic, Span};
use crate::model::schema::nearest_key;
use crate::model::{InstanceKind, ModelUnit, ProjectManifest, SourceFile};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("no {MANIFEST_FILE} found in {0}")]
    MissingManifest(PathBuf),
    #[error("invalid glob `{0}`: {1}")]
    Glob(String, String),
    #[error("cannot read {0}: {1}")]
    Io(PathBuf, std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Lang {
    Network,
    Config,
    System,
}

fn lang_of(path: &str) -> Option<Lang> {
    match Path::new(path).extension()?.to_str()? {
        "nal" => Some(Lang::Network),
        "tcl" => Some(Lang::Config),
        "scl" => Some(Lang::System),
        _ => None,
    }
}

fn relative(root: &Path, p: &Path) -> String {
    let rel = p.strip_prefix(root).unwrap_or(p);
    rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("/")
}

/// Source files selected by the manifest globs, sorted by relative path.
/// Generated output and the artifact store are never sources.
pub fn collect_sources(root: &Path, manifest: &ProjectManifest) -> Result<Vec<SourceFile>, LoadError> {
    let mut paths = BTreeSet::new();
    let globs = manifest.network_globs.iter().chain(&manifest.config_globs).chain(&manifest.system_globs);
    let skip = [manifest.store.trim_end_matches('/').to_string(), "gen".to_string(), "target".to_string()];
    for pattern in globs {
        let full = root.join(pattern);
        let full = full.to_string_lossy();
        let entries = glob::glob(&full).map_err(|e| LoadError::Glob(pattern.clone(), e.to_string()))?;
        for entry in entries.flatten() {
            if !entry.is_file() {
                continue;
            }
            let rel = relative(root, &entry);
            if skip.iter().any(|s| rel == *s || rel.starts_with(&format!("{s}/"))) || lang_of(&rel).is_none() {
                continue;
            }
            paths.insert(rel);
        }
    }
    paths
        .into_iter()
        .map(|rel| {
            let full = root.join(&rel);
            std::fs::read_to_string(&full).map(|text| SourceFile { path: rel, text }).map_err(|e| LoadError::Io(full, e))
        })
        .collect()
}

/// Reads `mlc.project` under `root` and loads every source it selects.
pub fn load_project(root: &Path) -> Result<(ModelUnit, Vec<Diagnostic>), LoadError> {
    let manifest_path = root.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(LoadError::MissingManifest(root.to_path_buf()));
    }
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| LoadError::Io(manifest_path.clone(), e))?;
    let (manifest, mut diags) = parse_manifest(&text, MANIFEST_FILE);
    let sources = collect_sources(root, &manifest)?;
    let (mut unit, more) = load_project_from_sources(manifest, sources);
    unit.root = root.to_path_buf();
    diags.extend(more);
    sort_diagnostics(&mut diags);
    unit.valid = !has_errors(&diags);
    Ok((unit, diags))
}

/// Parses and links in-memory sources. Paths decide the language by
/// extension.
pub fn load_project_from_sources(manifest: ProjectManifest, sources: Vec<SourceFile>) -> (ModelUnit, Vec<Diagnostic>) {
    let mut unit = ModelUnit { manifest, ..ModelUnit::default() };
    let mut diags = Vec::new();
    for src in &sources {
        match lang_of(&src.path) {
            Some(Lang::Network) => {
                let (nets, d) = parse_networks(&src.text, &src.path);
                unit.networks.extend(nets);
                diags.extend(d);
            }
            Some(Lang::Config) => {
                let (tree, d) = parse_config(&src.text, &src.path);
                diags.extend(d);
                if let Some(tree) = tree {
                    let stem = Path::new(&src.path).file_stem().map(|s| s.to_string_lossy().into_owned());
                    let (decl, d) = config_decl(&stem.unwrap_or_default(), tree, &src.path);
                    diags.extend(d);
                    if let Some(prev) = unit.config(&decl.name) {
                        diags.push(
                            Diagnostic::error(
                                "E-DUPLICATE-NAME",
                                format!("duplicate configuration `{}`", decl.name),
                                decl.span.clone(),
                            )
                            .with_related(prev.span.clone()),
                        );
                    } else {
                        unit.configs.push(decl);
                    }
                }
            }
            Some(Lang::System) => {
                let (f, d) = parse_system(&src.text, &src.path);
                unit.things.extend(f.things);
                unit.pipelines.extend(f.pipelines);
                diags.extend(d);
            }
            None => {}
        }
    }
    unit.sources = sources;
    diags.extend(resolve(&mut unit));
    sort_diagnostics(&mut diags);
    unit.valid = !has_errors(&diags);
    (unit, diags)
}

fn resolve(unit: &mut ModelUnit) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    // Networks and things share one component namespace.
    let mut seen: Vec<(String, Span)> = Vec::new();
    let mut keep_net = Vec::new();
    for n in &unit.networks {
        let dup = seen.iter().find(|(k, _)| *k == n.name).map(|(_, s)| s.clone());
        keep_net.push(dup.is_none());
        if let Some(prev) = dup {
            diags.push(
                Diagnostic::error("E-DUPLICATE-NAME", format!("duplicate component `{}`", n.name), n.span.clone())
                    .with_related(prev),
            );
        } else {
            seen.push((n.name.clone(), n.span.clone()));
        }
    }
    let mut keep_thing = Vec::new();
    for t in &unit.things {
        let dup = seen.iter().find(|(k, _)| *k == t.name).map(|(_, s)| s.clone());
        keep_thing.push(dup.is_none());
        if let Some(prev) = dup {
            diags.push(
                Diagnostic::error("E-DUPLICATE-NAME", format!("duplicate component `{}`", t.name), t.span.clone())
                    .with_related(prev),
            );
        } else {
            seen.push((t.name.clone(), t.span.clone()));
        }
    }
    let mut it = keep_net.into_iter();
    unit.networks.retain(|_| it.next().unwrap_or(true));
    let mut it = keep_thing.into_iter();
    unit.things.retain(|_| it.next().unwrap_or(true));

    if unit.pipelines.len() > 1 {
        let first = unit.pipelines[0].span.clone();
        for g in &unit.pipelines[1..] {
            diags.push(
                Diagnostic::error("E-DUPLICATE-NAME", "a project declares at most one pipeline", g.span.clone())
                    .with_related(first.clone()),
            );
        }
    }

    let components: Vec<&str> =
        unit.networks.iter().map(|n| n.name.as_str()).chain(unit.things.iter().map(|t| t.name.as_str())).collect();
    let configs: Vec<&str> = unit.configs.iter().map(|c| c.name.as_str()).collect();
    for g in &unit.pipelines {
        for inst in &g.instances {
            let InstanceKind::Component { type_name, training, .. } = &inst.kind else { continue };
            if !components.contains(&type_name.as_str()) {
                let mut d = Diagnostic::error(
                    "E-UNRESOLVED",
                    format!("instance `{}` has unknown type `{type_name}`", inst.name),
                    inst.span.clone(),
                );
                if let Some(s) = nearest_key(type_name, components.iter().copied()) {
                    d = d.with_hint(format!("did you mean `{s}`?"));
                }
                diags.push(d);
            }
            if let Some(t) = training {
                if !configs.contains(&t.config.as_str()) {
                    let mut d = Diagnostic::error(
                        "E-UNRESOLVED",
                        format!("training configuration `{}` is not defined", t.config),
                        t.span.clone(),
                    );
                    if let Some(s) = nearest_key(&t.config, configs.iter().copied()) {
                        d = d.with_hint(format!("did you mean `{s}`?"));
                    }
                    diags.push(d);
                }
                if unit.thing(type_name).is_some() {
                    diags.push(Diagnostic::error(
                        "E-UNRESOLVED",
                        format!("`train` applies to network instances; thing `{type_name}` trains through its ML block"),
                        t.span.clone(),
                    ));
                }
            }
        }
    }
    diags
}
