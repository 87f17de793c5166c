//! `mlc.project`: flat `key = value` lines, `#` comments.

use std::sync::Arc;

use crate::diag::{Diagnostic, SourcePos, Span};
use crate::model::ProjectManifest;

pub const MANIFEST_FILE: &str = "mlc.project";

fn split_list(v: &str) -> Vec<String> {
    v.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(str::to_string).collect()
}

pub fn parse_manifest(text: &str, file: &str) -> (ProjectManifest, Vec<Diagnostic>) {
    let file: Arc<str> = Arc::from(file);
    let mut m = ProjectManifest::default();
    let mut diags = Vec::new();
    let mut seen: Vec<(String, Span)> = Vec::new();
    let mut offset = 0usize;
    for (i, raw) in text.split('\n').enumerate() {
        let line_no = i as u32 + 1;
        let line_offset = offset;
        offset += raw.len() + 1;
        let line = raw.trim_end_matches('\r');
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let lead = line.len() - line.trim_start().len();
        let pos = SourcePos { line: line_no, column: lead as u32 + 1, offset: line_offset + lead };
        let end = SourcePos { line: line_no, column: line.len() as u32 + 1, offset: line_offset + line.len() };
        let span = Span::new(file.clone(), pos, end);
        let Some((key, value)) = content.split_once('=') else {
            diags.push(Diagnostic::error("E-MANIFEST", format!("expected `key = value`, found `{content}`"), span));
            continue;
        };
        let key = key.trim().to_string();
        let value = value.trim();
        if let Some((_, prev)) = seen.iter().find(|(k, _)| *k == key) {
            diags.push(
                Diagnostic::error("E-DUPLICATE-KEY", format!("duplicate manifest key `{key}`"), span.clone())
                    .with_related(prev.clone()),
            );
            continue;
        }
        seen.push((key.clone(), span.clone()));
        match key.as_str() {
            "name" => m.name = value.to_string(),
            "networks" => m.network_globs = split_list(value),
            "configs" => m.config_globs = split_list(value),
            "systems" => m.system_globs = split_list(value),
            "backend" => {
                let ids = split_list(value);
                if ids.len() != 1 {
                    diags.push(Diagnostic::error("E-MANIFEST", "exactly one target backend is required", span));
                } else {
                    m.backend = ids[0].clone();
                }
            }
            "automl" => match value {
                "true" | "on" | "yes" => m.automl = true,
                "false" | "off" | "no" => m.automl = false,
                other => diags.push(Diagnostic::error(
                    "E-MANIFEST",
                    format!("`automl` expects true or false, found `{other}`"),
                    span,
                )),
            },
            "store" => m.store = value.to_string(),
            "sequential" => m.sequential = split_list(value),
            "launcher" => m.launcher = (!value.is_empty()).then(|| value.to_string()),
            _ => {
                diags.push(Diagnostic::warning("W-MANIFEST-KEY", format!("unrecognized manifest key `{key}`"), span));
                m.extra.insert(key, value.to_string());
            }
        }
    }
    if m.name.is_empty() {
        diags.push(Diagnostic::error("E-MANIFEST", "manifest must set `name`", Span::file_start(file)));
    }
    (m, diags)
}

pub fn print_manifest(m: &ProjectManifest) -> String {
    let mut out = String::new();
    let mut line = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
    line("name", m.name.clone());
    line("networks", m.network_globs.join(" "));
    line("configs", m.config_globs.join(" "));
    line("systems", m.system_globs.join(" "));
    line("backend", m.backend.clone());
    line("automl", m.automl.to_string());
    line("store", m.store.clone());
    if !m.sequential.is_empty() {
        line("sequential", m.sequential.join(" "));
    }
    if let Some(l) = &m.launcher {
        line("launcher", l.clone());
    }
    for (k, v) in &m.extra {
        line(k, v.clone());
    }
    out
}
