//! Interface skeletons for handcrafted pipeline components.

use std::fmt::Write as _;

use super::python::{py_ident, py_str, unique_idents};
use super::{header, FileKind, GeneratedFile};
use crate::model::{Direction, InstanceKind, PipelineGraph, StubPort};

fn class_name(name: &str) -> String {
    let mut s = String::new();
    let mut upper = true;
    for c in py_ident(name).chars() {
        if c == '_' {
            upper = true;
        } else if upper {
            s.extend(c.to_uppercase());
            upper = false;
        } else {
            s.push(c);
        }
    }
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit()) {
        s.insert(0, 'C');
    }
    s
}

fn stub_file(name: &str, ports: &[StubPort], backend: &str) -> GeneratedFile {
    let mut out = header("#", backend);
    writeln!(out, "\"\"\"Interface for handcrafted component `{name}`. Fill in the handlers.\"\"\"\n").unwrap();
    writeln!(out, "\nclass {}:", class_name(name)).unwrap();
    writeln!(out, "    COMPONENT = {}\n", py_str(name)).unwrap();
    out.push_str("    def __init__(self, emit):\n        self._emit = emit\n");
    // handler and emitter names share one namespace
    let names: Vec<String> = ports
        .iter()
        .map(|p| match p.direction {
            Direction::Out => format!("emit_{}", p.name),
            _ => format!("on_{}", p.name),
        })
        .collect();
    let idents = unique_idents(names.iter().map(String::as_str));
    for (p, (raw, ident)) in ports.iter().zip(&idents) {
        out.push('\n');
        if ident != raw {
            writeln!(out, "    # port {} -> {ident}", py_str(&p.name)).unwrap();
        }
        match p.direction {
            Direction::Out => {
                writeln!(out, "    def {ident}(self, value):").unwrap();
                writeln!(out, "        \"\"\"Send `value`: {}.\"\"\"", p.ty).unwrap();
                writeln!(out, "        self._emit({}, value)", py_str(&p.name)).unwrap();
            }
            _ => {
                writeln!(out, "    def {ident}(self, value):").unwrap();
                writeln!(out, "        \"\"\"Handle `value`: {}.\"\"\"", p.ty).unwrap();
                writeln!(out, "        raise NotImplementedError({})", py_str(&format!("{name}.{}", p.name))).unwrap();
            }
        }
    }
    GeneratedFile::new(format!("stubs/{name}/{}.py", py_ident(name)), out, FileKind::StubInterface)
}

pub fn generate_component_stubs(pipeline: &PipelineGraph, backend: &str) -> Vec<GeneratedFile> {
    pipeline
        .instances
        .iter()
        .filter_map(|i| match &i.kind {
            InstanceKind::Stub { ports } => Some(stub_file(&i.name, ports, backend)),
            _ => None,
        })
        .collect()
}
