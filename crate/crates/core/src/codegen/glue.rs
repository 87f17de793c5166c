//! Runtime glue per thing: message codecs, port table, transition table
//! and bridge call sites for ML actions.

use std::fmt::Write as _;

use super::python::{py_expr, py_str, Scope};
use super::{header, FileKind, GeneratedFile};
use crate::model::{Action, ThingDef, TypeRef};

fn types_for<'a>(thing: &'a ThingDef, params: &'a [(String, TypeRef)]) -> impl Fn(&str) -> Option<TypeRef> + 'a {
    move |name: &str| {
        params
            .iter()
            .find(|(p, _)| p == name)
            .map(|(_, t)| t.clone())
            .or_else(|| thing.property(name).map(|p| p.ty.clone()))
    }
}

fn trigger_params(thing: &ThingDef, tr: &crate::model::Transition) -> Vec<(String, TypeRef)> {
    let Some(t) = &tr.trigger else { return Vec::new() };
    let Some(msg) = thing.message(&t.message) else { return Vec::new() };
    t.params.iter().zip(&msg.params).map(|(n, p)| (n.clone(), p.ty.clone())).collect()
}

fn action_line(a: &Action, scope: &Scope) -> String {
    let args = |xs: &[crate::model::Expr]| xs.iter().map(|x| py_expr(x, scope)).collect::<Vec<_>>();
    match a {
        Action::Send { port, message, args: xs, .. } => {
            let v = args(xs);
            let tuple = if v.len() == 1 { format!("({},)", v[0]) } else { format!("({})", v.join(", ")) };
            format!("ctx.send({}, {}, {tuple})", py_str(port), py_str(message))
        }
        Action::Assign { property, value, .. } => format!("p[{}] = {}", py_str(property), py_expr(value, scope)),
        Action::DaPreprocess { .. } => "ctx.bridge(\"PREPROCESS\", {\"unit\": THING})".into(),
        Action::DaTrain { .. } => "ctx.bridge(\"TRAIN\", {\"unit\": THING})".into(),
        Action::DaPredict { features, result, .. } => format!(
            "p[{}] = ctx.bridge(\"PREDICT\", {{\"unit\": THING, \"input\": [{}]}})[\"output\"]",
            py_str(result),
            args(features).join(", ")
        ),
    }
}

pub fn generate_thing_glue(thing: &ThingDef, backend: &str) -> GeneratedFile {
    let mut out = header("#", backend);
    writeln!(out, "\"\"\"Runtime glue for thing `{}`.\"\"\"\n", thing.name).unwrap();
    out.push_str("from mlcforge_runtime import glue\n\n");
    writeln!(out, "THING = {}\n", py_str(&thing.name)).unwrap();

    out.push_str("# message codecs: name -> ((param, type), ...)\nMESSAGES = {\n");
    for m in &thing.messages {
        let params: Vec<String> =
            m.params.iter().map(|p| format!("({}, {})", py_str(&p.name), py_str(&p.ty.to_string()))).collect();
        let tuple = match params.len() {
            0 => "()".to_string(),
            1 => format!("({},)", params[0]),
            _ => format!("({})", params.join(", ")),
        };
        writeln!(out, "    {}: {tuple},", py_str(&m.name)).unwrap();
    }
    out.push_str("}\n\nPORTS = {\n");
    for p in &thing.ports {
        let msgs: Vec<String> = p.messages.iter().map(|m| py_str(m)).collect();
        let tuple = if msgs.len() == 1 { format!("({},)", msgs[0]) } else { format!("({})", msgs.join(", ")) };
        writeln!(out, "    {}: ({}, {tuple}),", py_str(&p.name), py_str(p.direction.as_str())).unwrap();
    }
    out.push_str("}\n\nPROPERTIES = {\n");
    let no_types = |_: &str| None;
    let empty_scope = Scope { params: &[], types: &no_types };
    for p in &thing.properties {
        let init = p.init.as_ref().map_or("None".to_string(), |e| py_expr(e, &empty_scope));
        writeln!(out, "    {}: {init},", py_str(&p.name)).unwrap();
    }
    out.push_str("}\n\n");
    let sc = &thing.statechart;
    writeln!(out, "INITIAL = {}", sc.initial.as_deref().map_or("None".into(), py_str)).unwrap();
    let states: Vec<String> = sc.states.iter().map(|s| py_str(&s.name)).collect();
    let states = if states.len() == 1 { format!("({},)", states[0]) } else { format!("({})", states.join(", ")) };
    writeln!(out, "STATES = {states}\n").unwrap();

    let mut rows = Vec::new();
    for (i, (state, tr)) in sc.transitions().enumerate() {
        let params = trigger_params(thing, tr);
        let names: Vec<String> = params.iter().map(|(n, _)| n.clone()).collect();
        let types = types_for(thing, &params);
        let scope = Scope { params: &names, types: &types };
        let guard = match &tr.guard {
            Some(g) => {
                writeln!(out, "\ndef guard_{i}(m, p):\n    return {}\n", py_expr(g, &scope)).unwrap();
                format!("guard_{i}")
            }
            None => "None".into(),
        };
        let actions = if tr.actions.is_empty() {
            "None".to_string()
        } else {
            writeln!(out, "\ndef actions_{i}(ctx, m, p):").unwrap();
            for a in &tr.actions {
                writeln!(out, "    {}", action_line(a, &scope)).unwrap();
            }
            out.push('\n');
            format!("actions_{i}")
        };
        let trigger = match &tr.trigger {
            None => "None".to_string(),
            Some(t) => {
                let ps: Vec<String> = t.params.iter().map(|p| py_str(p)).collect();
                let ps = if ps.len() == 1 { format!("({},)", ps[0]) } else { format!("({})", ps.join(", ")) };
                format!("({}, {}, {ps})", py_str(&t.port), py_str(&t.message))
            }
        };
        let target = tr.target.as_deref().map_or("None".into(), py_str);
        rows.push(format!("    ({}, {trigger}, {guard}, {actions}, {target}),", py_str(&state.name)));
    }
    out.push_str("\n# state, trigger (port, message, params), guard, actions, target\nTRANSITIONS = (\n");
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out.push_str(")\n");
    GeneratedFile::new(format!("runtime/{}/glue.py", thing.name), out, FileKind::RuntimeGlue)
}
