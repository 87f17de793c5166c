//! Canonical source form for every AST. Parsing a printed tree yields a
//! structurally equal tree.

use std::fmt::Write;

use super::quote;
use super::system::SystemFile;
use crate::model::{
    Action, BodyItem, ConfigDecl, ConfigTree, DefCall, Expr, ExprKind, InstanceKind, LabelsMode, MlBlock,
    NetworkArch, PipelineGraph, ThingDef, UnaryOp, Value, DEFAULT_CONFIG_SCHEMA,
};

const INDENT: &str = "    ";
const ML_KEYS: &[&str] =
    &["features", "labels", "dataset", "model_algorithm", "backend", "prediction_results", "training_results"];

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && s != "true"
        && s != "false"
}

fn name_or_string(s: &str) -> String {
    if is_ident(s) {
        s.to_string()
    } else {
        quote(s)
    }
}

fn real(v: f64) -> String {
    format!("{v:?}")
}

/// Single-line rendering of a value; blocks print as `{ k: v ... }`.
pub fn print_value(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Real(r) => real(*r),
        Value::Str(s) => quote(s),
        Value::Bool(b) => b.to_string(),
        Value::Token(t) => t.clone(),
        Value::List(items) => format!("({})", items.iter().map(print_value).collect::<Vec<_>>().join(", ")),
        Value::Tree(t) if t.is_empty() => "{ }".into(),
        Value::Tree(t) => {
            let inner: Vec<String> = t.iter().map(|(k, v)| format!("{k}: {}", print_value(v))).collect();
            format!("{{ {} }}", inner.join(" "))
        }
    }
}

fn config_lines(tree: &ConfigTree, depth: usize, out: &mut String) {
    let pad = INDENT.repeat(depth);
    for (k, v) in tree.iter() {
        match v {
            Value::Tree(t) if t.is_empty() => writeln!(out, "{pad}{k} {{ }}").unwrap(),
            Value::Tree(t) => {
                writeln!(out, "{pad}{k} {{").unwrap();
                config_lines(t, depth + 1, out);
                writeln!(out, "{pad}}}").unwrap();
            }
            other => writeln!(out, "{pad}{k}: {}", print_value(other)).unwrap(),
        }
    }
}

/// Multi-line `.tcl` document.
pub fn print_config(tree: &ConfigTree) -> String {
    let mut out = String::new();
    config_lines(tree, 0, &mut out);
    out
}

pub fn print_config_decl(decl: &ConfigDecl) -> String {
    let mut out = String::new();
    if decl.schema != DEFAULT_CONFIG_SCHEMA {
        writeln!(out, "schema: {}", name_or_string(&decl.schema)).unwrap();
    }
    out.push_str(&print_config(&decl.tree));
    out
}

fn expr_prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary(op, ..) => op.precedence(),
        ExprKind::Unary(..) => 7,
        _ => 8,
    }
}

pub fn print_expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Int(v) => v.to_string(),
        ExprKind::Real(v) => real(*v),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Str(s) => quote(s),
        ExprKind::Var(v) => v.clone(),
        ExprKind::Call(f, args) => format!("{f}({})", args.iter().map(print_expr).collect::<Vec<_>>().join(", ")),
        ExprKind::Unary(op, inner) => {
            let sym = match op {
                UnaryOp::Neg => "-",
                UnaryOp::Not => "!",
            };
            // `-3` would fold into a literal on reparse, and `--x` lexes oddly.
            let literal = matches!(inner.kind, ExprKind::Int(_) | ExprKind::Real(_));
            let s = print_expr(inner);
            if expr_prec(inner) < 7 || literal || s.starts_with('-') || s.starts_with('!') {
                format!("{sym}({s})")
            } else {
                format!("{sym}{s}")
            }
        }
        ExprKind::Binary(op, a, b) => {
            let p = op.precedence();
            let l = print_expr(a);
            let r = print_expr(b);
            let l = if expr_prec(a) < p { format!("({l})") } else { l };
            let r = if expr_prec(b) <= p { format!("({r})") } else { r };
            format!("{l} {} {r}", op.symbol())
        }
    }
}

fn def_call(c: &DefCall) -> String {
    let args: Vec<String> = c
        .args
        .iter()
        .map(|a| match &a.name {
            Some(n) => format!("{n}={}", a.value),
            None => a.value.to_string(),
        })
        .collect();
    format!("{}({})", c.name, args.join(", "))
}

fn body_item(item: &BodyItem) -> String {
    match item {
        BodyItem::Layer(l) => l.kind.to_string(),
        BodyItem::Call(c) => def_call(c),
    }
}

pub fn print_network(arch: &NetworkArch) -> String {
    let mut out = String::new();
    write!(out, "component {}", arch.name).unwrap();
    if !arch.generics.is_empty() {
        let g: Vec<&str> = arch.generics.iter().map(|g| g.name.as_str()).collect();
        write!(out, "<{}>", g.join(", ")).unwrap();
    }
    out.push_str(" {\n");
    let ports: Vec<String> = arch
        .inputs
        .iter()
        .map(|p| format!("in {}: {}", p.name, p.ty))
        .chain(arch.outputs.iter().map(|p| format!("out {}: {}", p.name, p.ty)))
        .collect();
    if !ports.is_empty() {
        writeln!(out, "{INDENT}ports").unwrap();
        let last = ports.len() - 1;
        for (i, p) in ports.iter().enumerate() {
            writeln!(out, "{INDENT}{INDENT}{p}{}", if i == last { ";" } else { "," }).unwrap();
        }
    }
    for d in &arch.defs {
        let body: Vec<String> = d.body.iter().map(body_item).collect();
        writeln!(out, "{INDENT}def {}({}) {{", d.name, d.params.join(", ")).unwrap();
        writeln!(out, "{INDENT}{INDENT}{}", body.join(" -> ")).unwrap();
        writeln!(out, "{INDENT}}}").unwrap();
    }
    let mut chain = vec![arch.body.source.clone()];
    chain.extend(arch.body.layers.iter().map(body_item));
    chain.push(arch.body.sink.clone());
    writeln!(out, "{INDENT}net {{").unwrap();
    writeln!(out, "{INDENT}{INDENT}{}", chain.join(" -> ")).unwrap();
    writeln!(out, "{INDENT}}}").unwrap();
    out.push_str("}\n");
    out
}

fn action(a: &Action) -> String {
    let list = |xs: &[Expr]| xs.iter().map(print_expr).collect::<Vec<_>>().join(", ");
    match a {
        Action::Send { port, message, args, .. } => format!("{port}!{message}({})", list(args)),
        Action::DaPreprocess { .. } => "da_preprocess".into(),
        Action::DaTrain { .. } => "da_train".into(),
        Action::DaPredict { features, result, .. } => format!("da_predict({} -> {result})", list(features)),
        Action::Assign { property, value, .. } => format!("{property} = {}", print_expr(value)),
    }
}

fn ml_block(ml: &MlBlock, out: &mut String) {
    let pad = INDENT.repeat(2);
    match &ml.name {
        Some(n) => writeln!(out, "{INDENT}ml {n} {{").unwrap(),
        None => writeln!(out, "{INDENT}ml {{").unwrap(),
    }
    let features: Vec<String> = ml
        .features
        .iter()
        .map(|f| if ML_KEYS.contains(&f.as_str()) { quote(f) } else { name_or_string(f) })
        .collect();
    writeln!(out, "{pad}features {}", features.join(", ")).unwrap();
    match (&ml.label_name, ml.labels) {
        (Some(l), m) if m != LabelsMode::Off => {
            let l = if ML_KEYS.contains(&l.as_str()) { quote(l) } else { name_or_string(l) };
            writeln!(out, "{pad}labels {} {l}", m.as_str()).unwrap()
        }
        (_, m) => writeln!(out, "{pad}labels {}", m.as_str()).unwrap(),
    }
    writeln!(out, "{pad}dataset {}", quote(&ml.dataset)).unwrap();
    if ml.hyperparameters.is_empty() {
        writeln!(out, "{pad}model_algorithm {}", ml.algorithm).unwrap();
    } else {
        writeln!(out, "{pad}model_algorithm {} {{", ml.algorithm).unwrap();
        config_lines(&ml.hyperparameters, 3, out);
        writeln!(out, "{pad}}}").unwrap();
    }
    writeln!(out, "{pad}backend {}", quote(&ml.backend)).unwrap();
    if let Some(p) = &ml.prediction_results {
        writeln!(out, "{pad}prediction_results {}", quote(p)).unwrap();
    }
    if let Some(p) = &ml.training_results {
        writeln!(out, "{pad}training_results {}", quote(p)).unwrap();
    }
    writeln!(out, "{INDENT}}}").unwrap();
}

pub fn print_thing(t: &ThingDef) -> String {
    let mut out = format!("thing {} {{\n", t.name);
    for m in &t.messages {
        let params: Vec<String> = m.params.iter().map(|p| format!("{}: {}", p.name, p.ty)).collect();
        writeln!(out, "{INDENT}message {}({})", m.name, params.join(", ")).unwrap();
    }
    for p in &t.ports {
        let msgs = if p.messages.is_empty() { "{ }".to_string() } else { format!("{{ {} }}", p.messages.join(", ")) };
        writeln!(out, "{INDENT}port {}: {} {msgs}", p.name, p.direction.as_str()).unwrap();
    }
    for p in &t.properties {
        match &p.init {
            Some(e) => writeln!(out, "{INDENT}property {}: {} = {}", p.name, p.ty, print_expr(e)).unwrap(),
            None => writeln!(out, "{INDENT}property {}: {}", p.name, p.ty).unwrap(),
        }
    }
    if let Some(ml) = &t.ml {
        ml_block(ml, &mut out);
    }
    let sc = &t.statechart;
    let head = match &sc.initial {
        Some(i) => format!("{INDENT}statechart init {i}"),
        None => format!("{INDENT}statechart"),
    };
    if sc.states.is_empty() {
        writeln!(out, "{head} {{ }}").unwrap();
    } else {
        writeln!(out, "{head} {{").unwrap();
        for s in &sc.states {
            if s.transitions.is_empty() {
                writeln!(out, "{INDENT}{INDENT}state {} {{ }}", s.name).unwrap();
                continue;
            }
            writeln!(out, "{INDENT}{INDENT}state {} {{", s.name).unwrap();
            for tr in &s.transitions {
                let mut line = String::from("on");
                if let Some(trig) = &tr.trigger {
                    write!(line, " {}?{}", trig.port, trig.message).unwrap();
                    if !trig.params.is_empty() {
                        write!(line, "({})", trig.params.join(", ")).unwrap();
                    }
                }
                if let Some(g) = &tr.guard {
                    write!(line, " [{}]", print_expr(g)).unwrap();
                }
                if !tr.actions.is_empty() {
                    let acts: Vec<String> = tr.actions.iter().map(action).collect();
                    write!(line, " / {}", acts.join("; ")).unwrap();
                }
                if let Some(target) = &tr.target {
                    write!(line, " -> {target}").unwrap();
                }
                writeln!(out, "{INDENT}{INDENT}{INDENT}{line}").unwrap();
            }
            writeln!(out, "{INDENT}{INDENT}}}").unwrap();
        }
        writeln!(out, "{INDENT}}}").unwrap();
    }
    out.push_str("}\n");
    out
}

pub fn print_pipeline(g: &PipelineGraph) -> String {
    let mut out = format!("pipeline {} {{\n", g.name);
    for inst in &g.instances {
        match &inst.kind {
            InstanceKind::Component { type_name, bindings, training } => {
                write!(out, "{INDENT}instance {}: {type_name}", inst.name).unwrap();
                if !bindings.is_empty() {
                    let b: Vec<String> = bindings.iter().map(|(k, v)| format!("{k} = {v}")).collect();
                    write!(out, "<{}>", b.join(", ")).unwrap();
                }
                if let Some(t) = training {
                    write!(out, " train {} on {} label {}", t.config, quote(&t.dataset), quote(&t.label)).unwrap();
                }
                out.push('\n');
            }
            InstanceKind::Stub { ports } => {
                let ps: Vec<String> =
                    ports.iter().map(|p| format!("{} {}: {}", p.direction.as_str(), p.name, p.ty)).collect();
                if ps.is_empty() {
                    writeln!(out, "{INDENT}stub {} {{ }}", inst.name).unwrap();
                } else {
                    writeln!(out, "{INDENT}stub {} {{ {}; }}", inst.name, ps.join("; ")).unwrap();
                }
            }
        }
    }
    for c in &g.connectors {
        writeln!(out, "{INDENT}connect {} -> {}", c.from, c.to).unwrap();
    }
    out.push_str("}\n");
    out
}

pub fn print_system(f: &SystemFile) -> String {
    let parts: Vec<String> = f.things.iter().map(print_thing).chain(f.pipelines.iter().map(print_pipeline)).collect();
    parts.join("\n")
}
