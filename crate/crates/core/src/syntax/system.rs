//! Parser for system composition files (`.scl`): things and pipelines.
//!
//! ```text
//! thing DamlServer {
//!     message image(px: Q(0:255)^{8,8})
//!     message result(digit: Int)
//!     port image_recognition_service: in { image }
//!     port reply: out { result }
//!     property digit: Int = 0
//!     ml digits {
//!         features "pixel_*"
//!         labels ON label
//!         dataset "data/digits.csv"
//!         model_algorithm mlp_classifier { hidden_layer_sizes: (128) }
//!     }
//!     statechart init ready {
//!         state ready {
//!             on image_recognition_service?image(px) / da_predict(px -> digit); reply!result(digit)
//!         }
//!     }
//! }
//!
//! pipeline Service {
//!     instance server: DamlServer
//!     connect camera.feed -> server.image_recognition_service
//! }
//! ```

use super::lexer::Tok;
use super::parser::{Fail, PResult, Parser};
use crate::diag::{has_errors, Diagnostic, Span};
use crate::model::{
    Action, ConfigTree, Connector, Direction, Endpoint, Instance, InstanceKind, LabelsMode, MessageDef, MlBlock,
    Param, PipelineGraph, PortDef, Property, State, StateMachine, StubPort, ThingDef, TrainingBinding, Transition,
    Trigger,
};

const TOP_LEVEL: &[&str] = &["thing", "pipeline"];
const ML_KEYS: &[&str] =
    &["features", "labels", "dataset", "model_algorithm", "backend", "prediction_results", "training_results"];

/// Things and pipelines declared in one `.scl` file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SystemFile {
    pub things: Vec<ThingDef>,
    pub pipelines: Vec<PipelineGraph>,
}

pub fn parse_system(text: &str, file: &str) -> (SystemFile, Vec<Diagnostic>) {
    let mut p = Parser::new(text, file);
    let mut out = SystemFile::default();
    if p.at_eof() {
        p.error_here("expected `thing` or `pipeline`");
    }
    while !p.at_eof() {
        let before = p.diags.len();
        let clean = |p: &Parser| !has_errors(&p.diags[before..]);
        if p.at_kw("thing") {
            match thing(&mut p) {
                Ok(t) if clean(&p) => out.things.push(t),
                Ok(_) => {}
                Err(Fail) => p.recover(TOP_LEVEL),
            }
        } else if p.at_kw("pipeline") {
            match pipeline(&mut p) {
                Ok(g) if clean(&p) => out.pipelines.push(g),
                Ok(_) => {}
                Err(Fail) => p.recover(TOP_LEVEL),
            }
        } else {
            let found = p.peek().describe();
            p.error_here(format!("expected `thing` or `pipeline`, found {found}"));
            p.bump();
            p.recover(TOP_LEVEL);
        }
    }
    (out, p.finish())
}

fn thing(p: &mut Parser) -> PResult<ThingDef> {
    let start = p.expect_kw("thing")?;
    let (name, _) = p.ident("thing name")?;
    p.expect("{")?;
    let mut messages: Vec<MessageDef> = Vec::new();
    let mut ports: Vec<PortDef> = Vec::new();
    let mut properties: Vec<Property> = Vec::new();
    let mut ml: Option<MlBlock> = None;
    let mut chart: Option<StateMachine> = None;

    fn dup(p: &mut Parser, what: &str, name: &str, span: &Span, prev: &Span) {
        p.diags.push(
            Diagnostic::error("E-DUPLICATE-NAME", format!("duplicate {what} `{name}`"), span.clone())
                .with_related(prev.clone()),
        );
    }

    while !p.at("}") {
        if p.at_eof() {
            return Err(p.error_here(format!("expected `}}` to close thing `{name}`")));
        }
        if p.eat_kw("message") {
            let (mname, mspan) = p.ident("message name")?;
            p.expect("(")?;
            let mut params: Vec<Param> = Vec::new();
            if !p.at(")") {
                loop {
                    let (pname, pspan) = p.ident("parameter name")?;
                    p.expect(":")?;
                    let ty = p.type_ref()?;
                    if let Some(prev) = params.iter().find(|x| x.name == pname) {
                        let prev = prev.span.clone();
                        dup(p, "parameter", &pname, &pspan, &prev);
                    }
                    params.push(Param { name: pname, ty, span: pspan });
                    if !p.eat(",") {
                        break;
                    }
                }
            }
            p.expect(")")?;
            p.eat(";");
            if let Some(prev) = messages.iter().find(|m| m.name == mname) {
                let prev = prev.span.clone();
                dup(p, "message", &mname, &mspan, &prev);
            }
            messages.push(MessageDef { name: mname, params, span: mspan });
        } else if p.eat_kw("port") {
            let (pname, pspan) = p.ident("port name")?;
            p.expect(":")?;
            let dspan = p.span();
            let direction = match p.ident("`in`, `out` or `inout`")?.0.as_str() {
                "in" => Direction::In,
                "out" => Direction::Out,
                "inout" => Direction::InOut,
                other => {
                    p.error_at("E-SYNTAX", format!("expected `in`, `out` or `inout`, found `{other}`"), dspan);
                    return Err(Fail);
                }
            };
            p.expect("{")?;
            let mut msgs = Vec::new();
            if !p.at("}") {
                msgs.push(p.ident("message name")?.0);
                while p.eat(",") {
                    msgs.push(p.ident("message name")?.0);
                }
            }
            p.expect("}")?;
            p.eat(";");
            if let Some(prev) = ports.iter().find(|x| x.name == pname) {
                let prev = prev.span.clone();
                dup(p, "port", &pname, &pspan, &prev);
            }
            ports.push(PortDef { name: pname, direction, messages: msgs, span: pspan });
        } else if p.eat_kw("property") {
            let (pname, pspan) = p.ident("property name")?;
            p.expect(":")?;
            let ty = p.type_ref()?;
            let init = if p.eat("=") { Some(p.expr()?) } else { None };
            p.eat(";");
            if let Some(prev) = properties.iter().find(|x| x.name == pname) {
                let prev = prev.span.clone();
                dup(p, "property", &pname, &pspan, &prev);
            }
            properties.push(Property { name: pname, ty, init, span: pspan });
        } else if p.at_kw("ml") {
            let block = ml_block(p)?;
            if let Some(prev) = &ml {
                let prev = prev.span.clone();
                p.diags.push(
                    Diagnostic::error("E-SYNTAX", format!("thing `{name}` declares more than one ML block"), block.span.clone())
                        .with_related(prev),
                );
            }
            ml = Some(block);
        } else if p.at_kw("statechart") {
            let sc = statechart(p)?;
            if chart.is_some() {
                p.error_at("E-SYNTAX", format!("thing `{name}` declares more than one statechart"), sc.span.clone());
            }
            chart = Some(sc);
        } else {
            let found = p.peek().describe();
            return Err(p.error_here(format!(
                "expected `message`, `port`, `property`, `ml`, `statechart` or `}}`, found {found}"
            )));
        }
    }
    let end = p.expect("}")?;
    let span = start.to(&end);
    let Some(statechart) = chart else {
        p.error_at("E-NO-STATECHART", format!("thing `{name}` must declare a statechart"), span);
        return Err(Fail);
    };
    Ok(ThingDef { name, messages, ports, properties, ml, statechart, span })
}

fn ml_block(p: &mut Parser) -> PResult<MlBlock> {
    let start = p.expect_kw("ml")?;
    let name = match p.peek() {
        Tok::Ident(_) => Some(p.ident("ML block name")?.0),
        _ => None,
    };
    p.expect("{")?;
    let mut features = Vec::new();
    let mut labels = None;
    let mut label_name = None;
    let mut dataset = None;
    let mut algorithm = None;
    let mut hyperparameters = ConfigTree::new();
    let mut backend = None;
    let mut prediction_results = None;
    let mut training_results = None;
    let mut seen: Vec<String> = Vec::new();
    while !p.at("}") {
        if p.at_eof() {
            return Err(p.error_here("expected `}` to close ML block"));
        }
        let (key, kspan) = p.ident("ML block key")?;
        if seen.contains(&key) {
            p.error_at("E-DUPLICATE-KEY", format!("duplicate ML block key `{key}`"), kspan.clone());
        }
        seen.push(key.clone());
        match key.as_str() {
            "features" => loop {
                match p.peek().clone() {
                    Tok::Ident(s) | Tok::Str(s) => {
                        p.bump();
                        features.push(s);
                    }
                    _ => {
                        let found = p.peek().describe();
                        return Err(p.error_here(format!("expected feature name, found {found}")));
                    }
                }
                if !p.eat(",") {
                    break;
                }
            },
            "labels" => {
                let (mode, mspan) = p.ident("`ON`, `OFF` or `SEMI`")?;
                let mode = match mode.as_str() {
                    "ON" => LabelsMode::On,
                    "OFF" => LabelsMode::Off,
                    "SEMI" => LabelsMode::Semi,
                    other => {
                        p.error_at("E-SYNTAX", format!("expected `ON`, `OFF` or `SEMI`, found `{other}`"), mspan);
                        return Err(Fail);
                    }
                };
                if mode != LabelsMode::Off {
                    match p.peek().clone() {
                        Tok::Ident(s) if !ML_KEYS.contains(&s.as_str()) => {
                            p.bump();
                            label_name = Some(s);
                        }
                        Tok::Str(s) => {
                            p.bump();
                            label_name = Some(s);
                        }
                        _ => {}
                    }
                }
                labels = Some(mode);
            }
            "dataset" => dataset = Some(p.string("dataset path")?.0),
            "model_algorithm" => {
                algorithm = Some(p.ident("algorithm name")?.0);
                if p.eat("{") {
                    hyperparameters = p.config_entries(true)?;
                    p.expect("}")?;
                }
            }
            "backend" => backend = Some(p.string("backend id")?.0),
            "prediction_results" => prediction_results = Some(p.string("path")?.0),
            "training_results" => training_results = Some(p.string("path")?.0),
            other => {
                let mut d = Diagnostic::error("E-SYNTAX", format!("unknown ML block key `{other}`"), kspan);
                if let Some(s) = crate::model::schema::nearest_key(other, ML_KEYS.iter().copied()) {
                    d = d.with_hint(format!("did you mean `{s}`?"));
                }
                p.diags.push(d);
                return Err(Fail);
            }
        }
        p.eat(";");
    }
    let end = p.expect("}")?;
    let span = start.to(&end);
    let mut missing = |what: &str| {
        p.error_at("E-ML-BLOCK", format!("ML block is missing `{what}`"), span.clone());
    };
    let labels = labels.unwrap_or_else(|| {
        missing("labels");
        LabelsMode::Off
    });
    let dataset = dataset.unwrap_or_else(|| {
        missing("dataset");
        String::new()
    });
    let algorithm = algorithm.unwrap_or_else(|| {
        missing("model_algorithm");
        String::new()
    });
    let block = MlBlock {
        name,
        features,
        labels,
        label_name,
        dataset,
        algorithm,
        hyperparameters,
        backend: backend.unwrap_or_else(|| crate::model::system::DEFAULT_BACKEND.to_string()),
        prediction_results,
        training_results,
        span: span.clone(),
    };
    if let Err(msg) = block.check() {
        p.error_at("E-ML-BLOCK", msg, span);
    }
    Ok(block)
}

fn statechart(p: &mut Parser) -> PResult<StateMachine> {
    let start = p.expect_kw("statechart")?;
    let initial = if p.eat_kw("init") { Some(p.ident("initial state name")?.0) } else { None };
    p.expect("{")?;
    let mut states: Vec<State> = Vec::new();
    while !p.at("}") {
        if p.at_eof() {
            return Err(p.error_here("expected `}` to close statechart"));
        }
        p.expect_kw("state")?;
        let (sname, sspan) = p.ident("state name")?;
        p.expect("{")?;
        let mut transitions = Vec::new();
        while !p.at("}") {
            if p.at_eof() {
                return Err(p.error_here(format!("expected `}}` to close state `{sname}`")));
            }
            transitions.push(transition(p)?);
        }
        p.expect("}")?;
        if let Some(prev) = states.iter().find(|s| s.name == sname) {
            p.diags.push(
                Diagnostic::error("E-DUPLICATE-STATE", format!("duplicate state `{sname}`"), sspan.clone())
                    .with_related(prev.span.clone()),
            );
        }
        states.push(State { name: sname, transitions, span: sspan });
    }
    let end = p.expect("}")?;
    Ok(StateMachine { initial, states, span: start.to(&end) })
}

fn transition(p: &mut Parser) -> PResult<Transition> {
    let start = p.expect_kw("on")?;
    let trigger = if matches!(p.peek(), Tok::Ident(_)) && matches!(p.peek_nth(1), Tok::Punct("?")) {
        let (port, pspan) = p.ident("port name")?;
        p.expect("?")?;
        let (message, _) = p.ident("message name")?;
        let mut params = Vec::new();
        if p.eat("(") {
            if !p.at(")") {
                params.push(p.ident("parameter name")?.0);
                while p.eat(",") {
                    params.push(p.ident("parameter name")?.0);
                }
            }
            p.expect(")")?;
        }
        Some(Trigger { port, message, params, span: pspan.to(&p.prev_span()) })
    } else {
        None
    };
    let guard = if p.eat("[") {
        let g = p.expr()?;
        p.expect("]")?;
        Some(g)
    } else {
        None
    };
    let mut actions = Vec::new();
    if p.eat("/") {
        loop {
            actions.push(action(p)?);
            if p.eat(";") {
                if p.at_kw("on") || p.at("}") || p.at("->") {
                    break;
                }
                continue;
            }
            break;
        }
    }
    let target = if p.eat("->") { Some(p.ident("target state")?.0) } else { None };
    p.eat(";");
    Ok(Transition { trigger, guard, actions, target, span: start.to(&p.prev_span()) })
}

fn action(p: &mut Parser) -> PResult<Action> {
    let start = p.span();
    let (name, _) = p.ident("action")?;
    match name.as_str() {
        "da_preprocess" | "da_train" => {
            if p.eat("(") {
                p.expect(")")?;
            }
            let span = start.to(&p.prev_span());
            Ok(if name == "da_train" { Action::DaTrain { span } } else { Action::DaPreprocess { span } })
        }
        "da_predict" => {
            p.expect("(")?;
            let mut features = vec![p.expr()?];
            while p.eat(",") {
                features.push(p.expr()?);
            }
            p.expect("->")?;
            let (result, _) = p.ident("result property")?;
            p.expect(")")?;
            Ok(Action::DaPredict { features, result, span: start.to(&p.prev_span()) })
        }
        _ if p.eat("!") => {
            let (message, _) = p.ident("message name")?;
            let mut args = Vec::new();
            if p.eat("(") {
                if !p.at(")") {
                    args.push(p.expr()?);
                    while p.eat(",") {
                        args.push(p.expr()?);
                    }
                }
                p.expect(")")?;
            }
            Ok(Action::Send { port: name, message, args, span: start.to(&p.prev_span()) })
        }
        _ if p.eat("=") => {
            let value = p.expr()?;
            Ok(Action::Assign { property: name, value, span: start.to(&p.prev_span()) })
        }
        _ => {
            let found = p.peek().describe();
            Err(p.error_here(format!("expected `!` or `=` after `{name}`, found {found}")))
        }
    }
}

fn endpoint(p: &mut Parser) -> PResult<Endpoint> {
    let (instance, _) = p.ident("instance name")?;
    p.expect(".")?;
    let (port, _) = p.ident("port name")?;
    Ok(Endpoint { instance, port })
}

fn pipeline(p: &mut Parser) -> PResult<PipelineGraph> {
    let start = p.expect_kw("pipeline")?;
    let (name, _) = p.ident("pipeline name")?;
    p.expect("{")?;
    let mut instances: Vec<Instance> = Vec::new();
    let mut connectors = Vec::new();
    while !p.at("}") {
        if p.at_eof() {
            return Err(p.error_here(format!("expected `}}` to close pipeline `{name}`")));
        }
        let item_start = p.span();
        if p.eat_kw("instance") {
            let (iname, ispan) = p.ident("instance name")?;
            p.expect(":")?;
            let (type_name, _) = p.ident("component type")?;
            let mut bindings: Vec<(String, i64)> = Vec::new();
            if p.eat("<") {
                loop {
                    let (g, _) = p.ident("generic name")?;
                    p.expect("=")?;
                    let neg = p.eat("-");
                    let v = match *p.peek() {
                        Tok::Int(v) => v,
                        _ => {
                            let found = p.peek().describe();
                            return Err(p.error_here(format!("expected integer, found {found}")));
                        }
                    };
                    p.bump();
                    bindings.push((g, if neg { -v } else { v }));
                    if !p.eat(",") {
                        break;
                    }
                }
                p.expect(">")?;
            }
            let training = if p.at_kw("train") {
                let tspan = p.bump().span;
                let (config, _) = p.ident("training configuration name")?;
                p.expect_kw("on")?;
                let (dataset, _) = p.string("dataset path")?;
                let label = if p.eat_kw("label") { p.string("label column")?.0 } else { "label".to_string() };
                Some(TrainingBinding { config, dataset, label, span: tspan.to(&p.prev_span()) })
            } else {
                None
            };
            p.eat(";");
            push_instance(
                p,
                &mut instances,
                Instance { name: iname, kind: InstanceKind::Component { type_name, bindings, training }, span: ispan },
            );
        } else if p.eat_kw("stub") {
            let (sname, sspan) = p.ident("stub name")?;
            p.expect("{")?;
            let mut ports: Vec<StubPort> = Vec::new();
            while !p.at("}") {
                let dspan = p.span();
                let direction = match p.ident("`in` or `out`")?.0.as_str() {
                    "in" => Direction::In,
                    "out" => Direction::Out,
                    other => {
                        p.error_at("E-SYNTAX", format!("expected `in` or `out`, found `{other}`"), dspan);
                        return Err(Fail);
                    }
                };
                let (pname, pspan) = p.ident("port name")?;
                p.expect(":")?;
                let ty = p.tensor_type()?;
                if ports.iter().any(|x| x.name == pname) {
                    p.error_at("E-DUPLICATE-NAME", format!("duplicate port `{pname}`"), pspan.clone());
                }
                ports.push(StubPort { name: pname, direction, ty, span: pspan });
                while p.eat(";") || p.eat(",") {}
            }
            p.expect("}")?;
            push_instance(p, &mut instances, Instance { name: sname, kind: InstanceKind::Stub { ports }, span: sspan });
        } else if p.eat_kw("connect") {
            let from = endpoint(p)?;
            p.expect("->")?;
            let to = endpoint(p)?;
            p.eat(";");
            connectors.push(Connector { from, to, span: item_start.to(&p.prev_span()) });
        } else {
            let found = p.peek().describe();
            return Err(p.error_here(format!("expected `instance`, `stub`, `connect` or `}}`, found {found}")));
        }
    }
    let end = p.expect("}")?;
    Ok(PipelineGraph { name, instances, connectors, span: start.to(&end) })
}

fn push_instance(p: &mut Parser, instances: &mut Vec<Instance>, inst: Instance) {
    if let Some(prev) = instances.iter().find(|i| i.name == inst.name) {
        p.diags.push(
            Diagnostic::error("E-DUPLICATE-NAME", format!("duplicate instance `{}`", inst.name), inst.span.clone())
                .with_related(prev.span.clone()),
        );
    }
    instances.push(inst);
}
