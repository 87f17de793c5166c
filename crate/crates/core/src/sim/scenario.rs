//! `.scn` scenario files, in the same key-value syntax as `.tcl`:
//!
//! ```text
//! seed: 7
//! samples: "data/samples.csv"
//! predictors {
//!     DAML_server { oracle { digit_2: 2 digit_3: 3 } }
//!     ops { trained: latest }
//! }
//! events: (
//!     { at: 0 to: "camera.lens" message: snap args: (0, "digit_2") },
//! )
//! expect: (
//!     { eventually: { kind: sent thing: "device" message: result args: (5) } },
//! )
//! ```

use std::collections::BTreeMap;

use super::assert::{Assertion, EventPattern};
use super::value::SimValue;
use crate::diag::{Diagnostic, Span};
use crate::model::{ConfigTree, Value};
use crate::syntax::parse_config;

pub const DEFAULT_STEP_LIMIT: u64 = 100_000;
pub const DEFAULT_LATENCY: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct InjectedEvent {
    pub at: u64,
    pub instance: String,
    pub port: String,
    pub message: String,
    pub args: Vec<SimValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorBinding {
    /// Sample id to output vector.
    Oracle(BTreeMap<String, OracleOutput>),
    /// Weights from the store (`None`: latest build) or a given archive.
    Trained(Option<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutput {
    /// One-hot over the unit's outputs.
    Class(usize),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub step_limit: u64,
    pub latency: u64,
    /// Keyed by the sending endpoint `instance.port`.
    pub connector_latency: BTreeMap<String, u64>,
    /// CSV with `id` and feature columns, used to turn sample ids into
    /// inputs for trained models.
    pub samples: Option<String>,
    /// Keyed by trainable unit name.
    pub predictors: BTreeMap<String, PredictorBinding>,
    pub events: Vec<InjectedEvent>,
    pub expect: Vec<Assertion>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: String::new(),
            seed: 0,
            step_limit: DEFAULT_STEP_LIMIT,
            latency: DEFAULT_LATENCY,
            connector_latency: BTreeMap::new(),
            samples: None,
            predictors: BTreeMap::new(),
            events: Vec::new(),
            expect: Vec::new(),
        }
    }
}

struct Reader<'a> {
    file: &'a str,
    diags: Vec<Diagnostic>,
}

impl Reader<'_> {
    fn err(&mut self, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error("E-SCENARIO", msg, Span::file_start(self.file.into())));
    }

    fn uint(&mut self, t: &ConfigTree, key: &str, default: u64) -> u64 {
        match t.get(key) {
            None => default,
            Some(v) => match v.as_i64().and_then(|i| u64::try_from(i).ok()) {
                Some(n) => n,
                None => {
                    self.err(format!("`{key}` must be a non-negative integer"));
                    default
                }
            },
        }
    }

    fn endpoint(&mut self, s: &str) -> Option<(String, String)> {
        match s.split_once('.') {
            Some((i, p)) if !i.is_empty() && !p.is_empty() => Some((i.into(), p.into())),
            _ => {
                self.err(format!("`{s}` is not an `instance.port` endpoint"));
                None
            }
        }
    }

    fn event(&mut self, i: usize, v: &Value) -> Option<InjectedEvent> {
        let Some(t) = v.as_tree() else {
            self.err(format!("event {} must be a block", i + 1));
            return None;
        };
        let at = self.uint(t, "at", 0);
        let (instance, port) = match t.str_at("to") {
            Some(s) => self.endpoint(s)?,
            None => {
                self.err(format!("event {} has no `to`", i + 1));
                return None;
            }
        };
        let Some(message) = t.str_at("message").map(str::to_string) else {
            self.err(format!("event {} has no `message`", i + 1));
            return None;
        };
        let args = match t.get("args") {
            None => Vec::new(),
            Some(Value::List(xs)) => {
                let vals: Option<Vec<SimValue>> = xs.iter().map(SimValue::from_value).collect();
                let Some(vals) = vals else {
                    self.err(format!("event {} has an argument that is not a literal", i + 1));
                    return None;
                };
                vals
            }
            Some(_) => {
                self.err(format!("event {}: `args` must be a list", i + 1));
                return None;
            }
        };
        Some(InjectedEvent { at, instance, port, message, args })
    }

    fn binding(&mut self, unit: &str, v: &Value) -> Option<PredictorBinding> {
        let t = v.as_tree()?;
        if let Some(o) = t.tree_at("oracle") {
            let mut map = BTreeMap::new();
            for (id, out) in o.iter() {
                let out = match out {
                    Value::Int(k) if *k >= 0 => OracleOutput::Class(*k as usize),
                    Value::List(xs) => match xs.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>() {
                        Some(v) => OracleOutput::Vector(v),
                        None => {
                            self.err(format!("oracle entry `{id}` of `{unit}` is not numeric"));
                            continue;
                        }
                    },
                    _ => {
                        self.err(format!("oracle entry `{id}` of `{unit}` must be a class index or a vector"));
                        continue;
                    }
                };
                map.insert(id.to_string(), out);
            }
            return Some(PredictorBinding::Oracle(map));
        }
        match t.get("trained") {
            Some(Value::Token(l)) if l == "latest" => Some(PredictorBinding::Trained(None)),
            Some(Value::Str(p)) => Some(PredictorBinding::Trained(Some(p.clone()))),
            _ => {
                self.err(format!("predictor `{unit}` needs `oracle {{ ... }}` or `trained: latest|\"path\"`"));
                None
            }
        }
    }

    fn pattern(&mut self, v: &Value) -> Option<EventPattern> {
        match v.as_tree().map(EventPattern::from_tree) {
            Some(Ok(p)) => Some(p),
            Some(Err(e)) => {
                self.err(e);
                None
            }
            None => {
                self.err("an event pattern must be a block");
                None
            }
        }
    }

    fn pair(&mut self, form: &str, v: &Value) -> Option<(EventPattern, EventPattern)> {
        match v.as_list() {
            Some([a, b]) => Some((self.pattern(a)?, self.pattern(b)?)),
            _ => {
                self.err(format!("`{form}` takes two patterns"));
                None
            }
        }
    }

    fn assertion(&mut self, v: &Value) -> Option<Assertion> {
        let t = v.as_tree()?;
        let (form, arg) = t.iter().next()?;
        Some(match form {
            "eventually" => Assertion::Eventually(self.pattern(arg)?),
            "never" => Assertion::Never(self.pattern(arg)?),
            "order" => {
                let (a, b) = self.pair(form, arg)?;
                Assertion::Order(a, b)
            }
            "followed_by" => {
                let (a, b) = self.pair(form, arg)?;
                Assertion::FollowedBy(a, b)
            }
            other => {
                self.err(format!("unknown assertion `{other}`"));
                return None;
            }
        })
    }
}

pub fn parse_scenario(text: &str, file: &str) -> (Option<Scenario>, Vec<Diagnostic>) {
    let (tree, mut diags) = parse_config(text, file);
    let Some(t) = tree else { return (None, diags) };
    let mut r = Reader { file, diags: Vec::new() };
    let name = std::path::Path::new(file).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut sc = Scenario { name, ..Scenario::default() };
    const KEYS: &[&str] = &["seed", "step_limit", "latency", "connector_latency", "samples", "predictors", "events", "expect"];
    for k in t.keys() {
        if !KEYS.contains(&k) {
            r.err(format!("unknown scenario key `{k}`"));
        }
    }
    sc.seed = r.uint(&t, "seed", 0);
    sc.step_limit = r.uint(&t, "step_limit", DEFAULT_STEP_LIMIT);
    sc.latency = r.uint(&t, "latency", DEFAULT_LATENCY);
    sc.samples = t.str_at("samples").map(str::to_string);
    for item in t.get("connector_latency").and_then(Value::as_list).unwrap_or(&[]) {
        match item.as_list() {
            Some([Value::Str(ep), Value::Int(n)]) if *n >= 0 => {
                if r.endpoint(ep).is_some() {
                    sc.connector_latency.insert(ep.clone(), *n as u64);
                }
            }
            _ => r.err("`connector_latency` entries are (\"instance.port\", ticks)"),
        }
    }
    if let Some(p) = t.tree_at("predictors") {
        for (unit, v) in p.iter() {
            if let Some(b) = r.binding(unit, v) {
                sc.predictors.insert(unit.to_string(), b);
            }
        }
    }
    match t.get("events") {
        None => {}
        Some(Value::List(xs)) => {
            for (i, v) in xs.iter().enumerate() {
                if let Some(e) = r.event(i, v) {
                    sc.events.push(e);
                }
            }
        }
        Some(_) => r.err("`events` must be a list of blocks"),
    }
    if sc.events.windows(2).any(|w| w[1].at < w[0].at) {
        r.err("event times must be non-decreasing");
    }
    for v in t.get("expect").and_then(Value::as_list).unwrap_or(&[]) {
        match r.assertion(v) {
            Some(a) => sc.expect.push(a),
            None if r.diags.is_empty() => r.err("an expectation is `{ form: ... }`"),
            None => {}
        }
    }
    diags.append(&mut r.diags);
    let ok = !diags.iter().any(Diagnostic::is_error);
    (ok.then_some(sc), diags)
}
