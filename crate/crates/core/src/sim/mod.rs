//! Deterministic discrete-event simulation of a pipeline: things run their
//! statecharts, network instances answer through bound predictors, stubs
//! only exchange messages with the scenario.

pub mod assert;
pub mod predictor;
pub mod scenario;
pub mod value;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::path::Path;

use thiserror::Error;

pub use assert::{assert_trace, trace_text, Assertion, AssertionResult, Detail, EventPattern, TraceEvent, TraceKind};
pub use predictor::{Cached, OracleStub, Predictor, TrainedModel};
pub use scenario::{parse_scenario, InjectedEvent, OracleOutput, PredictorBinding, Scenario};
pub use value::SimValue;

use crate::analysis::Analysis;
use crate::build::bridge::Launcher;
use crate::build::store::Store;
use crate::codegen::GEN_DIR;
use crate::model::{Action, Direction, Endpoint, InstanceKind, ModelUnit, PipelineGraph, ThingDef, Transition, TypeRef};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("step limit {limit} exceeded at trace position {seq} (time {time})")]
    StepLimitExceeded { limit: u64, seq: u64, time: u64 },
    #[error("no predictor bound for unit `{unit}` used by `{instance}`")]
    UnboundPredictor { unit: String, instance: String },
    #[error("bridge failure for `{unit}`: {message}")]
    BridgeFailure { unit: String, message: String },
    #[error("prediction for `{unit}` failed: {message}")]
    Prediction { unit: String, message: String },
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("{thing}: {message}")]
    Eval { thing: String, message: String },
}

/// Keyed by trainable unit name.
pub type Predictors = BTreeMap<String, Box<dyn Predictor>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub trace: Vec<TraceEvent>,
    pub outcome: Result<(), SimError>,
}

impl Run {
    pub fn trace_text(&self) -> String {
        trace_text(&self.trace)
    }

    pub fn check(&self, scenario: &Scenario) -> Vec<AssertionResult> {
        assert_trace(&self.trace, &scenario.expect)
    }

    pub fn passed(&self, scenario: &Scenario) -> bool {
        self.outcome.is_ok() && self.check(scenario).iter().all(|r| r.passed)
    }
}

struct ThingRt<'a> {
    def: &'a ThingDef,
    state: Option<String>,
    props: BTreeMap<String, SimValue>,
}

enum Node<'a> {
    Thing(ThingRt<'a>),
    Network { unit: String, inputs: Vec<String>, outputs: Vec<String> },
    Stub { ports: Vec<(String, Direction)> },
}

enum Item {
    Deliver { to: Endpoint, message: String, args: Vec<SimValue> },
    Inject(usize),
}

struct Sim<'a> {
    pipeline: &'a PipelineGraph,
    sc: &'a Scenario,
    nodes: BTreeMap<String, Node<'a>>,
    predictors: &'a mut Predictors,
    trace: Vec<TraceEvent>,
    queue: BinaryHeap<Reverse<(u64, u64, usize)>>,
    items: Vec<Item>,
    now: u64,
    steps: u64,
}

type Step = Result<(), SimError>;

fn empty() -> BTreeMap<String, SimValue> {
    BTreeMap::new()
}

impl<'a> Sim<'a> {
    fn new(unit: &'a ModelUnit, sc: &'a Scenario, predictors: &'a mut Predictors) -> Result<Self, SimError> {
        let pipeline = unit.pipeline().ok_or_else(|| SimError::Scenario("the project has no pipeline".into()))?;
        let mut nodes = BTreeMap::new();
        for inst in &pipeline.instances {
            let node = if let Some(def) = unit.instance_thing(&inst.kind) {
                let mut props = BTreeMap::new();
                for p in &def.properties {
                    let v = match &p.init {
                        Some(e) => value::eval(e, (&empty(), &props))
                            .map_err(|message| SimError::Eval { thing: inst.name.clone(), message })?,
                        None => SimValue::zero(&p.ty),
                    };
                    props.insert(p.name.clone(), v);
                }
                let uses_predict = def.statechart.transitions().any(|(_, t)| t.actions.iter().any(|a| matches!(a, Action::DaPredict { .. })));
                if uses_predict && !predictors.contains_key(&def.name) {
                    return Err(SimError::UnboundPredictor { unit: def.name.clone(), instance: inst.name.clone() });
                }
                Node::Thing(ThingRt { def, state: None, props })
            } else if let Some(net) = unit.instance_network(&inst.kind) {
                Node::Network {
                    unit: inst.name.clone(),
                    inputs: net.inputs.iter().map(|p| p.name.clone()).collect(),
                    outputs: net.outputs.iter().map(|p| p.name.clone()).collect(),
                }
            } else if let InstanceKind::Stub { ports } = &inst.kind {
                Node::Stub { ports: ports.iter().map(|p| (p.name.clone(), p.direction)).collect() }
            } else {
                return Err(SimError::Scenario(format!("instance `{}` has no known type", inst.name)));
            };
            nodes.insert(inst.name.clone(), node);
        }
        let mut sim = Sim {
            pipeline,
            sc,
            nodes,
            predictors,
            trace: Vec::new(),
            queue: BinaryHeap::new(),
            items: Vec::new(),
            now: 0,
            steps: 0,
        };
        for (i, ev) in sc.events.iter().enumerate() {
            if sim.port_direction(&ev.instance, &ev.port).is_none() {
                return Err(SimError::Scenario(format!("event {} targets unknown endpoint `{}.{}`", i + 1, ev.instance, ev.port)));
            }
            sim.push(ev.at, Item::Inject(i));
        }
        Ok(sim)
    }

    fn port_direction(&self, inst: &str, port: &str) -> Option<Direction> {
        match self.nodes.get(inst)? {
            Node::Thing(t) => t.def.port(port).map(|p| p.direction),
            Node::Network { inputs, outputs, .. } => {
                if inputs.iter().any(|p| p == port) {
                    Some(Direction::In)
                } else {
                    outputs.iter().any(|p| p == port).then_some(Direction::Out)
                }
            }
            Node::Stub { ports } => ports.iter().find(|(n, _)| n == port).map(|(_, d)| *d),
        }
    }

    fn push(&mut self, at: u64, item: Item) {
        let q = self.items.len();
        self.items.push(item);
        self.queue.push(Reverse((at, q as u64, q)));
    }

    fn record(&mut self, kind: TraceKind, thing: &str, detail: Detail) {
        let seq = self.trace.len() as u64;
        self.trace.push(TraceEvent { seq, time: self.now, kind, thing: thing.to_string(), detail });
    }

    fn step(&mut self) -> Step {
        self.steps += 1;
        if self.steps > self.sc.step_limit {
            return Err(SimError::StepLimitExceeded { limit: self.sc.step_limit, seq: self.trace.len() as u64, time: self.now });
        }
        Ok(())
    }

    fn thing(&self, inst: &str) -> &ThingRt<'a> {
        match &self.nodes[inst] {
            Node::Thing(t) => t,
            _ => unreachable!("`{inst}` is not a thing"),
        }
    }

    fn thing_mut(&mut self, inst: &str) -> &mut ThingRt<'a> {
        match self.nodes.get_mut(inst) {
            Some(Node::Thing(t)) => t,
            _ => unreachable!("`{inst}` is not a thing"),
        }
    }

    fn eval(&self, inst: &str, e: &crate::model::Expr, params: &BTreeMap<String, SimValue>) -> Result<SimValue, SimError> {
        value::eval(e, (params, &self.thing(inst).props)).map_err(|message| SimError::Eval { thing: inst.to_string(), message })
    }

    fn latency(&self, from: &Endpoint) -> u64 {
        self.sc.connector_latency.get(&from.to_string()).copied().unwrap_or(self.sc.latency)
    }

    fn route(&mut self, from: &Endpoint, message: &str, args: &[SimValue], only: Option<&[usize]>) {
        let at = self.now + self.latency(from);
        let targets: Vec<Endpoint> = self
            .pipeline
            .connectors
            .iter()
            .enumerate()
            .filter(|(i, c)| c.from == *from && only.is_none_or(|o| o.contains(i)))
            .map(|(_, c)| c.to.clone())
            .collect();
        for to in targets {
            self.push(at, Item::Deliver { to, message: message.to_string(), args: args.to_vec() });
        }
    }

    fn send(&mut self, inst: &str, port: &str, message: &str, args: Vec<SimValue>) {
        let detail = Detail::Message { port: port.into(), message: message.into(), args: args.clone() };
        self.record(TraceKind::MessageSent, inst, detail);
        let from = Endpoint { instance: inst.into(), port: port.into() };
        self.route(&from, message, &args, None);
    }

    /// Network outputs carry no message name; each receiving port gets its
    /// single tensor-carrying message.
    fn emit_tensor(&mut self, inst: &str, port: &str, output: &[f64]) {
        let from = Endpoint { instance: inst.into(), port: port.into() };
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, c) in self.pipeline.connectors.iter().enumerate().filter(|(_, c)| c.from == from) {
            let name = self.tensor_message(&c.to).unwrap_or_else(|| port.to_string());
            match groups.iter_mut().find(|(n, _)| *n == name) {
                Some((_, v)) => v.push(i),
                None => groups.push((name, vec![i])),
            }
        }
        if groups.is_empty() {
            groups.push((port.to_string(), Vec::new()));
        }
        let args = vec![SimValue::Tensor(output.to_vec())];
        for (message, conns) in groups {
            let detail = Detail::Message { port: port.into(), message: message.clone(), args: args.clone() };
            self.record(TraceKind::MessageSent, inst, detail);
            self.route(&from, &message, &args, Some(&conns));
        }
    }

    fn tensor_message(&self, to: &Endpoint) -> Option<String> {
        let Some(Node::Thing(t)) = self.nodes.get(&to.instance) else { return None };
        let port = t.def.port(&to.port)?;
        let mut it = port.messages.iter().filter(|m| {
            t.def.message(m).is_some_and(|d| d.params.len() == 1 && matches!(d.params[0].ty, TypeRef::Tensor(_)))
        });
        let first = it.next()?;
        Some(first.clone())
    }

    fn predictor_call<T>(
        &mut self,
        unit: &str,
        instance: &str,
        f: impl FnOnce(&mut dyn Predictor) -> Result<T, String>,
    ) -> Result<T, SimError> {
        let p = self
            .predictors
            .get_mut(unit)
            .ok_or_else(|| SimError::UnboundPredictor { unit: unit.into(), instance: instance.into() })?;
        f(p.as_mut()).map_err(|message| SimError::Prediction { unit: unit.into(), message })
    }

    fn predict(&mut self, unit: &str, instance: &str, input: &SimValue) -> Result<Vec<f64>, SimError> {
        let out = self.predictor_call(unit, instance, |p| p.predict(input))?;
        let shown = match input {
            SimValue::Str(s) => s.clone(),
            other => other.to_string(),
        };
        self.record(TraceKind::PredictionMade, instance, Detail::Prediction { unit: unit.into(), input: shown, output: out.clone() });
        Ok(out)
    }

    fn exec(&mut self, inst: &str, a: &Action, params: &BTreeMap<String, SimValue>) -> Step {
        let unit = self.thing(inst).def.name.clone();
        match a {
            Action::Send { port, message, args, .. } => {
                let vals = args.iter().map(|e| self.eval(inst, e, params)).collect::<Result<Vec<_>, _>>()?;
                self.send(inst, port, message, vals);
            }
            Action::Assign { property, value, .. } => {
                let v = self.eval(inst, value, params)?;
                let text = format!("{property} = {v}");
                self.thing_mut(inst).props.insert(property.clone(), v);
                self.record(TraceKind::ActionExecuted, inst, Detail::Action { action: "assign".into(), text });
            }
            Action::DaPreprocess { .. } | Action::DaTrain { .. } => {
                let name = a.name();
                self.record(TraceKind::ActionExecuted, inst, Detail::Action { action: name.into(), text: name.into() });
                if self.predictors.contains_key(&unit) {
                    if matches!(a, Action::DaTrain { .. }) {
                        self.predictor_call(&unit, inst, |p| p.train())?;
                    } else {
                        self.predictor_call(&unit, inst, |p| p.preprocess())?;
                    }
                }
            }
            Action::DaPredict { features, result, .. } => {
                let mut vals = features.iter().map(|e| self.eval(inst, e, params)).collect::<Result<Vec<_>, _>>()?;
                let input = if vals.len() == 1 {
                    vals.remove(0)
                } else {
                    let mut xs = Vec::new();
                    for v in vals {
                        match v {
                            SimValue::Int(i) => xs.push(i as f64),
                            SimValue::Real(r) => xs.push(r),
                            SimValue::Tensor(t) => xs.extend(t),
                            other => {
                                return Err(SimError::Eval { thing: inst.into(), message: format!("feature {other} is not numeric") })
                            }
                        }
                    }
                    SimValue::Tensor(xs)
                };
                let text = format!("da_predict -> {result}");
                self.record(TraceKind::ActionExecuted, inst, Detail::Action { action: "da_predict".into(), text });
                let out = self.predict(&unit, inst, &input)?;
                self.thing_mut(inst).props.insert(result.clone(), SimValue::Tensor(out));
            }
        }
        Ok(())
    }

    fn fire(&mut self, inst: &str, tr: &Transition, params: &BTreeMap<String, SimValue>) -> Step {
        self.step()?;
        for a in &tr.actions {
            self.exec(inst, a, params)?;
        }
        if let Some(target) = &tr.target {
            self.thing_mut(inst).state = Some(target.clone());
            self.record(TraceKind::StateEntered, inst, Detail::State(target.clone()));
        }
        Ok(())
    }

    /// First enabled transition of the current state in declaration order.
    fn enabled(
        &self,
        inst: &str,
        trigger: Option<(&str, &str, &[SimValue])>,
    ) -> Result<Option<(&'a Transition, BTreeMap<String, SimValue>)>, SimError> {
        let t = self.thing(inst);
        let Some(state) = t.state.as_deref().and_then(|s| t.def.statechart.state(s)) else { return Ok(None) };
        for tr in &state.transitions {
            let params = match (&tr.trigger, trigger) {
                (None, None) => BTreeMap::new(),
                (Some(tg), Some((port, message, args))) if tg.port == port && tg.message == message => {
                    tg.params.iter().cloned().zip(args.iter().cloned()).collect()
                }
                _ => continue,
            };
            let ok = match &tr.guard {
                None => true,
                Some(g) => value::eval_guard(g, (&params, &t.props))
                    .map_err(|message| SimError::Eval { thing: inst.to_string(), message })?,
            };
            if ok {
                return Ok(Some((tr, params)));
            }
        }
        Ok(None)
    }

    fn quiesce(&mut self, inst: &str) -> Step {
        while let Some((tr, params)) = self.enabled(inst, None)? {
            self.fire(inst, tr, &params)?;
        }
        Ok(())
    }

    fn deliver(&mut self, to: &Endpoint, message: &str, args: Vec<SimValue>) -> Step {
        let detail = Detail::Message { port: to.port.clone(), message: message.into(), args: args.clone() };
        self.record(TraceKind::MessageReceived, &to.instance, detail);
        self.step()?;
        match &self.nodes[&to.instance] {
            Node::Thing(_) => {
                if let Some((tr, params)) = self.enabled(&to.instance, Some((&to.port, message, &args)))? {
                    self.fire(&to.instance, tr, &params)?;
                    self.quiesce(&to.instance)?;
                }
            }
            Node::Network { unit, outputs, .. } => {
                let (unit, outputs) = (unit.clone(), outputs.clone());
                let input = args.into_iter().next().ok_or_else(|| SimError::Eval {
                    thing: to.instance.clone(),
                    message: format!("`{message}` carries no input"),
                })?;
                let out = self.predict(&unit, &to.instance, &input)?;
                for port in outputs {
                    self.emit_tensor(&to.instance, &port, &out);
                }
            }
            Node::Stub { .. } => {}
        }
        Ok(())
    }

    fn inject(&mut self, i: usize) -> Step {
        let ev = &self.sc.events[i];
        let (inst, port, message, args) = (ev.instance.clone(), ev.port.clone(), ev.message.clone(), ev.args.clone());
        let dir = self.port_direction(&inst, &port).expect("checked when queued");
        if dir.can_receive() {
            self.deliver(&Endpoint { instance: inst, port }, &message, args)
        } else {
            self.step()?;
            self.send(&inst, &port, &message, args);
            Ok(())
        }
    }

    fn run(&mut self) -> Step {
        let things: Vec<String> =
            self.pipeline.instances.iter().filter(|i| matches!(self.nodes[&i.name], Node::Thing(_))).map(|i| i.name.clone()).collect();
        for inst in &things {
            if let Some(init) = self.thing(inst).def.statechart.initial.clone() {
                self.thing_mut(inst).state = Some(init.clone());
                self.record(TraceKind::StateEntered, inst, Detail::State(init));
            }
        }
        for inst in &things {
            self.quiesce(inst)?;
        }
        while let Some(Reverse((at, _, idx))) = self.queue.pop() {
            self.now = at;
            match std::mem::replace(&mut self.items[idx], Item::Inject(usize::MAX)) {
                Item::Deliver { to, message, args } => self.deliver(&to, &message, args)?,
                Item::Inject(i) => self.inject(i)?,
            }
        }
        Ok(())
    }
}

/// Runs `scenario` against the first pipeline of `unit`. Errors found
/// before the first event come back with an empty trace.
pub fn run_scenario(unit: &ModelUnit, scenario: &Scenario, predictors: &mut Predictors) -> Run {
    match Sim::new(unit, scenario, predictors) {
        Err(e) => Run { trace: Vec::new(), outcome: Err(e) },
        Ok(mut sim) => {
            let outcome = sim.run();
            Run { trace: sim.trace, outcome }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("run {run} diverges from run 0 at trace position {position}")]
pub struct Divergence {
    pub run: usize,
    pub position: usize,
}

/// Runs the scenario `n` times and requires identical traces and outcomes.
pub fn replay_determinism(unit: &ModelUnit, scenario: &Scenario, predictors: &mut Predictors, n: usize) -> Result<Run, Divergence> {
    let first = run_scenario(unit, scenario, predictors);
    for run in 1..n {
        let again = run_scenario(unit, scenario, predictors);
        let a = first.trace.iter().map(TraceEvent::to_line);
        let b = again.trace.iter().map(TraceEvent::to_line);
        if let Some(position) = a.zip(b).position(|(x, y)| x != y) {
            return Err(Divergence { run, position });
        }
        if first.trace.len() != again.trace.len() || first.outcome != again.outcome {
            return Err(Divergence { run, position: first.trace.len().min(again.trace.len()) });
        }
    }
    Ok(first)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PredictorMode {
    /// Use the scenario's bindings.
    #[default]
    Scenario,
    /// Oracle bindings only.
    Oracle,
    /// Stored weights for every trainable unit.
    Trained,
}

/// Builds cached predictors for the scenario's bindings. Trained models
/// need `launcher` and read the latest (or given) archive from `store`.
pub fn bind_predictors(
    analysis: &Analysis,
    scenario: &Scenario,
    store: &Store,
    launcher: Option<&dyn Launcher>,
    mode: PredictorMode,
) -> Result<Predictors, SimError> {
    let root = &analysis.unit.root;
    let mut bindings = scenario.predictors.clone();
    for unit in bindings.keys() {
        if analysis.unit_named(unit).is_none() {
            return Err(SimError::Scenario(format!("predictor for unknown unit `{unit}`")));
        }
    }
    match mode {
        PredictorMode::Scenario => {}
        PredictorMode::Oracle => {
            if let Some((u, _)) = bindings.iter().find(|(_, b)| !matches!(b, PredictorBinding::Oracle(_))) {
                return Err(SimError::Scenario(format!("`{u}` has no oracle binding")));
            }
        }
        PredictorMode::Trained => {
            for u in &analysis.units {
                let keep = matches!(bindings.get(&u.name), Some(PredictorBinding::Trained(Some(_))));
                if !keep {
                    bindings.insert(u.name.clone(), PredictorBinding::Trained(None));
                }
            }
        }
    }
    let mut out = Predictors::new();
    for (name, binding) in bindings {
        let tu = analysis.unit_named(&name).expect("checked above");
        let p: Box<dyn Predictor> = match binding {
            PredictorBinding::Oracle(table) => Box::new(OracleStub::new(&name, tu.n_outputs(), table)),
            PredictorBinding::Trained(path) => {
                let bridge_err = |message: String| SimError::BridgeFailure { unit: name.clone(), message };
                let archive = match path {
                    Some(p) => root.join(p),
                    None => match store.latest(&name).map_err(|e| bridge_err(e.to_string()))? {
                        Some(rec) => store.resolve(&rec.archive),
                        // unused units stay unbound and fail only when asked
                        None if mode == PredictorMode::Trained => continue,
                        None => return Err(bridge_err("no stored build; run `mlcc build` first".into())),
                    },
                };
                let launcher = launcher.ok_or_else(|| bridge_err("no bridge launcher configured".into()))?;
                let bridge = launcher.launch().map_err(|e| bridge_err(e.to_string()))?;
                let samples = match &scenario.samples {
                    Some(s) => predictor::read_samples(&root.join(s), &tu.features).map_err(SimError::Scenario)?,
                    None => BTreeMap::new(),
                };
                let spec = root.join(GEN_DIR).join("train").join(&name).join("spec.tcl");
                Box::new(TrainedModel::new(&name, bridge, archive, spec, samples))
            }
        };
        out.insert(name, Box::new(Cached::new(p)));
    }
    Ok(out)
}

/// Reads and parses a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, Vec<crate::diag::Diagnostic>> {
    let file = path.to_string_lossy();
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![crate::diag::Diagnostic::error("E-SCENARIO", format!("cannot read: {e}"), crate::diag::Span::file_start(file.clone().into_owned().into()))]
    })?;
    match parse_scenario(&text, &file) {
        (Some(s), _) => Ok(s),
        (None, d) => Err(d),
    }
}
