//! Trace events and assertions over them.

use std::fmt;

use super::value::{format_args, SimValue};
use crate::model::{ConfigTree, Value};
use crate::syntax::print_value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    StateEntered,
    MessageSent,
    MessageReceived,
    ActionExecuted,
    PredictionMade,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::StateEntered => "StateEntered",
            TraceKind::MessageSent => "MessageSent",
            TraceKind::MessageReceived => "MessageReceived",
            TraceKind::ActionExecuted => "ActionExecuted",
            TraceKind::PredictionMade => "PredictionMade",
        }
    }

    /// Short names used in patterns.
    pub fn short(self) -> &'static str {
        match self {
            TraceKind::StateEntered => "state",
            TraceKind::MessageSent => "sent",
            TraceKind::MessageReceived => "received",
            TraceKind::ActionExecuted => "action",
            TraceKind::PredictionMade => "prediction",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            TraceKind::StateEntered,
            TraceKind::MessageSent,
            TraceKind::MessageReceived,
            TraceKind::ActionExecuted,
            TraceKind::PredictionMade,
        ]
        .into_iter()
        .find(|k| k.short() == s || k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Detail {
    State(String),
    Message { port: String, message: String, args: Vec<SimValue> },
    Action { action: String, text: String },
    Prediction { unit: String, input: String, output: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub seq: u64,
    pub time: u64,
    pub kind: TraceKind,
    /// Pipeline instance name.
    pub thing: String,
    pub detail: Detail,
}

impl TraceEvent {
    pub fn details(&self) -> String {
        match &self.detail {
            Detail::State(s) => s.clone(),
            Detail::Message { port, message, args } => {
                let sep = if self.kind == TraceKind::MessageSent { '!' } else { '?' };
                format!("{port}{sep}{message}({})", format_args(args))
            }
            Detail::Action { text, .. } => text.clone(),
            Detail::Prediction { unit, input, output } => {
                format!("{unit}({input}) -> {}", SimValue::Tensor(output.clone()))
            }
        }
    }

    /// `seq<TAB>time<TAB>kind<TAB>thing<TAB>details`
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}\t{}\t{}", self.seq, self.time, self.kind.as_str(), self.thing, self.details())
    }
}

pub fn trace_text(trace: &[TraceEvent]) -> String {
    trace.iter().map(|e| e.to_line() + "\n").collect()
}

/// Every given field must match; absent fields match anything.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventPattern {
    pub kind: Option<TraceKind>,
    pub thing: Option<String>,
    pub port: Option<String>,
    pub message: Option<String>,
    pub args: Option<Vec<SimValue>>,
    pub state: Option<String>,
    pub action: Option<String>,
    pub unit: Option<String>,
}

impl EventPattern {
    pub fn from_tree(t: &ConfigTree) -> Result<Self, String> {
        let mut p = EventPattern::default();
        for (k, v) in t.iter() {
            let text = || v.as_text().map(str::to_string).ok_or_else(|| format!("pattern field `{k}` must be a name"));
            match k {
                "kind" => p.kind = Some(TraceKind::parse(&text()?).ok_or_else(|| format!("unknown event kind `{v:?}`"))?),
                "thing" => p.thing = Some(text()?),
                "port" => p.port = Some(text()?),
                "message" => p.message = Some(text()?),
                "state" => p.state = Some(text()?),
                "action" => p.action = Some(text()?),
                "unit" => p.unit = Some(text()?),
                "args" => {
                    let xs = v.as_list().ok_or("pattern `args` must be a list")?;
                    p.args = Some(xs.iter().map(SimValue::from_value).collect::<Option<_>>().ok_or("pattern `args` must be literals")?);
                }
                other => return Err(format!("unknown pattern field `{other}`")),
            }
        }
        Ok(p)
    }

    pub fn to_tree(&self) -> ConfigTree {
        let mut t = ConfigTree::new();
        if let Some(k) = self.kind {
            t.insert("kind", Value::Token(k.short().into()));
        }
        for (k, v) in [("thing", &self.thing), ("port", &self.port), ("message", &self.message), ("state", &self.state), ("action", &self.action), ("unit", &self.unit)] {
            if let Some(v) = v {
                t.insert(k, v.as_str());
            }
        }
        if let Some(args) = &self.args {
            t.insert("args", Value::List(args.iter().map(|a| match a {
                SimValue::Int(i) => Value::Int(*i),
                SimValue::Real(r) => Value::Real(*r),
                SimValue::Bool(b) => Value::Bool(*b),
                SimValue::Str(s) => Value::Str(s.clone()),
                SimValue::Tensor(xs) => Value::List(xs.iter().map(|x| Value::Real(*x)).collect()),
            }).collect()));
        }
        t
    }

    pub fn matches(&self, e: &TraceEvent) -> bool {
        let eq = |want: &Option<String>, have: &str| want.as_deref().is_none_or(|w| w == have);
        if self.kind.is_some_and(|k| k != e.kind) || !eq(&self.thing, &e.thing) {
            return false;
        }
        match &e.detail {
            Detail::State(s) => {
                eq(&self.state, s) && self.port.is_none() && self.message.is_none() && self.args.is_none() && self.action.is_none() && self.unit.is_none()
            }
            Detail::Message { port, message, args } => {
                eq(&self.port, port)
                    && eq(&self.message, message)
                    && self.args.as_ref().is_none_or(|a| a == args)
                    && self.state.is_none()
                    && self.action.is_none()
                    && self.unit.is_none()
            }
            Detail::Action { action, .. } => {
                eq(&self.action, action) && self.state.is_none() && self.port.is_none() && self.message.is_none() && self.args.is_none() && self.unit.is_none()
            }
            Detail::Prediction { unit, .. } => {
                eq(&self.unit, unit) && self.state.is_none() && self.port.is_none() && self.message.is_none() && self.args.is_none() && self.action.is_none()
            }
        }
    }
}

impl fmt::Display for EventPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_value(&Value::Tree(self.to_tree())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Assertion {
    Eventually(EventPattern),
    Never(EventPattern),
    /// The first A precedes every B.
    Order(EventPattern, EventPattern),
    /// After each A, the next event of B's kind and thing matches B.
    FollowedBy(EventPattern, EventPattern),
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assertion::Eventually(p) => write!(f, "eventually {p}"),
            Assertion::Never(p) => write!(f, "never {p}"),
            Assertion::Order(a, b) => write!(f, "order {a} before {b}"),
            Assertion::FollowedBy(a, b) => write!(f, "followed_by {a} then {b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssertionResult {
    pub assertion: String,
    pub passed: bool,
    /// Where it failed: the offending event's sequence number, or the trace
    /// length for something missing.
    pub position: Option<u64>,
    pub message: String,
}

impl AssertionResult {
    pub fn to_line(&self) -> String {
        let verdict = if self.passed { "pass" } else { "FAIL" };
        match self.position {
            Some(p) => format!("{verdict}\t{}\tat {p}: {}", self.assertion, self.message),
            None => format!("{verdict}\t{}", self.assertion),
        }
    }
}

fn check(a: &Assertion, trace: &[TraceEvent]) -> (bool, Option<u64>, String) {
    let end = trace.last().map_or(0, |e| e.seq + 1);
    let first = |p: &EventPattern| trace.iter().find(|e| p.matches(e));
    match a {
        Assertion::Eventually(p) => match first(p) {
            Some(_) => (true, None, String::new()),
            None => (false, Some(end), "no matching event".into()),
        },
        Assertion::Never(p) => match first(p) {
            Some(e) => (false, Some(e.seq), format!("matched `{}`", e.to_line())),
            None => (true, None, String::new()),
        },
        Assertion::Order(pa, pb) => {
            let Some(a) = first(pa) else { return (false, Some(end), "first pattern never occurs".into()) };
            match trace.iter().take_while(|e| e.seq < a.seq).find(|e| pb.matches(e)) {
                Some(b) => (false, Some(b.seq), format!("`{}` precedes the first match at {}", b.to_line(), a.seq)),
                None => (true, None, String::new()),
            }
        }
        Assertion::FollowedBy(pa, pb) => {
            let same = |e: &TraceEvent| {
                pb.kind.is_none_or(|k| k == e.kind) && pb.thing.as_deref().is_none_or(|t| t == e.thing)
            };
            for (i, a) in trace.iter().enumerate().filter(|(_, e)| pa.matches(e)) {
                match trace[i + 1..].iter().find(|e| same(e)) {
                    Some(next) if pb.matches(next) => {}
                    Some(next) => {
                        return (false, Some(next.seq), format!("after {} came `{}`", a.seq, next.to_line()));
                    }
                    None => return (false, Some(end), format!("nothing follows {}", a.seq)),
                }
            }
            (true, None, String::new())
        }
    }
}

pub fn assert_trace(trace: &[TraceEvent], assertions: &[Assertion]) -> Vec<AssertionResult> {
    assertions
        .iter()
        .map(|a| {
            let (passed, position, message) = check(a, trace);
            AssertionResult { assertion: a.to_string(), passed, position, message }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(seq: u64, kind: TraceKind, thing: &str, detail: Detail) -> TraceEvent {
        TraceEvent { seq, time: seq, kind, thing: thing.into(), detail }
    }

    fn state(seq: u64, s: &str) -> TraceEvent {
        ev(seq, TraceKind::StateEntered, "t", Detail::State(s.into()))
    }

    fn action(seq: u64, a: &str) -> TraceEvent {
        ev(seq, TraceKind::ActionExecuted, "t", Detail::Action { action: a.into(), text: a.into() })
    }

    fn pat(kind: TraceKind, f: impl FnOnce(&mut EventPattern)) -> EventPattern {
        let mut p = EventPattern { kind: Some(kind), ..Default::default() };
        f(&mut p);
        p
    }

    #[test]
    fn forms() {
        let trace = vec![
            state(0, "a"),
            action(1, "da_train"),
            ev(2, TraceKind::MessageSent, "t", Detail::Message { port: "o".into(), message: "m".into(), args: vec![SimValue::Int(5)] }),
            action(3, "da_predict"),
            state(4, "b"),
        ];
        let train = pat(TraceKind::ActionExecuted, |p| p.action = Some("da_train".into()));
        let predict = pat(TraceKind::ActionExecuted, |p| p.action = Some("da_predict".into()));
        let sent5 = pat(TraceKind::MessageSent, |p| p.args = Some(vec![SimValue::Int(5)]));
        let to_b = pat(TraceKind::StateEntered, |p| p.state = Some("b".into()));
        let to_a = pat(TraceKind::StateEntered, |p| p.state = Some("a".into()));
        let r = assert_trace(
            &trace,
            &[
                Assertion::Eventually(sent5.clone()),
                Assertion::Order(train.clone(), predict.clone()),
                Assertion::Order(predict.clone(), train.clone()),
                Assertion::Never(predict.clone()),
                Assertion::FollowedBy(predict.clone(), to_b),
                Assertion::FollowedBy(train, to_a.clone()),
                Assertion::Eventually(pat(TraceKind::MessageSent, |p| p.args = Some(vec![SimValue::Int(6)]))),
            ],
        );
        let verdicts: Vec<(bool, Option<u64>)> = r.iter().map(|x| (x.passed, x.position)).collect();
        assert_eq!(
            verdicts,
            [(true, None), (true, None), (false, Some(1)), (false, Some(3)), (true, None), (false, Some(4)), (false, Some(5))]
        );
        assert!(r[2].to_line().starts_with("FAIL\torder "));
    }

    #[test]
    fn field_mismatch_by_variant() {
        let e = state(0, "ready");
        assert!(EventPattern { state: Some("ready".into()), ..Default::default() }.matches(&e));
        assert!(!EventPattern { port: Some("p".into()), ..Default::default() }.matches(&e));
    }

    #[test]
    fn trace_lines() {
        let e = ev(3, TraceKind::MessageReceived, "dev", Detail::Message { port: "digits".into(), message: "recognized".into(), args: vec![SimValue::Int(0), SimValue::Int(2)] });
        assert_eq!(e.to_line(), "3\t3\tMessageReceived\tdev\tdigits?recognized(0, 2)");
    }
}
