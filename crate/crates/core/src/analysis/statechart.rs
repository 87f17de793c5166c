//! Well-formedness of a thing's statechart and typing of its actions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::types::{assignable, type_of};
use crate::diag::Diagnostic;
use crate::model::{Action, BinOp, Expr, ExprKind, ThingDef, Transition, TypeRef};
use crate::syntax::print_expr;

/// Runs every statechart check on `thing`.
pub fn check_statechart(thing: &ThingDef) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let sc = &thing.statechart;
    let states: BTreeSet<&str> = sc.states.iter().map(|s| s.name.as_str()).collect();

    match &sc.initial {
        None => diags.push(Diagnostic::error(
            "E-INITIAL",
            format!("statechart of `{}` has no initial state", thing.name),
            sc.span.clone(),
        )),
        Some(i) if !states.contains(i.as_str()) => diags.push(Diagnostic::error(
            "E-UNKNOWN-STATE",
            format!("initial state `{i}` is not declared"),
            sc.span.clone(),
        )),
        _ => {}
    }

    for (_, tr) in sc.transitions() {
        if let Some(t) = &tr.target {
            if !states.contains(t.as_str()) {
                diags.push(Diagnostic::error("E-UNKNOWN-STATE", format!("unknown target state `{t}`"), tr.span.clone()));
            }
        }
    }

    if let Some(init) = sc.initial.as_deref().filter(|i| states.contains(i)) {
        let mut seen = BTreeSet::from([init]);
        let mut queue = VecDeque::from([init]);
        while let Some(s) = queue.pop_front() {
            for tr in sc.state(s).map(|s| s.transitions.as_slice()).unwrap_or_default() {
                if let Some(t) = tr.target.as_deref().filter(|t| states.contains(t)) {
                    if seen.insert(t) {
                        queue.push_back(t);
                    }
                }
            }
        }
        for s in &sc.states {
            if !seen.contains(s.name.as_str()) {
                diags.push(Diagnostic::warning(
                    "W-UNREACHABLE",
                    format!("state `{}` is unreachable from `{init}`", s.name),
                    s.span.clone(),
                ));
            }
        }
    }

    for state in &sc.states {
        let mut by_trigger: BTreeMap<Option<(&str, &str)>, Vec<&Transition>> = BTreeMap::new();
        for tr in &state.transitions {
            let key = tr.trigger.as_ref().map(|t| (t.port.as_str(), t.message.as_str()));
            by_trigger.entry(key).or_default().push(tr);
        }
        for (key, group) in by_trigger {
            for (i, a) in group.iter().enumerate() {
                for b in &group[i + 1..] {
                    let disjoint = match (&a.guard, &b.guard) {
                        (Some(ga), Some(gb)) => guards_disjoint(ga, gb, a, b),
                        _ => false,
                    };
                    if !disjoint {
                        diags.push(
                            Diagnostic::error(
                                "E-NONDETERMINISM",
                                match key {
                                    Some((port, msg)) => format!(
                                        "state `{}`: transitions on `{port}?{msg}` may both be enabled",
                                        state.name
                                    ),
                                    None => format!("state `{}`: triggerless transitions may both be enabled", state.name),
                                },
                                b.span.clone(),
                            )
                            .with_related(a.span.clone())
                            .with_hint("make the guards mutually exclusive"),
                        );
                    }
                }
            }
        }
        for tr in &state.transitions {
            check_transition(thing, tr, &mut diags);
        }
    }

    for p in &thing.properties {
        if let Some(init) = &p.init {
            match type_of(init, &|_| None) {
                Ok(t) if assignable(&t, &p.ty) => {}
                Ok(t) => diags.push(Diagnostic::error(
                    "E-TYPE",
                    format!("property `{}` has type {} but is initialized with {t}", p.name, p.ty),
                    init.span.clone(),
                )),
                Err(d) => diags.push(d),
            }
        }
    }
    diags
}

fn check_transition(thing: &ThingDef, tr: &Transition, diags: &mut Vec<Diagnostic>) {
    let mut params: Vec<(String, TypeRef)> = Vec::new();
    if let Some(trig) = &tr.trigger {
        match thing.port(&trig.port) {
            None => diags.push(Diagnostic::error(
                "E-UNKNOWN-MESSAGE",
                format!("`{}` has no port `{}`", thing.name, trig.port),
                trig.span.clone(),
            )),
            Some(port) if !port.direction.can_receive() => diags.push(Diagnostic::error(
                "E-UNKNOWN-MESSAGE",
                format!("port `{}` is {} and cannot receive", port.name, port.direction.as_str()),
                trig.span.clone(),
            )),
            Some(port) if !port.messages.contains(&trig.message) => diags.push(Diagnostic::error(
                "E-UNKNOWN-MESSAGE",
                format!("port `{}` does not carry message `{}`", port.name, trig.message),
                trig.span.clone(),
            )),
            Some(_) => match thing.message(&trig.message) {
                None => diags.push(Diagnostic::error(
                    "E-UNKNOWN-MESSAGE",
                    format!("message `{}` is not declared", trig.message),
                    trig.span.clone(),
                )),
                Some(m) if m.params.len() != trig.params.len() => diags.push(Diagnostic::error(
                    "E-ARITY",
                    format!("message `{}` has {} parameter(s), trigger binds {}", m.name, m.params.len(), trig.params.len()),
                    trig.span.clone(),
                )),
                Some(m) => {
                    params = trig.params.iter().cloned().zip(m.params.iter().map(|p| p.ty.clone())).collect();
                }
            },
        }
    }
    let env = |v: &str| -> Option<TypeRef> {
        params
            .iter()
            .find(|(n, _)| n == v)
            .map(|(_, t)| t.clone())
            .or_else(|| thing.property(v).map(|p| p.ty.clone()))
    };

    if let Some(g) = &tr.guard {
        match type_of(g, &env) {
            Ok(TypeRef::Bool) => {}
            Ok(t) => diags.push(Diagnostic::error(
                "E-GUARD-TYPE",
                format!("guard must be Bool, found {t}"),
                g.span.clone(),
            )),
            Err(d) => diags.push(d),
        }
    }

    for action in &tr.actions {
        if action.is_ml() && thing.ml.is_none() {
            diags.push(Diagnostic::error(
                "E-ML-ACTION",
                format!("`{}` requires an ML block in thing `{}`", action.name(), thing.name),
                action.span().clone(),
            ));
        }
        match action {
            Action::Send { port, message, args, span } => {
                match thing.port(port) {
                    None => diags.push(Diagnostic::error(
                        "E-UNKNOWN-MESSAGE",
                        format!("`{}` has no port `{port}`", thing.name),
                        span.clone(),
                    )),
                    Some(p) if !p.direction.can_send() => diags.push(Diagnostic::error(
                        "E-UNKNOWN-MESSAGE",
                        format!("port `{port}` is {} and cannot send", p.direction.as_str()),
                        span.clone(),
                    )),
                    Some(p) if !p.messages.contains(message) => diags.push(Diagnostic::error(
                        "E-UNKNOWN-MESSAGE",
                        format!("port `{port}` does not carry message `{message}`"),
                        span.clone(),
                    )),
                    Some(_) => {}
                }
                let Some(m) = thing.message(message) else {
                    if thing.port(port).is_some_and(|p| p.messages.contains(message)) {
                        diags.push(Diagnostic::error(
                            "E-UNKNOWN-MESSAGE",
                            format!("message `{message}` is not declared"),
                            span.clone(),
                        ));
                    }
                    continue;
                };
                if m.params.len() != args.len() {
                    diags.push(Diagnostic::error(
                        "E-ARITY",
                        format!("message `{message}` takes {} argument(s), found {}", m.params.len(), args.len()),
                        span.clone(),
                    ));
                    continue;
                }
                for (arg, param) in args.iter().zip(&m.params) {
                    match type_of(arg, &env) {
                        Ok(t) if assignable(&t, &param.ty) => {}
                        Ok(t) => diags.push(Diagnostic::error(
                            "E-TYPE",
                            format!("argument `{}` expects {}, found {t}", param.name, param.ty),
                            arg.span.clone(),
                        )),
                        Err(d) => diags.push(d),
                    }
                }
            }
            Action::Assign { property, value, span } => {
                let Some(p) = thing.property(property) else {
                    diags.push(Diagnostic::error(
                        "E-UNKNOWN-NAME",
                        format!("unknown property `{property}`"),
                        span.clone(),
                    ));
                    continue;
                };
                match type_of(value, &env) {
                    Ok(t) if assignable(&t, &p.ty) => {}
                    Ok(t) => diags.push(Diagnostic::error(
                        "E-TYPE",
                        format!("cannot assign {t} to property `{property}` of type {}", p.ty),
                        value.span.clone(),
                    )),
                    Err(d) => diags.push(d),
                }
            }
            Action::DaPredict { features, result, span } => {
                for f in features {
                    if let Err(d) = type_of(f, &env) {
                        diags.push(d);
                    }
                }
                if thing.property(result).is_none() {
                    diags.push(Diagnostic::error(
                        "E-UNKNOWN-NAME",
                        format!("prediction target `{result}` is not a property"),
                        span.clone(),
                    ));
                }
            }
            Action::DaPreprocess { .. } | Action::DaTrain { .. } => {}
        }
    }
}

/// Closed/open interval over the reals used to prove two guards exclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Interval {
    lo: f64,
    lo_incl: bool,
    hi: f64,
    hi_incl: bool,
}

impl Interval {
    const ALL: Interval = Interval { lo: f64::NEG_INFINITY, lo_incl: false, hi: f64::INFINITY, hi_incl: false };

    fn intersect(self, o: Interval) -> Interval {
        let (lo, lo_incl) = if self.lo > o.lo {
            (self.lo, self.lo_incl)
        } else if o.lo > self.lo {
            (o.lo, o.lo_incl)
        } else {
            (self.lo, self.lo_incl && o.lo_incl)
        };
        let (hi, hi_incl) = if self.hi < o.hi {
            (self.hi, self.hi_incl)
        } else if o.hi < self.hi {
            (o.hi, o.hi_incl)
        } else {
            (self.hi, self.hi_incl && o.hi_incl)
        };
        Interval { lo, lo_incl, hi, hi_incl }
    }

    fn is_empty(self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_incl && self.hi_incl))
    }
}

fn constant(e: &Expr) -> Option<f64> {
    match e.kind {
        ExprKind::Int(v) => Some(v as f64),
        ExprKind::Real(v) => Some(v),
        ExprKind::Bool(b) => Some(if b { 1.0 } else { 0.0 }),
        _ => None,
    }
}

fn flip(op: BinOp) -> BinOp {
    match op {
        BinOp::Lt => BinOp::Gt,
        BinOp::Le => BinOp::Ge,
        BinOp::Gt => BinOp::Lt,
        BinOp::Ge => BinOp::Le,
        other => other,
    }
}

/// Interval constraints implied by the conjuncts of `g`, keyed by the
/// canonical text of the constrained expression. Trigger parameter names
/// are replaced by their position so both transitions speak of the same
/// message argument.
fn constraints(g: &Expr, params: &[String], out: &mut BTreeMap<String, Interval>) {
    match &g.kind {
        ExprKind::Binary(BinOp::And, a, b) => {
            constraints(a, params, out);
            constraints(b, params, out);
        }
        ExprKind::Binary(op, a, b) if op.is_comparison() && *op != BinOp::Ne => {
            let (subject, c, op) = match (constant(a), constant(b)) {
                (None, Some(c)) => (a, c, *op),
                (Some(c), None) => (b, c, flip(*op)),
                _ => return,
            };
            let iv = match op {
                BinOp::Eq => Interval { lo: c, lo_incl: true, hi: c, hi_incl: true },
                BinOp::Lt => Interval { hi: c, hi_incl: false, ..Interval::ALL },
                BinOp::Le => Interval { hi: c, hi_incl: true, ..Interval::ALL },
                BinOp::Gt => Interval { lo: c, lo_incl: false, ..Interval::ALL },
                BinOp::Ge => Interval { lo: c, lo_incl: true, ..Interval::ALL },
                _ => return,
            };
            let key = canonical(subject, params);
            let slot = out.entry(key).or_insert(Interval::ALL);
            *slot = slot.intersect(iv);
        }
        ExprKind::Var(_) => {
            let key = canonical(g, params);
            let slot = out.entry(key).or_insert(Interval::ALL);
            *slot = slot.intersect(Interval { lo: 1.0, lo_incl: true, hi: 1.0, hi_incl: true });
        }
        _ => {}
    }
}

fn canonical(e: &Expr, params: &[String]) -> String {
    fn rename(e: &Expr, params: &[String]) -> Expr {
        let kind = match &e.kind {
            ExprKind::Var(v) => match params.iter().position(|p| p == v) {
                Some(i) => ExprKind::Var(format!("${i}")),
                None => ExprKind::Var(v.clone()),
            },
            ExprKind::Unary(op, a) => ExprKind::Unary(*op, Box::new(rename(a, params))),
            ExprKind::Binary(op, a, b) => ExprKind::Binary(*op, Box::new(rename(a, params)), Box::new(rename(b, params))),
            ExprKind::Call(f, args) => ExprKind::Call(f.clone(), args.iter().map(|a| rename(a, params)).collect()),
            other => other.clone(),
        };
        Expr::new(kind, e.span.clone())
    }
    print_expr(&rename(e, params))
}

/// True when `ga` and `gb` can be shown never to hold together: some
/// subject expression is constrained to non-overlapping intervals.
fn guards_disjoint(ga: &Expr, gb: &Expr, ta: &Transition, tb: &Transition) -> bool {
    let pa = ta.trigger.as_ref().map(|t| t.params.clone()).unwrap_or_default();
    let pb = tb.trigger.as_ref().map(|t| t.params.clone()).unwrap_or_default();
    let mut ca = BTreeMap::new();
    let mut cb = BTreeMap::new();
    constraints(ga, &pa, &mut ca);
    constraints(gb, &pb, &mut cb);
    ca.iter().any(|(k, ia)| ia.is_empty() || cb.get(k).is_some_and(|ib| ia.intersect(*ib).is_empty()))
        || cb.values().any(|i| i.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_system;

    fn thing(src: &str) -> ThingDef {
        let (f, d) = parse_system(src, "t.scl");
        assert!(d.is_empty(), "{d:?}");
        f.things.into_iter().next().unwrap()
    }

    fn codes(src: &str) -> Vec<&'static str> {
        check_statechart(&thing(src)).iter().map(|d| d.code).collect()
    }

    const SERVER: &str = r#"thing S {
        message image(px: Q(0:255)^{8,8})
        message result(digit: Int)
        port svc: in { image }
        port reply: out { result }
        property digit: Int = 0
        ml { features "pixel_*" labels ON label dataset "d.csv" model_algorithm mlp_classifier }
        statechart init preprocessing {
            state preprocessing { on / da_preprocess -> training }
            state training { on / da_train -> ready }
            state ready { on svc?image(px) -> predicting }
            state predicting { on / da_predict(px -> digit); reply!result(digit) -> ready }
        }
    }"#;

    #[test]
    fn server_chart_is_clean_except_scope() {
        // `px` is only bound on the receiving transition.
        assert_eq!(codes(SERVER), ["E-UNKNOWN-NAME"]);
        let fixed = SERVER
            .replace("on svc?image(px) -> predicting", "on svc?image(px) / da_predict(px -> digit) -> predicting")
            .replace("on / da_predict(px -> digit); reply!result(digit) -> ready", "on / reply!result(digit) -> ready");
        assert!(codes(&fixed).is_empty());
    }

    #[test]
    fn unreachable_and_ml_without_block() {
        let src = "thing T { port p: in { m } message m()
            statechart init a { state a { on p?m / da_train } state lost { } } }";
        assert_eq!(codes(src), ["W-UNREACHABLE", "E-ML-ACTION"]);
    }

    #[test]
    fn nondeterminism() {
        let base = "thing T { message m(v: Int) port p: in { m } property n: Int = 0
            statechart init a { state a { GUARDS } } }";
        let ok = base.replace("GUARDS", "on p?m(v) [v == 1] / n = 1 on p?m(w) [w == 2] / n = 2 on p?m(x) [x > 2 && n < 3]");
        assert!(codes(&ok).is_empty(), "{:?}", codes(&ok));
        let overlap = base.replace("GUARDS", "on p?m(v) [v >= 1] on p?m(v) [v <= 1]");
        assert_eq!(codes(&overlap), ["E-NONDETERMINISM"]);
        let unguarded = base.replace("GUARDS", "on p?m(v) on p?m(v) [v == 1]");
        assert_eq!(codes(&unguarded), ["E-NONDETERMINISM"]);
        let two_free = base.replace("GUARDS", "on / n = 1 on / n = 2");
        assert_eq!(codes(&two_free), ["E-NONDETERMINISM"]);
        let split_free = base.replace("GUARDS", "on [n < 2] / n = 1 on [n >= 2] / n = 0");
        assert!(codes(&split_free).is_empty(), "{:?}", codes(&split_free));
    }

    #[test]
    fn trigger_and_send_checks() {
        let src = "thing T { message m(v: Int) port p: in { m } port o: out { m }
            statechart init a { state a {
                on o?m(v)
                on p?m(v) [v] / o!m(true); p!m(1); o!m(1, 2) -> nowhere
            } } }";
        assert_eq!(
            codes(src),
            ["E-UNKNOWN-STATE", "E-UNKNOWN-MESSAGE", "E-GUARD-TYPE", "E-TYPE", "E-UNKNOWN-MESSAGE", "E-ARITY"]
        );
    }
}
