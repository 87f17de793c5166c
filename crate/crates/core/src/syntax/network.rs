//! Parser for network architecture files (`.nal`).
//!
//! ```text
//! component Detector<classes> {
//!     ports
//!         in image: Q(0:255)^{28,28},
//!         out digit: Q(0:1)^{classes};
//!     def conv(kernel, channels) {
//!         Convolution(kernel=(kernel,kernel), channels=channels) -> Relu -> Pooling(max, window=(2,2))
//!     }
//!     net {
//!         image -> conv(5, 20) -> Flatten -> FullyConnected(classes) -> Softmax -> digit
//!     }
//! }
//! ```

use super::lexer::Tok;
use super::parser::{Fail, PResult, Parser};
use crate::diag::{Diagnostic, Span};
use crate::model::{
    BodyItem, DefArg, DefBlock, DefCall, Dim, Generic, LayerKind, LayerSpec, NetBody, NetPort, NetworkArch, Padding,
    PoolKind,
};

const TOP_LEVEL: &[&str] = &["component"];
const WILDCARD_LAYERS: &[&str] = &["AdaNet", "Wildcard"];
pub const BUILTIN_LAYERS: &[&str] = &[
    "Convolution",
    "Pooling",
    "FullyConnected",
    "Flatten",
    "Relu",
    "Sigmoid",
    "Tanh",
    "Softmax",
    "Dropout",
    "ImportPretrained",
];

/// Parses every component in `text`. Returns the components that parsed
/// cleanly plus all diagnostics.
pub fn parse_networks(text: &str, file: &str) -> (Vec<NetworkArch>, Vec<Diagnostic>) {
    let mut p = Parser::new(text, file);
    let mut out = Vec::new();
    if p.at_eof() {
        p.error_here("expected `component`");
    }
    while !p.at_eof() {
        let before = p.diags.len();
        match component(&mut p) {
            Ok(arch) if p.diags[before..].iter().all(|d| !d.is_error()) => out.push(arch),
            Ok(_) => {}
            Err(Fail) => p.recover(TOP_LEVEL),
        }
    }
    (out, p.finish())
}

/// Parses a file expected to hold a single component.
pub fn parse_network(text: &str, file: &str) -> (Option<NetworkArch>, Vec<Diagnostic>) {
    let (mut nets, diags) = parse_networks(text, file);
    if crate::diag::has_errors(&diags) || nets.is_empty() {
        return (None, diags);
    }
    (Some(nets.swap_remove(0)), diags)
}

#[derive(Debug, Clone)]
enum RawArg {
    Int(i64),
    Real(f64),
    Str(String),
    Bool(bool),
    Ident(String),
    Pair(Box<RawArg>, Box<RawArg>),
}

#[derive(Debug, Clone)]
struct Invocation {
    name: String,
    args: Vec<(Option<String>, RawArg, Span)>,
    wildcard: bool,
    span: Span,
}

fn component(p: &mut Parser) -> PResult<NetworkArch> {
    let start = p.expect_kw("component")?;
    let (name, _) = p.ident("component name")?;
    let mut generics = Vec::new();
    if p.eat("<") {
        loop {
            let (g, span) = p.ident("generic parameter name")?;
            if p.eat(":") {
                let (kind, kspan) = p.ident("generic kind")?;
                if kind != "dim" {
                    p.error_at(
                        "E-GENERIC-KIND",
                        format!("generic `{g}` has kind `{kind}`; only `dim` (positive integer) generics are supported"),
                        kspan,
                    );
                }
            }
            if generics.iter().any(|x: &Generic| x.name == g) {
                p.error_at("E-DUPLICATE-NAME", format!("duplicate generic `{g}`"), span.clone());
            }
            generics.push(Generic { name: g, span });
            if !p.eat(",") {
                break;
            }
        }
        p.expect(">")?;
    }
    let block_depth = p.depth();
    p.expect("{")?;
    let mut inputs: Vec<NetPort> = Vec::new();
    let mut outputs: Vec<NetPort> = Vec::new();
    let mut raw_defs: Vec<(String, Vec<String>, Vec<Invocation>, Span)> = Vec::new();
    let mut raw_body: Option<(Vec<Invocation>, Span)> = None;

    while !p.at("}") {
        if p.at_eof() {
            return Err(p.error_here("expected `}` to close component"));
        }
        if p.eat_kw("ports") {
            loop {
                let dir_span = p.span();
                let (dir, _) = p.ident("`in` or `out`")?;
                let (pname, pspan) = p.ident("port name")?;
                p.expect(":")?;
                let ty = p.tensor_type()?;
                let port = NetPort { name: pname.clone(), ty, span: pspan.clone() };
                if inputs.iter().chain(outputs.iter()).any(|x| x.name == pname) {
                    p.error_at("E-DUPLICATE-NAME", format!("duplicate port `{pname}`"), pspan);
                }
                match dir.as_str() {
                    "in" => inputs.push(port),
                    "out" => outputs.push(port),
                    other => {
                        p.error_at("E-SYNTAX", format!("expected `in` or `out`, found `{other}`"), dir_span);
                        return Err(Fail);
                    }
                }
                if !p.eat(",") {
                    break;
                }
            }
            p.eat(";");
        } else if p.eat_kw("def") {
            let (dname, dspan) = p.ident("def block name")?;
            if BUILTIN_LAYERS.contains(&dname.as_str()) {
                p.error_at("E-DEF-NAME", format!("def block `{dname}` shadows a library layer"), dspan.clone());
            }
            if raw_defs.iter().any(|d| d.0 == dname) {
                p.error_at("E-DUPLICATE-NAME", format!("duplicate def block `{dname}`"), dspan.clone());
            }
            p.expect("(")?;
            let mut params = Vec::new();
            if !p.at(")") {
                params.push(p.ident("parameter name")?.0);
                while p.eat(",") {
                    params.push(p.ident("parameter name")?.0);
                }
            }
            p.expect(")")?;
            p.expect("{")?;
            let chain = layer_chain(p)?;
            p.expect("}")?;
            raw_defs.push((dname, params, chain, dspan));
        } else if p.at_kw("net") {
            let nspan = p.bump().span;
            p.expect("{")?;
            let chain = layer_chain(p)?;
            p.expect("}")?;
            if raw_body.is_some() {
                p.error_at("E-SYNTAX", "component declares more than one `net` block", nspan.clone());
            }
            raw_body = Some((chain, nspan));
        } else {
            let found = p.peek().describe();
            return Err(p.error_here(format!("expected `ports`, `def`, `net` or `}}`, found {found}")));
        }
    }
    let end = p.expect("}")?;
    debug_assert_eq!(p.depth(), block_depth);
    let span = start.to(&end);

    let def_names: Vec<String> = raw_defs.iter().map(|d| d.0.clone()).collect();
    let mut defs = Vec::new();
    for (dname, params, chain, dspan) in raw_defs {
        let body = chain.into_iter().map(|inv| classify(p, inv, &def_names)).collect::<PResult<Vec<_>>>()?;
        defs.push(DefBlock { name: dname, params, body, span: dspan });
    }

    let Some((mut chain, body_span)) = raw_body else {
        p.error_at("E-SYNTAX", format!("component `{name}` has no `net` block"), span);
        return Err(Fail);
    };
    if chain.len() < 2 {
        p.error_at("E-SYNTAX", "net body must lead from an input port to an output port", body_span);
        return Err(Fail);
    }
    let sink_inv = chain.pop().expect("len >= 2");
    let source_inv = chain.remove(0);
    let source = port_ref(p, source_inv, &inputs, "input")?;
    let sink = port_ref(p, sink_inv, &outputs, "output")?;
    let layers = chain.into_iter().map(|inv| classify(p, inv, &def_names)).collect::<PResult<Vec<_>>>()?;

    Ok(NetworkArch {
        name,
        generics,
        inputs,
        outputs,
        defs,
        body: NetBody { source, layers, sink, span: body_span },
        span,
    })
}

fn port_ref(p: &mut Parser, inv: Invocation, ports: &[NetPort], what: &str) -> PResult<String> {
    if !inv.args.is_empty() || !ports.iter().any(|x| x.name == inv.name) {
        p.error_at(
            "E-NET-ENDPOINT",
            format!("net body must {} declared {what} port, found `{}`", if what == "input" { "start at a" } else { "end at a" }, inv.name),
            inv.span,
        );
        return Err(Fail);
    }
    Ok(inv.name)
}

fn layer_chain(p: &mut Parser) -> PResult<Vec<Invocation>> {
    let mut out = vec![invocation(p)?];
    while p.eat("->") {
        out.push(invocation(p)?);
    }
    Ok(out)
}

fn invocation(p: &mut Parser) -> PResult<Invocation> {
    if p.at("?") {
        let span = p.bump().span;
        return Ok(Invocation { name: "?".into(), args: Vec::new(), wildcard: true, span });
    }
    let (name, start) = p.ident("layer")?;
    let mut args = Vec::new();
    if p.eat("(") {
        if !p.at(")") {
            loop {
                let aspan = p.span();
                let key = if matches!(p.peek(), Tok::Ident(_)) && matches!(p.peek_nth(1), Tok::Punct("=")) {
                    let k = p.ident("argument name")?.0;
                    p.bump();
                    Some(k)
                } else {
                    None
                };
                let v = raw_arg(p, true)?;
                args.push((key, v, aspan));
                if !p.eat(",") {
                    break;
                }
            }
        }
        p.expect(")")?;
    }
    let wildcard = WILDCARD_LAYERS.contains(&name.as_str());
    Ok(Invocation { name, args, wildcard, span: start.to(&p.prev_span()) })
}

fn raw_arg(p: &mut Parser, allow_pair: bool) -> PResult<RawArg> {
    match p.peek().clone() {
        Tok::Int(v) => {
            p.bump();
            Ok(RawArg::Int(v))
        }
        Tok::Real(v) => {
            p.bump();
            Ok(RawArg::Real(v))
        }
        Tok::Str(s) => {
            p.bump();
            Ok(RawArg::Str(s))
        }
        Tok::Ident(s) => {
            p.bump();
            Ok(match s.as_str() {
                "true" => RawArg::Bool(true),
                "false" => RawArg::Bool(false),
                _ => RawArg::Ident(s),
            })
        }
        Tok::Punct("(") if allow_pair => {
            p.bump();
            let a = raw_arg(p, false)?;
            p.expect(",")?;
            let b = raw_arg(p, false)?;
            p.expect(")")?;
            Ok(RawArg::Pair(Box::new(a), Box::new(b)))
        }
        _ => {
            let found = p.peek().describe();
            Err(p.error_here(format!("expected layer argument, found {found}")))
        }
    }
}

struct ArgSlots<'a> {
    layer: &'a str,
    names: &'a [&'a str],
    values: Vec<Option<(RawArg, Span)>>,
}

impl<'a> ArgSlots<'a> {
    fn bind(p: &mut Parser, inv: &'a Invocation, names: &'a [&'a str]) -> PResult<ArgSlots<'a>> {
        let mut values: Vec<Option<(RawArg, Span)>> = vec![None; names.len()];
        let mut next = 0;
        for (key, v, span) in &inv.args {
            let idx = match key {
                Some(k) => match names.iter().position(|n| n == k) {
                    Some(i) => i,
                    None => {
                        p.error_at("E-LAYER-ARGS", format!("{} has no argument `{k}`", inv.name), span.clone());
                        return Err(Fail);
                    }
                },
                None => {
                    while next < values.len() && values[next].is_some() {
                        next += 1;
                    }
                    next
                }
            };
            if idx >= values.len() {
                p.error_at(
                    "E-LAYER-ARGS",
                    format!("{} takes at most {} argument(s)", inv.name, names.len()),
                    span.clone(),
                );
                return Err(Fail);
            }
            if values[idx].is_some() {
                p.error_at("E-LAYER-ARGS", format!("argument `{}` given twice", names[idx]), span.clone());
                return Err(Fail);
            }
            values[idx] = Some((v.clone(), span.clone()));
        }
        Ok(ArgSlots { layer: &inv.name, names, values })
    }

    fn take(&mut self, i: usize) -> Option<(RawArg, Span)> {
        self.values[i].take()
    }

    fn required(&mut self, p: &mut Parser, i: usize, span: &Span) -> PResult<(RawArg, Span)> {
        match self.take(i) {
            Some(v) => Ok(v),
            None => {
                p.error_at(
                    "E-LAYER-ARGS",
                    format!("{} requires argument `{}`", self.layer, self.names[i]),
                    span.clone(),
                );
                Err(Fail)
            }
        }
    }
}

fn to_dim(p: &mut Parser, arg: RawArg, span: &Span, what: &str) -> PResult<Dim> {
    match arg {
        RawArg::Int(v) if v > 0 => Ok(Dim::Lit(v as u64)),
        RawArg::Ident(s) => Ok(Dim::Sym(s)),
        RawArg::Int(v) => {
            p.error_at("E-LAYER-ARGS", format!("`{what}` must be positive, got {v}"), span.clone());
            Err(Fail)
        }
        _ => {
            p.error_at("E-LAYER-ARGS", format!("`{what}` expects an integer or parameter name"), span.clone());
            Err(Fail)
        }
    }
}

fn to_pair(p: &mut Parser, arg: RawArg, span: &Span, what: &str) -> PResult<(Dim, Dim)> {
    match arg {
        RawArg::Pair(a, b) => Ok((to_dim(p, *a, span, what)?, to_dim(p, *b, span, what)?)),
        other => {
            let d = to_dim(p, other, span, what)?;
            Ok((d.clone(), d))
        }
    }
}

fn to_token(p: &mut Parser, arg: RawArg, span: &Span, allowed: &[&str], what: &str) -> PResult<String> {
    match arg {
        RawArg::Ident(s) if allowed.contains(&s.as_str()) => Ok(s),
        _ => {
            p.error_at("E-LAYER-ARGS", format!("`{what}` must be one of {}", allowed.join(", ")), span.clone());
            Err(Fail)
        }
    }
}

fn classify(p: &mut Parser, inv: Invocation, defs: &[String]) -> PResult<BodyItem> {
    if inv.wildcard {
        p.error_at(
            "E-WILDCARD",
            format!("wildcard layer `{}` is not supported; architecture search is out of scope", inv.name),
            inv.span.clone(),
        );
        return Err(Fail);
    }
    let span = inv.span.clone();
    let no_args = |p: &mut Parser, inv: &Invocation, kind: LayerKind| -> PResult<BodyItem> {
        if !inv.args.is_empty() {
            p.error_at("E-LAYER-ARGS", format!("{} takes no arguments", inv.name), inv.span.clone());
            return Err(Fail);
        }
        Ok(BodyItem::Layer(LayerSpec { kind, span: inv.span.clone() }))
    };
    let kind = match inv.name.as_str() {
        "Flatten" => return no_args(p, &inv, LayerKind::Flatten),
        "Relu" => return no_args(p, &inv, LayerKind::Relu),
        "Sigmoid" => return no_args(p, &inv, LayerKind::Sigmoid),
        "Tanh" => return no_args(p, &inv, LayerKind::Tanh),
        "Softmax" => return no_args(p, &inv, LayerKind::Softmax),
        "Convolution" => {
            let mut a = ArgSlots::bind(p, &inv, &["kernel", "channels", "stride", "padding"])?;
            let (k, ks) = a.required(p, 0, &span)?;
            let kernel = to_pair(p, k, &ks, "kernel")?;
            let (c, cs) = a.required(p, 1, &span)?;
            let channels = to_dim(p, c, &cs, "channels")?;
            let stride = match a.take(2) {
                Some((s, ss)) => to_pair(p, s, &ss, "stride")?,
                None => (Dim::Lit(1), Dim::Lit(1)),
            };
            let padding = match a.take(3) {
                Some((v, vs)) => match to_token(p, v, &vs, &["valid", "same"], "padding")?.as_str() {
                    "same" => Padding::Same,
                    _ => Padding::Valid,
                },
                None => Padding::Valid,
            };
            LayerKind::Convolution { kernel, channels, stride, padding }
        }
        "Pooling" => {
            let mut a = ArgSlots::bind(p, &inv, &["kind", "window", "stride"])?;
            let (k, ks) = a.required(p, 0, &span)?;
            let kind = match to_token(p, k, &ks, &["max", "avg"], "kind")?.as_str() {
                "avg" => PoolKind::Avg,
                _ => PoolKind::Max,
            };
            let (w, ws) = a.required(p, 1, &span)?;
            let window = to_pair(p, w, &ws, "window")?;
            let stride = match a.take(2) {
                Some((s, ss)) => to_pair(p, s, &ss, "stride")?,
                None => window.clone(),
            };
            LayerKind::Pooling { kind, window, stride }
        }
        "FullyConnected" => {
            let mut a = ArgSlots::bind(p, &inv, &["units"])?;
            let (u, us) = a.required(p, 0, &span)?;
            LayerKind::FullyConnected { units: to_dim(p, u, &us, "units")? }
        }
        "Dropout" => {
            let mut a = ArgSlots::bind(p, &inv, &["rate"])?;
            let (r, rs) = a.required(p, 0, &span)?;
            let rate = match r {
                RawArg::Real(v) => v,
                RawArg::Int(v) => v as f64,
                _ => {
                    p.error_at("E-LAYER-ARGS", "`rate` expects a number", rs);
                    return Err(Fail);
                }
            };
            if !(0.0..=1.0).contains(&rate) {
                p.error_at("E-LAYER-ARGS", format!("Dropout rate {rate} outside [0, 1]"), rs);
                return Err(Fail);
            }
            LayerKind::Dropout { rate }
        }
        "ImportPretrained" => {
            let mut a = ArgSlots::bind(p, &inv, &["archive", "frozen"])?;
            let (r, rs) = a.required(p, 0, &span)?;
            let RawArg::Str(archive) = r else {
                p.error_at("E-LAYER-ARGS", "`archive` expects a string path", rs);
                return Err(Fail);
            };
            let frozen = match a.take(1) {
                Some((RawArg::Bool(b), _)) => b,
                Some((_, fs)) => {
                    p.error_at("E-LAYER-ARGS", "`frozen` expects `true` or `false`", fs);
                    return Err(Fail);
                }
                None => true,
            };
            LayerKind::ImportPretrained { archive, frozen }
        }
        name if defs.iter().any(|d| d == name) => {
            let mut args = Vec::new();
            for (key, v, s) in inv.args {
                args.push(DefArg { name: key, value: to_dim(p, v, &s, "def argument")? });
            }
            return Ok(BodyItem::Call(DefCall { name: inv.name, args, span }));
        }
        other => {
            let mut d = Diagnostic::error("E-UNKNOWN-LAYER", format!("unknown layer `{other}`"), span);
            let candidates = BUILTIN_LAYERS.iter().copied().chain(defs.iter().map(String::as_str));
            if let Some(s) = crate::model::schema::nearest_key(other, candidates) {
                d = d.with_hint(format!("did you mean `{s}`?"));
            }
            p.diags.push(d);
            return Err(Fail);
        }
    };
    Ok(BodyItem::Layer(LayerSpec { kind, span }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ElementKind, TensorType};

    pub(crate) const DETECTOR: &str = r#"
component Detector<classes> {
    ports
        in image: Q(0:255)^{28,28},
        out digit: Q(0:1)^{classes};

    def conv(kernel, channels) {
        Convolution(kernel=(kernel,kernel), channels=channels) -> Relu -> Pooling(max, window=(2,2), stride=(2,2))
    }

    net {
        image -> conv(5, 20) -> conv(5, 50) -> Flatten -> FullyConnected(500) -> Relu
              -> FullyConnected(classes) -> Softmax -> digit
    }
}
"#;

    #[test]
    fn parses_detector() {
        let (arch, diags) = parse_network(DETECTOR, "detector.nal");
        assert!(diags.is_empty(), "{diags:?}");
        let arch = arch.unwrap();
        assert_eq!(arch.name, "Detector");
        assert_eq!(arch.generics.len(), 1);
        assert_eq!(arch.generics[0].name, "classes");
        let image: &TensorType = &arch.input("image").unwrap().ty;
        assert_eq!(image.range.kind, ElementKind::Real);
        assert_eq!((image.range.lo, image.range.hi), (0.0, 255.0));
        assert_eq!(image.concrete_dims(), Some(vec![28, 28]));
        assert_eq!(arch.output("digit").unwrap().ty.dims, vec![Dim::Sym("classes".into())]);
        assert_eq!(arch.body.layers.len(), 7);
        assert!(matches!(&arch.body.layers[0], BodyItem::Call(c) if c.name == "conv"));
        assert_eq!(arch.defs[0].body.len(), 3);
    }

    #[test]
    fn empty_file() {
        let (arch, diags) = parse_network("", "e.nal");
        assert!(arch.is_none());
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("expected `component`"));
    }

    #[test]
    fn missing_closing_brace_reports_once_at_eof() {
        let src = DETECTOR.trim_end().trim_end_matches('}');
        let (arch, diags) = parse_network(src, "d.nal");
        assert!(arch.is_none());
        assert_eq!(diags.len(), 1, "{diags:?}");
        assert_eq!(diags[0].span.start.offset, src.len());
    }

    #[test]
    fn recovers_to_next_component() {
        let src = "component A { ports in x: Q(0:1)^{2}, out y: Q(0:1)^{2}; net { x -> Bogus(1) -> y } }\n\
                   component B { ports in x: Q(0:1)^{2}, out y: Q(0:1)^{2}; net { x -> Relu -> y } }\n\
                   component C { ports in x: Q(0:1)^{2}, out y: Q(0:1)^{3}; net { x -> FullyConnected(units=0) -> y } }";
        let (nets, diags) = parse_networks(src, "m.nal");
        assert_eq!(nets.iter().map(|n| n.name.as_str()).collect::<Vec<_>>(), ["B"]);
        let codes: Vec<_> = diags.iter().map(|d| d.code).collect();
        assert_eq!(codes, ["E-UNKNOWN-LAYER", "E-LAYER-ARGS"]);
    }

    #[test]
    fn wildcard_layers_rejected() {
        for layer in ["?", "AdaNet(3)"] {
            let src = format!("component W {{ ports in x: Q(0:1)^{{4}}, out y: Q(0:1)^{{4}}; net {{ x -> {layer} -> y }} }}");
            let (_, diags) = parse_network(&src, "w.nal");
            assert_eq!(diags[0].code, "E-WILDCARD", "{diags:?}");
        }
    }

    #[test]
    fn string_generics_rejected() {
        let src = "component G<name: string> { ports in x: Q(0:1)^{4}, out y: Q(0:1)^{4}; net { x -> y } }";
        let (_, diags) = parse_network(src, "g.nal");
        assert_eq!(diags[0].code, "E-GENERIC-KIND");
    }

    #[test]
    fn layer_defaults() {
        let src = "component L { ports in x: Q(0:1)^{8,8,1}, out y: Q(0:1)^{4,4,3};
                   net { x -> Convolution(3, 3, padding=same) -> Pooling(avg, 2) -> Dropout(0.5) -> y } }";
        let (arch, diags) = parse_network(src, "l.nal");
        assert!(diags.is_empty(), "{diags:?}");
        let kinds: Vec<_> = arch.unwrap().layers().map(|l| l.kind.clone()).collect();
        assert_eq!(
            kinds[0],
            LayerKind::Convolution {
                kernel: (Dim::Lit(3), Dim::Lit(3)),
                channels: Dim::Lit(3),
                stride: (Dim::Lit(1), Dim::Lit(1)),
                padding: Padding::Same
            }
        );
        assert_eq!(
            kinds[1],
            LayerKind::Pooling {
                kind: PoolKind::Avg,
                window: (Dim::Lit(2), Dim::Lit(2)),
                stride: (Dim::Lit(2), Dim::Lit(2))
            }
        );
        assert_eq!(kinds[2], LayerKind::Dropout { rate: 0.5 });
    }

    #[test]
    fn body_must_use_port_names() {
        let src = "component P { ports in x: Q(0:1)^{4}, out y: Q(0:1)^{4}; net { Relu -> y } }";
        let (_, diags) = parse_network(src, "p.nal");
        assert_eq!(diags[0].code, "E-NET-ENDPOINT");
    }
}
