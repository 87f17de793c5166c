//! Neural network architectures: layers, def-block templates, generic
//! parameters, and their elaboration into flat concrete pipelines.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use super::tensor::{Dim, TensorType};
use crate::diag::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolKind {
    Max,
    Avg,
}

impl PoolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PoolKind::Max => "max",
            PoolKind::Avg => "avg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Padding {
    Valid,
    Same,
}

impl Padding {
    pub fn as_str(self) -> &'static str {
        match self {
            Padding::Valid => "valid",
            Padding::Same => "same",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Convolution { kernel: (Dim, Dim), channels: Dim, stride: (Dim, Dim), padding: Padding },
    Pooling { kind: PoolKind, window: (Dim, Dim), stride: (Dim, Dim) },
    FullyConnected { units: Dim },
    Flatten,
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
    Dropout { rate: f64 },
    ImportPretrained { archive: String, frozen: bool },
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Convolution { .. } => "Convolution",
            LayerKind::Pooling { .. } => "Pooling",
            LayerKind::FullyConnected { .. } => "FullyConnected",
            LayerKind::Flatten => "Flatten",
            LayerKind::Relu => "Relu",
            LayerKind::Sigmoid => "Sigmoid",
            LayerKind::Tanh => "Tanh",
            LayerKind::Softmax => "Softmax",
            LayerKind::Dropout { .. } => "Dropout",
            LayerKind::ImportPretrained { .. } => "ImportPretrained",
        }
    }

    pub fn is_activation(&self) -> bool {
        matches!(self, LayerKind::Relu | LayerKind::Sigmoid | LayerKind::Tanh | LayerKind::Softmax)
    }

    fn dims_mut(&mut self) -> Vec<&mut Dim> {
        match self {
            LayerKind::Convolution { kernel, channels, stride, .. } => {
                vec![&mut kernel.0, &mut kernel.1, channels, &mut stride.0, &mut stride.1]
            }
            LayerKind::Pooling { window, stride, .. } => {
                vec![&mut window.0, &mut window.1, &mut stride.0, &mut stride.1]
            }
            LayerKind::FullyConnected { units } => vec![units],
            _ => Vec::new(),
        }
    }

    pub fn dims(&self) -> Vec<&Dim> {
        match self {
            LayerKind::Convolution { kernel, channels, stride, .. } => {
                vec![&kernel.0, &kernel.1, channels, &stride.0, &stride.1]
            }
            LayerKind::Pooling { window, stride, .. } => vec![&window.0, &window.1, &stride.0, &stride.1],
            LayerKind::FullyConnected { units } => vec![units],
            _ => Vec::new(),
        }
    }

    pub fn is_concrete(&self) -> bool {
        self.dims().iter().all(|d| d.is_concrete())
    }

    /// Checks argument invariants on concrete values.
    pub fn check(&self) -> Result<(), String> {
        if let LayerKind::Dropout { rate } = self {
            if !(0.0..=1.0).contains(rate) {
                return Err(format!("Dropout rate {rate} outside [0, 1]"));
            }
        }
        if self.dims().iter().any(|d| matches!(d, Dim::Lit(0))) {
            return Err(format!("{} arguments must be positive", self.name()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub span: Span,
}

impl LayerSpec {
    pub fn new(kind: LayerKind) -> Self {
        LayerSpec { kind, span: Span::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefArg {
    pub name: Option<String>,
    pub value: Dim,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefCall {
    pub name: String,
    pub args: Vec<DefArg>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BodyItem {
    Layer(LayerSpec),
    Call(DefCall),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefBlock {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<BodyItem>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generic {
    pub name: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetPort {
    pub name: String,
    pub ty: TensorType,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetBody {
    pub source: String,
    pub layers: Vec<BodyItem>,
    pub sink: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkArch {
    pub name: String,
    pub generics: Vec<Generic>,
    pub inputs: Vec<NetPort>,
    pub outputs: Vec<NetPort>,
    pub defs: Vec<DefBlock>,
    pub body: NetBody,
    pub span: Span,
}

impl NetworkArch {
    pub fn input(&self, name: &str) -> Option<&NetPort> {
        self.inputs.iter().find(|p| p.name == name)
    }

    pub fn output(&self, name: &str) -> Option<&NetPort> {
        self.outputs.iter().find(|p| p.name == name)
    }

    pub fn def(&self, name: &str) -> Option<&DefBlock> {
        self.defs.iter().find(|d| d.name == name)
    }

    pub fn is_generic_free(&self) -> bool {
        self.generics.is_empty()
    }

    /// True when the body holds only primitive layers.
    pub fn is_flat(&self) -> bool {
        self.body.layers.iter().all(|i| matches!(i, BodyItem::Layer(_)))
    }

    /// Primitive layers of a flat body.
    pub fn layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.body.layers.iter().filter_map(|i| match i {
            BodyItem::Layer(l) => Some(l),
            BodyItem::Call(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ElaborationError {
    #[error("no binding for generic parameter `{0}`")]
    MissingBinding(String),
    #[error("generic parameter `{0}` must be bound to a positive integer, got {1}")]
    NonPositiveBinding(String, i64),
    #[error("`{0}` is not a generic parameter of this component")]
    UnknownGeneric(String),
    #[error("cyclic def-block reference: {}", .0.join(" -> "))]
    CyclicDefBlock(Vec<String>),
    #[error("unknown def block `{0}`")]
    UnknownDefBlock(String),
    #[error("def block `{name}` expects {expected} argument(s), got {found}")]
    DefArity { name: String, expected: usize, found: usize },
    #[error("def block `{name}` has no parameter `{param}`")]
    UnknownDefParam { name: String, param: String },
    #[error("unbound symbol `{0}` in layer arguments")]
    UnboundSymbol(String),
    #[error("{0}")]
    InvalidLayer(String),
}

fn substitute_dim(d: &mut Dim, env: &HashMap<&str, u64>) {
    if let Dim::Sym(s) = d {
        if let Some(v) = env.get(s.as_str()) {
            *d = Dim::Lit(*v);
        }
    }
}

fn substitute_items(items: &mut [BodyItem], env: &HashMap<&str, u64>) {
    for item in items {
        match item {
            BodyItem::Layer(l) => {
                for d in l.kind.dims_mut() {
                    substitute_dim(d, env);
                }
            }
            BodyItem::Call(c) => {
                for a in &mut c.args {
                    substitute_dim(&mut a.value, env);
                }
            }
        }
    }
}

/// Binds every generic parameter of `arch` to a positive integer and
/// substitutes it in ports, def blocks and body. Def-block parameters that
/// shadow a generic keep their symbolic references inside that block.
pub fn resolve_generics(
    arch: &NetworkArch,
    bindings: &BTreeMap<String, i64>,
) -> Result<NetworkArch, ElaborationError> {
    for name in bindings.keys() {
        if !arch.generics.iter().any(|g| &g.name == name) {
            return Err(ElaborationError::UnknownGeneric(name.clone()));
        }
    }
    let mut env: HashMap<&str, u64> = HashMap::new();
    for g in &arch.generics {
        let v = *bindings.get(&g.name).ok_or_else(|| ElaborationError::MissingBinding(g.name.clone()))?;
        if v <= 0 {
            return Err(ElaborationError::NonPositiveBinding(g.name.clone(), v));
        }
        env.insert(g.name.as_str(), v as u64);
    }

    let mut out = arch.clone();
    out.generics.clear();
    for port in out.inputs.iter_mut().chain(out.outputs.iter_mut()) {
        for d in &mut port.ty.dims {
            substitute_dim(d, &env);
        }
    }
    for def in &mut out.defs {
        let local: HashMap<&str, u64> =
            env.iter().filter(|(k, _)| !def.params.iter().any(|p| p == *k)).map(|(k, v)| (*k, *v)).collect();
        substitute_items(&mut def.body, &local);
    }
    substitute_items(&mut out.body.layers, &env);
    Ok(out)
}

/// Inlines every def-block call so the body holds only primitive layers,
/// preserving dataflow order. Def blocks are kept as declared.
pub fn expand_def_blocks(arch: &NetworkArch) -> Result<NetworkArch, ElaborationError> {
    let mut out = arch.clone();
    let mut stack = Vec::new();
    out.body.layers = expand_items(arch, &arch.body.layers, &HashMap::new(), &mut stack)?;
    for item in &out.body.layers {
        if let BodyItem::Layer(l) = item {
            if let Some(Dim::Sym(s)) = l.kind.dims().into_iter().find(|d| !d.is_concrete()) {
                if !arch.generics.iter().any(|g| &g.name == s) {
                    return Err(ElaborationError::UnboundSymbol(s.clone()));
                }
            }
        }
    }
    Ok(out)
}

fn expand_items(
    arch: &NetworkArch,
    items: &[BodyItem],
    env: &HashMap<&str, u64>,
    stack: &mut Vec<String>,
) -> Result<Vec<BodyItem>, ElaborationError> {
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        match item {
            BodyItem::Layer(l) => {
                let mut l = l.clone();
                for d in l.kind.dims_mut() {
                    substitute_dim(d, env);
                }
                out.push(BodyItem::Layer(l));
            }
            BodyItem::Call(call) => {
                let def = arch.def(&call.name).ok_or_else(|| ElaborationError::UnknownDefBlock(call.name.clone()))?;
                if let Some(pos) = stack.iter().position(|n| n == &call.name) {
                    let mut chain = stack[pos..].to_vec();
                    chain.push(call.name.clone());
                    return Err(ElaborationError::CyclicDefBlock(chain));
                }
                let values = bind_def_args(def, call, env)?;
                let inner: HashMap<&str, u64> =
                    def.params.iter().map(String::as_str).zip(values.iter().copied()).collect();
                stack.push(call.name.clone());
                let expanded = expand_items(arch, &def.body, &inner, stack)?;
                stack.pop();
                out.extend(expanded);
            }
        }
    }
    Ok(out)
}

fn bind_def_args(def: &DefBlock, call: &DefCall, env: &HashMap<&str, u64>) -> Result<Vec<u64>, ElaborationError> {
    if call.args.len() != def.params.len() {
        return Err(ElaborationError::DefArity {
            name: def.name.clone(),
            expected: def.params.len(),
            found: call.args.len(),
        });
    }
    let mut slots: Vec<Option<u64>> = vec![None; def.params.len()];
    let mut next_positional = 0;
    for arg in &call.args {
        let mut value = arg.value.clone();
        substitute_dim(&mut value, env);
        let v = match value {
            Dim::Lit(v) => v,
            Dim::Sym(s) => return Err(ElaborationError::UnboundSymbol(s)),
        };
        let idx = match &arg.name {
            Some(n) => def.params.iter().position(|p| p == n).ok_or_else(|| ElaborationError::UnknownDefParam {
                name: def.name.clone(),
                param: n.clone(),
            })?,
            None => {
                while next_positional < slots.len() && slots[next_positional].is_some() {
                    next_positional += 1;
                }
                next_positional
            }
        };
        if idx >= slots.len() || slots[idx].is_some() {
            return Err(ElaborationError::DefArity {
                name: def.name.clone(),
                expected: def.params.len(),
                found: call.args.len(),
            });
        }
        slots[idx] = Some(v);
    }
    Ok(slots.into_iter().map(|s| s.expect("every slot bound")).collect())
}

/// Resolves generics then expands def blocks, checking layer argument
/// invariants on the result.
pub fn elaborate(arch: &NetworkArch, bindings: &BTreeMap<String, i64>) -> Result<NetworkArch, ElaborationError> {
    let flat = expand_def_blocks(&resolve_generics(arch, bindings)?)?;
    for layer in flat.layers() {
        layer.kind.check().map_err(ElaborationError::InvalidLayer)?;
    }
    Ok(flat)
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerKind::Convolution { kernel, channels, stride, padding } => write!(
                f,
                "Convolution(kernel=({},{}), channels={}, stride=({},{}), padding={})",
                kernel.0,
                kernel.1,
                channels,
                stride.0,
                stride.1,
                padding.as_str()
            ),
            LayerKind::Pooling { kind, window, stride } => write!(
                f,
                "Pooling({}, window=({},{}), stride=({},{}))",
                kind.as_str(),
                window.0,
                window.1,
                stride.0,
                stride.1
            ),
            LayerKind::FullyConnected { units } => write!(f, "FullyConnected(units={units})"),
            LayerKind::Dropout { rate } => write!(f, "Dropout(rate={rate:?})"),
            LayerKind::ImportPretrained { archive, frozen } => {
                write!(f, "ImportPretrained(archive={}, frozen={frozen})", crate::syntax::quote(archive))
            }
            other => f.write_str(other.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tensor::{ElementKind, ElementRange};

    fn sym(s: &str) -> Dim {
        Dim::Sym(s.into())
    }

    fn lit(v: u64) -> Dim {
        Dim::Lit(v)
    }

    fn port(name: &str, dims: Vec<Dim>) -> NetPort {
        NetPort {
            name: name.into(),
            ty: TensorType::new(ElementRange::new(ElementKind::Real, 0.0, 1.0), dims),
            span: Span::default(),
        }
    }

    fn layer(kind: LayerKind) -> BodyItem {
        BodyItem::Layer(LayerSpec::new(kind))
    }

    fn call(name: &str, args: &[Dim]) -> BodyItem {
        BodyItem::Call(DefCall {
            name: name.into(),
            args: args.iter().map(|d| DefArg { name: None, value: d.clone() }).collect(),
            span: Span::default(),
        })
    }

    fn conv_block() -> DefBlock {
        DefBlock {
            name: "conv".into(),
            params: vec!["k".into(), "c".into()],
            body: vec![
                layer(LayerKind::Convolution {
                    kernel: (sym("k"), sym("k")),
                    channels: sym("c"),
                    stride: (lit(1), lit(1)),
                    padding: Padding::Valid,
                }),
                layer(LayerKind::Relu),
                layer(LayerKind::Pooling { kind: PoolKind::Max, window: (lit(2), lit(2)), stride: (lit(2), lit(2)) }),
            ],
            span: Span::default(),
        }
    }

    fn detector() -> NetworkArch {
        NetworkArch {
            name: "Detector".into(),
            generics: vec![Generic { name: "classes".into(), span: Span::default() }],
            inputs: vec![port("image", vec![lit(28), lit(28)])],
            outputs: vec![port("digit", vec![sym("classes")])],
            defs: vec![conv_block()],
            body: NetBody {
                source: "image".into(),
                layers: vec![
                    call("conv", &[lit(5), lit(20)]),
                    call("conv", &[lit(5), lit(50)]),
                    layer(LayerKind::Flatten),
                    layer(LayerKind::FullyConnected { units: sym("classes") }),
                    layer(LayerKind::Softmax),
                ],
                sink: "digit".into(),
                span: Span::default(),
            },
            span: Span::default(),
        }
    }

    fn bind(pairs: &[(&str, i64)]) -> BTreeMap<String, i64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn classes_binding_sets_output_dims() {
        let arch = resolve_generics(&detector(), &bind(&[("classes", 10)])).unwrap();
        assert_eq!(arch.output("digit").unwrap().ty.concrete_dims(), Some(vec![10]));
        assert!(arch.generics.is_empty());
        match &arch.body.layers[3] {
            BodyItem::Layer(l) => assert_eq!(l.kind, LayerKind::FullyConnected { units: lit(10) }),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn no_generics_is_identity() {
        let mut arch = detector();
        arch.generics.clear();
        arch.outputs[0].ty.dims = vec![lit(10)];
        arch.body.layers[3] = layer(LayerKind::FullyConnected { units: lit(10) });
        assert_eq!(resolve_generics(&arch, &BTreeMap::new()).unwrap(), arch);
    }

    #[test]
    fn binding_errors() {
        assert_eq!(
            resolve_generics(&detector(), &bind(&[("classes", 0)])),
            Err(ElaborationError::NonPositiveBinding("classes".into(), 0))
        );
        assert_eq!(
            resolve_generics(&detector(), &BTreeMap::new()),
            Err(ElaborationError::MissingBinding("classes".into()))
        );
        assert_eq!(
            resolve_generics(&detector(), &bind(&[("classes", 3), ("other", 1)])),
            Err(ElaborationError::UnknownGeneric("other".into()))
        );
    }

    #[test]
    fn resolve_is_idempotent_once_concrete() {
        let once = resolve_generics(&detector(), &bind(&[("classes", 10)])).unwrap();
        assert_eq!(resolve_generics(&once, &BTreeMap::new()).unwrap(), once);
    }

    #[test]
    fn def_block_used_twice_expands_to_six_layers() {
        let arch = resolve_generics(&detector(), &bind(&[("classes", 10)])).unwrap();
        let mut only_convs = arch.clone();
        only_convs.body.layers.truncate(2);
        let flat = expand_def_blocks(&only_convs).unwrap();
        assert_eq!(flat.body.layers.len(), 6);
        assert!(flat.is_flat());
        let flat_all = expand_def_blocks(&arch).unwrap();
        let names: Vec<_> = flat_all.layers().map(|l| l.kind.name()).collect();
        assert_eq!(
            names,
            [
                "Convolution",
                "Relu",
                "Pooling",
                "Convolution",
                "Relu",
                "Pooling",
                "Flatten",
                "FullyConnected",
                "Softmax"
            ]
        );
        match &flat_all.body.layers[3] {
            BodyItem::Layer(LayerSpec { kind: LayerKind::Convolution { channels, .. }, .. }) => {
                assert_eq!(channels, &lit(50))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn expansion_is_idempotent() {
        let arch = resolve_generics(&detector(), &bind(&[("classes", 10)])).unwrap();
        let once = expand_def_blocks(&arch).unwrap();
        assert_eq!(expand_def_blocks(&once).unwrap(), once);
    }

    #[test]
    fn cyclic_and_unknown_def_blocks() {
        let mut arch = detector();
        arch.generics.clear();
        arch.defs = vec![
            DefBlock { name: "a".into(), params: vec![], body: vec![call("b", &[])], span: Span::default() },
            DefBlock { name: "b".into(), params: vec![], body: vec![call("a", &[])], span: Span::default() },
        ];
        arch.body.layers = vec![call("a", &[])];
        assert_eq!(
            expand_def_blocks(&arch),
            Err(ElaborationError::CyclicDefBlock(vec!["a".into(), "b".into(), "a".into()]))
        );
        arch.body.layers = vec![call("zzz", &[])];
        assert_eq!(expand_def_blocks(&arch), Err(ElaborationError::UnknownDefBlock("zzz".into())));
    }

    #[test]
    fn named_def_args_and_arity() {
        let mut arch = resolve_generics(&detector(), &bind(&[("classes", 4)])).unwrap();
        arch.body.layers[0] = BodyItem::Call(DefCall {
            name: "conv".into(),
            args: vec![DefArg { name: Some("c".into()), value: lit(8) }, DefArg { name: None, value: lit(3) }],
            span: Span::default(),
        });
        let flat = expand_def_blocks(&arch).unwrap();
        match &flat.body.layers[0] {
            BodyItem::Layer(LayerSpec { kind: LayerKind::Convolution { kernel, channels, .. }, .. }) => {
                assert_eq!((kernel.0.clone(), channels.clone()), (lit(3), lit(8)));
            }
            other => panic!("unexpected {other:?}"),
        }
        arch.body.layers[0] = call("conv", &[lit(3)]);
        assert!(matches!(expand_def_blocks(&arch), Err(ElaborationError::DefArity { .. })));
    }

    #[test]
    fn def_param_shadows_generic() {
        let mut arch = detector();
        arch.defs[0].params = vec!["k".into(), "classes".into()];
        arch.defs[0].body[0] = layer(LayerKind::Convolution {
            kernel: (sym("k"), sym("k")),
            channels: sym("classes"),
            stride: (lit(1), lit(1)),
            padding: Padding::Valid,
        });
        let resolved = resolve_generics(&arch, &bind(&[("classes", 10)])).unwrap();
        let flat = expand_def_blocks(&resolved).unwrap();
        match &flat.body.layers[3] {
            BodyItem::Layer(LayerSpec { kind: LayerKind::Convolution { channels, .. }, .. }) => {
                assert_eq!(channels, &lit(50))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn elaborate_checks_dropout_rate() {
        let mut arch = detector();
        arch.body.layers.push(layer(LayerKind::Dropout { rate: 1.5 }));
        assert!(matches!(elaborate(&arch, &bind(&[("classes", 2)])), Err(ElaborationError::InvalidLayer(_))));
    }
}
