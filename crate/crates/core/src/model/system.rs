//! Things (actors with ports, messages, properties, an optional ML block and
//! a flat statechart) and pipelines wiring component instances together.

use std::fmt;

use super::config::ConfigTree;
use super::tensor::TensorType;
use crate::diag::Span;

#[derive(Debug, Clone, PartialEq)]
pub enum TypeRef {
    Int,
    Real,
    Bool,
    Str,
    Tensor(TensorType),
}

impl TypeRef {
    pub fn is_numeric(&self) -> bool {
        matches!(self, TypeRef::Int | TypeRef::Real)
    }
}

impl fmt::Display for TypeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeRef::Int => f.write_str("Int"),
            TypeRef::Real => f.write_str("Real"),
            TypeRef::Bool => f.write_str("Bool"),
            TypeRef::Str => f.write_str("Str"),
            TypeRef::Tensor(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: TypeRef,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageDef {
    pub name: String,
    pub params: Vec<Param>,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    In,
    Out,
    InOut,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
            Direction::InOut => "inout",
        }
    }

    pub fn can_receive(self) -> bool {
        matches!(self, Direction::In | Direction::InOut)
    }

    pub fn can_send(self) -> bool {
        matches!(self, Direction::Out | Direction::InOut)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortDef {
    pub name: String,
    pub direction: Direction,
    pub messages: Vec<String>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    pub name: String,
    pub ty: TypeRef,
    pub init: Option<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelsMode {
    On,
    Off,
    Semi,
}

impl LabelsMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelsMode::On => "ON",
            LabelsMode::Off => "OFF",
            LabelsMode::Semi => "SEMI",
        }
    }
}

/// Declarative ML specification of a thing.
#[derive(Debug, Clone, PartialEq)]
pub struct MlBlock {
    pub name: Option<String>,
    /// Column names or `*`-suffixed prefix patterns, in order.
    pub features: Vec<String>,
    pub labels: LabelsMode,
    pub label_name: Option<String>,
    pub dataset: String,
    pub algorithm: String,
    pub hyperparameters: ConfigTree,
    pub backend: String,
    pub prediction_results: Option<String>,
    pub training_results: Option<String>,
    pub span: Span,
}

pub const DEFAULT_BACKEND: &str = "reference";

impl MlBlock {
    pub fn check(&self) -> Result<(), String> {
        if self.features.is_empty() {
            return Err("ML block needs at least one feature".into());
        }
        if matches!(self.labels, LabelsMode::On | LabelsMode::Semi) && self.label_name.is_none() {
            return Err(format!("labels {} requires a label column name", self.labels.as_str()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Real(f64),
    Bool(bool),
    Str(String),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    /// Visits every variable name referenced by the expression.
    pub fn vars(&self, out: &mut Vec<String>) {
        match &self.kind {
            ExprKind::Var(v) => out.push(v.clone()),
            ExprKind::Unary(_, e) => e.vars(out),
            ExprKind::Binary(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
            ExprKind::Call(_, args) => args.iter().for_each(|a| a.vars(out)),
            _ => {}
        }
    }
}

/// Built-in functions available in guard and action expressions.
pub const BUILTIN_FUNCTIONS: &[(&str, usize)] = &[("argmax", 1), ("len", 1), ("abs", 1)];

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Send { port: String, message: String, args: Vec<Expr>, span: Span },
    DaPreprocess { span: Span },
    DaTrain { span: Span },
    DaPredict { features: Vec<Expr>, result: String, span: Span },
    Assign { property: String, value: Expr, span: Span },
}

impl Action {
    pub fn span(&self) -> &Span {
        match self {
            Action::Send { span, .. }
            | Action::DaPreprocess { span }
            | Action::DaTrain { span }
            | Action::DaPredict { span, .. }
            | Action::Assign { span, .. } => span,
        }
    }

    pub fn is_ml(&self) -> bool {
        matches!(self, Action::DaPreprocess { .. } | Action::DaTrain { .. } | Action::DaPredict { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Action::Send { .. } => "send",
            Action::DaPreprocess { .. } => "da_preprocess",
            Action::DaTrain { .. } => "da_train",
            Action::DaPredict { .. } => "da_predict",
            Action::Assign { .. } => "assign",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trigger {
    pub port: String,
    pub message: String,
    /// Names bound to the message arguments, in parameter order.
    pub params: Vec<String>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub trigger: Option<Trigger>,
    pub guard: Option<Expr>,
    pub actions: Vec<Action>,
    /// `None` keeps the current state without re-entering it.
    pub target: Option<String>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub name: String,
    pub transitions: Vec<Transition>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateMachine {
    pub initial: Option<String>,
    pub states: Vec<State>,
    pub span: Span,
}

impl StateMachine {
    pub fn state(&self, name: &str) -> Option<&State> {
        self.states.iter().find(|s| s.name == name)
    }

    pub fn transitions(&self) -> impl Iterator<Item = (&State, &Transition)> {
        self.states.iter().flat_map(|s| s.transitions.iter().map(move |t| (s, t)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThingDef {
    pub name: String,
    pub messages: Vec<MessageDef>,
    pub ports: Vec<PortDef>,
    pub properties: Vec<Property>,
    pub ml: Option<MlBlock>,
    pub statechart: StateMachine,
    pub span: Span,
}

impl ThingDef {
    pub fn message(&self, name: &str) -> Option<&MessageDef> {
        self.messages.iter().find(|m| m.name == name)
    }

    pub fn port(&self, name: &str) -> Option<&PortDef> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn property(&self, name: &str) -> Option<&Property> {
        self.properties.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBinding {
    pub config: String,
    pub dataset: String,
    pub label: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StubPort {
    pub name: String,
    pub direction: Direction,
    pub ty: TensorType,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InstanceKind {
    /// Either a network architecture or a thing; which one is decided by
    /// name resolution against the model unit.
    Component { type_name: String, bindings: Vec<(String, i64)>, training: Option<TrainingBinding> },
    Stub { ports: Vec<StubPort> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    pub kind: InstanceKind,
    pub span: Span,
}

impl Instance {
    pub fn type_name(&self) -> Option<&str> {
        match &self.kind {
            InstanceKind::Component { type_name, .. } => Some(type_name),
            InstanceKind::Stub { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endpoint {
    pub instance: String,
    pub port: String,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.instance, self.port)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Connector {
    pub from: Endpoint,
    pub to: Endpoint,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineGraph {
    pub name: String,
    pub instances: Vec<Instance>,
    pub connectors: Vec<Connector>,
    pub span: Span,
}

impl PipelineGraph {
    pub fn instance(&self, name: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.name == name)
    }
}
