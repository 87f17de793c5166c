//! Resolved domain types shared by every stage of the toolchain.
//!
//! All values here are plain immutable data once built; the elaboration
//! functions are pure.

pub mod config;
pub mod network;
pub mod schema;
pub mod system;
pub mod tensor;
pub mod unit;

pub use config::{ConfigTree, Entry, Value};
pub use network::{
    elaborate, expand_def_blocks, resolve_generics, BodyItem, DefArg, DefBlock, DefCall, ElaborationError, Generic,
    LayerKind, LayerSpec, NetBody, NetPort, NetworkArch, Padding, PoolKind,
};
pub use schema::{
    builtin_schemas, validate_config, Bound, ConfigSchema, Range, SchemaEntry, SchemaError, SchemaRegistry,
    Validation, ValueType,
};
pub use system::{
    Action, BinOp, Connector, Direction, Endpoint, Expr, ExprKind, Instance, InstanceKind, LabelsMode, MessageDef,
    MlBlock, Param, PipelineGraph, PortDef, Property, State, StateMachine, StubPort, ThingDef, TrainingBinding,
    Transition, Trigger, TypeRef, UnaryOp,
};
pub use tensor::{Dim, ElementKind, ElementRange, TensorType};
pub use unit::{ConfigDecl, ModelUnit, ProjectManifest, SourceFile, DEFAULT_CONFIG_SCHEMA};
