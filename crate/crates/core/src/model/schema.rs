//! Configuration schemas with single inheritance, and validation of
//! [`ConfigTree`]s against them.

use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

use super::config::{ConfigTree, Value};
use crate::diag::{Diagnostic, Span};

#[derive(Debug, Clone, PartialEq)]
pub enum ValueType {
    Int,
    Real,
    Str,
    Bool,
    Enum(Vec<String>),
    List(Box<ValueType>),
    /// A nested block validated against the named schema.
    Tree(String),
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::Int => f.write_str("int"),
            ValueType::Real => f.write_str("real"),
            ValueType::Str => f.write_str("string"),
            ValueType::Bool => f.write_str("bool"),
            ValueType::Enum(opts) => write!(f, "one of {{{}}}", opts.join(", ")),
            ValueType::List(t) => write!(f, "list of {t}"),
            ValueType::Tree(s) => write!(f, "`{s}` block"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub value: f64,
    pub inclusive: bool,
}

/// Numeric interval; absent bounds are unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Range {
    pub min: Option<Bound>,
    pub max: Option<Bound>,
}

impl Range {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Range { min: Some(Bound { value: lo, inclusive: true }), max: Some(Bound { value: hi, inclusive: true }) }
    }

    pub fn at_least(lo: f64) -> Self {
        Range { min: Some(Bound { value: lo, inclusive: true }), max: None }
    }

    pub fn half_open(lo: f64, hi: f64) -> Self {
        Range { min: Some(Bound { value: lo, inclusive: true }), max: Some(Bound { value: hi, inclusive: false }) }
    }

    pub fn contains(&self, v: f64) -> bool {
        let lo_ok = self.min.is_none_or(|b| if b.inclusive { v >= b.value } else { v > b.value });
        let hi_ok = self.max.is_none_or(|b| if b.inclusive { v <= b.value } else { v < b.value });
        lo_ok && hi_ok
    }

    /// True when every value in `self` is also in `outer`.
    pub fn within(&self, outer: &Range) -> bool {
        let lo_ok = match (outer.min, self.min) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(o), Some(s)) => s.value > o.value || (s.value == o.value && (o.inclusive || !s.inclusive)),
        };
        let hi_ok = match (outer.max, self.max) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(o), Some(s)) => s.value < o.value || (s.value == o.value && (o.inclusive || !s.inclusive)),
        };
        lo_ok && hi_ok
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.min {
            Some(b) => write!(f, "{}{}", if b.inclusive { "[" } else { "(" }, b.value)?,
            None => f.write_str("(-inf")?,
        }
        f.write_str(", ")?;
        match self.max {
            Some(b) => write!(f, "{}{}", b.value, if b.inclusive { "]" } else { ")" }),
            None => f.write_str("inf)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaEntry {
    pub ty: ValueType,
    pub required: bool,
    pub default: Option<Value>,
    pub range: Option<Range>,
}

impl SchemaEntry {
    pub fn new(ty: ValueType) -> Self {
        SchemaEntry { ty, required: false, default: None, range: None }
    }

    pub fn required(mut self) -> Self {
        self.required = true;
        self
    }

    pub fn default(mut self, v: impl Into<Value>) -> Self {
        self.default = Some(v.into());
        self
    }

    pub fn range(mut self, r: Range) -> Self {
        self.range = Some(r);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSchema {
    pub name: String,
    pub parent: Option<String>,
    pub entries: IndexMap<String, SchemaEntry>,
}

impl ConfigSchema {
    pub fn new(name: impl Into<String>, parent: Option<&str>) -> Self {
        ConfigSchema { name: name.into(), parent: parent.map(str::to_string), entries: IndexMap::new() }
    }

    pub fn entry(mut self, key: &str, entry: SchemaEntry) -> Self {
        self.entries.insert(key.to_string(), entry);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("unknown schema `{0}`")]
    UnknownSchema(String),
    #[error("cyclic schema inheritance: {}", .0.join(" -> "))]
    CyclicInheritance(Vec<String>),
    #[error("schema `{schema}` redefines `{key}` incompatibly with parent `{parent}`: {reason}")]
    IncompatibleOverride { schema: String, key: String, parent: String, reason: String },
}

/// A set of named schemas. Lookups resolve inheritance chains.
#[derive(Debug, Clone, Default)]
pub struct SchemaRegistry {
    schemas: IndexMap<String, ConfigSchema>,
}

impl SchemaRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a schema after checking that it is compatible with its
    /// ancestors: same types, equal-or-narrower ranges and enum sets.
    pub fn register(&mut self, schema: ConfigSchema) -> Result<(), SchemaError> {
        if let Some(parent) = &schema.parent {
            let inherited = self.effective_entries(parent)?;
            for (key, entry) in &schema.entries {
                if let Some(base) = inherited.get(key) {
                    if let Err(reason) = check_narrowing(base, entry) {
                        return Err(SchemaError::IncompatibleOverride {
                            schema: schema.name.clone(),
                            key: key.clone(),
                            parent: parent.clone(),
                            reason,
                        });
                    }
                }
            }
        }
        self.schemas.insert(schema.name.clone(), schema);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ConfigSchema> {
        self.schemas.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.schemas.keys().map(String::as_str)
    }

    /// Root-first inheritance chain ending at `name`.
    pub fn chain(&self, name: &str) -> Result<Vec<&ConfigSchema>, SchemaError> {
        let mut chain = Vec::new();
        let mut seen: Vec<String> = Vec::new();
        let mut cur = Some(name.to_string());
        while let Some(n) = cur {
            if seen.contains(&n) {
                seen.push(n);
                return Err(SchemaError::CyclicInheritance(seen));
            }
            let schema = self.schemas.get(&n).ok_or_else(|| SchemaError::UnknownSchema(n.clone()))?;
            seen.push(n);
            chain.push(schema);
            cur = schema.parent.clone();
        }
        chain.reverse();
        Ok(chain)
    }

    /// Entries after applying child overrides, in root-first declaration
    /// order.
    pub fn effective_entries(&self, name: &str) -> Result<IndexMap<String, SchemaEntry>, SchemaError> {
        let mut out = IndexMap::new();
        for schema in self.chain(name)? {
            for (k, e) in &schema.entries {
                out.insert(k.clone(), e.clone());
            }
        }
        Ok(out)
    }

    /// Whether `descendant` inherits (directly or not) from `ancestor`.
    pub fn is_a(&self, descendant: &str, ancestor: &str) -> bool {
        self.chain(descendant).map(|c| c.iter().any(|s| s.name == ancestor)).unwrap_or(false)
    }
}

fn check_narrowing(base: &SchemaEntry, child: &SchemaEntry) -> Result<(), String> {
    match (&base.ty, &child.ty) {
        (ValueType::Enum(b), ValueType::Enum(c)) => {
            if let Some(extra) = c.iter().find(|o| !b.contains(o)) {
                return Err(format!("enum option `{extra}` not allowed by parent"));
            }
        }
        (b, c) if b != c => return Err(format!("type {c} differs from parent type {b}")),
        _ => {}
    }
    match (&base.range, &child.range) {
        (Some(b), Some(c)) if !c.within(b) => Err(format!("range {c} is wider than parent range {b}")),
        (Some(b), None) => Err(format!("drops parent range {b}")),
        _ => Ok(()),
    }
}

/// Result of [`validate_config`]: findings plus the effective configuration
/// (the input with schema defaults added for absent optional keys).
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub diagnostics: Vec<Diagnostic>,
    pub effective: ConfigTree,
}

impl Validation {
    pub fn has_errors(&self) -> bool {
        crate::diag::has_errors(&self.diagnostics)
    }
}

/// Validates `config` against schema `schema` from `registry`. Never fails:
/// every finding, including an unresolvable schema, is a diagnostic.
/// `anchor` locates findings that have no key of their own.
pub fn validate_config(config: &ConfigTree, schema: &str, registry: &SchemaRegistry, anchor: &Span) -> Validation {
    let mut diagnostics = Vec::new();
    let effective = validate_tree(config, schema, registry, anchor, "", &mut diagnostics);
    Validation { diagnostics, effective }
}

fn validate_tree(
    config: &ConfigTree,
    schema: &str,
    registry: &SchemaRegistry,
    anchor: &Span,
    prefix: &str,
    diags: &mut Vec<Diagnostic>,
) -> ConfigTree {
    let entries = match registry.effective_entries(schema) {
        Ok(e) => e,
        Err(err) => {
            diags.push(Diagnostic::error("E-SCHEMA", err.to_string(), anchor.clone()));
            return config.clone();
        }
    };
    let mut effective = ConfigTree::new();
    for (key, entry) in config.entries() {
        let path = format!("{prefix}{key}");
        match entries.get(key) {
            None => {
                let mut d = Diagnostic::error(
                    "E-UNKNOWN-KEY",
                    format!("unknown key `{path}` for schema `{schema}`"),
                    entry.span.clone(),
                );
                if let Some(s) = nearest_key(key, entries.keys().map(String::as_str)) {
                    d.message.push_str(&format!("; did you mean `{s}`?"));
                    d = d.with_hint(format!("replace with `{s}`"));
                }
                diags.push(d);
                effective.insert_spanned(key, entry.value.clone(), entry.span.clone());
            }
            Some(se) => {
                let v = check_value(&entry.value, &se.ty, se.range.as_ref(), registry, &entry.span, &path, diags);
                effective.insert_spanned(key, v, entry.span.clone());
            }
        }
    }
    for (key, se) in &entries {
        if config.contains_key(key) {
            continue;
        }
        if se.required {
            diags.push(Diagnostic::error(
                "E-MISSING-KEY",
                format!("missing required key `{prefix}{key}` for schema `{schema}`"),
                anchor.clone(),
            ));
        } else if let Some(d) = &se.default {
            let v = match (d, &se.ty) {
                (Value::Tree(t), ValueType::Tree(s)) => {
                    Value::Tree(validate_tree(t, s, registry, anchor, &format!("{prefix}{key}."), diags))
                }
                _ => d.clone(),
            };
            effective.insert_spanned(key.as_str(), v, anchor.clone());
        } else if let ValueType::Tree(s) = &se.ty {
            let filled = validate_tree(&ConfigTree::new(), s, registry, anchor, &format!("{prefix}{key}."), diags);
            if !filled.is_empty() {
                effective.insert_spanned(key.as_str(), Value::Tree(filled), anchor.clone());
            }
        }
    }
    effective
}

fn check_value(
    value: &Value,
    ty: &ValueType,
    range: Option<&Range>,
    registry: &SchemaRegistry,
    span: &Span,
    path: &str,
    diags: &mut Vec<Diagnostic>,
) -> Value {
    let type_error = |diags: &mut Vec<Diagnostic>| {
        diags.push(Diagnostic::error(
            "E-TYPE",
            format!("`{path}` expects {ty}, found {}", value.type_name()),
            span.clone(),
        ));
    };
    match (ty, value) {
        (ValueType::Int, Value::Int(_)) | (ValueType::Real, Value::Int(_) | Value::Real(_)) => {
            let v = value.as_f64().expect("numeric");
            if let Some(r) = range {
                if !r.contains(v) {
                    diags.push(Diagnostic::error(
                        "E-RANGE",
                        format!("`{path}` = {v} outside permitted range {r}"),
                        span.clone(),
                    ));
                }
            }
            value.clone()
        }
        (ValueType::Str, Value::Str(_)) | (ValueType::Bool, Value::Bool(_)) => value.clone(),
        (ValueType::Enum(opts), Value::Token(t) | Value::Str(t)) => {
            if !opts.contains(t) {
                let mut d = Diagnostic::error(
                    "E-ENUM",
                    format!("`{path}` = `{t}` is not one of {{{}}}", opts.join(", ")),
                    span.clone(),
                );
                if let Some(s) = nearest_key(t, opts.iter().map(String::as_str)) {
                    d = d.with_hint(format!("did you mean `{s}`?"));
                }
                diags.push(d);
            }
            value.clone()
        }
        (ValueType::List(inner), Value::List(items)) => Value::List(
            items
                .iter()
                .enumerate()
                .map(|(i, v)| check_value(v, inner, range, registry, span, &format!("{path}[{i}]"), diags))
                .collect(),
        ),
        (ValueType::Tree(schema), Value::Tree(t)) => {
            Value::Tree(validate_tree(t, schema, registry, span, &format!("{path}."), diags))
        }
        // A bare token where a string is expected is accepted as its text.
        (ValueType::Str, Value::Token(_)) => value.clone(),
        _ => {
            type_error(diags);
            value.clone()
        }
    }
}

/// Closest candidate by edit distance, comparing against both the whole key
/// and each `_`-separated segment so that `epoks` finds `num_epoch`.
pub fn nearest_key<'a>(key: &str, candidates: impl Iterator<Item = &'a str>) -> Option<&'a str> {
    let mut best: Option<(usize, &str)> = None;
    for cand in candidates {
        let whole = strsim::levenshtein(key, cand);
        let seg = cand.split('_').filter(|s| !s.is_empty()).map(|s| strsim::levenshtein(key, s)).min();
        let d = seg.map_or(whole, |s| s.min(whole));
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, cand));
        }
    }
    let limit = (key.chars().count() / 2).max(2);
    best.filter(|(d, _)| *d <= limit).map(|(_, c)| c)
}

/// Schemas shipped with the toolchain. Defaults here stand in for the
/// defaults of an underlying ML library.
pub fn builtin_schemas() -> SchemaRegistry {
    let mut reg = SchemaRegistry::new();
    let tokens = |opts: &[&str]| ValueType::Enum(opts.iter().map(|s| s.to_string()).collect());

    reg.register(
        ConfigSchema::new("optimizer", None)
            .entry("type", SchemaEntry::new(tokens(&["sgd", "adam"])).default(Value::Token("adam".into())))
            .entry("learning_rate", SchemaEntry::new(ValueType::Real).default(0.001))
            .entry("beta1", SchemaEntry::new(ValueType::Real).default(0.9).range(Range::half_open(0.0, 1.0)))
            .entry("beta2", SchemaEntry::new(ValueType::Real).default(0.999).range(Range::half_open(0.0, 1.0)))
            .entry(
                "epsilon",
                SchemaEntry::new(ValueType::Real).default(1e-8).range(Range {
                    min: Some(Bound { value: 0.0, inclusive: false }),
                    max: None,
                }),
            ),
    )
    .expect("optimizer schema");

    reg.register(
        ConfigSchema::new("preprocessing", None)
            .entry("standardize", SchemaEntry::new(ValueType::List(Box::new(ValueType::Str))))
            .entry("normalize", SchemaEntry::new(ValueType::List(Box::new(ValueType::Str))))
            .entry("one_hot", SchemaEntry::new(ValueType::Bool)),
    )
    .expect("preprocessing schema");

    reg.register(
        ConfigSchema::new("base", None)
            .entry("num_epoch", SchemaEntry::new(ValueType::Int).default(10))
            .entry("batch_size", SchemaEntry::new(ValueType::Int).default(32).range(Range::at_least(1.0)))
            .entry("seed", SchemaEntry::new(ValueType::Int).default(42).range(Range::at_least(0.0)))
            .entry("shuffle", SchemaEntry::new(ValueType::Bool).default(true))
            .entry("optimizer", SchemaEntry::new(ValueType::Tree("optimizer".into())))
            .entry("preprocessing", SchemaEntry::new(ValueType::Tree("preprocessing".into())))
            .entry("loss", SchemaEntry::new(tokens(&["categorical_crossentropy", "mse"]))),
    )
    .expect("base schema");

    reg.register(
        ConfigSchema::new("supervised", Some("base"))
            .entry("dropout", SchemaEntry::new(ValueType::Real).range(Range::closed(0.0, 1.0)))
            .entry("validation_split", SchemaEntry::new(ValueType::Real).default(0.2).range(Range::half_open(0.0, 1.0))),
    )
    .expect("supervised schema");

    reg.register(
        ConfigSchema::new("mlp", Some("supervised"))
            .entry(
                "hidden_layer_sizes",
                SchemaEntry::new(ValueType::List(Box::new(ValueType::Int)))
                    .default(Value::List(vec![Value::Int(100)]))
                    .range(Range::at_least(1.0)),
            )
            .entry(
                "activation",
                SchemaEntry::new(tokens(&["relu", "sigmoid", "tanh", "identity"])).default(Value::Token("relu".into())),
            )
            .entry(
                "hidden_layers_activation_functions",
                SchemaEntry::new(ValueType::List(Box::new(tokens(&["relu", "sigmoid", "tanh", "identity"])))),
            ),
    )
    .expect("mlp schema");

    reg
}
