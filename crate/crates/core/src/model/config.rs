//! Nested key-value documents used for training configurations, ML
//! hyperparameters, scenario files, bridge payloads and reports.

use indexmap::IndexMap;

use crate::diag::Span;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    Str(String),
    Bool(bool),
    /// Bare identifier such as `adam` or `relu`.
    Token(String),
    List(Vec<Value>),
    Tree(ConfigTree),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Real(_) => "real",
            Value::Str(_) => "string",
            Value::Bool(_) => "bool",
            Value::Token(_) => "token",
            Value::List(_) => "list",
            Value::Tree(_) => "block",
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Real(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// String content of a `Str` or `Token`.
    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Str(s) | Value::Token(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_tree(&self) -> Option<&ConfigTree> {
        match self {
            Value::Tree(t) => Some(t),
            _ => None,
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(v)
    }
}

impl From<ConfigTree> for Value {
    fn from(v: ConfigTree) -> Self {
        Value::Tree(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: Value,
    /// Span of the key.
    pub span: Span,
}

/// An ordered map of keys to values. Keys are unique per level; insertion
/// order is preserved and is what the printer emits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigTree {
    entries: IndexMap<String, Entry>,
}

impl ConfigTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key).map(|e| &e.value)
    }

    pub fn get_entry(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    pub fn get_mut(&mut self, key: &str) -> Option<&mut Value> {
        self.entries.get_mut(key).map(|e| &mut e.value)
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Follows a dotted path such as `optimizer.learning_rate`.
    pub fn lookup(&self, path: &str) -> Option<&Value> {
        let mut parts = path.split('.');
        let mut cur = self.get(parts.next()?)?;
        for part in parts {
            cur = cur.as_tree()?.get(part)?;
        }
        Some(cur)
    }

    /// Inserts or replaces `key`, keeping its original position when it
    /// already exists. Returns the previous value.
    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<Value>) -> Option<Value> {
        self.insert_spanned(key, value.into(), Span::default())
    }

    pub fn insert_spanned(&mut self, key: impl Into<String>, value: Value, span: Span) -> Option<Value> {
        let key = key.into();
        match self.entries.get_mut(&key) {
            Some(e) => Some(std::mem::replace(&mut e.value, value)),
            None => {
                self.entries.insert(key, Entry { value, span });
                None
            }
        }
    }

    /// Builder-style insert.
    pub fn with(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.insert(key, value);
        self
    }

    pub fn remove(&mut self, key: &str) -> Option<Value> {
        self.entries.shift_remove(key).map(|e| e.value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.value))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Entry)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), e))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn str_at(&self, key: &str) -> Option<&str> {
        self.get(key).and_then(Value::as_text)
    }

    pub fn int_at(&self, key: &str) -> Option<i64> {
        self.get(key).and_then(Value::as_i64)
    }

    pub fn real_at(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(Value::as_f64)
    }

    pub fn bool_at(&self, key: &str) -> Option<bool> {
        self.get(key).and_then(Value::as_bool)
    }

    pub fn tree_at(&self, key: &str) -> Option<&ConfigTree> {
        self.get(key).and_then(Value::as_tree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_keeps_position_and_lookup_walks_paths() {
        let mut t = ConfigTree::new()
            .with("num_epoch", 5)
            .with("optimizer", ConfigTree::new().with("type", Value::Token("adam".into())));
        t.insert("num_epoch", 6);
        assert_eq!(t.keys().collect::<Vec<_>>(), ["num_epoch", "optimizer"]);
        assert_eq!(t.int_at("num_epoch"), Some(6));
        assert_eq!(t.lookup("optimizer.type").and_then(Value::as_text), Some("adam"));
        assert!(t.lookup("optimizer.missing").is_none());
        assert!(t.lookup("num_epoch.x").is_none());
    }
}
