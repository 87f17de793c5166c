//! Lowering of trainable units to the dense model description, the
//! preprocessing plan and the training spec consumed by backends.

use std::path::Path;

use super::CodegenError;
use crate::analysis::TrainableUnit;
use crate::model::{ConfigTree, LabelsMode, LayerKind, Value};
use crate::weights::WeightArchive;

/// A stack of dense layers with per-layer activation.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    /// `[n_in, h1, ..., n_out]`.
    pub layer_sizes: Vec<u64>,
    /// One per weight layer; the last is the output activation.
    pub activations: Vec<String>,
    /// Dropout rate applied to each weight layer's output.
    pub dropout: Vec<f64>,
    /// Shape of the input tensor before flattening.
    pub input_shape: Vec<u64>,
    pub imports: Vec<ImportSpec>,
}

/// Weight layers whose initial values come from a pretrained archive.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportSpec {
    pub archive: String,
    pub first_layer: usize,
    pub layer_count: usize,
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PreprocessStep {
    Standardize(Vec<String>),
    Normalize(Vec<String>),
    OneHot(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PreprocessPlan {
    pub steps: Vec<PreprocessStep>,
}

impl PreprocessPlan {
    pub fn scaled_columns(&self) -> impl Iterator<Item = &String> {
        self.steps.iter().flat_map(|s| match s {
            PreprocessStep::Standardize(c) | PreprocessStep::Normalize(c) => c.as_slice(),
            PreprocessStep::OneHot(_) => &[],
        })
    }

    fn to_tree(&self) -> ConfigTree {
        let strs = |c: &[String]| Value::List(c.iter().map(|s| Value::Str(s.clone())).collect());
        let mut t = ConfigTree::new();
        for step in &self.steps {
            match step {
                PreprocessStep::Standardize(c) => t.insert("standardize", strs(c)),
                PreprocessStep::Normalize(c) => t.insert("normalize", strs(c)),
                PreprocessStep::OneHot(l) => t.insert("one_hot", l.as_str()),
            };
        }
        t
    }
}

fn matches(spec: &str, column: &str) -> bool {
    match spec.strip_suffix('*') {
        Some(prefix) => column.starts_with(prefix),
        None => spec == column,
    }
}

fn expand(specs: Option<&Value>, features: &[String], unit: &str) -> Result<Vec<String>, CodegenError> {
    let Some(list) = specs.and_then(Value::as_list) else { return Ok(Vec::new()) };
    let mut out = Vec::new();
    for spec in list.iter().filter_map(Value::as_text) {
        let hits: Vec<&String> = features.iter().filter(|f| matches(spec, f)).collect();
        if hits.is_empty() {
            return Err(CodegenError::Plan(unit.to_string(), format!("`{spec}` names no feature column")));
        }
        for h in hits {
            if !out.contains(h) {
                out.push(h.clone());
            }
        }
    }
    Ok(out)
}

/// Scaling steps from the unit's `preprocessing` block, then one-hot label
/// encoding for classifiers.
pub fn preprocess_plan(unit: &TrainableUnit) -> Result<PreprocessPlan, CodegenError> {
    let pre = unit.effective.tree_at("preprocessing");
    let standardize = expand(pre.and_then(|p| p.get("standardize")), &unit.features, &unit.name)?;
    let normalize = expand(pre.and_then(|p| p.get("normalize")), &unit.features, &unit.name)?;
    if let Some(both) = standardize.iter().find(|c| normalize.contains(c)) {
        return Err(CodegenError::Plan(unit.name.clone(), format!("column `{both}` is both standardized and normalized")));
    }
    let mut steps = Vec::new();
    if !standardize.is_empty() {
        steps.push(PreprocessStep::Standardize(standardize));
    }
    if !normalize.is_empty() {
        steps.push(PreprocessStep::Normalize(normalize));
    }
    let one_hot = pre.and_then(|p| p.bool_at("one_hot")).unwrap_or(true);
    if let (true, true, Some(label)) = (unit.classification, one_hot, &unit.label) {
        steps.push(PreprocessStep::OneHot(label.clone()));
    }
    Ok(PreprocessPlan { steps })
}

fn activation_name(kind: &LayerKind) -> Option<&'static str> {
    match kind {
        LayerKind::Relu => Some("relu"),
        LayerKind::Sigmoid => Some("sigmoid"),
        LayerKind::Tanh => Some("tanh"),
        LayerKind::Softmax => Some("softmax"),
        _ => None,
    }
}

fn unsupported(backend: &str, feature: impl Into<String>) -> CodegenError {
    CodegenError::UnsupportedCapability { backend: backend.to_string(), feature: feature.into() }
}

/// Dense description of `unit`. Network units must consist of dense,
/// activation, dropout, flatten and dense-archive import layers.
pub fn lower_mlp(unit: &TrainableUnit, backend: &str, root: &Path) -> Result<MlpSpec, CodegenError> {
    let n_in = unit.features.len() as u64;
    let Some(arch) = &unit.arch else {
        let n_out = unit.n_outputs() as u64;
        let out_act = if unit.classification { "softmax" } else { "identity" };
        let mut sizes = vec![n_in];
        let mut acts = Vec::new();
        if unit.schema == "mlp" {
            let hidden: Vec<u64> = unit
                .effective
                .get("hidden_layer_sizes")
                .and_then(Value::as_list)
                .map(|l| l.iter().filter_map(|v| v.as_i64()).map(|v| v as u64).collect())
                .unwrap_or_default();
            let default_act = unit.effective.str_at("activation").unwrap_or("relu").to_string();
            let per_layer: Vec<String> = unit
                .effective
                .get("hidden_layers_activation_functions")
                .and_then(Value::as_list)
                .map(|l| l.iter().filter_map(|v| v.as_text().map(str::to_string)).collect())
                .unwrap_or_default();
            if !per_layer.is_empty() && per_layer.len() != hidden.len() {
                return Err(CodegenError::Plan(
                    unit.name.clone(),
                    format!("{} hidden layers but {} activation functions", hidden.len(), per_layer.len()),
                ));
            }
            for (i, h) in hidden.iter().enumerate() {
                sizes.push(*h);
                acts.push(per_layer.get(i).cloned().unwrap_or_else(|| default_act.clone()));
            }
        }
        sizes.push(n_out);
        acts.push(out_act.to_string());
        let rate = unit.effective.real_at("dropout").unwrap_or(0.0);
        let mut dropout = vec![rate; acts.len()];
        *dropout.last_mut().expect("output layer") = 0.0;
        return Ok(MlpSpec { layer_sizes: sizes, activations: acts, dropout, input_shape: vec![n_in], imports: Vec::new() });
    };

    let input_shape = arch
        .input(&arch.body.source)
        .and_then(|p| p.ty.concrete_dims())
        .ok_or_else(|| CodegenError::Plan(unit.name.clone(), "input port is not concrete".into()))?;
    let mut spec = MlpSpec {
        layer_sizes: vec![input_shape.iter().product()],
        activations: Vec::new(),
        dropout: Vec::new(),
        input_shape,
        imports: Vec::new(),
    };
    for layer in arch.layers() {
        match &layer.kind {
            LayerKind::Flatten => {}
            LayerKind::FullyConnected { units } => {
                let u = units.value().ok_or_else(|| CodegenError::Plan(unit.name.clone(), "unbound layer size".into()))?;
                spec.layer_sizes.push(u);
                spec.activations.push("identity".into());
                spec.dropout.push(0.0);
            }
            LayerKind::Dropout { rate } => match spec.dropout.last_mut() {
                Some(d) => *d = *rate,
                None => return Err(unsupported(backend, "Dropout before the first dense layer")),
            },
            LayerKind::ImportPretrained { archive, frozen } => {
                let a = WeightArchive::read(&root.join(archive))
                    .map_err(|e| CodegenError::Plan(unit.name.clone(), format!("{archive}: {e}")))?;
                let first_layer = spec.activations.len();
                spec.layer_sizes.extend(a.manifest.layer_sizes.iter().skip(1));
                spec.activations.extend(a.manifest.activations.iter().cloned());
                spec.dropout.extend(std::iter::repeat_n(0.0, a.manifest.activations.len()));
                spec.imports.push(ImportSpec {
                    archive: archive.clone(),
                    first_layer,
                    layer_count: a.manifest.activations.len(),
                    frozen: *frozen,
                });
            }
            kind => {
                let Some(act) = activation_name(kind) else {
                    return Err(unsupported(backend, format!("layer {}", kind.name())));
                };
                match spec.activations.last_mut() {
                    Some(a) if a == "identity" => *a = act.to_string(),
                    _ => return Err(unsupported(backend, format!("{} without a preceding dense layer", kind.name()))),
                }
            }
        }
    }
    if spec.activations.is_empty() {
        return Err(unsupported(backend, "network without dense layers"));
    }
    Ok(spec)
}

fn ints(v: &[u64]) -> Value {
    Value::List(v.iter().map(|x| Value::Int(*x as i64)).collect())
}

fn tokens(v: &[String]) -> Value {
    Value::List(v.iter().map(|x| Value::Token(x.clone())).collect())
}

fn strs(v: &[String]) -> Value {
    Value::List(v.iter().map(|x| Value::Str(x.clone())).collect())
}

/// Everything a trainer needs, as a key-value document. It is written to
/// `gen/train/<unit>/spec.tcl` and sent as the TRAIN payload.
pub fn training_spec(unit: &TrainableUnit, mlp: &MlpSpec, plan: &PreprocessPlan, backend: &str) -> ConfigTree {
    let mut model = ConfigTree::new()
        .with("layer_sizes", ints(&mlp.layer_sizes))
        .with("activations", tokens(&mlp.activations))
        .with("dropout", Value::List(mlp.dropout.iter().map(|d| Value::Real(*d)).collect()))
        .with("input_shape", ints(&mlp.input_shape));
    for (i, imp) in mlp.imports.iter().enumerate() {
        model.insert(
            format!("import_{i}"),
            ConfigTree::new()
                .with("archive", imp.archive.as_str())
                .with("first_layer", imp.first_layer as i64)
                .with("layer_count", imp.layer_count as i64)
                .with("frozen", imp.frozen),
        );
    }
    let mut train = unit.effective.clone();
    train.remove("preprocessing");
    let mut t = ConfigTree::new()
        .with("unit", unit.name.as_str())
        .with("algorithm", Value::Token(unit.algorithm.clone()))
        .with("backend", Value::Token(backend.to_string()))
        .with("dataset", unit.dataset.as_str());
    if unit.labels_mode != LabelsMode::Off {
        if let Some(l) = &unit.label {
            t.insert("label", l.as_str());
        }
    }
    t.insert("task", Value::Token(if unit.classification { "classification" } else { "regression" }.into()));
    t.insert("features", strs(&unit.features));
    if unit.classification {
        t.insert("classes", strs(&unit.classes));
    }
    t.insert("model", model);
    t.insert("preprocess", plan.to_tree());
    t.insert("train", train);
    let mut outputs = ConfigTree::new();
    if let Some(p) = &unit.training_results {
        outputs.insert("training_results", p.as_str());
    }
    if let Some(p) = &unit.prediction_results {
        outputs.insert("prediction_results", p.as_str());
    }
    t.insert("outputs", outputs);
    t
}
