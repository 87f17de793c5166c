//! Semantic validation of a loaded project: configuration schemas, shape
//! inference, statechart and wiring checks, AutoML lints, and the list of
//! trainable units that later stages consume.

pub mod dataset;
pub mod lint;
pub mod shapes;
pub mod statechart;
pub mod types;
pub mod wiring;

use std::collections::BTreeMap;

pub use dataset::{ColumnMeta, DatasetMeta};
pub use lint::{lint_automl, lint_with, LintContext, LintRegistry, LintRule};
pub use shapes::{infer_shapes, infer_shapes_checked, PretrainedShape, ShapeAnnotation, ShapeError};
pub use statechart::check_statechart;
pub use wiring::{check_wiring, instance_ports, tensor_message, InstancePorts, PortInfo, PortPayload};

use crate::diag::{has_errors, sort_diagnostics, Diagnostic, Span};
use crate::model::{
    builtin_schemas, elaborate, validate_config, ConfigTree, InstanceKind, LabelsMode, LayerKind, ModelUnit,
    NetworkArch, SchemaRegistry, Value,
};

/// An ML method the toolchain knows how to configure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Algorithm {
    pub id: &'static str,
    pub schema: &'static str,
    pub classification: bool,
    pub ann: bool,
}

pub const ALGORITHMS: &[Algorithm] = &[
    Algorithm { id: "mlp_classifier", schema: "mlp", classification: true, ann: true },
    Algorithm { id: "mlp_regressor", schema: "mlp", classification: false, ann: true },
    Algorithm { id: "logistic_regression", schema: "supervised", classification: true, ann: false },
    Algorithm { id: "linear_regression", schema: "supervised", classification: false, ann: false },
];

/// Algorithm id used for network instances trained from their architecture.
pub const NETWORK_ALGORITHM: &str = "network";

pub fn algorithm(id: &str) -> Option<&'static Algorithm> {
    ALGORITHMS.iter().find(|a| a.id == id)
}

#[derive(Debug, Clone, PartialEq)]
pub enum UnitSource {
    Thing { thing: String },
    Network { instance: String, network: String, bindings: BTreeMap<String, i64>, config: String },
}

/// Something the build trains: a thing's ML block, or a network instance
/// with a `train` binding.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainableUnit {
    pub name: String,
    pub source: UnitSource,
    pub algorithm: String,
    pub schema: String,
    pub raw: ConfigTree,
    pub effective: ConfigTree,
    pub dataset: String,
    pub label: Option<String>,
    pub labels_mode: LabelsMode,
    pub feature_specs: Vec<String>,
    pub features: Vec<String>,
    pub classification: bool,
    /// Label classes in first-appearance order (classification only).
    pub classes: Vec<String>,
    pub is_ann: bool,
    /// Elaborated flat architecture for network units.
    pub arch: Option<NetworkArch>,
    pub backend: String,
    pub training_results: Option<String>,
    pub prediction_results: Option<String>,
    pub span: Span,
}

impl TrainableUnit {
    pub fn n_outputs(&self) -> usize {
        if self.classification {
            self.classes.len()
        } else {
            1
        }
    }
}

/// Dataset metadata loaded on demand relative to the project root.
#[derive(Debug, Clone, Default)]
pub struct DatasetCache {
    entries: BTreeMap<String, Result<DatasetMeta, String>>,
}

impl DatasetCache {
    pub fn insert(&mut self, path: &str, meta: DatasetMeta) {
        self.entries.insert(path.to_string(), Ok(meta));
    }

    pub fn get(&mut self, unit: &ModelUnit, path: &str) -> Option<&DatasetMeta> {
        let entry = self.entries.entry(path.to_string()).or_insert_with(|| {
            DatasetMeta::load(&unit.root.join(path), path).map_err(|e| e.to_string())
        });
        match entry {
            Ok(m) => {
                m.sequential = unit.is_sequential(path);
                Some(m)
            }
            Err(_) => None,
        }
    }

    pub fn error(&self, path: &str) -> Option<&str> {
        match self.entries.get(path) {
            Some(Err(e)) => Some(e),
            _ => None,
        }
    }
}

fn default_loss(effective: &mut ConfigTree, classification: bool) {
    if !effective.contains_key("loss") {
        let loss = if classification { "categorical_crossentropy" } else { "mse" };
        effective.insert("loss", Value::Token(loss.into()));
    }
}

/// Builds the trainable units of `unit`. Diagnostics cover ML-block
/// hyperparameters and dataset problems; standalone configuration files
/// are validated by [`analyze`].
pub fn collect_units(unit: &ModelUnit, cache: &mut DatasetCache) -> (Vec<TrainableUnit>, Vec<Diagnostic>) {
    let registry = builtin_schemas();
    let mut units = Vec::new();
    let mut diags = Vec::new();

    for thing in &unit.things {
        let Some(ml) = &thing.ml else { continue };
        let Some(alg) = algorithm(&ml.algorithm) else {
            let mut d = Diagnostic::error(
                "E-ALGORITHM",
                format!("unknown model_algorithm `{}`", ml.algorithm),
                ml.span.clone(),
            );
            if let Some(s) = crate::model::schema::nearest_key(&ml.algorithm, ALGORITHMS.iter().map(|a| a.id)) {
                d = d.with_hint(format!("did you mean `{s}`?"));
            }
            diags.push(d);
            continue;
        };
        let v = validate_config(&ml.hyperparameters, alg.schema, &registry, &ml.span);
        diags.extend(v.diagnostics);
        let mut effective = v.effective;
        default_loss(&mut effective, alg.classification);
        let mut tu = TrainableUnit {
            name: thing.name.clone(),
            source: UnitSource::Thing { thing: thing.name.clone() },
            algorithm: alg.id.to_string(),
            schema: alg.schema.to_string(),
            raw: ml.hyperparameters.clone(),
            effective,
            dataset: ml.dataset.clone(),
            label: ml.label_name.clone(),
            labels_mode: ml.labels,
            feature_specs: ml.features.clone(),
            features: Vec::new(),
            classification: alg.classification,
            classes: Vec::new(),
            is_ann: alg.ann,
            arch: None,
            backend: ml.backend.clone(),
            training_results: ml.training_results.clone(),
            prediction_results: ml.prediction_results.clone(),
            span: ml.span.clone(),
        };
        fill_dataset(&mut tu, unit, cache, &mut diags);
        units.push(tu);
    }

    for g in &unit.pipelines {
        for inst in &g.instances {
            let InstanceKind::Component { type_name, bindings, training: Some(train) } = &inst.kind else { continue };
            let (Some(net), Some(decl)) = (unit.network(type_name), unit.config(&train.config)) else { continue };
            let bindings: BTreeMap<String, i64> = bindings.iter().cloned().collect();
            let Ok(arch) = elaborate(net, &bindings) else { continue };
            let classification = matches!(arch.layers().last().map(|l| &l.kind), Some(LayerKind::Softmax));
            let mut effective = validate_config(&decl.tree, &decl.schema, &registry, &decl.span).effective;
            default_loss(&mut effective, classification);
            let mut tu = TrainableUnit {
                name: inst.name.clone(),
                source: UnitSource::Network {
                    instance: inst.name.clone(),
                    network: type_name.clone(),
                    bindings,
                    config: decl.name.clone(),
                },
                algorithm: NETWORK_ALGORITHM.to_string(),
                schema: decl.schema.clone(),
                raw: decl.tree.clone(),
                effective,
                dataset: train.dataset.clone(),
                label: Some(train.label.clone()),
                labels_mode: LabelsMode::On,
                feature_specs: vec!["*".to_string()],
                features: Vec::new(),
                classification,
                classes: Vec::new(),
                is_ann: true,
                arch: Some(arch),
                backend: unit.manifest.backend.clone(),
                training_results: None,
                prediction_results: None,
                span: train.span.clone(),
            };
            fill_dataset(&mut tu, unit, cache, &mut diags);
            if let (Some(arch), false) = (&tu.arch, tu.features.is_empty()) {
                let n_in = arch.input(&arch.body.source).and_then(|p| p.ty.element_count());
                let n_out = arch.output(&arch.body.sink).and_then(|p| p.ty.element_count());
                if n_in != Some(tu.features.len() as u64) {
                    diags.push(Diagnostic::error(
                        "E-DATASET-SHAPE",
                        format!(
                            "{}: dataset {} has {} feature columns, network input takes {}",
                            tu.name,
                            tu.dataset,
                            tu.features.len(),
                            n_in.map_or("?".into(), |n| n.to_string())
                        ),
                        tu.span.clone(),
                    ));
                }
                if tu.classification && n_out != Some(tu.classes.len() as u64) {
                    diags.push(Diagnostic::error(
                        "E-DATASET-SHAPE",
                        format!(
                            "{}: label `{}` has {} classes, network output has {}",
                            tu.name,
                            train.label,
                            tu.classes.len(),
                            n_out.map_or("?".into(), |n| n.to_string())
                        ),
                        tu.span.clone(),
                    ));
                }
            }
            if unit.thing(&tu.name).is_some() {
                diags.push(Diagnostic::error(
                    "E-DUPLICATE-NAME",
                    format!("trainable instance `{}` collides with a thing of the same name", tu.name),
                    tu.span.clone(),
                ));
            }
            units.push(tu);
        }
    }
    (units, diags)
}

fn fill_dataset(tu: &mut TrainableUnit, unit: &ModelUnit, cache: &mut DatasetCache, diags: &mut Vec<Diagnostic>) {
    let Some(meta) = cache.get(unit, &tu.dataset) else {
        let why = cache.error(&tu.dataset).unwrap_or("unreadable").to_string();
        diags.push(Diagnostic::error("E-DATASET", format!("{}: {why}", tu.name), tu.span.clone()));
        return;
    };
    if meta.row_count == 0 {
        diags.push(Diagnostic::error("E-DATASET", format!("{}: dataset {} has no rows", tu.name, tu.dataset), tu.span.clone()));
    }
    if let Some(label) = &tu.label {
        match meta.column(label) {
            None => {
                diags.push(Diagnostic::error(
                    "E-DATASET",
                    format!("{}: label column `{label}` not found in {}", tu.name, tu.dataset),
                    tu.span.clone(),
                ));
            }
            Some(col) if tu.classification => tu.classes = col.distinct.clone(),
            Some(col) if !col.numeric => diags.push(Diagnostic::error(
                "E-DATASET",
                format!("{}: regression label `{label}` is not numeric", tu.name),
                tu.span.clone(),
            )),
            Some(_) => {}
        }
    }
    match meta.resolve_features(&tu.feature_specs, tu.label.as_deref()) {
        Ok(f) => {
            for name in &f {
                if meta.column(name).is_some_and(|c| !c.numeric) {
                    diags.push(Diagnostic::error(
                        "E-DATASET",
                        format!("{}: feature column `{name}` is not numeric", tu.name),
                        tu.span.clone(),
                    ));
                }
            }
            tu.features = f;
        }
        Err(e) => diags.push(Diagnostic::error("E-DATASET", format!("{}: {e}", tu.name), tu.span.clone())),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyzeOptions {
    /// Overrides the manifest's `automl` setting.
    pub automl: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub diagnostics: Vec<Diagnostic>,
    /// The input unit, rewritten by AutoML fixes when enabled.
    pub unit: ModelUnit,
    pub units: Vec<TrainableUnit>,
    /// Shapes per network instance (or per generic-free network).
    pub shapes: BTreeMap<String, ShapeAnnotation>,
}

impl Analysis {
    pub fn has_errors(&self) -> bool {
        has_errors(&self.diagnostics)
    }

    pub fn unit_named(&self, name: &str) -> Option<&TrainableUnit> {
        self.units.iter().find(|u| u.name == name)
    }
}

/// Reads input/output shapes of a pretrained archive relative to `root`.
pub fn pretrained_lookup(root: &std::path::Path) -> impl Fn(&str) -> Option<PretrainedShape> + '_ {
    move |archive: &str| crate::weights::pretrained_shape(&root.join(archive))
}

/// Runs every analysis pass.
pub fn analyze(unit: &ModelUnit, opts: AnalyzeOptions) -> Analysis {
    analyze_with(unit, opts, &mut DatasetCache::default())
}

pub fn analyze_with(unit: &ModelUnit, opts: AnalyzeOptions, cache: &mut DatasetCache) -> Analysis {
    let registry: SchemaRegistry = builtin_schemas();
    let mut diags = Vec::new();

    for decl in &unit.configs {
        diags.extend(validate_config(&decl.tree, &decl.schema, &registry, &decl.span).diagnostics);
    }
    for thing in &unit.things {
        diags.extend(check_statechart(thing));
    }

    let pretrained = pretrained_lookup(&unit.root);
    let mut shapes = BTreeMap::new();
    for net in unit.networks.iter().filter(|n| n.generics.is_empty()) {
        match elaborate(net, &BTreeMap::new()) {
            Ok(flat) => {
                let (ann, d) = infer_shapes(&flat, &pretrained);
                diags.extend(d);
                if let Some(a) = ann {
                    shapes.insert(net.name.clone(), a);
                }
            }
            Err(e) => diags.push(Diagnostic::error("E-ELABORATE", format!("{}: {e}", net.name), net.span.clone())),
        }
    }
    let mut seen_generic: Vec<(String, BTreeMap<String, i64>)> = Vec::new();
    for g in &unit.pipelines {
        diags.extend(check_wiring(g, unit));
        for inst in &g.instances {
            let InstanceKind::Component { type_name, bindings, .. } = &inst.kind else { continue };
            let Some(net) = unit.network(type_name) else { continue };
            let b: BTreeMap<String, i64> = bindings.iter().cloned().collect();
            let Ok(flat) = elaborate(net, &b) else { continue };
            let (ann, d) = infer_shapes(&flat, &pretrained);
            let key = (type_name.clone(), b);
            if !net.generics.is_empty() && !seen_generic.contains(&key) {
                diags.extend(d);
                seen_generic.push(key);
            }
            if let Some(a) = ann {
                shapes.insert(inst.name.clone(), a);
            }
        }
    }

    let (_, unit_diags) = collect_units(unit, cache);
    diags.extend(unit_diags);

    let automl = opts.automl.unwrap_or(unit.manifest.automl);
    let (lint_diags, rewritten) = lint_with(&LintRegistry::default(), unit, automl, cache);
    diags.extend(lint_diags);
    let (units, _) = collect_units(&rewritten, cache);

    sort_diagnostics(&mut diags);
    diags.dedup_by(|a, b| a.render() == b.render());
    Analysis { diagnostics: diags, unit: rewritten, units, shapes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ProjectManifest, SourceFile};
    use crate::syntax::load_project_from_sources;

    const NET: &str = "component Net<classes> { ports in x: Q(0:1)^{2,2}, out y: Q(0:1)^{classes};
        net { x -> Flatten -> FullyConnected(classes) -> Softmax -> y } }";
    const CSV: &str = "a,b,c,d,label\n0,0,0,0,x\n1,1,1,1,y\n0,1,0,1,z\n";

    fn run(pipeline: &str, thing: &str) -> (Analysis, Vec<&'static str>) {
        let sources = vec![
            SourceFile { path: "n.nal".into(), text: NET.into() },
            SourceFile { path: "Cfg.tcl".into(), text: "num_epoch: 2".into() },
            SourceFile { path: "p.scl".into(), text: format!("{thing}\n{pipeline}") },
        ];
        let (unit, d) = load_project_from_sources(ProjectManifest { name: "t".into(), ..Default::default() }, sources);
        assert!(d.is_empty(), "{d:?}");
        let mut cache = DatasetCache::default();
        cache.insert("d.csv", DatasetMeta::from_bytes(CSV.as_bytes(), "d.csv").unwrap());
        let a = analyze_with(&unit, AnalyzeOptions::default(), &mut cache);
        let codes = a.diagnostics.iter().map(|d| d.code).collect();
        (a, codes)
    }

    fn pipeline(classes: u32) -> String {
        format!(
            "pipeline P {{ instance n: Net<classes = {classes}> train Cfg on \"d.csv\" label \"label\"
               stub s {{ out v: Q(0:1)^{{2,2}}; }} connect s.v -> n.x }}"
        )
    }

    #[test]
    fn network_unit_matches_dataset() {
        let (a, codes) = run(&pipeline(3), "");
        assert!(codes.is_empty(), "{codes:?}");
        let u = a.unit_named("n").unwrap();
        assert_eq!(u.algorithm, NETWORK_ALGORITHM);
        assert_eq!(u.features, ["a", "b", "c", "d"]);
        assert_eq!(u.classes, ["x", "y", "z"]);
        assert_eq!(u.effective.str_at("loss"), Some("categorical_crossentropy"));
        assert_eq!(a.shapes["n"].output(), &[3]);
    }

    #[test]
    fn class_count_mismatch() {
        assert_eq!(run(&pipeline(4), "").1, ["E-DATASET-SHAPE"]);
    }

    #[test]
    fn thing_unit_errors() {
        let thing = |alg: &str, ds: &str| {
            format!(
                "thing T {{ ml {{ features \"a\", \"q\" labels ON \"label\" dataset \"{ds}\" model_algorithm {alg} }}
                   statechart init s {{ state s {{ }} }} }}"
            )
        };
        assert_eq!(run("", &thing("mlp_clasifier", "d.csv")).1, ["E-ALGORITHM"]);
        assert_eq!(run("", &thing("logistic_regression", "d.csv")).1, ["E-DATASET"]);
        assert_eq!(run("", &thing("logistic_regression", "missing.csv")).1, ["E-DATASET"]);
    }
}
