//! Rule-based AutoML lints over trainable units. With automl mode on,
//! rules that have a fix rewrite the unit's configuration and report an
//! info diagnostic per applied fix.

use super::dataset::DatasetMeta;
use super::{collect_units, DatasetCache, TrainableUnit, UnitSource};
use crate::diag::{Diagnostic, Span};
use crate::model::{ConfigTree, LayerKind, ModelUnit, Value};

/// Everything a rule may inspect for one trainable unit.
pub struct LintContext<'a> {
    pub unit: &'a TrainableUnit,
    /// The configuration as written.
    pub raw: &'a ConfigTree,
    /// The configuration with schema defaults filled in.
    pub effective: &'a ConfigTree,
    pub dataset: Option<&'a DatasetMeta>,
    /// Concrete feature column names.
    pub features: &'a [String],
    pub anchor: &'a Span,
}

impl LintContext<'_> {
    /// Span of the raw entry at a dotted path, or the unit anchor.
    pub fn span_of(&self, path: &str) -> Span {
        let mut tree = self.raw;
        let mut parts = path.split('.').peekable();
        while let Some(p) = parts.next() {
            let Some(e) = tree.get_entry(p) else { break };
            if parts.peek().is_none() {
                return e.span.clone();
            }
            match &e.value {
                Value::Tree(t) => tree = t,
                _ => break,
            }
        }
        self.anchor.clone()
    }
}

pub trait LintRule: Send + Sync {
    fn id(&self) -> &'static str;
    fn check(&self, cx: &LintContext) -> Option<Diagnostic>;
    /// Rewrites the raw configuration so that `check` passes; returns a
    /// description of the change.
    fn fix(&self, _cx: &LintContext, _raw: &mut ConfigTree) -> Option<String> {
        None
    }
}

struct LearningRate;
struct Dropout;
struct Scaling;
struct SequentialShuffle;
struct Epochs;

impl LintRule for LearningRate {
    fn id(&self) -> &'static str {
        "R1"
    }

    fn check(&self, cx: &LintContext) -> Option<Diagnostic> {
        let lr = cx.effective.lookup("optimizer.learning_rate")?.as_f64()?;
        (!(lr > 0.0 && lr <= 1.0)).then(|| {
            Diagnostic::warning(
                "R1",
                format!("{}: learning_rate {lr} is outside the recommended range (0, 1]", cx.unit.name),
                cx.span_of("optimizer.learning_rate"),
            )
        })
    }
}

impl LintRule for Dropout {
    fn id(&self) -> &'static str {
        "R2"
    }

    fn check(&self, cx: &LintContext) -> Option<Diagnostic> {
        let bad = |r: f64| !(0.0..1.0).contains(&r);
        if let Some(r) = cx.effective.get("dropout").and_then(Value::as_f64).filter(|r| bad(*r)) {
            return Some(Diagnostic::error(
                "R2",
                format!("{}: dropout {r} must lie in [0, 1)", cx.unit.name),
                cx.span_of("dropout"),
            ));
        }
        let arch = cx.unit.arch.as_ref()?;
        arch.layers().find_map(|l| match l.kind {
            LayerKind::Dropout { rate } if bad(rate) => Some(Diagnostic::error(
                "R2",
                format!("{}: Dropout rate {rate} must lie in [0, 1)", cx.unit.name),
                l.span.clone(),
            )),
            _ => None,
        })
    }
}

fn list_texts(v: Option<&Value>) -> Vec<String> {
    v.and_then(Value::as_list)
        .map(|items| items.iter().filter_map(|i| i.as_text().map(str::to_string)).collect())
        .unwrap_or_default()
}

impl Scaling {
    /// Feature columns that are numeric, outside [-1, 1] and not named by
    /// any scaling step.
    fn unscaled(cx: &LintContext) -> Vec<String> {
        let Some(ds) = cx.dataset else { return Vec::new() };
        if !cx.unit.is_ann {
            return Vec::new();
        }
        let mut scaled: Vec<String> = Vec::new();
        for key in ["preprocessing.standardize", "preprocessing.normalize"] {
            let specs = list_texts(cx.effective.lookup(key));
            if let Ok(cols) = ds.resolve_features(&specs, cx.unit.label.as_deref()) {
                scaled.extend(cols);
            }
        }
        cx.features
            .iter()
            .filter(|f| !scaled.contains(f))
            .filter(|f| ds.column(f).is_some_and(|c| !c.is_scaled()))
            .cloned()
            .collect()
    }
}

impl LintRule for Scaling {
    fn id(&self) -> &'static str {
        "R3"
    }

    fn check(&self, cx: &LintContext) -> Option<Diagnostic> {
        let cols = Self::unscaled(cx);
        (!cols.is_empty()).then(|| {
            Diagnostic::warning(
                "R3",
                format!(
                    "{}: {} numeric feature column(s) reach the network unscaled (first: `{}`)",
                    cx.unit.name,
                    cols.len(),
                    cols[0]
                ),
                cx.anchor.clone(),
            )
            .with_hint("add `preprocessing { standardize: (...) }`")
        })
    }

    fn fix(&self, cx: &LintContext, raw: &mut ConfigTree) -> Option<String> {
        let cols = Self::unscaled(cx);
        if cols.is_empty() {
            return None;
        }
        let ds = cx.dataset?;
        // Prefer the unit's own feature specs when every column they cover
        // is one we are about to scale.
        let mut additions: Vec<String> = Vec::new();
        let mut covered: Vec<String> = Vec::new();
        for spec in &cx.unit.feature_specs {
            let Ok(matched) = ds.resolve_features(std::slice::from_ref(spec), cx.unit.label.as_deref()) else { continue };
            if !matched.is_empty() && matched.iter().all(|m| cols.contains(m)) {
                additions.push(spec.clone());
                covered.extend(matched);
            }
        }
        additions.extend(cols.iter().filter(|c| !covered.contains(c)).cloned());

        let mut pre = raw.tree_at("preprocessing").cloned().unwrap_or_default();
        let mut list = list_texts(pre.get("standardize"));
        list.extend(additions);
        pre.insert("standardize", Value::List(list.iter().map(|s| Value::Str(s.clone())).collect()));
        raw.insert("preprocessing", pre);
        Some(format!("{}: standardize {} feature column(s) before training", cx.unit.name, cols.len()))
    }
}

impl LintRule for SequentialShuffle {
    fn id(&self) -> &'static str {
        "R4"
    }

    fn check(&self, cx: &LintContext) -> Option<Diagnostic> {
        let sequential = cx.dataset.is_some_and(|d| d.sequential);
        (sequential && cx.effective.bool_at("shuffle") == Some(true)).then(|| {
            Diagnostic::error(
                "R4",
                format!("{}: dataset {} is sequential but shuffle is on", cx.unit.name, cx.unit.dataset),
                cx.span_of("shuffle"),
            )
            .with_hint("set `shuffle: false`")
        })
    }

    fn fix(&self, cx: &LintContext, raw: &mut ConfigTree) -> Option<String> {
        self.check(cx)?;
        raw.insert("shuffle", false);
        Some(format!("{}: set shuffle: false for sequential dataset {}", cx.unit.name, cx.unit.dataset))
    }
}

impl LintRule for Epochs {
    fn id(&self) -> &'static str {
        "R5"
    }

    fn check(&self, cx: &LintContext) -> Option<Diagnostic> {
        let n = cx.effective.int_at("num_epoch")?;
        (n < 1).then(|| {
            Diagnostic::error("R5", format!("{}: num_epoch must be at least 1, found {n}", cx.unit.name), cx.span_of("num_epoch"))
        })
    }
}

/// Ordered rule set; extend with [`LintRegistry::register`].
pub struct LintRegistry {
    rules: Vec<Box<dyn LintRule>>,
}

impl Default for LintRegistry {
    fn default() -> Self {
        LintRegistry {
            rules: vec![
                Box::new(LearningRate),
                Box::new(Dropout),
                Box::new(Scaling),
                Box::new(SequentialShuffle),
                Box::new(Epochs),
            ],
        }
    }
}

impl LintRegistry {
    pub fn register(&mut self, rule: Box<dyn LintRule>) {
        self.rules.push(rule);
    }

    pub fn ids(&self) -> Vec<&'static str> {
        self.rules.iter().map(|r| r.id()).collect()
    }
}

fn raw_config_mut<'a>(unit: &'a mut ModelUnit, tu: &TrainableUnit) -> Option<&'a mut ConfigTree> {
    match &tu.source {
        UnitSource::Thing { thing } => {
            unit.things.iter_mut().find(|t| &t.name == thing)?.ml.as_mut().map(|m| &mut m.hyperparameters)
        }
        UnitSource::Network { config, .. } => unit.config_mut(config).map(|c| &mut c.tree),
    }
}

/// Runs `registry` over every trainable unit. Returns the findings and the
/// unit, rewritten only when `automl` is on and a rule had a fix.
pub fn lint_with(
    registry: &LintRegistry,
    unit: &ModelUnit,
    automl: bool,
    cache: &mut DatasetCache,
) -> (Vec<Diagnostic>, ModelUnit) {
    let mut out = unit.clone();
    let mut diags = Vec::new();
    let (units, _) = collect_units(unit, cache);
    for tu in &units {
        let dataset = cache.get(unit, &tu.dataset);
        let anchor = tu.span.clone();
        let mut raw = tu.raw.clone();
        let mut changed = false;
        for rule in &registry.rules {
            let (finding, fixed) = {
                let cx = LintContext {
                    unit: tu,
                    raw: &tu.raw,
                    effective: &tu.effective,
                    dataset,
                    features: &tu.features,
                    anchor: &anchor,
                };
                let finding = rule.check(&cx);
                let fixed = if automl && finding.is_some() { rule.fix(&cx, &mut raw) } else { None };
                (finding, fixed)
            };
            match (finding, fixed) {
                (Some(_), Some(msg)) => {
                    changed = true;
                    diags.push(Diagnostic::info("AUTOFIX", format!("[{}] {msg}", rule.id()), anchor.clone()));
                }
                (Some(d), None) => diags.push(d),
                _ => {}
            }
        }
        if changed {
            if let Some(slot) = raw_config_mut(&mut out, tu) {
                *slot = raw;
            }
        }
    }
    (diags, out)
}

/// [`lint_with`] using the built-in rules R1 to R5.
pub fn lint_automl(unit: &ModelUnit, automl: bool) -> (Vec<Diagnostic>, ModelUnit) {
    lint_with(&LintRegistry::default(), unit, automl, &mut DatasetCache::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::DatasetMeta;
    use crate::model::{ProjectManifest, SourceFile};
    use crate::syntax::load_project_from_sources;

    fn unit(hyper: &str, sequential: bool) -> (ModelUnit, DatasetCache) {
        let src = format!(
            "thing S {{ ml {{ features \"px_*\" labels ON \"y\" dataset \"d.csv\"
                model_algorithm mlp_classifier {{ {hyper} }} }}
                statechart init a {{ state a {{ }} }} }}"
        );
        let mut manifest = ProjectManifest { name: "t".into(), ..Default::default() };
        if sequential {
            manifest.sequential.push("d.csv".into());
        }
        let (unit, d) = load_project_from_sources(manifest, vec![SourceFile { path: "s.scl".into(), text: src }]);
        assert!(d.is_empty(), "{d:?}");
        let mut cache = DatasetCache::default();
        let csv = "px_0,px_1,y\n0,200,a\n16,3,b\n";
        cache.insert("d.csv", DatasetMeta::from_bytes(csv.as_bytes(), "d.csv").unwrap());
        (unit, cache)
    }

    fn codes(hyper: &str, sequential: bool, automl: bool) -> (Vec<&'static str>, ModelUnit) {
        let (u, mut cache) = unit(hyper, sequential);
        let (d, out) = lint_with(&LintRegistry::default(), &u, automl, &mut cache);
        (d.iter().map(|d| d.code).collect(), out)
    }

    const SCALED: &str = "preprocessing { standardize: (\"px_*\") }";

    #[test]
    fn clean_config() {
        assert!(codes(SCALED, false, false).0.is_empty());
    }

    #[test]
    fn each_rule_fires() {
        assert_eq!(codes(&format!("{SCALED} optimizer {{ learning_rate: 2.0 }}"), false, false).0, ["R1"]);
        assert_eq!(codes(&format!("{SCALED} dropout: 1.0"), false, false).0, ["R2"]);
        assert_eq!(codes("", false, false).0, ["R3"]);
        assert_eq!(codes(SCALED, true, false).0, ["R4"]);
        assert_eq!(codes(&format!("{SCALED} num_epoch: 0"), false, false).0, ["R5"]);
    }

    #[test]
    fn automl_rewrites_config() {
        let (c, out) = codes("", true, true);
        assert_eq!(c, ["AUTOFIX", "AUTOFIX"]);
        let hp = &out.things[0].ml.as_ref().unwrap().hyperparameters;
        assert_eq!(hp.bool_at("shuffle"), Some(false));
        let std = hp.lookup("preprocessing.standardize").unwrap();
        assert_eq!(std, &Value::List(vec![Value::Str("px_*".into())]));
        // a second pass over the rewritten unit is clean
        let mut cache = unit("", true).1;
        let (again, _) = lint_with(&LintRegistry::default(), &out, true, &mut cache);
        assert!(again.is_empty(), "{again:?}");
    }

    #[test]
    fn rules_without_fix_still_report_in_automl() {
        assert_eq!(codes(&format!("{SCALED} num_epoch: 0"), false, true).0, ["R5"]);
    }

    #[test]
    fn registry_is_extensible() {
        struct NoBatchOne;
        impl LintRule for NoBatchOne {
            fn id(&self) -> &'static str {
                "X1"
            }
            fn check(&self, cx: &LintContext) -> Option<Diagnostic> {
                (cx.effective.int_at("batch_size") == Some(1))
                    .then(|| Diagnostic::warning("X1", "batch of one", cx.span_of("batch_size")))
            }
        }
        let mut reg = LintRegistry::default();
        reg.register(Box::new(NoBatchOne));
        assert_eq!(reg.ids(), ["R1", "R2", "R3", "R4", "R5", "X1"]);
        let (u, mut cache) = unit(&format!("{SCALED} batch_size: 1"), false);
        let (d, _) = lint_with(&reg, &u, false, &mut cache);
        assert_eq!(d.iter().map(|d| d.code).collect::<Vec<_>>(), ["X1"]);
    }
}
