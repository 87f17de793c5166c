//! Backend adapters: what a target ML library can train, and how its
//! training program is emitted.

use std::fmt::Write as _;

use super::lower::{MlpSpec, PreprocessPlan, PreprocessStep};
use super::python::{py_str, py_value};
use super::{header, FileKind, GeneratedFile};
use crate::analysis::TrainableUnit;
use crate::model::{ConfigTree, LayerKind};
use crate::syntax::print_config;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capabilities {
    pub algorithms: Vec<&'static str>,
    /// Layer kind names as printed in architectures.
    pub layers: Vec<&'static str>,
}

impl Capabilities {
    pub fn supports_layer(&self, kind: &LayerKind) -> bool {
        self.layers.contains(&kind.name())
    }
}

pub trait BackendAdapter: Send + Sync {
    fn id(&self) -> &'static str;
    fn capabilities(&self) -> &Capabilities;
    /// Files under `train/<unit>/`.
    fn emit_training(&self, unit: &TrainableUnit, mlp: &MlpSpec, plan: &PreprocessPlan, spec: &ConfigTree)
        -> Vec<GeneratedFile>;
}

/// Dense networks trained by the bundled Python runtime.
pub struct ReferenceBackend {
    caps: Capabilities,
}

impl Default for ReferenceBackend {
    fn default() -> Self {
        ReferenceBackend {
            caps: Capabilities {
                algorithms: vec![
                    "mlp_classifier",
                    "mlp_regressor",
                    "logistic_regression",
                    "linear_regression",
                    crate::analysis::NETWORK_ALGORITHM,
                ],
                layers: vec![
                    "FullyConnected",
                    "Flatten",
                    "Relu",
                    "Sigmoid",
                    "Tanh",
                    "Softmax",
                    "Dropout",
                    "ImportPretrained",
                ],
            },
        }
    }
}

pub fn backend(id: &str) -> Option<Box<dyn BackendAdapter>> {
    match id {
        "reference" => Some(Box::new(ReferenceBackend::default())),
        _ => None,
    }
}

fn py_list<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    format!("[{}]", items.iter().map(f).collect::<Vec<_>>().join(", "))
}

fn plan_lines(plan: &PreprocessPlan, out: &mut String) {
    out.push_str("PLAN = [\n");
    for step in &plan.steps {
        let line = match step {
            PreprocessStep::Standardize(c) => format!("(\"standardize\", {})", py_list(c, |s| py_str(s))),
            PreprocessStep::Normalize(c) => format!("(\"normalize\", {})", py_list(c, |s| py_str(s))),
            PreprocessStep::OneHot(l) => format!("(\"one_hot\", {})", py_str(l)),
        };
        writeln!(out, "    {line},").unwrap();
    }
    out.push_str("]\n");
}

impl BackendAdapter for ReferenceBackend {
    fn id(&self) -> &'static str {
        "reference"
    }

    fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    fn emit_training(
        &self,
        unit: &TrainableUnit,
        mlp: &MlpSpec,
        plan: &PreprocessPlan,
        spec: &ConfigTree,
    ) -> Vec<GeneratedFile> {
        let dir = format!("train/{}", unit.name);
        let mut py = header("#", self.id());
        writeln!(py, "\"\"\"Training program for `{}` ({}).\"\"\"\n", unit.name, unit.algorithm).unwrap();
        py.push_str("import argparse\nimport pathlib\nimport sys\n\nfrom mlcforge_runtime import trainer\n\n");
        py.push_str("HERE = pathlib.Path(__file__).resolve().parent\nPROJECT = HERE.parents[2]\n\n");
        writeln!(py, "UNIT = {}", py_str(&unit.name)).unwrap();
        writeln!(py, "DATASET = {}", py_str(&unit.dataset)).unwrap();
        writeln!(py, "LABEL = {}", unit.label.as_deref().map_or("None".into(), py_str)).unwrap();
        writeln!(py, "FEATURES = {}", py_list(&unit.features, |s| py_str(s))).unwrap();
        if unit.classification {
            writeln!(py, "CLASSES = {}", py_list(&unit.classes, |s| py_str(s))).unwrap();
        } else {
            py.push_str("CLASSES = None\n");
        }
        py.push_str("\n# model\n");
        writeln!(py, "LAYER_SIZES = {}", py_list(&mlp.layer_sizes, u64::to_string)).unwrap();
        writeln!(py, "ACTIVATIONS = {}", py_list(&mlp.activations, |s| py_str(s))).unwrap();
        writeln!(py, "DROPOUT = {}", py_list(&mlp.dropout, |d| format!("{d:?}"))).unwrap();
        writeln!(py, "INPUT_SHAPE = {}", py_list(&mlp.input_shape, u64::to_string)).unwrap();
        let imports: Vec<String> = mlp
            .imports
            .iter()
            .map(|i| {
                format!(
                    "{{\"archive\": {}, \"first_layer\": {}, \"layer_count\": {}, \"frozen\": {}}}",
                    py_str(&i.archive),
                    i.first_layer,
                    i.layer_count,
                    if i.frozen { "True" } else { "False" }
                )
            })
            .collect();
        writeln!(py, "IMPORTS = [{}]", imports.join(", ")).unwrap();
        py.push_str("\n# preprocessing\n");
        plan_lines(plan, &mut py);
        py.push_str("\n# training\n");
        let train = spec.tree_at("train").cloned().unwrap_or_default();
        writeln!(py, "CONFIG = {}", py_value(&train.into())).unwrap();
        let outputs = spec.tree_at("outputs");
        let default_log = outputs
            .and_then(|o| o.str_at("training_results"))
            .map(str::to_string)
            .unwrap_or_else(|| format!("results/{}.log", unit.name));
        writeln!(py, "TRAINING_RESULTS = {}", py_str(&default_log)).unwrap();
        py.push_str(TRAIN_MAIN);
        vec![
            GeneratedFile::new(format!("{dir}/train.py"), py, FileKind::TrainingProgram),
            GeneratedFile::new(
                format!("{dir}/spec.tcl"),
                format!("{}{}", header("//", self.id()), print_config(spec)),
                FileKind::TrainingProgram,
            ),
        ]
    }
}

const TRAIN_MAIN: &str = r#"

def main(argv=None):
    ap = argparse.ArgumentParser(description=f"train {UNIT}")
    ap.add_argument("--warm", type=pathlib.Path, help="prior weight archive to resume from")
    ap.add_argument("--out", type=pathlib.Path, default=PROJECT / "results" / f"{UNIT}.mlcw")
    ap.add_argument("--log", type=pathlib.Path, default=PROJECT / TRAINING_RESULTS)
    args = ap.parse_args(argv)

    data = trainer.load_csv(PROJECT / DATASET, features=FEATURES, label=LABEL, classes=CLASSES)
    data, transform = trainer.preprocess(data, PLAN)
    model = trainer.build_mlp(LAYER_SIZES, ACTIVATIONS, dropout=DROPOUT, imports=IMPORTS, root=PROJECT)
    warm = trainer.load_archive(args.warm) if args.warm else None
    model, state, log = trainer.train(model, data, CONFIG, warm=warm)
    trainer.save_archive(args.out, model, state, transform, data)
    args.log.parent.mkdir(parents=True, exist_ok=True)
    args.log.write_text("\n".join(log) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
"#;
