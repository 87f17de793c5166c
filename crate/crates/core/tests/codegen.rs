use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mlcforge::analysis::{analyze, AnalyzeOptions};
use mlcforge::codegen::{self, FileKind, GeneratedFileSet, ReferenceBackend};
use mlcforge::syntax::{load_project, load_project_from_sources, parse_system};
use mlcforge::{Action, ProjectManifest, SourceFile};

fn calculator() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../samples/calculator")
}

fn generate_at(root: &Path) -> GeneratedFileSet {
    let (unit, diags) = load_project(root).unwrap();
    assert!(diags.is_empty(), "{diags:?}");
    let a = analyze(&unit, AnalyzeOptions::default());
    codegen::generate(&a, &ReferenceBackend::default()).unwrap()
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/calculator")
}

fn read_tree(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for entry in walkdir(dir) {
        let rel = entry.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
        out.insert(rel, std::fs::read_to_string(&entry).unwrap());
    }
    out
}

fn walkdir(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let Ok(rd) = std::fs::read_dir(dir) else { return out };
    for e in rd.flatten() {
        let p = e.path();
        if p.is_dir() {
            out.extend(walkdir(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn golden_files_match() {
    let set = generate_at(&calculator());
    let dir = golden_dir();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        set.write_to(&dir).unwrap();
    }
    let expected = read_tree(&dir);
    let actual: BTreeMap<String, String> = set.files.iter().map(|f| (f.path.clone(), f.content.clone())).collect();
    assert_eq!(
        expected.keys().collect::<Vec<_>>(),
        actual.keys().collect::<Vec<_>>(),
        "file list differs; rerun with UPDATE_GOLDEN=1 after reviewing"
    );
    for (path, content) in &actual {
        assert_eq!(&expected[path], content, "{path} differs from golden copy");
    }
}

#[test]
fn generation_is_deterministic() {
    let a = generate_at(&calculator());
    let b = generate_at(&calculator());
    assert_eq!(a, b);
    let kinds: Vec<FileKind> = a.files.iter().map(|f| f.kind).collect();
    assert!(kinds.contains(&FileKind::Manifest));
    // manifest digests are the sha256 of each listed file
    let manifest = a.get("MANIFEST").unwrap();
    for line in manifest.content.lines() {
        let cols: Vec<&str> = line.split('\t').collect();
        let f = a.get(cols[0]).unwrap();
        assert_eq!(cols[1], f.kind.as_str());
        assert_eq!(cols[2], f.digest());
    }
    assert_eq!(manifest.content.lines().count(), a.files.len() - 1);
}

#[test]
fn mlp_layer_sizes_follow_the_config() {
    let set = generate_at(&calculator());
    let train = &set.get("train/DAML_server/train.py").unwrap().content;
    assert!(train.contains("LAYER_SIZES = [64, 128, 10]\n"), "{train}");
    let ops = &set.get("train/ops/train.py").unwrap().content;
    assert!(ops.contains("LAYER_SIZES = [64, 32, 4]\n"), "{ops}");
    assert!(ops.contains("ACTIVATIONS = [\"relu\", \"softmax\"]\n"));
}

fn thing_unit(hidden: &str) -> mlcforge::analysis::Analysis {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("f0,f1,f2,y\n");
    for i in 0..6 {
        csv.push_str(&format!("{i},{},{},{}\n", i * 2, i % 3, i % 2));
    }
    std::fs::write(dir.path().join("d.csv"), csv).unwrap();
    let src = format!(
        "thing T {{ ml {{ features \"f*\" labels ON \"y\" dataset \"d.csv\"
            model_algorithm mlp_classifier {{ hidden_layer_sizes: {hidden} }} }}
            statechart init s {{ state s {{ }} }} }}"
    );
    let (mut unit, d) = load_project_from_sources(
        ProjectManifest { name: "t".into(), ..Default::default() },
        vec![SourceFile { path: "t.scl".into(), text: src }],
    );
    assert!(d.is_empty(), "{d:?}");
    unit.root = dir.keep();
    analyze(&unit, AnalyzeOptions::default())
}

#[test]
fn hidden_layers_follow_config() {
    for (hidden, sizes) in [("(128)", "[3, 128, 2]"), ("(128, 64)", "[3, 128, 64, 2]")] {
        let a = thing_unit(hidden);
        let set = codegen::generate(&a, &ReferenceBackend::default()).unwrap();
        let train = &set.get("train/T/train.py").unwrap().content;
        assert!(train.contains(&format!("LAYER_SIZES = {sizes}\n")), "{train}");
    }
}

#[test]
fn every_ml_action_has_one_bridge_call() {
    let set = generate_at(&calculator());
    let (unit, _) = load_project(&calculator()).unwrap();
    for thing in &unit.things {
        let ml_actions = thing.statechart.transitions().flat_map(|(_, t)| &t.actions).filter(|a| a.is_ml()).count();
        let glue = &set.get(&format!("runtime/{}/glue.py", thing.name)).unwrap().content;
        assert_eq!(glue.matches("ctx.bridge(").count(), ml_actions, "{}", thing.name);
        let predicts = thing
            .statechart
            .transitions()
            .flat_map(|(_, t)| &t.actions)
            .filter(|a| matches!(a, Action::DaPredict { .. }))
            .count();
        assert_eq!(glue.matches("\"PREDICT\"").count(), predicts);
    }
}

/// Top-level `def`/`class` names and module constants, per file.
fn symbols(content: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in content.lines() {
        let trimmed = line.trim_start();
        let indent = line.len() - trimmed.len();
        for kw in ["def ", "class "] {
            if let Some(rest) = trimmed.strip_prefix(kw) {
                let name: String = rest.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
                out.push(format!("{indent}:{name}"));
            }
        }
        if indent == 0 {
            if let Some((name, _)) = line.split_once(" = ") {
                if name.chars().all(|c| c.is_ascii_uppercase() || c == '_') {
                    out.push(format!("0:{name}"));
                }
            }
        }
    }
    out
}

#[test]
fn no_identifier_collisions() {
    let set = generate_at(&calculator());
    for f in set.files.iter().filter(|f| f.path.ends_with(".py")) {
        let mut syms = symbols(&f.content);
        let n = syms.len();
        syms.sort();
        syms.dedup();
        assert_eq!(syms.len(), n, "duplicate symbol in {}", f.path);
    }
}

fn glue_for(src: &str) -> String {
    let (file, d) = parse_system(src, "t.scl");
    assert!(d.is_empty(), "{d:?}");
    codegen::generate_thing_glue(&file.things[0], "reference").content
}

#[test]
fn renamed_thing_differs_only_in_name() {
    let src = "thing Alpha { message m(v: Int) port p: in { m } property n: Int = 0
        statechart init a { state a { on p?m(v) [v > 1] / n = v -> b } state b { on / n = 0 -> a } } }";
    let a = glue_for(src);
    let b = glue_for(&src.replace("Alpha", "Beta"));
    assert_ne!(a, b);
    assert_eq!(a.replace("Alpha", "Beta"), b);
}

#[test]
fn single_state_table() {
    let glue = glue_for("thing Lone { statechart init only { state only { } } }");
    assert!(glue.contains("INITIAL = \"only\"\nSTATES = (\"only\",)\n"), "{glue}");
    assert!(glue.ends_with("TRANSITIONS = (\n)\n"), "{glue}");
}

#[test]
fn stub_skeletons() {
    let src = "pipeline P { stub adder { in operand: Q(0:1)^{10}; out total: Q(0:1)^{1}; } }";
    let (file, d) = parse_system(src, "p.scl");
    assert!(d.is_empty(), "{d:?}");
    let files = codegen::generate_component_stubs(&file.pipelines[0], "reference");
    assert_eq!(files.len(), 1);
    let f = &files[0];
    assert_eq!((f.path.as_str(), f.kind), ("stubs/adder/adder.py", FileKind::StubInterface));
    assert!(f.content.contains("class Adder:"));
    assert!(f.content.contains("    def on_operand(self, value):\n        \"\"\"Handle `value`: Q(0:1)^{10}.\"\"\"\n        raise NotImplementedError(\"adder.operand\")"));
    assert!(f.content.contains("    def emit_total(self, value):\n        \"\"\"Send `value`: Q(0:1)^{1}.\"\"\""));

    let (empty, _) = parse_system("pipeline P { }", "p.scl");
    assert!(codegen::generate_component_stubs(&empty.pipelines[0], "reference").is_empty());
}

#[test]
fn stub_names_are_sanitized() {
    let src = "pipeline P { stub class { in from: Q(0:1)^{2}; in from_: Q(0:1)^{2}; } }";
    let (file, d) = parse_system(src, "p.scl");
    assert!(d.is_empty(), "{d:?}");
    let f = &codegen::generate_component_stubs(&file.pipelines[0], "reference")[0];
    assert_eq!(f.path, "stubs/class/class_.py");
    assert!(f.content.contains("class Class:"), "{}", f.content);
    assert!(f.content.contains("def on_from(self, value):"));
    assert!(f.content.contains("def on_from_(self, value):"));
    assert!(f.content.contains("raise NotImplementedError(\"class.from\")"));
}

#[test]
fn convolution_is_rejected_by_reference_backend() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = (0..16).map(|i| format!("p{i}")).collect::<Vec<_>>().join(",");
    csv.push_str(",y\n");
    for r in 0..4 {
        let row: Vec<String> = (0..16).map(|i| ((i + r) % 3).to_string()).collect();
        csv.push_str(&format!("{},{}\n", row.join(","), r % 2));
    }
    std::fs::write(dir.path().join("d.csv"), csv).unwrap();
    let net = "component C { ports in x: Q(0:1)^{4,4}, out y: Q(0:1)^{2};
        net { x -> Convolution(kernel=(3,3), channels=2) -> Flatten -> FullyConnected(2) -> Softmax -> y } }";
    let pipe = "pipeline P { instance c: C train K on \"d.csv\" label \"y\"
        stub s { out v: Q(0:1)^{4,4}; } connect s.v -> c.x }";
    let (mut unit, d) = load_project_from_sources(
        ProjectManifest { name: "t".into(), ..Default::default() },
        vec![
            SourceFile { path: "c.nal".into(), text: net.into() },
            SourceFile { path: "K.tcl".into(), text: "num_epoch: 1".into() },
            SourceFile { path: "p.scl".into(), text: pipe.into() },
        ],
    );
    assert!(d.is_empty(), "{d:?}");
    unit.root = dir.path().to_path_buf();
    let a = analyze(&unit, AnalyzeOptions::default());
    assert!(!a.has_errors(), "{:?}", a.diagnostics);
    let err = codegen::generate(&a, &ReferenceBackend::default()).unwrap_err();
    assert_eq!(
        err,
        codegen::CodegenError::UnsupportedCapability {
            backend: "reference".into(),
            feature: "layer Convolution (c)".into()
        }
    );
}

#[test]
fn training_spec_round_trips() {
    let (unit, _) = load_project(&calculator()).unwrap();
    let a = analyze(&unit, AnalyzeOptions::default());
    let backend = ReferenceBackend::default();
    for tu in &a.units {
        let program = codegen::lower_unit(tu, &backend, &unit.root).unwrap();
        let text = mlcforge::syntax::print_config(&program.spec);
        let (back, d) = mlcforge::syntax::parse_config(&text, "spec.tcl");
        assert!(d.is_empty(), "{d:?}");
        assert_eq!(back.unwrap(), program.spec, "{}", tu.name);
    }
}
