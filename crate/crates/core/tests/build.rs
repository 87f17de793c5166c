use std::path::{Path, PathBuf};

use mlcforge::analysis::{analyze, Analysis, AnalyzeOptions};
use mlcforge::build::{
    self, package, BuildOptions, BuildOutcome, Decision, MockLauncher, Reason, Store, UnitStatus, Verb,
};
use mlcforge::codegen::ReferenceBackend;
use mlcforge::syntax::load_project;
use mlcforge::weights::WeightArchive;

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap().flatten() {
        let name = e.file_name();
        let name_s = name.to_string_lossy();
        if name_s.starts_with('.') || name_s == "gen" {
            continue;
        }
        if e.path().is_dir() {
            copy_dir(&e.path(), &to.join(&name));
        } else {
            std::fs::copy(e.path(), to.join(&name)).unwrap();
        }
    }
}

fn sample_copy() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let src = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../samples/calculator");
    copy_dir(&src, dir.path());
    dir
}

fn analysis(root: &Path) -> Analysis {
    let (unit, d) = load_project(root).unwrap();
    assert!(d.is_empty(), "{d:?}");
    let a = analyze(&unit, AnalyzeOptions::default());
    assert!(!a.has_errors(), "{:?}", a.diagnostics);
    a
}

fn run(root: &Path, launcher: &MockLauncher, opts: &BuildOptions) -> BuildOutcome {
    build::build(&analysis(root), &ReferenceBackend::default(), launcher, opts).unwrap()
}

fn decisions(o: &BuildOutcome) -> Vec<(String, Decision)> {
    o.plan.entries.iter().map(|e| (e.inputs.name.clone(), e.decision.clone())).collect()
}

/// Data rows of a CSV file, counted by lines rather than by a CSV parser.
fn line_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().skip(1).filter(|l| !l.trim().is_empty()).count()
}

#[test]
fn staleness_scenarios() {
    let dir = sample_copy();
    let root = dir.path();
    let launcher = MockLauncher::new(root);
    let opts = BuildOptions::default();

    let first = run(root, &launcher, &opts);
    assert_eq!(
        decisions(&first),
        vec![
            ("DAML_server".into(), Decision::ColdTrain(Reason::NoPrior)),
            ("ops".into(), Decision::ColdTrain(Reason::NoPrior))
        ]
    );
    assert!(first.report.succeeded());
    assert_eq!(launcher.calls_of(Verb::Train).len(), 2);

    // unchanged inputs
    let second = run(root, &launcher, &opts);
    assert!(second.plan.all_skip(), "{:?}", decisions(&second));
    assert_eq!(second.report.trained(), 0);
    assert_eq!(launcher.calls_of(Verb::Train).len(), 2);

    // 100 rows appended to the digits data
    let digits = root.join("data/digits.csv");
    let text = std::fs::read_to_string(&digits).unwrap();
    let extra: String = text.lines().skip(1).take(100).map(|l| format!("{l}\n")).collect();
    std::fs::write(&digits, format!("{text}{extra}")).unwrap();
    let third = run(root, &launcher, &opts);
    let Some(Decision::WarmRetrain { prior, reason: Reason::DatasetAppended }) = third.plan.decision("DAML_server")
    else {
        panic!("{:?}", decisions(&third))
    };
    assert_eq!(prior.row_count, 1000);
    assert_eq!(third.plan.decision("ops"), Some(&Decision::Skip));
    // the resumed log starts right after the prior run's last epoch
    let prior_epochs = WeightArchive::read(&Store::open(root.join(".mlc-store")).resolve(&prior.archive))
        .unwrap()
        .manifest
        .epochs;
    let UnitStatus::Trained { first_epoch, archive, .. } = &third.report.unit("DAML_server").unwrap().status else {
        panic!()
    };
    assert_eq!(*first_epoch, prior_epochs + 1);
    let log_path = root.join(".mlc-store").join(archive).with_file_name(package::LOG_FILE);
    let first_line = std::fs::read_to_string(log_path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(first_line.split(' ').next().unwrap(), format!("epoch={}", prior_epochs + 1));

    // one hyperparameter edited
    let cfg = root.join("configs/OperatorTraining.tcl");
    let text = std::fs::read_to_string(&cfg).unwrap();
    assert!(text.contains("num_epoch: 40"));
    std::fs::write(&cfg, text.replace("num_epoch: 40", "num_epoch: 41")).unwrap();
    let fourth = run(root, &launcher, &opts);
    assert_eq!(fourth.plan.decision("ops"), Some(&Decision::ColdTrain(Reason::ConfigChanged)));
    assert_eq!(fourth.plan.decision("DAML_server"), Some(&Decision::Skip));

    // same rows, different order
    let ops = root.join("data/operators.csv");
    let text = std::fs::read_to_string(&ops).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[1..].reverse();
    std::fs::write(&ops, lines.join("\n") + "\n").unwrap();
    let fifth = run(root, &launcher, &opts);
    assert_eq!(fifth.plan.decision("ops"), Some(&Decision::ColdTrain(Reason::DatasetChanged)));

    // after a successful build nothing is stale
    let sixth = run(root, &launcher, &opts);
    assert!(sixth.plan.all_skip());

    let forced = run(root, &launcher, &BuildOptions { force: true, ..opts });
    assert!(forced.plan.entries.iter().all(|e| e.decision == Decision::ColdTrain(Reason::Forced)));
}

#[test]
fn plan_depends_only_on_digests_and_store() {
    let dir = sample_copy();
    let root = dir.path();
    let launcher = MockLauncher::new(root);
    run(root, &launcher, &BuildOptions::default());
    let digits = root.join("data/digits.csv");
    let text = std::fs::read_to_string(&digits).unwrap();
    let first_row = text.lines().nth(1).unwrap().to_string();
    std::fs::write(&digits, format!("{text}{first_row}\n")).unwrap();

    let a = analysis(root);
    let inputs = build::unit_inputs(&a, &ReferenceBackend::default()).unwrap();
    let copy = tempfile::tempdir().unwrap();
    copy_dir(&root.join(".mlc-store"), copy.path());
    // the copied store has no hidden files to skip; the index must exist
    assert!(copy.path().join("index").is_file());
    let original = build::plan(&inputs, &Store::open(root.join(".mlc-store")), false).unwrap();
    let replayed = build::plan(&inputs, &Store::open(copy.path()), false).unwrap();
    let d = |p: &build::BuildPlan| p.entries.iter().map(|e| e.decision.clone()).collect::<Vec<_>>();
    assert_eq!(d(&original), d(&replayed));
    assert_eq!(original.to_tree(), replayed.to_tree());
}

#[test]
fn failures_stay_local() {
    let dir = sample_copy();
    let root = dir.path();
    let mut launcher = MockLauncher::new(root);
    launcher.fail.insert("ops".into());
    let out = run(root, &launcher, &BuildOptions { jobs: 2, force: false });
    let ops = out.report.unit("ops").unwrap();
    match &ops.status {
        UnitStatus::Failed(m) => assert!(m.contains("TrainingFailed") && m.contains("injected"), "{m}"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(out.report.unit("DAML_server").unwrap().status, UnitStatus::Trained { .. }));
    assert!(!out.report.succeeded());
    // the failed unit is retried next time, the other one is not
    launcher.fail.clear();
    let again = run(root, &launcher, &BuildOptions::default());
    assert_eq!(again.plan.decision("ops"), Some(&Decision::ColdTrain(Reason::NoPrior)));
    assert_eq!(again.plan.decision("DAML_server"), Some(&Decision::Skip));
}

#[test]
fn parallel_build_matches_sequential() {
    let (a, b) = (sample_copy(), sample_copy());
    let seq = run(a.path(), &MockLauncher::new(a.path()), &BuildOptions { jobs: 1, force: false });
    let par = run(b.path(), &MockLauncher::new(b.path()), &BuildOptions { jobs: 4, force: false });
    let strip = |o: &BuildOutcome| {
        o.report.units.iter().map(|u| (u.unit.clone(), u.decision.clone(), u.status.clone())).collect::<Vec<_>>()
    };
    assert_eq!(strip(&seq), strip(&par));
    for unit in ["DAML_server", "ops"] {
        let w = |root: &Path| std::fs::read(root.join(format!(".mlc-store/models/{unit}/1/weights.mlcw"))).unwrap();
        assert_eq!(w(a.path()), w(b.path()), "{unit}");
    }
    assert_eq!(
        std::fs::read(a.path().join(".mlc-store/index")).unwrap(),
        std::fs::read(b.path().join(".mlc-store/index")).unwrap()
    );
}

#[test]
fn packages_are_deterministic_and_linked() {
    let dir = sample_copy();
    let root = dir.path();
    let out = run(root, &MockLauncher::new(root), &BuildOptions::default());
    let store = Store::open(root.join(".mlc-store"));
    let rec = store.latest("DAML_server").unwrap().unwrap();

    let model = package::package_model(&store, &rec).unwrap();
    assert_eq!(model, package::package_model(&store, &rec).unwrap());
    let entries = package::read_tar(&model.bytes).unwrap();
    let names: Vec<&str> = entries.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["MANIFEST", "train.log", "weights.mlcw"]);
    let weights = WeightArchive::from_bytes(&entries[2].1).unwrap();
    assert!(weights.optimizer.is_some());
    assert_eq!(weights.manifest.dataset_digest, rec.dataset.hex());
    let manifest = package::ArtifactManifest::parse(std::str::from_utf8(&entries[0].1).unwrap()).unwrap();
    assert_eq!(manifest.dataset, Some(rec.dataset));
    assert_eq!(manifest.link.as_deref(), Some("dataset-DAML_server-1.tar"));

    let data = package::package_dataset(&store, &rec).unwrap();
    assert_eq!(data.manifest.row_count, Some(line_rows(&root.join("data/digits.csv")) as u64));
    assert_eq!(data.manifest.row_count, Some(1000));
    assert_eq!(data.manifest.link.as_deref(), Some("model-DAML_server-1.tar"));

    let (unit, _) = load_project(root).unwrap();
    let src = package::package_source(&unit, Some(&out.generated)).unwrap();
    assert_eq!(src.bytes, package::package_source(&unit, Some(&out.generated)).unwrap().bytes);
    let src_entries = package::read_tar(&src.bytes).unwrap();
    assert!(src_entries.iter().any(|(n, _)| n == "gen/MANIFEST"));
    assert!(src_entries.iter().any(|(n, _)| n == "system/things.scl"));

    let path = package::store_package(&store, &data).unwrap();
    assert!(path.is_file());
    assert_eq!(store.packages().unwrap()[0].digest, data.digest());
}
