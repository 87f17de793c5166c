use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mlcforge::analysis::{analyze, Analysis, AnalyzeOptions};
use mlcforge::build::{self, BuildOptions, MockLauncher, Store, Verb};
use mlcforge::codegen::ReferenceBackend;
use mlcforge::model::{ModelUnit, ProjectManifest, SourceFile};
use mlcforge::sim::{
    bind_predictors, load_scenario, parse_scenario, replay_determinism, run_scenario, Detail, PredictorMode, Predictors,
    Scenario, SimError, SimValue, TraceKind,
};
use mlcforge::syntax::{load_project, load_project_from_sources};
use mlcforge::weights::WeightArchive;
use proptest::prelude::*;

fn sample_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../samples/calculator")
}

fn analysis(root: &Path) -> Analysis {
    let (unit, d) = load_project(root).unwrap();
    assert!(d.is_empty(), "{d:?}");
    analyze(&unit, AnalyzeOptions::default())
}

fn calculator() -> (Analysis, Scenario) {
    let root = sample_root();
    let sc = load_scenario(&root.join("scenarios/calculator.scn")).unwrap();
    (analysis(&root), sc)
}

fn oracles(a: &Analysis, sc: &Scenario) -> Predictors {
    bind_predictors(a, sc, &Store::open(a.unit.root.join(".unused")), None, PredictorMode::Oracle).unwrap()
}

fn unit_from(src: &str) -> ModelUnit {
    let sources = vec![SourceFile { path: "s.scl".into(), text: src.into() }];
    let (unit, d) = load_project_from_sources(ProjectManifest { name: "t".into(), ..Default::default() }, sources);
    assert!(d.is_empty(), "{d:?}");
    unit
}

fn scenario(text: &str) -> Scenario {
    let (sc, d) = parse_scenario(text, "t.scn");
    sc.unwrap_or_else(|| panic!("{d:?}"))
}

#[test]
fn calculator_adds() {
    let (a, sc) = calculator();
    let mut p = oracles(&a, &sc);
    let run = run_scenario(&a.unit, &sc, &mut p);
    assert_eq!(run.outcome, Ok(()), "{}", run.trace_text());
    for r in run.check(&sc) {
        assert!(r.passed, "{}\n{}", r.to_line(), run.trace_text());
    }
    let results: Vec<&Detail> =
        run.trace.iter().filter(|e| e.kind == TraceKind::MessageSent && e.thing == "device").map(|e| &e.detail).collect();
    assert_eq!(results.len(), 1);
    let Detail::Message { message, args, .. } = results[0] else { unreachable!() };
    assert_eq!((message.as_str(), args.as_slice()), ("result", &[SimValue::Int(2 + 3)][..]));
    let text = run.trace_text();
    assert!(text.contains("\tMessageReceived\tdevice\tdigits?recognized(0, 2)\n"), "{text}");
    assert!(text.contains("\tMessageReceived\tdevice\toperators?op_scores((1.0, 0.0, 0.0, 0.0))\n"), "{text}");
}

#[test]
fn violated_assertions_cite_positions() {
    let (a, mut sc) = calculator();
    let extra = scenario(
        "expect: (
            { eventually: { kind: sent thing: \"device\" message: result args: (6) } },
            { order: ({ kind: sent thing: \"device\" }, { kind: prediction }) },
            { never: { kind: state thing: \"device\" state: computing } },
        )",
    );
    sc.expect = extra.expect;
    let mut p = oracles(&a, &sc);
    let run = run_scenario(&a.unit, &sc, &mut p);
    let r = run.check(&sc);
    assert!(r.iter().all(|x| !x.passed));
    assert_eq!(r[0].position, Some(run.trace.len() as u64));
    let first_prediction = run.trace.iter().find(|e| e.kind == TraceKind::PredictionMade).unwrap().seq;
    assert_eq!(r[1].position, Some(first_prediction));
    let computing = run.trace.iter().find(|e| e.detail == Detail::State("computing".into())).unwrap().seq;
    assert_eq!(r[2].position, Some(computing));
}

#[test]
fn replays_are_identical() {
    let (a, sc) = calculator();
    let mut p = oracles(&a, &sc);
    let run = replay_determinism(&a.unit, &sc, &mut p, 3).unwrap();
    assert!(run.passed(&sc));
}

#[test]
fn empty_scenario_only_settles_initial_states() {
    let (a, sc) = calculator();
    let mut p = oracles(&a, &sc);
    let empty = Scenario::default();
    let run = run_scenario(&a.unit, &empty, &mut p);
    assert_eq!(run.outcome, Ok(()));
    assert!(run.trace.iter().all(|e| e.time == 0));
    let states: Vec<(String, String)> = run
        .trace
        .iter()
        .filter_map(|e| match &e.detail {
            Detail::State(s) => Some((e.thing.clone(), s.clone())),
            _ => None,
        })
        .collect();
    let expect = [
        ("camera", "idle"),
        ("server", "preprocessing"),
        ("device", "collecting"),
        ("server", "training"),
        ("server", "ready"),
    ];
    assert_eq!(states, expect.map(|(a, b)| (a.to_string(), b.to_string())));
    assert!(run.trace.iter().all(|e| matches!(e.kind, TraceKind::StateEntered | TraceKind::ActionExecuted)));
}

#[test]
fn missing_binding_is_reported_before_running() {
    let (a, sc) = calculator();
    let run = run_scenario(&a.unit, &sc, &mut Predictors::new());
    assert!(run.trace.is_empty());
    assert_eq!(run.outcome, Err(SimError::UnboundPredictor { unit: "DAML_server".into(), instance: "server".into() }));

    // network instances are checked when first asked
    let mut p = oracles(&a, &sc);
    p.remove("ops");
    let run = run_scenario(&a.unit, &sc, &mut p);
    assert_eq!(run.outcome, Err(SimError::UnboundPredictor { unit: "ops".into(), instance: "ops".into() }));
    assert!(!run.trace.is_empty());
}

const LOOP: &str = "
thing Loop {
    property n: Int = 0
    statechart init a {
        state a { on / n = n + 1 -> b }
        state b { on -> a }
    }
}
pipeline P { instance l: Loop }
";

#[test]
fn step_limit_position_is_stable() {
    let unit = unit_from(LOOP);
    let limit = 50u64;
    let sc = scenario(&format!("step_limit: {limit}"));
    // oracle: one StateEntered at start; a->b adds an assignment and an
    // entry, b->a adds an entry
    let mut events = 1u64;
    for step in 0..limit {
        events += if step % 2 == 0 { 2 } else { 1 };
    }
    for _ in 0..3 {
        let run = run_scenario(&unit, &sc, &mut Predictors::new());
        assert_eq!(run.outcome, Err(SimError::StepLimitExceeded { limit, seq: events, time: 0 }));
        assert_eq!(run.trace.len() as u64, events);
    }
}

#[test]
fn trained_models_answer_through_the_bridge() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&sample_root(), dir.path());
    let a = analysis(dir.path());
    let launcher = MockLauncher::new(dir.path());
    build::build(&a, &ReferenceBackend::default(), &launcher, &BuildOptions::default()).unwrap();
    let sc = load_scenario(&dir.path().join("scenarios/calculator.scn")).unwrap();
    let store = build::store_for(&a.unit);
    let mut p = bind_predictors(&a, &sc, &store, Some(&launcher), PredictorMode::Trained).unwrap();
    let run = run_scenario(&a.unit, &sc, &mut p);
    assert_eq!(run.outcome, Ok(()), "{}", run.trace_text());
    assert!(!launcher.calls_of(Verb::Load).is_empty());

    // outputs match the stored archives evaluated directly
    let samples = read_samples(&dir.path().join("data/samples.csv"));
    let mut n = 0;
    for e in &run.trace {
        let Detail::Prediction { unit, input, output } = &e.detail else { continue };
        let rec = store.latest(unit).unwrap().unwrap();
        let archive = WeightArchive::read(&store.resolve(&rec.archive)).unwrap();
        let want = archive.predict(&samples[input]).unwrap();
        assert_eq!(output, &want);
        assert_eq!(output.len(), if unit == "ops" { 4 } else { 10 });
        n += 1;
    }
    assert_eq!(n, 3);
}

fn read_samples(path: &Path) -> BTreeMap<String, Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            let xs = header.iter().zip(&cells).filter(|(h, _)| h.starts_with("pixel_")).map(|(_, c)| c.parse().unwrap()).collect();
            (cells[0].to_string(), xs)
        })
        .collect()
}

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

const RELAY: &str = "
thing Relay {
    message m(v: Int)
    port i: in { m }
    port o: out { m }
    statechart init s { state s { on i?m(v) / o!m(v) } }
}
thing Sink {
    message m(v: Int)
    port i: in { m }
    property last: Int = 0
    statechart init s { state s { on i?m(v) / last = v } }
}
pipeline P {
    instance a: Relay
    instance b: Sink
    instance c: Sink
    connect a.o -> b.i
    connect a.o -> c.i
}
";

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn connectors_are_fifo_and_lossless(
        gaps in prop::collection::vec(0u64..3, 0..30),
        latency in 1u64..5,
    ) {
        let unit = unit_from(RELAY);
        let mut at = 0;
        let mut events = Vec::new();
        for (k, g) in gaps.iter().enumerate() {
            at += g;
            events.push(format!("{{ at: {at} to: \"a.i\" message: m args: ({k}) }}"));
        }
        let sc = scenario(&format!(
            "latency: {latency}\nconnector_latency: ((\"a.o\", {}))\nevents: ({})",
            latency + 1,
            events.join(", ")
        ));
        let run = run_scenario(&unit, &sc, &mut Predictors::new());
        prop_assert_eq!(&run.outcome, &Ok(()));
        let got = |thing: &str, kind: TraceKind| -> Vec<SimValue> {
            run.trace
                .iter()
                .filter(|e| e.thing == thing && e.kind == kind)
                .filter_map(|e| match &e.detail {
                    Detail::Message { args, .. } => Some(args[0].clone()),
                    _ => None,
                })
                .collect()
        };
        let sent: Vec<SimValue> = (0..gaps.len() as i64).map(SimValue::Int).collect();
        prop_assert_eq!(got("a", TraceKind::MessageSent), sent.clone());
        prop_assert_eq!(got("b", TraceKind::MessageReceived), sent.clone());
        prop_assert_eq!(got("c", TraceKind::MessageReceived), sent);
        // each hop takes the connector latency
        for e in run.trace.iter().filter(|e| e.thing != "a" && e.kind == TraceKind::MessageReceived) {
            let Detail::Message { args, .. } = &e.detail else { unreachable!() };
            let SimValue::Int(k) = args[0] else { unreachable!() };
            let sent_at: u64 = gaps[..=k as usize].iter().sum();
            prop_assert_eq!(e.time, sent_at + latency + 1);
        }
        let seqs: Vec<u64> = run.trace.iter().map(|e| e.seq).collect();
        prop_assert_eq!(seqs, (0..run.trace.len() as u64).collect::<Vec<_>>());
        prop_assert!(run.trace.windows(2).all(|w| w[0].time <= w[1].time));
    }
}
