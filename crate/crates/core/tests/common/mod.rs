//! Generators shared by the property, fuzz and acceptance suites.
#![allow(dead_code)]

use mlcforge::analysis::infer_shapes_checked;
use mlcforge::diag::Diagnostic;
use mlcforge::model::network::elaborate;
use mlcforge::syntax::parse_network;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
enum Op {
    Conv { k: u64, s: u64, c: u64, same: bool },
    Pool { k: u64, avg: bool },
    Act(&'static str),
    Flatten,
    Fc(u64),
    Dropout,
}

impl Op {
    fn text(&self) -> String {
        match self {
            Op::Conv { k, s, c, same } => {
                let pad = if *same { ", padding=same" } else { "" };
                format!("Convolution(kernel=({k},{k}), channels={c}, stride=({s},{s}){pad})")
            }
            Op::Pool { k, avg } => format!("Pooling({}, window=({k},{k}))", if *avg { "avg" } else { "max" }),
            Op::Act(a) => a.to_string(),
            Op::Flatten => "Flatten".into(),
            Op::Fc(u) => format!("FullyConnected({u})"),
            Op::Dropout => "Dropout(0.25)".into(),
        }
    }

    /// Independent shape rule; `None` when the layer cannot take `input`.
    fn apply(&self, input: &[u64]) -> Option<Vec<u64>> {
        let hwc = |x: &[u64]| match *x {
            [h, w] => Some((h, w, 1)),
            [h, w, c] => Some((h, w, c)),
            _ => None,
        };
        match self {
            Op::Conv { k, s, c, same } => {
                let (h, w, _) = hwc(input)?;
                if *same {
                    Some(vec![h.div_ceil(*s), w.div_ceil(*s), *c])
                } else if *k > h || *k > w {
                    None
                } else {
                    Some(vec![(h - k) / s + 1, (w - k) / s + 1, *c])
                }
            }
            Op::Pool { k, .. } => {
                let (h, w, c) = hwc(input)?;
                (*k <= h && *k <= w).then(|| vec![(h - k) / k + 1, (w - k) / k + 1, c])
            }
            Op::Act(_) | Op::Dropout => Some(input.to_vec()),
            Op::Flatten => Some(vec![input.iter().product()]),
            Op::Fc(u) => (input.len() == 1).then(|| vec![*u]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArchCase {
    input: Vec<u64>,
    ops: Vec<Op>,
    output: Vec<u64>,
    pub mutation: Option<&'static str>,
}

impl ArchCase {
    pub fn text(&self) -> String {
        let dims = |d: &[u64]| d.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        let body: Vec<String> = self.ops.iter().map(Op::text).collect();
        format!(
            "component N {{\n    ports\n        in x: Q(0:255)^{{{}}},\n        out y: Q(0:1)^{{{}}};\n    net {{ x -> {} -> y }}\n}}\n",
            dims(&self.input),
            dims(&self.output),
            body.join(" -> ")
        )
    }

    /// Per-layer shapes by the oracle, or `None` if some layer rejects its
    /// input or the result differs from the declared output.
    pub fn oracle(&self) -> Option<Vec<Vec<u64>>> {
        let mut shapes = vec![self.input.clone()];
        for op in &self.ops {
            let next = op.apply(shapes.last()?)?;
            shapes.push(next);
        }
        (shapes.last()? == &self.output).then_some(shapes)
    }

    /// What the toolchain makes of the text: the inferred shapes, or the
    /// diagnostics code.
    pub fn check(&self) -> Result<Vec<Vec<u64>>, String> {
        let (net, diags) = parse_network(&self.text(), "n.nal");
        let net = net.ok_or_else(|| format!("parse: {}", render(&diags)))?;
        let flat = elaborate(&net, &Default::default()).map_err(|e| format!("elaborate: {e}"))?;
        infer_shapes_checked(&flat, &|_| None).map(|a| a.shapes).map_err(|e| e.code().to_string())
    }
}

pub fn render(diags: &[Diagnostic]) -> String {
    diags.iter().map(Diagnostic::render).collect::<Vec<_>>().join("; ")
}

const ACTS: [&str; 3] = ["Relu", "Tanh", "Sigmoid"];

/// A random well-formed architecture.
pub fn valid_arch(rng: &mut ChaCha8Rng) -> ArchCase {
    let (h, w) = (rng.gen_range(6..=28), rng.gen_range(6..=28));
    let mut input = vec![h, w];
    if rng.gen_bool(0.4) {
        input.push(rng.gen_range(1..=3));
    }
    let mut ops = Vec::new();
    let mut shape = input.clone();
    for _ in 0..rng.gen_range(0..=3) {
        let (h, w) = (shape[0], shape[1]);
        let op = match rng.gen_range(0..3) {
            0 => Op::Conv {
                k: rng.gen_range(1..=h.min(w).min(5)),
                s: rng.gen_range(1..=2),
                c: rng.gen_range(1..=8),
                same: rng.gen_bool(0.3),
            },
            1 => Op::Pool { k: rng.gen_range(1..=h.min(w).min(3)), avg: rng.gen_bool(0.5) },
            _ => Op::Act(*ACTS.choose(rng).unwrap()),
        };
        shape = op.apply(&shape).expect("generated within bounds");
        ops.push(op);
    }
    ops.push(Op::Flatten);
    for _ in 0..rng.gen_range(1..=3) {
        ops.push(Op::Fc(rng.gen_range(1..=64)));
        match rng.gen_range(0..3) {
            0 => ops.push(Op::Act(*ACTS.choose(rng).unwrap())),
            1 => ops.push(Op::Dropout),
            _ => {}
        }
    }
    if rng.gen_bool(0.5) {
        ops.push(Op::Act("Softmax"));
    }
    let mut case = ArchCase { input, ops, output: Vec::new(), mutation: None };
    let mut s = case.input.clone();
    for op in &case.ops {
        s = op.apply(&s).unwrap();
    }
    case.output = s;
    case
}

/// Applies one dimension-breaking mutation.
pub fn break_arch(rng: &mut ChaCha8Rng, mut case: ArchCase) -> ArchCase {
    let flatten = case.ops.iter().position(|o| matches!(o, Op::Flatten)).unwrap();
    match rng.gen_range(0..4) {
        0 => {
            let last = case.output.len() - 1;
            case.output[last] += rng.gen_range(1..=5);
            case.mutation = Some("output-dims");
        }
        1 => {
            case.ops.remove(flatten);
            case.mutation = Some("drop-flatten");
        }
        2 => {
            // a valid-padding window one larger than what reaches it
            let at = rng.gen_range(0..=flatten);
            let mut shape = case.input.clone();
            for op in &case.ops[..at] {
                shape = op.apply(&shape).unwrap();
            }
            let k = shape[0].max(shape[1]) + 1;
            let op = if rng.gen_bool(0.5) { Op::Conv { k, s: 1, c: 2, same: false } } else { Op::Pool { k, avg: false } };
            case.ops.insert(at, op);
            case.mutation = Some("oversize-window");
        }
        _ => {
            let fc = case.ops.iter().rposition(|o| matches!(o, Op::Fc(_))).unwrap();
            if let Op::Fc(u) = &mut case.ops[fc] {
                *u += rng.gen_range(1..=5);
            }
            case.mutation = Some("fc-units");
        }
    }
    case
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Runs `cases` valid and `cases` broken architectures from `seed`;
/// returns the failures.
pub fn shape_suite(seed: u64, cases: usize) -> Vec<String> {
    let mut r = rng(seed);
    let mut failures = Vec::new();
    for i in 0..cases {
        let valid = valid_arch(&mut r);
        let want = valid.oracle().expect("generator builds valid archs");
        match valid.check() {
            Ok(got) if got == want => {}
            other => failures.push(format!("case {i} valid arch: {other:?}\n{}", valid.text())),
        }
        let broken = break_arch(&mut r, valid);
        if broken.oracle().is_some() {
            failures.push(format!("case {i}: mutation {:?} left the arch valid", broken.mutation));
        } else if let Ok(shapes) = broken.check() {
            failures.push(format!("case {i}: {:?} accepted with {shapes:?}\n{}", broken.mutation, broken.text()));
        }
    }
    failures
}

/// Keywords and punctuation of the source languages, for token soup.
pub const VOCAB: &[&str] = &[
    "thing", "message", "port", "property", "statechart", "init", "state", "on", "ml", "features", "labels", "ON",
    "OFF", "SEMI", "dataset", "model_algorithm", "backend", "pipeline", "instance", "stub", "connect", "train",
    "label", "component", "ports", "in", "out", "inout", "net", "def", "Flatten", "FullyConnected", "Convolution",
    "Pooling", "Relu", "Softmax", "Dropout", "ImportPretrained", "da_predict", "da_train", "da_preprocess", "Int",
    "Real", "Bool", "Str", "Q", "{", "}", "(", ")", "[", "]", "<", ">", "->", "=", ":", ";", ",", ".", "/", "?",
    "!", "^", "&&", "||", "==", "+", "-", "*", "%", "\"", "\"s\"", "0", "1", "42", "3.5", "-7", "1e9", "x", "y",
    "\n", " ", "//", "#", "true", "false", "REQ", "RES", "OK", "ERR", "TRAIN",
];

/// Random bytes, token soup, or a byte-level mutation of `seed`.
pub fn fuzz_input(r: &mut ChaCha8Rng, seed: &[u8]) -> Vec<u8> {
    match r.gen_range(0..3) {
        0 => (0..r.gen_range(0..200)).map(|_| r.gen()).collect(),
        1 => (0..r.gen_range(0..80)).map(|_| *VOCAB.choose(r).unwrap()).collect::<Vec<_>>().join(" ").into_bytes(),
        _ => {
            let mut b = seed.to_vec();
            for _ in 0..r.gen_range(1..8) {
                if b.is_empty() {
                    break;
                }
                let i = r.gen_range(0..b.len());
                match r.gen_range(0..3) {
                    0 => {
                        b.remove(i);
                    }
                    1 => b.insert(i, r.gen()),
                    _ => b[i] = r.gen(),
                }
            }
            b
        }
    }
}

/// Every diagnostic points into `file` within `len` bytes.
pub fn spans_ok(diags: &[Diagnostic], file: &str, len: usize) -> Result<(), String> {
    for d in diags {
        if &*d.span.file != file || d.span.start.offset > len || d.span.end.offset > len || d.span.start.offset > d.span.end.offset {
            return Err(format!("bad span in {}", d.render()));
        }
    }
    Ok(())
}

pub fn sample_dir() -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../samples/calculator")
}

fn sample_text(rel: &str) -> String {
    std::fs::read_to_string(sample_dir().join(rel)).unwrap()
}

type Check = Box<dyn Fn(&[u8]) -> Result<(), String>>;
type Seed = Vec<u8>;

fn text_of(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

/// Rejection must come with at least one error, and spans stay in the file.
fn judged(ok: bool, diags: &[Diagnostic], file: &str, len: usize) -> Result<(), String> {
    spans_ok(diags, file, len)?;
    if !ok && !diags.iter().any(Diagnostic::is_error) {
        return Err("rejected without an error diagnostic".into());
    }
    Ok(())
}

/// The parsers with a seed text each.
pub fn parsers() -> Vec<(&'static str, Seed, Check)> {
    use mlcforge::analysis::DatasetMeta;
    use mlcforge::build::bridge::{Request, Response};
    use mlcforge::build::{ArtifactManifest, StoreRecord};
    use mlcforge::sim::parse_scenario;
    use mlcforge::syntax::{parse_config, parse_manifest, parse_networks, parse_system, parse_value};
    use mlcforge::weights::WeightArchive;

    use mlcforge::model::{ConfigTree, Value};
    use mlcforge::weights::{ArchiveManifest, OptimizerState, ParamBlock};

    let w = ParamBlock::new("W0", vec![2, 2], vec![1.0, -0.5, 0.25, 2.0]);
    let b = ParamBlock::new("b0", vec![2], vec![0.0, 0.5]);
    let archive = WeightArchive {
        manifest: ArchiveManifest {
            layer_sizes: vec![2, 2],
            activations: vec!["softmax".into()],
            dataset_digest: "cd".repeat(32),
            epochs: 3,
            metric: 0.5,
            extra: ConfigTree::new().with("classes", Value::List(vec!["a".into(), "b".into()])),
        },
        optimizer: Some(OptimizerState {
            kind: "adam".into(),
            step: 6,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            moments: vec![w.zeros_like("m/W0"), b.zeros_like("v/b0")],
        }),
        params: vec![w, b],
    }
    .to_bytes();
    vec![
        ("system", (sample_text("system/things.scl") + &sample_text("system/pipeline.scl")).into_bytes(), Box::new(|b: &[u8]| {
            let t = text_of(b);
            let (_, d) = parse_system(&t, "f.scl");
            spans_ok(&d, "f.scl", t.len())
        }) as Check),
        ("network", sample_text("networks/Detector.nal").into_bytes(), Box::new(|b: &[u8]| {
            let t = text_of(b);
            let (nets, d) = parse_networks(&t, "f.nal");
            judged(!nets.is_empty() || t.trim().is_empty(), &d, "f.nal", t.len())
        })),
        ("config", sample_text("configs/OperatorTraining.tcl").into_bytes(), Box::new(|b: &[u8]| {
            let t = text_of(b);
            let (tree, d) = parse_config(&t, "f.tcl");
            judged(tree.is_some(), &d, "f.tcl", t.len())
        })),
        ("value", "{ a: (1, 2.5, \"s\") b { c: true } }".into(), Box::new(|b: &[u8]| {
            let t = text_of(b);
            match parse_value(&t) {
                Ok(_) => Ok(()),
                Err(d) => spans_ok(&[d], "<value>", t.len()),
            }
        })),
        ("manifest", sample_text("mlc.project").into_bytes(), Box::new(|b: &[u8]| {
            let t = text_of(b);
            let (_, d) = parse_manifest(&t, "mlc.project");
            spans_ok(&d, "mlc.project", t.len())
        })),
        ("scenario", sample_text("scenarios/calculator.scn").into_bytes(), Box::new(|b: &[u8]| {
            let t = text_of(b);
            let (sc, d) = parse_scenario(&t, "f.scn");
            judged(sc.is_some(), &d, "f.scn", t.len())
        })),
        ("bridge-request", "REQ 4 PREDICT { unit: \"u\" input: (1, 10) }".into(), Box::new(|b: &[u8]| {
            let _ = Request::parse(&text_of(b));
            Ok(())
        })),
        ("bridge-response", "RES 4 OK { output: (0.25, 0.75) }".into(), Box::new(|b: &[u8]| {
            let _ = Response::parse(&text_of(b));
            Ok(())
        })),
        ("store-index", "u\taa\tbb\tcc\t10\tmodels/u/1/weights.mlcw\t1".into(), Box::new(|b: &[u8]| {
            let _ = StoreRecord::parse(&text_of(b));
            Ok(())
        })),
        ("artifact-manifest", "kind: \"model-archive\"\nunit: \"u\"\n".into(), Box::new(|b: &[u8]| {
            let _ = ArtifactManifest::parse(&text_of(b));
            Ok(())
        })),
        ("weights", archive, Box::new(|b: &[u8]| {
            let _ = WeightArchive::from_bytes(b);
            Ok(())
        })),
        ("dataset", sample_text("data/operators.csv").lines().take(5).collect::<Vec<_>>().join("\n").into_bytes(), Box::new(|b: &[u8]| {
            let _ = DatasetMeta::from_bytes(b, "d.csv");
            Ok(())
        })),
    ]
}

/// `n` inputs per parser; returns `(parser, failures)`.
pub fn fuzz_all(seed: u64, n: usize) -> Vec<(&'static str, Vec<String>)> {
    parsers()
        .into_iter()
        .enumerate()
        .map(|(k, (name, corpus, check))| {
            let mut r = rng(seed.wrapping_add(k as u64));
            let mut failures = Vec::new();
            for i in 0..n {
                let input = fuzz_input(&mut r, &corpus);
                let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| check(&input)));
                match outcome {
                    Ok(Ok(())) => {}
                    Ok(Err(e)) => failures.push(format!("input {i}: {e}: {:?}", text_of(&input))),
                    Err(_) => failures.push(format!("input {i}: panic on {:?}", text_of(&input))),
                }
            }
            (name, failures)
        })
        .collect()
}
