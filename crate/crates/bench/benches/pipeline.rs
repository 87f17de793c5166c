use criterion::{black_box, criterion_group, criterion_main, Criterion};
use mlcforge::analysis::{analyze, AnalyzeOptions};
use mlcforge::build;
use mlcforge::codegen::{self, ReferenceBackend};
use mlcforge::sim::{bind_predictors, load_scenario, run_scenario, PredictorMode};
use mlcforge::syntax::load_project;
use mlcforge_bench::calculator;

fn front_to_back(c: &mut Criterion) {
    let root = calculator();
    c.bench_function("load", |b| b.iter(|| load_project(black_box(&root)).unwrap()));

    let (unit, _) = load_project(&root).unwrap();
    c.bench_function("analyze", |b| b.iter(|| analyze(black_box(&unit), AnalyzeOptions::default())));

    let a = analyze(&unit, AnalyzeOptions::default());
    let backend = ReferenceBackend::default();
    c.bench_function("codegen", |b| b.iter(|| codegen::generate(black_box(&a), &backend).unwrap()));

    let sc = load_scenario(&root.join("scenarios/calculator.scn")).unwrap();
    let store = build::store_for(&a.unit);
    c.bench_function("simulate", |b| {
        b.iter(|| {
            let mut p = bind_predictors(&a, &sc, &store, None, PredictorMode::Oracle).unwrap();
            run_scenario(&a.unit, black_box(&sc), &mut p)
        })
    });
}

criterion_group!(benches, front_to_back);
criterion_main!(benches);
