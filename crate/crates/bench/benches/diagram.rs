//! Diagram construction on deep optional chains, the shape that maximizes
//! consequence-edge depth per feature.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cpco_core::fad::build_fad;
use cpco_core::fm;
use cpco_core::sat::classify_features;

fn chain_model_text(n: usize) -> String {
    let mut text = String::from("Root\n");
    for i in 1..n {
        for _ in 0..i {
            text.push_str("  ");
        }
        text.push_str(&format!("C{i} [optional]\n"));
    }
    text
}

fn bench_chain_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("diagram_build_chain");
    for n in [100usize, 200, 400] {
        let model = fm::parse(&chain_model_text(n)).expect("chain parses");
        let cls = classify_features(&model).expect("satisfiable");
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| build_fad(&model, &cls));
        });
    }
    group.finish();
}

fn bench_reference_model_build(c: &mut Criterion) {
    let path = format!("{}/../../fixtures/mobilemedia.fm", env!("CARGO_MANIFEST_DIR"));
    let model = fm::parse(&std::fs::read_to_string(path).expect("fixture readable"))
        .expect("fixture parses");
    let cls = classify_features(&model).expect("satisfiable");
    c.bench_function("diagram_build_mobilemedia", |b| {
        b.iter(|| build_fad(&model, &cls));
    });
}

criterion_group!(benches, bench_chain_build, bench_reference_model_build);
criterion_main!(benches);
