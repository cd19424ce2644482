//! Exact hypervolume over random three-objective fronts of growing size.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cpco_core::metrics::hypervolume_exact;

fn random_points(count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect()
}

fn bench_exact(c: &mut Criterion) {
    let reference = vec![1.1, 1.1, 1.1];
    let mut group = c.benchmark_group("hypervolume_exact_3d");
    for count in [16usize, 64, 256] {
        let points = random_points(count, 9);
        group.bench_with_input(BenchmarkId::from_parameter(count), &(), |b, _| {
            b.iter(|| hypervolume_exact(&points, &reference));
        });
    }
    group.finish();
}

criterion_group!(benches, bench_exact);
criterion_main!(benches);
