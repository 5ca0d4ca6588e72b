use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use powerdrop::family::power_mean_aggregate;
use powerdrop_bench::random_matrix;

fn aggregate(c: &mut Criterion) {
    let mut group = c.benchmark_group("power_mean_aggregate");
    for (s, classes) in [(64, 10), (200, 71), (1000, 71)] {
        let p = random_matrix(s, classes, 3);
        for alpha in [0.0, 0.5, 1.0] {
            group.bench_with_input(
                BenchmarkId::new(format!("alpha={alpha}"), format!("{s}x{classes}")),
                &p,
                |b, p| b.iter(|| power_mean_aggregate(black_box(p), alpha).unwrap()),
            );
        }
    }
    group.finish();
}

criterion_group!(benches, aggregate);
criterion_main!(benches);
