use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use pace_bench::sentence;
use pace_core::scoring::score_pair;
use pace_core::MetricId;

fn metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("score_pair");
    for len in [8, 64] {
        let prediction = sentence(1, len);
        let references = vec![sentence(2, len), sentence(3, len + 3)];
        for metric in MetricId::ALL {
            group.bench_with_input(BenchmarkId::new(metric.to_string(), len), &len, |b, _| {
                b.iter(|| score_pair(black_box(&prediction), black_box(&references), metric))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, metrics);
criterion_main!(benches);
