use std::hint::black_box;

use biokge_bench::random_params;
use biokge_core::models::{score_all_objects, score_gradients, ModelKind};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

const ENTITIES: usize = 10_000;
const RELATIONS: usize = 17;
const DIM: usize = 128;

fn score_all(c: &mut Criterion) {
    let mut group = c.benchmark_group("score_all_objects");
    group.throughput(Throughput::Elements(ENTITIES as u64));
    for kind in ModelKind::ALL {
        let params = random_params(kind, DIM, ENTITIES, RELATIONS, 1);
        group.bench_with_input(BenchmarkId::from_parameter(kind.name()), &params, |b, p| {
            b.iter(|| score_all_objects(p, black_box(7), black_box(3)).unwrap())
        });
    }
    group.finish();
}

fn gradients(c: &mut Criterion) {
    let mut group = c.benchmark_group("score_gradients");
    for kind in ModelKind::ALL {
        let params = random_params(kind, DIM, 1_000, RELATIONS, 2);
        group.bench_with_input(BenchmarkId::from_parameter(kind.name()), &params, |b, p| {
            b.iter(|| score_gradients(p, black_box(1), black_box(2), black_box(3)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, score_all, gradients);
criterion_main!(benches);
