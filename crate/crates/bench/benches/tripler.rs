use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kgctx::numkit::Rng;
use kgctx::tripler::{train_batchwise, TrainConfig};
use kgctx_bench::{bench_tripler_config, tripler_fixture};

fn forward(c: &mut Criterion) {
    let f = tripler_fixture(200, bench_tripler_config());
    c.bench_function("tripler/forward_embeddings/200", |b| {
        b.iter(|| black_box(f.model.forward_embeddings(&f.params, &f.neighborhoods).unwrap()))
    });
}

/// One training epoch on growing graphs; the timing curve behind the
/// scaling harness.
fn epoch_scaling(c: &mut Criterion) {
    let mut group = c.benchmark_group("tripler/epoch");
    group.sample_size(10);
    for entities in [50, 100, 200] {
        let f = tripler_fixture(entities, bench_tripler_config());
        let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
        group.bench_with_input(BenchmarkId::from_parameter(entities), &entities, |b, _| {
            b.iter(|| {
                let mut p = f.params.clone();
                train_batchwise(&f.model, &mut p, &f.kg, &f.neighborhoods, &cfg, &mut Rng::new(1)).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, forward, epoch_scaling);
criterion_main!(benches);
