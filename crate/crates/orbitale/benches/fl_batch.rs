//! Throughput of the batched four-way verification, parallel fan-out vs a
//! single worker. The instance pool is sampled once (fixed seed, so both
//! arms verify identical work) and cloned per iteration.

use criterion::{criterion_group, criterion_main, Criterion};
use orbitale::localfield::Ctx;
use orbitale::matspace::{Case, SymDatum};
use orbitale::orbital::verify_fl_batch;
use orbitale::par::with_pool;
use orbitale::sample::{rng_from_seed, sample_sym};

const CAP: u64 = 1 << 20;

fn pool_of_instances() -> Vec<SymDatum> {
    let mut ctx = Ctx::new(3).unwrap();
    ctx.prec = 64;
    let mut rng = rng_from_seed(90_001);
    (0..16)
        .map(|_| sample_sym(&ctx, Case::FJ, 2, 3, 2000, &mut rng).unwrap().0)
        .collect()
}

fn bench_fl_batch(c: &mut Criterion) {
    let data = pool_of_instances();
    let mut g = c.benchmark_group("verify_fl_batch_16x_n2_q3");
    g.sample_size(10);
    g.bench_function("parallel_default_pool", |b| {
        b.iter(|| with_pool(0, || verify_fl_batch(data.clone(), CAP)))
    });
    g.bench_function("sequential_one_worker", |b| {
        b.iter(|| with_pool(1, || verify_fl_batch(data.clone(), CAP)))
    });
    g.finish();
}

criterion_group!(benches, bench_fl_batch);
criterion_main!(benches);
