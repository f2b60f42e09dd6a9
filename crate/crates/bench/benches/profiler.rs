use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use trms_core::oracle::naive_run;
use trms_core::tracegen::{gen_random, RandomParams};
use trms_core::{run, ProfilerConfig};

fn profile(c: &mut Criterion) {
    let mut group = c.benchmark_group("profile");
    for threads in [1, 4] {
        let trace = gen_random(RandomParams {
            seed: 1,
            threads,
            cells: 1 << 16,
            events: 100_000,
            ..Default::default()
        })
        .merged();
        group.throughput(Throughput::Elements(trace.len() as u64));
        for width in [16u8, 32, 64] {
            let config = ProfilerConfig::default().with_width(width).unwrap();
            group.bench_with_input(
                BenchmarkId::new(format!("w{width}"), threads),
                &trace,
                |b, t| b.iter(|| run(t, config).unwrap()),
            );
        }
    }
    group.finish();
}

fn against_reference(c: &mut Criterion) {
    let trace = gen_random(RandomParams {
        seed: 2,
        events: 5_000,
        ..Default::default()
    })
    .merged();
    let config = ProfilerConfig::default();
    let mut group = c.benchmark_group("fast_vs_naive");
    group.bench_function("fast", |b| b.iter(|| run(&trace, config).unwrap()));
    group.bench_function("naive", |b| b.iter(|| naive_run(&trace, &config).unwrap()));
    group.finish();
}

criterion_group!(benches, profile, against_reference);
criterion_main!(benches);
