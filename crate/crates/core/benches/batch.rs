use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_bigint::BigInt;
use pmmg_core::batch::{self, DayJob};
use pmmg_core::workload::{generate_default_plan, privacy_first_script};
use pmmg_core::{CostParams, Exact, RealFixture};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn day_jobs(count: u64) -> Vec<DayJob> {
    (0..count)
        .map(|seed| {
            let plan = generate_default_plan(seed);
            let decisions = privacy_first_script(&plan);
            DayJob::new(plan, decisions, seed)
        })
        .collect()
}

fn exact_params(count: usize) -> Vec<CostParams<Exact>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rat = || Exact::new(BigInt::from(rng.random_range(0..1_000_000u64)), BigInt::from(rng.random_range(1..10_000u64)));
    (0..count)
        .map(|i| CostParams {
            ui: rat(),
            pg: rat(),
            dba: rat(),
            app_time: rat(),
            n: i as u64 % 1000,
        })
        .collect()
}

fn bench_days(c: &mut Criterion) {
    let fixture = RealFixture::default_fixture();
    let mut group = c.benchmark_group("run_days");
    for count in [16, 128] {
        let jobs = day_jobs(count);
        group.bench_with_input(BenchmarkId::new("seq", count), &jobs, |b, jobs| {
            b.iter(|| batch::run_days_seq(black_box(jobs), &fixture))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", count), &jobs, |b, jobs| {
            b.iter(|| batch::run_days_par(black_box(jobs), &fixture))
        });
    }
    group.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let base = CostParams::placeholder();
    let mut group = c.benchmark_group("sweep");
    for n_max in [100u64, 10_000] {
        group.bench_with_input(BenchmarkId::new("seq", n_max), &n_max, |b, &n| {
            b.iter(|| batch::sweep_seq(black_box(&base), 0..=n))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", n_max), &n_max, |b, &n| {
            b.iter(|| batch::sweep_par(black_box(&base), 0..=n))
        });
    }
    group.finish();
}

fn bench_identity(c: &mut Criterion) {
    let params = exact_params(2_000);
    let mut group = c.benchmark_group("identity_mismatches");
    group.sample_size(20);
    group.bench_function("seq", |b| b.iter(|| batch::identity_mismatches_seq(black_box(&params))));
    #[cfg(feature = "parallel")]
    group.bench_function("par", |b| b.iter(|| batch::identity_mismatches_par(black_box(&params))));
    group.finish();
}

criterion_group!(benches, bench_days, bench_sweep, bench_identity);
criterion_main!(benches);
