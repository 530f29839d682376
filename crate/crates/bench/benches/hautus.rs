use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hypctl_bench::instance;
use hypctl_core::fixtures::{intro_system, random_cycle_graph};
use hypctl_core::{
    approx_controllability_report, hautus_value, network_approx_test, Complex64, StripOptions,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn point(c: &mut Criterion) {
    let (sys, _, _) = instance(3, 1, 1.0, 3);
    c.bench_function("hautus_value_n3", |b| {
        b.iter(|| hautus_value(&sys, Complex64::new(-0.2, 1.7)).unwrap())
    });
}

fn strip(c: &mut Criterion) {
    let mut g = c.benchmark_group("strip_search");
    g.sample_size(10);
    g.bench_function("intro", |b| {
        let sys = intro_system(0.5f64.sqrt());
        b.iter(|| approx_controllability_report(&sys, &StripOptions::default()))
    });
    for n in [2usize, 3] {
        let (sys, _, _) = instance(n, 1, 1.0, 11);
        g.bench_with_input(BenchmarkId::new("random", n), &n, |b, _| {
            b.iter(|| approx_controllability_report(&sys, &StripOptions::default()))
        });
    }
    g.finish();
}

fn network(c: &mut Criterion) {
    let g = random_cycle_graph(&mut ChaCha8Rng::seed_from_u64(5), 3, 3, false, 1.0, 1);
    let mut grp = c.benchmark_group("network");
    grp.sample_size(10);
    grp.bench_function("approx_three_cycles", |b| {
        b.iter(|| network_approx_test(&g, 1e-6, 1e-10).unwrap())
    });
    grp.finish();
}

criterion_group!(benches, point, strip, network);
criterion_main!(benches);
