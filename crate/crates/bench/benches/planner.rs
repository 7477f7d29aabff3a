use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ergosafe::optimizer::AugmentedLagrangian;
use ergosafe::{initialize, rollout, solve, SolverConfig};
use ergosafe_bench::scene;
use std::hint::black_box;

fn metric_and_gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("metric_gradient");
    for modes in [5, 10, 20] {
        let spec = scene(200, modes, 0);
        let u = initialize(&spec, 0, 0.02);
        let traj = rollout(spec.dynamics().as_ref(), spec.start(), &u, spec.dt()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(modes), &traj, |b, traj| {
            b.iter(|| spec.objective().metric_gradient(black_box(traj), spec.dynamics().as_ref()).unwrap())
        });
    }
    group.finish();
}

fn augmented_gradient(c: &mut Criterion) {
    let spec = scene(200, 10, 8);
    let u = initialize(&spec, 0, 0.02);
    let al = AugmentedLagrangian::new(&spec, 10.0, 1e-5);
    let mut g = vec![0.0; u.len()];
    c.bench_function("augmented_value_and_gradient", |b| {
        b.iter(|| al.value_and_gradient(black_box(&u), &mut g))
    });
}

fn small_solve(c: &mut Criterion) {
    let spec = scene(60, 6, 4);
    let cfg = SolverConfig::default();
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    group.bench_function("sc_eto_T60_K6", |b| b.iter(|| solve(black_box(&spec), &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, metric_and_gradient, augmented_gradient, small_solve);
criterion_main!(benches);
