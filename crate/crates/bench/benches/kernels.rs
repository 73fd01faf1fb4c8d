use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use toepgrad::curvature::hessian_blocks;
use toepgrad::likelihood::Objective;
use toepgrad::optimizer::{fit_gd2, initialize, OptimizerConfig};
use toepgrad::ScenarioKind;
use toepgrad_bench::fixture;

fn evaluation(c: &mut Criterion) {
    let s = fixture(ScenarioKind::Atom, 200, 1);
    let obj = Objective::new(&s).unwrap();
    let eps = OptimizerConfig::default().epsilon_for(&s).unwrap();
    let mut group = c.benchmark_group("evaluate");
    for kf in [1, 2, 4] {
        let m = initialize(&s, kf * s.dim(), 7, eps).unwrap();
        group.bench_with_input(BenchmarkId::new("nll", kf), &m, |b, m| b.iter(|| obj.value(m).unwrap()));
        group.bench_with_input(BenchmarkId::new("gradient", kf), &m, |b, m| {
            b.iter(|| obj.evaluate(m).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("hessian", kf), &m, |b, m| {
            b.iter(|| hessian_blocks(&s, m).unwrap())
        });
    }
    group.finish();
}

fn short_fit(c: &mut Criterion) {
    let s = fixture(ScenarioKind::RandomCara, 60, 3);
    let cfg = OptimizerConfig {
        max_iters: 500,
        ..Default::default()
    };
    c.bench_function("fit_gd2_500_iters", |b| {
        b.iter(|| fit_gd2(&s, 2 * s.dim(), &cfg, 11).unwrap())
    });
}

criterion_group!(benches, evaluation, short_fit);
criterion_main!(benches);
