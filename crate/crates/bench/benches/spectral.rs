use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pseudospec::sweep::run_sweep;
use pseudospec::{analyze_point, biorthogonal_eig, detect_events, Arrangement, ModelFamily, SweepPlan, Tolerances};

fn eigensolver(c: &mut Criterion) {
    let tol = Tolerances::default();
    let mut group = c.benchmark_group("biorthogonal_eig");
    for n in [2, 4, 6] {
        let fam = ModelFamily::new(Arrangement::Longitudinal, n).unwrap();
        let h = fam.hamiltonian(0.6, 0.1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &h, |b, h| {
            b.iter(|| biorthogonal_eig(black_box(h), &tol).unwrap())
        });
    }
    group.finish();
}

fn point_analysis(c: &mut Criterion) {
    let tol = Tolerances::default();
    let fam = ModelFamily::new(Arrangement::Transversal, 4).unwrap();
    let h = fam.hamiltonian(0.6, 0.1);
    c.bench_function("analyze_point/n4", |b| b.iter(|| analyze_point(black_box(&h), fam.catalog(), &tol).unwrap()));
}

fn sweep_and_events(c: &mut Criterion) {
    let tol = Tolerances::default();
    let plan = SweepPlan::uniform(Arrangement::Longitudinal, 4, 0.0005, 0.9995, 200, vec![0.05]);
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    group.bench_function("run_sweep/200", |b| b.iter(|| run_sweep(black_box(&plan), &tol).unwrap()));
    let sweeps = run_sweep(&plan, &tol).unwrap();
    let fam = ModelFamily::new(Arrangement::Longitudinal, 4).unwrap();
    group.bench_function("detect_events/200", |b| b.iter(|| detect_events(&fam, black_box(&sweeps[0]), &tol)));
    group.finish();
}

criterion_group!(benches, eigensolver, point_analysis, sweep_and_events);
criterion_main!(benches);
