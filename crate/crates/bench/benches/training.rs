use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mrccg::cg::{solve_full_on, train_on};
use mrccg::datasets::{standardize, synthetic_gaussian, SyntheticSpec};
use mrccg::featmap::default_rff_gamma;
use mrccg::problem::build_constraints;
use mrccg::{CgConfig, ConstraintSystem, FeatureMap, InstanceMap, MomentStats};

fn rff_problem(components: usize) -> (ConstraintSystem, MomentStats) {
    let raw = synthetic_gaussian(&SyntheticSpec {
        n: 100,
        d: 20,
        n_classes: 2,
        informative: 5,
        separation: 1.0,
        seed: 0,
    })
    .unwrap();
    let data = standardize(&raw).unwrap().0;
    let gamma = default_rff_gamma(&data.instances);
    let fmap = FeatureMap::new(InstanceMap::rff(20, components, gamma, 0).unwrap(), 2);
    let cs = build_constraints(&data, &fmap).unwrap();
    let stats = cs.moments(&data.labels, 1.0).unwrap();
    (cs, stats)
}

fn cg_vs_full(c: &mut Criterion) {
    let mut group = c.benchmark_group("cg_vs_full");
    group.sample_size(10);
    for components in [100, 400] {
        let (cs, stats) = rff_problem(components);
        let cfg = CgConfig {
            k_max: 100,
            ..CgConfig::default()
        };
        let m = cs.n_features();
        group.bench_with_input(BenchmarkId::new("cg", m), &cfg, |b, cfg| {
            b.iter(|| train_on(black_box(&cs), &stats, cfg).unwrap().r_star)
        });
        group.bench_with_input(BenchmarkId::new("full", m), &cfg.simplex, |b, opts| {
            b.iter(|| solve_full_on(black_box(&cs), &stats, opts).unwrap().r_star)
        });
    }
    group.finish();
}

fn constraint_building(c: &mut Criterion) {
    let raw = synthetic_gaussian(&SyntheticSpec {
        n: 200,
        d: 50,
        n_classes: 3,
        informative: 10,
        separation: 1.0,
        seed: 1,
    })
    .unwrap();
    let fmap = FeatureMap::new(InstanceMap::rff(50, 500, 0.02, 1).unwrap(), 3);
    c.bench_function("build_constraints_rff500_n200", |b| {
        b.iter(|| build_constraints(black_box(&raw), &fmap).unwrap().n_rows())
    });
}

criterion_group!(benches, cg_vs_full, constraint_building);
criterion_main!(benches);
