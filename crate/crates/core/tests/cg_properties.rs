//! Constraint generation against the all-features LP and against dense
//! reimplementations of its selection steps.

use mrccg::cg::{initial_features, select, solve_full_on, train_on};
use mrccg::datasets::{synthetic_gaussian, SyntheticSpec};
use mrccg::problem::build_constraints;
use mrccg::{CgConfig, ConstraintSystem, FeatureMap, InitStrategy, InstanceMap, MomentStats};
use proptest::prelude::*;

fn instance(
    seed: u64,
    n: usize,
    d: usize,
    classes: usize,
    scale: f64,
) -> (ConstraintSystem, MomentStats) {
    let data = synthetic_gaussian(&SyntheticSpec {
        n,
        d,
        n_classes: classes,
        informative: d.min(4),
        separation: 1.5,
        seed,
    })
    .unwrap();
    let fmap = FeatureMap::new(InstanceMap::identity(d), classes);
    let cs = build_constraints(&data, &fmap).unwrap();
    let stats = cs.moments(&data.labels, scale).unwrap();
    (cs, stats)
}

/// Sorts every index by decreasing violation (ties to the lower index),
/// takes the first `n_max` above `epsilon` and adds them to the retained
/// current features.
fn dense_select(
    v: &[f64],
    current: &[usize],
    epsilon: f64,
    n_max: usize,
    active_tol: f64,
) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap().then(a.cmp(&b)));
    let mut out: Vec<usize> = current
        .iter()
        .copied()
        .filter(|&j| v[j] >= -active_tol)
        .collect();
    for &j in order.iter().take(n_max) {
        if v[j] > epsilon && !out.contains(&j) {
            out.push(j);
        }
    }
    out.sort_unstable();
    out
}

proptest! {
    #[test]
    fn select_matches_dense_scan(
        v in prop::collection::vec(prop::sample::select(vec![-1.0, -1e-9, 0.0, 5e-5, 2e-4, 0.3, 0.3, 1.0]), 1..40),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 0..10),
        n_max in 1usize..8,
    ) {
        let mut current: Vec<usize> = picks.iter().map(|i| i.index(v.len())).collect();
        current.sort_unstable();
        current.dedup();
        let sel = select(&v, &current, 1e-4, n_max, 1e-8);
        prop_assert_eq!(&sel.features, &dense_select(&v, &current, 1e-4, n_max, 1e-8));
        for j in &sel.removed {
            prop_assert!(current.contains(j) && !sel.features.contains(j));
        }
        for j in &sel.added {
            prop_assert!(!current.contains(j) && sel.features.contains(j));
        }
    }

    #[test]
    fn screening_matches_full_sort(
        tau in prop::collection::vec(prop::sample::select(vec![-0.5, -0.1, 0.0, 0.1, 0.2, 0.5]), 1..30),
        n_init in 1usize..30,
    ) {
        let m = tau.len();
        let n_init = n_init.min(m);
        let lambda: Vec<f64> = (0..m).map(|j| 0.05 * (j % 3) as f64).collect();
        let stats = MomentStats {
            tau: tau.clone(),
            s: vec![0.0; m],
            lambda: lambda.clone(),
            lambda_scale: 1.0,
            n: 10,
        };
        let score: Vec<f64> = tau.iter().zip(&lambda).map(|(t, l)| t.abs() - l).collect();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| score[b].partial_cmp(&score[a]).unwrap().then(a.cmp(&b)));
        let mut expected = order[..n_init].to_vec();
        expected.sort_unstable();
        prop_assert_eq!(initial_features(&stats, n_init).unwrap(), expected);
    }
}

#[test]
fn traces_are_monotone_and_sandwich_the_full_optimum() {
    for seed in 0..30u64 {
        let classes = 2 + (seed % 2) as usize;
        let (cs, stats) = instance(
            seed,
            12 + (seed as usize % 10),
            6 + (seed as usize % 12),
            classes,
            1.0,
        );
        let cfg = CgConfig {
            n_max: 3,
            k_max: 200,
            init: InitStrategy::Screening { size: Some(2) },
            ..CgConfig::default()
        };
        let run = train_on(&cs, &stats, &cfg).unwrap();
        let full = solve_full_on(&cs, &stats, &cfg.simplex).unwrap();
        let trace = &run.trace;
        assert!(trace.converged, "seed {seed}");
        assert!(
            trace.is_monotone(1e-9),
            "seed {seed}: {:?}",
            trace.objectives()
        );
        let top = 1.0 - 1.0 / classes as f64 + 1e-9;
        for rec in &trace.iterations {
            assert!(rec.r_k >= -1e-9 && rec.r_k <= top, "seed {seed}");
        }
        for pair in trace.iterations.windows(2) {
            let warm = pair[1].warm_objective.unwrap();
            assert!(
                (warm - pair[0].r_k).abs() <= 1e-10,
                "seed {seed}: warm {warm} vs {}",
                pair[0].r_k
            );
            assert!(pair[1].warm_violation.unwrap() <= 1e-9);
        }
        let slack = cfg.epsilon * full.mu.l1_norm() + 1e-7;
        assert!(run.r_star >= full.r_star - 1e-7, "seed {seed}");
        assert!(run.r_star <= full.r_star + slack, "seed {seed}");
    }
}

#[test]
fn zero_epsilon_reaches_the_full_optimum() {
    for seed in 0..10u64 {
        let (cs, stats) = instance(100 + seed, 15, 10, 2 + (seed % 2) as usize, 1.0);
        let cfg = CgConfig {
            epsilon: 0.0,
            n_max: 4,
            k_max: 1000,
            ..CgConfig::default()
        };
        let run = train_on(&cs, &stats, &cfg).unwrap();
        let full = solve_full_on(&cs, &stats, &cfg.simplex).unwrap();
        assert!((run.r_star - full.r_star).abs() <= 1e-7, "seed {seed}");
    }
}

#[test]
fn all_features_at_once_take_one_iteration() {
    let (cs, stats) = instance(7, 20, 8, 3, 1.0);
    let cfg = CgConfig {
        epsilon: 0.0,
        n_max: cs.n_features(),
        ..CgConfig::default()
    };
    let run = train_on(&cs, &stats, &cfg).unwrap();
    let full = solve_full_on(&cs, &stats, &cfg.simplex).unwrap();
    assert_eq!(run.trace.iterations.len(), 1);
    assert!(run.trace.converged);
    assert!((run.r_star - full.r_star).abs() <= 1e-7);
}

#[test]
fn huge_regularization_gives_zero_coefficients() {
    for classes in [2, 3] {
        let (cs, stats) = instance(4, 12, 5, classes, 1e6);
        let run = train_on(&cs, &stats, &CgConfig::default()).unwrap();
        assert!(run.mu.is_empty());
        assert_eq!(run.trace.iterations.len(), 1);
        assert!((run.r_star - (1.0 - 1.0 / classes as f64)).abs() <= 1e-9);
    }
}

#[test]
fn iteration_cap_is_respected() {
    let (cs, stats) = instance(21, 25, 30, 2, 0.2);
    for k_max in 1..4 {
        let cfg = CgConfig {
            n_max: 1,
            k_max,
            init: InitStrategy::Screening { size: Some(1) },
            ..CgConfig::default()
        };
        let run = train_on(&cs, &stats, &cfg).unwrap();
        assert!(run.trace.iterations.len() <= k_max);
    }
}
