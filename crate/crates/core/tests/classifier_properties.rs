//! Prediction rules and learned quantities, checked against direct
//! recomputations from the training data.

use mrccg::cg::train;
use mrccg::datasets::{synthetic_gaussian, SyntheticSpec};
use mrccg::problem::build_constraints;
use mrccg::{CgConfig, Dataset, FeatureMap, InstanceMap, MrcModel, SparseVector};
use ndarray::{arr1, Array1};
use proptest::prelude::*;

fn spec(seed: u64, n: usize, d: usize, classes: usize) -> SyntheticSpec {
    SyntheticSpec {
        n,
        d,
        n_classes: classes,
        informative: d,
        separation: 1.0,
        seed,
    }
}

fn trained(s: &SyntheticSpec, lambda_scale: f64) -> (Dataset, MrcModel) {
    let data = synthetic_gaussian(s).unwrap();
    let fmap = FeatureMap::new(InstanceMap::identity(s.d), s.n_classes);
    let cfg = CgConfig {
        lambda_scale,
        n_max: 4,
        k_max: 100,
        ..CgConfig::default()
    };
    let (model, _) = train(&data, &fmap, &cfg).unwrap();
    (data, model)
}

/// `τ_j` and `λ_j = λ₀ s_j / √n` for `j = (c, p)`, straight from the samples.
fn moments(data: &Dataset, lambda_scale: f64) -> (Vec<f64>, Vec<f64>) {
    let n = data.n_samples();
    let d = data.n_features();
    let mut tau = Vec::new();
    let mut lambda = Vec::new();
    for c in 0..data.n_classes {
        for p in 0..d {
            let vals: Vec<f64> = (0..n)
                .map(|i| {
                    if data.labels[i] == c {
                        data.instances[[i, p]]
                    } else {
                        0.0
                    }
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            tau.push(mean);
            lambda.push(lambda_scale * var.sqrt() / (n as f64).sqrt());
        }
    }
    (tau, lambda)
}

/// `max over (x_i, C) of (Σ_{y∈C} Φ(x_i, y)ᵀμ - 1) / |C|` over the training
/// instances and every non-empty label subset.
fn phi_by_enumeration(data: &Dataset, model: &MrcModel) -> f64 {
    let classes = data.n_classes;
    let mut best = f64::NEG_INFINITY;
    for i in 0..data.n_samples() {
        let x = data.instance(i).to_vec();
        let s: Vec<f64> = (0..classes)
            .map(|y| model.fmap.phi_dot(&x, y, &model.mu).unwrap())
            .collect();
        for mask in 1u32..(1 << classes) {
            let members: Vec<usize> = (0..classes).filter(|y| mask >> y & 1 == 1).collect();
            let v = (members.iter().map(|&y| s[y]).sum::<f64>() - 1.0) / members.len() as f64;
            best = best.max(v);
        }
    }
    best
}

fn random_model(coef: &[f64], nu: f64) -> MrcModel {
    let classes = 3;
    let d = coef.len() / classes;
    MrcModel::new(
        FeatureMap::new(InstanceMap::identity(d), classes),
        None,
        SparseVector::from_dense(coef),
        (0..coef.len()).collect(),
        nu,
        0.5,
        Vec::new(),
        None,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn randomized_rule_is_a_distribution(
        coef in prop::collection::vec(-2.0f64..2.0, 6),
        nu in -1.0f64..3.0,
        x in prop::collection::vec(-3.0f64..3.0, 2),
    ) {
        let model = random_model(&coef, nu);
        let h = model.predict_proba(arr1(&x).view()).unwrap();
        prop_assert_eq!(h.len(), 3);
        prop_assert!(h.iter().all(|&p| (0.0..=1.0).contains(&p)));
        prop_assert!((h.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn deterministic_rule_picks_a_most_likely_label(
        coef in prop::collection::vec(-2.0f64..2.0, 6),
        nu in -1.0f64..3.0,
        x in prop::collection::vec(-3.0f64..3.0, 2),
    ) {
        let model = random_model(&coef, nu);
        let x = arr1(&x);
        let h = model.predict_proba(x.view()).unwrap();
        let top = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let pred = model.predict(x.view()).unwrap();
        prop_assert!(h[pred] >= top - 1e-12);
        for (y, p) in h.iter().enumerate() {
            let det = if pred == y { 0.0 } else { 1.0 };
            prop_assert!(det <= 2.0 * (1.0 - p) + 1e-12);
        }
    }
}

#[test]
fn learned_risk_matches_its_definition() {
    for seed in 0..8u64 {
        let s = spec(seed, 30, 5, 2 + (seed % 2) as usize);
        let (data, model) = trained(&s, 1.0);
        let (tau, lambda) = moments(&data, 1.0);
        let phi = phi_by_enumeration(&data, &model);
        assert!((phi - model.phi_threshold()).abs() <= 1e-9, "seed {seed}");
        let mut r = 1.0 + phi;
        for (j, m) in model.mu.iter() {
            r += -tau[j] * m + lambda[j] * m.abs();
        }
        assert!(
            (r - model.r_star).abs() <= 1e-9,
            "seed {seed}: {r} vs {}",
            model.r_star
        );
    }
}

#[test]
fn moments_match_direct_computation() {
    let s = spec(3, 25, 4, 3);
    let data = synthetic_gaussian(&s).unwrap();
    let fmap = FeatureMap::new(InstanceMap::identity(4), 3);
    let stats = build_constraints(&data, &fmap)
        .unwrap()
        .moments(&data.labels, 0.7)
        .unwrap();
    let (tau, lambda) = moments(&data, 0.7);
    for j in 0..tau.len() {
        assert!((stats.tau[j] - tau[j]).abs() <= 1e-12);
        assert!((stats.lambda[j] - lambda[j]).abs() <= 1e-12);
    }
}

#[test]
fn population_risk_respects_the_bound() {
    const SAMPLES: usize = 1_000_000;
    // Four standard errors of a mean of values in [0, 1].
    let mc_slack = 4.0 * 0.5 / (SAMPLES as f64).sqrt();
    for (seed, classes) in [(1u64, 2usize), (2, 2), (3, 3)] {
        let s = spec(seed, 80, 3, classes);
        let (data, model) = trained(&s, 1.0);
        let stats = build_constraints(&data, &model.fmap)
            .unwrap()
            .moments(&data.labels, 1.0)
            .unwrap();
        // E[1{y = c} x_p] with uniform labels.
        let expectation: Vec<f64> = model
            .selected
            .iter()
            .map(|&j| {
                let (c, p) = model.fmap.decompose(j);
                s.class_mean(c, p) / classes as f64
            })
            .collect();
        let rhs = model.risk_bound_rhs(&stats, &expectation).unwrap();
        let (x, y) = s.sample_population(SAMPLES, 1000 + seed).unwrap();
        let mut loss = 0.0;
        for i in 0..SAMPLES {
            let row: Array1<f64> = x.row(i).to_owned();
            loss += 1.0 - model.predict_proba(row.view()).unwrap()[y[i]];
        }
        let risk = loss / SAMPLES as f64;
        assert!(
            risk <= rhs + mc_slack,
            "seed {seed}: risk {risk} vs bound {rhs}"
        );
    }
}

#[test]
fn model_file_reproduces_predictions_exactly() {
    let s = spec(5, 40, 6, 3);
    let (data, model) = trained(&s, 0.5);
    let back = MrcModel::from_json(&model.to_json().unwrap()).unwrap();
    for i in 0..data.n_samples() {
        let a = model.predict_proba(data.instance(i)).unwrap();
        let b = back.predict_proba(data.instance(i)).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(
            model.predict(data.instance(i)).unwrap(),
            back.predict(data.instance(i)).unwrap()
        );
    }
}

#[test]
fn empirical_errors_are_ordered() {
    for seed in 0..5u64 {
        let s = spec(seed, 40, 4, 3);
        let (data, model) = trained(&s, 1.0);
        let e = model.empirical_error(&data).unwrap();
        assert!(e.deterministic <= 2.0 * e.randomized + 1e-12);
    }
}
