use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;

use mrccg::cg::fit;
use mrccg::datasets::stratified_kfold;

use crate::args::{mean_std, CvArgs};
use crate::features::raw_support;

struct FoldResult {
    rep: usize,
    fold: usize,
    n_train: usize,
    n_test: usize,
    det_error: f64,
    rand_loss: f64,
    r_star: f64,
    n_features: usize,
    n_raw: usize,
    iterations: usize,
    train_ms: f64,
}

pub fn run(a: &CvArgs) -> Result<()> {
    let data = a.data.load()?;
    let spec = a.fmap.spec();
    let mut jobs = Vec::new();
    for rep in 0..a.reps {
        let seed = a.cg.seed.wrapping_add(rep as u64);
        for (fold, split) in stratified_kfold(&data, a.folds, seed)?
            .into_iter()
            .enumerate()
        {
            jobs.push((rep, fold, seed, split));
        }
    }

    let results: Vec<FoldResult> = jobs
        .par_iter()
        .map(|(rep, fold, seed, split)| -> Result<FoldResult> {
            let mut cfg = a.cg.config();
            cfg.seed = *seed;
            cfg.dump_lp = None;
            let train = data.subset(&split.train);
            let test = data.subset(&split.test);
            let start = Instant::now();
            let (model, trace) = fit(&train, &spec, &cfg, a.cg.standardize())
                .with_context(|| format!("repetition {rep}, fold {fold}"))?;
            let train_ms = start.elapsed().as_secs_f64() * 1e3;
            let err = model.empirical_error(&test)?;
            Ok(FoldResult {
                rep: *rep,
                fold: *fold,
                n_train: split.train.len(),
                n_test: split.test.len(),
                det_error: err.deterministic,
                rand_loss: err.randomized,
                r_star: model.r_star,
                n_features: model.mu.nnz(),
                n_raw: raw_support(&model).len(),
                iterations: trace.iterations.len(),
                train_ms,
            })
        })
        .collect::<Result<_>>()?;

    let mut w =
        csv::Writer::from_path(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    w.write_record([
        "rep",
        "fold",
        "n_train",
        "n_test",
        "det_error",
        "rand_loss",
        "r_star",
        "n_features",
        "n_raw_features",
        "iterations",
        "train_ms",
    ])?;
    for r in &results {
        w.write_record([
            r.rep.to_string(),
            r.fold.to_string(),
            r.n_train.to_string(),
            r.n_test.to_string(),
            format!("{:?}", r.det_error),
            format!("{:?}", r.rand_loss),
            format!("{:?}", r.r_star),
            r.n_features.to_string(),
            r.n_raw.to_string(),
            r.iterations.to_string(),
            format!("{:.3}", r.train_ms),
        ])?;
    }
    w.flush()?;

    // Error estimates are averaged per repetition first.
    let per_rep = |f: &dyn Fn(&FoldResult) -> f64| -> Vec<f64> {
        (0..a.reps)
            .map(|rep| {
                let v: Vec<f64> = results.iter().filter(|r| r.rep == rep).map(f).collect();
                mean_std(&v).0
            })
            .collect()
    };
    let all = |f: &dyn Fn(&FoldResult) -> f64| -> Vec<f64> { results.iter().map(f).collect() };
    let (det_m, det_s) = mean_std(&all(&|r| r.det_error));
    let (rnd_m, rnd_s) = mean_std(&all(&|r| r.rand_loss));
    let (rs_m, rs_s) = mean_std(&all(&|r| r.r_star));
    let (rep_m, rep_s) = mean_std(&per_rep(&|r| r.det_error));

    let (full, _) = fit(&data, &spec, &a.cg.config(), a.cg.standardize())?;
    println!("folds = {}, repetitions = {}", a.folds, a.reps);
    println!("error (per fold) = {det_m:.4} ± {det_s:.4}");
    println!("error (per repetition) = {rep_m:.4} ± {rep_s:.4}");
    println!("randomized loss = {rnd_m:.4} ± {rnd_s:.4}");
    println!("R* (folds) = {rs_m:.4} ± {rs_s:.4}");
    println!("R* (full data) = {:.4}", full.r_star);
    println!("raw features (full data) = {}", raw_support(&full).len());
    println!("metrics: {}", a.out.display());
    Ok(())
}
