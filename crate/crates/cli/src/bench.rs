use std::time::Instant;

use anyhow::{Context, Result};
use log::info;

use mrccg::cg::{solve_full_on, train_on, FeatureMapSpec};
use mrccg::datasets::{standardize, synthetic_gaussian, SyntheticSpec};
use mrccg::featmap::default_rff_gamma;
use mrccg::problem::build_constraints;
use mrccg::{Dataset, FeatureMap, InstanceMap};

use crate::args::{data_args, BenchArgs};

/// One timing comparison. Both times exclude building the constraint system
/// and moments, which the two methods share.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub rep: usize,
    pub m: usize,
    pub n_max: usize,
    pub rff_components: Option<usize>,
    pub t_cg_ms: f64,
    pub t_lp_ms: f64,
    pub r_cg: f64,
    pub r_lp: f64,
    pub mu_full_l1: f64,
    pub cg_iterations: usize,
    pub cg_converged: bool,
}

impl BenchRow {
    pub fn rel_time(&self) -> f64 {
        self.t_cg_ms / self.t_lp_ms
    }

    /// `R_lp ≤ R_cg ≤ R_lp + ε ‖μ_lp‖₁` up to `1e-7`.
    pub fn within_bound(&self, epsilon: f64) -> bool {
        self.r_cg >= self.r_lp - 1e-7 && self.r_cg <= self.r_lp + epsilon * self.mu_full_l1 + 1e-7
    }
}

fn dataset(a: &BenchArgs, rep: usize) -> Result<Dataset> {
    match &a.data {
        Some(p) => data_args(p, &a.label_col, a.no_header).load(),
        None => Ok(synthetic_gaussian(&SyntheticSpec {
            n: a.n,
            d: a.d,
            n_classes: a.classes,
            informative: a.informative.min(a.d),
            separation: a.separation,
            seed: a.cg.seed.wrapping_add(rep as u64),
        })?),
    }
}

pub fn run(a: &BenchArgs) -> Result<()> {
    let n_max_values = if a.sweep_nmax.is_empty() {
        vec![a.cg.nmax]
    } else {
        a.sweep_nmax.clone()
    };
    let specs: Vec<FeatureMapSpec> = if a.sweep_rff.is_empty() {
        vec![a.fmap.spec()]
    } else {
        a.sweep_rff
            .iter()
            .map(|&components| FeatureMapSpec::Rff {
                components,
                gamma: a.fmap.rff_gamma,
            })
            .collect()
    };

    let mut rows = Vec::new();
    for rep in 0..a.reps {
        let raw = dataset(a, rep)?;
        let data = if a.cg.standardize() {
            standardize(&raw)?.0
        } else {
            raw
        };
        for spec in &specs {
            let d = data.n_features();
            let (map, components) = match spec {
                FeatureMapSpec::Identity => (InstanceMap::identity(d), None),
                FeatureMapSpec::Rff { components, gamma } => {
                    let g = gamma.unwrap_or_else(|| default_rff_gamma(&data.instances));
                    let seed = a.cg.seed.wrapping_add(rep as u64);
                    (
                        InstanceMap::rff(d, *components, g, seed)?,
                        Some(*components),
                    )
                }
            };
            let fmap = FeatureMap::new(map, data.n_classes);
            let cs = build_constraints(&data, &fmap)?;
            let stats = cs.moments(&data.labels, a.cg.lambda_scale)?;
            let cfg = a.cg.config();

            let start = Instant::now();
            let full = solve_full_on(&cs, &stats, &cfg.simplex)?;
            let t_lp_ms = start.elapsed().as_secs_f64() * 1e3;
            info!("full LP: R = {:.8} in {t_lp_ms:.1} ms", full.r_star);

            for &n_max in &n_max_values {
                let mut cfg = cfg.clone();
                cfg.n_max = n_max;
                let start = Instant::now();
                let run = train_on(&cs, &stats, &cfg)?;
                let t_cg_ms = start.elapsed().as_secs_f64() * 1e3;
                let row = BenchRow {
                    rep,
                    m: cs.n_features(),
                    n_max,
                    rff_components: components,
                    t_cg_ms,
                    t_lp_ms,
                    r_cg: run.r_star,
                    r_lp: full.r_star,
                    mu_full_l1: full.mu.l1_norm(),
                    cg_iterations: run.trace.iterations.len(),
                    cg_converged: run.trace.converged,
                };
                println!(
                    "rep {rep} m={} n_max={n_max}: t_cg={:.1} ms, t_lp={:.1} ms, rel={:.3}, R_cg={:.6}, R_lp={:.6}",
                    row.m,
                    row.t_cg_ms,
                    row.t_lp_ms,
                    row.rel_time(),
                    row.r_cg,
                    row.r_lp
                );
                rows.push(row);
            }
        }
    }

    let mut w =
        csv::Writer::from_path(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    w.write_record([
        "rep",
        "m",
        "n_max",
        "rff_components",
        "t_cg_ms",
        "t_lp_ms",
        "rel_time",
        "r_cg",
        "r_lp",
        "mu_full_l1",
        "within_bound",
        "cg_iterations",
        "cg_converged",
    ])?;
    for r in &rows {
        w.write_record([
            r.rep.to_string(),
            r.m.to_string(),
            r.n_max.to_string(),
            r.rff_components.map_or_else(String::new, |c| c.to_string()),
            format!("{:.3}", r.t_cg_ms),
            format!("{:.3}", r.t_lp_ms),
            format!("{:.6}", r.rel_time()),
            format!("{:?}", r.r_cg),
            format!("{:?}", r.r_lp),
            format!("{:?}", r.mu_full_l1),
            r.within_bound(a.cg.epsilon).to_string(),
            r.cg_iterations.to_string(),
            r.cg_converged.to_string(),
        ])?;
    }
    w.flush()?;
    println!("timings: {}", a.out.display());
    Ok(())
}
