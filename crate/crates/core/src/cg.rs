//! Constraint generation for the MRC linear program.
//!
//! Starting from a screened feature set, each iteration solves the LP
//! restricted to the working set, prices every feature against the dual
//! solution and rebuilds the set: features whose dual constraint holds with
//! slack are dropped, the `n_max` most violated ones are added. Each
//! subproblem is warm-started from the previous basis, whose objective is the
//! previous optimal value, so the sequence `R^k` never increases.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::classifier::{ConfigEcho, MrcModel};
use crate::datasets::{self, Dataset};
use crate::error::{Error, Result};
use crate::featmap::{default_rff_gamma, FeatureMap, InstanceMap};
use crate::lp::{
    assemble_full_dual, assemble_subproblem, warm_start_from, write_lp_format, DenseSimplex,
    KeyedBasis, LpSolution, LpSolver, LpStatus, MrcSubproblem, SimplexOptions, VarKey,
    ZERO_COEFFICIENT,
};
use crate::problem::{build_constraints, ConstraintSystem, MomentStats};
use crate::sparse::SparseVector;

/// Full solves whose LP matrix has more entries than this log a warning.
pub const FULL_SOLVE_WARN_ENTRIES: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitStrategy {
    /// Top features by `|τ_j| - λ_j`; `None` uses `n_max`.
    Screening {
        size: Option<usize>,
    },
    Given(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct CgConfig {
    /// Minimum dual violation for a feature to be added.
    pub epsilon: f64,
    /// Features added per iteration at most.
    pub n_max: usize,
    /// Maximum number of subproblem solves.
    pub k_max: usize,
    pub init: InitStrategy,
    /// Features in the working set with `v_j < -active_tol` are dropped.
    pub active_tol: f64,
    pub lambda_scale: f64,
    pub seed: u64,
    pub simplex: SimplexOptions,
    /// Write every subproblem as `iter_<k>.lp` into this directory.
    pub dump_lp: Option<PathBuf>,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            epsilon: 1e-4,
            n_max: 100,
            k_max: 10,
            init: InitStrategy::Screening { size: None },
            active_tol: 1e-8,
            lambda_scale: 1.0,
            seed: 0,
            simplex: SimplexOptions::default(),
            dump_lp: None,
        }
    }
}

impl CgConfig {
    fn check(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::InvalidArgument(
                "epsilon must be non-negative".into(),
            ));
        }
        if self.n_max == 0 || self.k_max == 0 {
            return Err(Error::InvalidArgument(
                "n_max and k_max must be at least 1".into(),
            ));
        }
        if self.active_tol.is_nan() || self.active_tol < 0.0 {
            return Err(Error::InvalidArgument(
                "active_tol must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Violations at or below this are never added, whatever `epsilon` is:
    /// the simplex already treats such reduced costs as optimal.
    fn add_threshold(&self) -> f64 {
        self.epsilon.max(self.simplex.optimality_tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub r_k: f64,
    pub n_features: usize,
    pub added: usize,
    pub removed: usize,
    pub solve_ms: f64,
    pub pivots: usize,
    /// Objective of the warm-start point (iterations after the first).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_objective: Option<f64>,
    /// Largest primal violation of the warm-start point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_violation: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CgTrace {
    pub iterations: Vec<IterationRecord>,
    /// `true` when selection reached a fixed point before `k_max`.
    pub converged: bool,
}

impl CgTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.r_k).collect()
    }

    /// `true` when `R^{k+1} ≤ R^k + tol` throughout.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.iterations
            .windows(2)
            .all(|w| w[1].r_k <= w[0].r_k + tol)
    }

    /// CSV with header `k,R_k,n_features,added,removed,solve_ms,pivots`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,R_k,n_features,added,removed,solve_ms,pivots")?;
        for r in &self.iterations {
            writeln!(
                w,
                "{},{:?},{},{},{},{:.3},{}",
                r.k, r.r_k, r.n_features, r.added, r.removed, r.solve_ms, r.pivots
            )?;
        }
        Ok(())
    }
}

/// The `n_init` features with largest `|τ_j| - λ_j`, ties to the lower
/// index, returned in ascending index order.
pub fn initial_features(stats: &MomentStats, n_init: usize) -> Result<Vec<usize>> {
    let m = stats.dim();
    if n_init == 0 || n_init > m {
        return Err(Error::InvalidArgument(format!(
            "initial set size {n_init} not in 1..={m}"
        )));
    }
    let score: Vec<f64> = stats
        .tau
        .iter()
        .zip(&stats.lambda)
        .map(|(t, l)| t.abs() - l)
        .collect();
    let mut idx = top_n(&score, n_init);
    idx.sort_unstable();
    Ok(idx)
}

/// Indices of the `n` largest values, ties broken by lower index.
fn top_n(values: &[f64], n: usize) -> Vec<usize> {
    let n = n.min(values.len());
    if n == 0 {
        return Vec::new();
    }
    let cmp = |a: &usize, b: &usize| values[*b].total_cmp(&values[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..values.len()).collect();
    if n < idx.len() {
        idx.select_nth_unstable_by(n - 1, cmp);
        idx.truncate(n);
    }
    idx.sort_unstable_by(cmp);
    idx
}

/// Dual constraint violations `v = |Fᵀα - τ| - λ` over all `m` features.
pub fn dual_violations(
    cs: &ConstraintSystem,
    stats: &MomentStats,
    alpha: &SparseVector,
) -> Vec<f64> {
    let mut v = cs.ft_alpha(alpha);
    for ((vj, t), l) in v.iter_mut().zip(&stats.tau).zip(&stats.lambda) {
        *vj = (*vj - t).abs() - l;
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Next working set, ascending.
    pub features: Vec<usize>,
    pub added: Vec<usize>,
    pub removed: Vec<usize>,
    /// Largest violation among features outside the current set.
    pub max_violation: f64,
}

/// Greedy selection: keep current features with `v_j ≥ -active_tol`, add
/// the `n_max` largest `v_j` that exceed `epsilon`.
pub fn select(
    violations: &[f64],
    current: &[usize],
    epsilon: f64,
    n_max: usize,
    active_tol: f64,
) -> Selection {
    let m = violations.len();
    let mut in_current = vec![false; m];
    let mut keep = Vec::with_capacity(current.len());
    let mut removed = Vec::new();
    for &j in current {
        in_current[j] = true;
        if violations[j] >= -active_tol {
            keep.push(j);
        } else {
            removed.push(j);
        }
    }
    let added: Vec<usize> = top_n(violations, n_max)
        .into_iter()
        .filter(|&j| violations[j] > epsilon && !in_current[j])
        .collect();
    let max_violation = (0..m)
        .filter(|&j| !in_current[j])
        .map(|j| violations[j])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut features = keep;
    features.extend(&added);
    features.sort_unstable();
    removed.sort_unstable();
    let mut added = added;
    added.sort_unstable();
    Selection {
        features,
        added,
        removed,
        max_violation,
    }
}

/// Result of a constraint-generation run on a prepared problem.
#[derive(Debug, Clone)]
pub struct CgRun {
    pub mu: SparseVector,
    pub nu: f64,
    pub selected: Vec<usize>,
    pub r_star: f64,
    /// Dual solution of the last subproblem.
    pub alpha: SparseVector,
    pub trace: CgTrace,
}

fn require_optimal(sol: &LpSolution, k: usize) -> Result<()> {
    match sol.status {
        LpStatus::Optimal => Ok(()),
        s => Err(Error::Solver(format!(
            "subproblem at iteration {k} ended with status {s:?}"
        ))),
    }
}

fn dump(cfg: &CgConfig, sub: &MrcSubproblem, k: usize) -> Result<()> {
    let Some(dir) = &cfg.dump_lp else {
        return Ok(());
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("iter_{k:03}.lp"));
    let names: Vec<String> = (0..sub.lp().n_cols())
        .map(|c| match sub.key(c) {
            VarKey::Pos(j) => format!("mu1_{j}"),
            VarKey::Neg(j) => format!("mu2_{j}"),
            VarKey::Nu => "nu".to_string(),
        })
        .collect();
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_lp_format(sub.lp(), Some(&names), BufWriter::new(file)).map_err(|e| Error::io(&path, e))
}

/// Constraint generation on a prepared constraint system and moments.
pub fn train_on(cs: &ConstraintSystem, stats: &MomentStats, cfg: &CgConfig) -> Result<CgRun> {
    train_observed(cs, stats, cfg, &mut |_, _, _| {})
}

/// [`train_on`], calling `on_solve(k, subproblem, solution)` after every
/// optimal subproblem solve.
pub fn train_observed(
    cs: &ConstraintSystem,
    stats: &MomentStats,
    cfg: &CgConfig,
    on_solve: &mut dyn FnMut(usize, &MrcSubproblem, &LpSolution),
) -> Result<CgRun> {
    cfg.check()?;
    let m = cs.n_features();
    let mut features = match &cfg.init {
        InitStrategy::Screening { size } => {
            initial_features(stats, size.unwrap_or(cfg.n_max).min(m))?
        }
        InitStrategy::Given(f) => {
            cs.validate_features(f)?;
            let mut f = f.clone();
            f.sort_unstable();
            f
        }
    };
    let mut solver = DenseSimplex::new(cfg.simplex.clone());
    let threshold = cfg.add_threshold();

    let sub = assemble_subproblem(stats, cs, &features)?;
    dump(cfg, &sub, 1)?;
    let start = Instant::now();
    let sol = solver.solve(sub.lp(), None)?;
    let solve_ms = start.elapsed().as_secs_f64() * 1e3;
    require_optimal(&sol, 1)?;
    on_solve(1, &sub, &sol);

    let mut trace = CgTrace::default();
    trace.iterations.push(IterationRecord {
        k: 1,
        r_k: sol.objective,
        n_features: features.len(),
        added: features.len(),
        removed: 0,
        solve_ms,
        pivots: sol.iterations,
        warm_objective: None,
        warm_violation: None,
    });
    let mut mu = sub.coefficients(&sol.primal);
    let mut nu = sub.nu(&sol.primal);
    let mut r = sol.objective;
    let mut alpha = SparseVector::from_dense(&sol.duals);
    let mut basis: KeyedBasis = sub.keyed_basis(&sol.basis);

    let mut violations = dual_violations(cs, stats, &alpha);
    check_working_set(&violations, &features, cfg.active_tol, 1)?;
    let mut sel = select(&violations, &features, threshold, cfg.n_max, cfg.active_tol);
    let mut k = 1;
    while !sel.added.is_empty() && k < cfg.k_max {
        k += 1;
        for &j in &sel.removed {
            let c = mu.get(j);
            if c.abs() > ZERO_COEFFICIENT {
                return Err(Error::Solver(format!(
                    "feature {j} removed with nonzero coefficient {c:e}"
                )));
            }
        }
        let sub = assemble_subproblem(stats, cs, &sel.features)?;
        dump(cfg, &sub, k)?;
        let warm = warm_start_from(&sub, &mu, nu, Some(&basis))?;
        let warm_objective = sub.objective_at(&warm.point);
        let warm_violation = sub.lp().primal_violation(&warm.point);

        let start = Instant::now();
        let sol = solver.solve(sub.lp(), Some(&warm))?;
        let solve_ms = start.elapsed().as_secs_f64() * 1e3;
        require_optimal(&sol, k)?;
        on_solve(k, &sub, &sol);
        if !sol.warm_started {
            warn!("iteration {k}: warm start rejected, solved from scratch");
        }
        debug!(
            "iteration {k}: R = {:.10}, |J| = {}, +{} -{}, {} pivots",
            sol.objective,
            sel.features.len(),
            sel.added.len(),
            sel.removed.len(),
            sol.iterations
        );
        trace.iterations.push(IterationRecord {
            k,
            r_k: sol.objective,
            n_features: sel.features.len(),
            added: sel.added.len(),
            removed: sel.removed.len(),
            solve_ms,
            pivots: sol.iterations,
            warm_objective: Some(warm_objective),
            warm_violation: Some(warm_violation),
        });

        mu = sub.coefficients(&sol.primal);
        nu = sub.nu(&sol.primal);
        r = sol.objective;
        alpha = SparseVector::from_dense(&sol.duals);
        basis = sub.keyed_basis(&sol.basis);
        features = sel.features;

        violations = dual_violations(cs, stats, &alpha);
        check_working_set(&violations, &features, cfg.active_tol, k)?;
        sel = select(&violations, &features, threshold, cfg.n_max, cfg.active_tol);
    }
    trace.converged = sel.added.is_empty();

    Ok(CgRun {
        mu,
        nu,
        selected: features,
        r_star: r,
        alpha,
        trace,
    })
}

/// Dual feasibility of the subproblem on its own features.
fn check_working_set(violations: &[f64], features: &[usize], tol: f64, k: usize) -> Result<()> {
    // Allow a few ulps of the pricing round-off on top of the tolerance.
    let limit = tol.max(1e-8) * 10.0;
    for &j in features {
        if violations[j] > limit {
            return Err(Error::Solver(format!(
                "iteration {k}: feature {j} in the working set violates its dual constraint by {:e}",
                violations[j]
            )));
        }
    }
    Ok(())
}

/// Solution of the LP over all `m` features.
#[derive(Debug, Clone)]
pub struct FullSolution {
    pub mu: SparseVector,
    pub nu: f64,
    pub r_star: f64,
    pub alpha: SparseVector,
    pub pivots: usize,
}

/// Solves the LP over every feature at once, through its dual program
/// (see [`assemble_full_dual`]).
pub fn solve_full_on(
    cs: &ConstraintSystem,
    stats: &MomentStats,
    options: &SimplexOptions,
) -> Result<FullSolution> {
    let m = cs.n_features();
    if (2 * m + 2) * cs.n_rows() > FULL_SOLVE_WARN_ENTRIES {
        warn!(
            "full LP over {m} features and {} constraint rows; this may be slow",
            cs.n_rows()
        );
    }
    let dual = assemble_full_dual(stats, cs)?;
    let sol = DenseSimplex::new(options.clone()).solve(dual.lp(), None)?;
    require_optimal(&sol, 1)?;
    let mu = dual.coefficients(&sol.duals);
    let nu = dual.nu(&sol.duals);
    Ok(FullSolution {
        r_star: stats.objective(&mu, nu - 1.0),
        mu,
        nu,
        alpha: SparseVector::from_dense(&sol.primal),
        pivots: sol.iterations,
    })
}

/// Runs constraint generation on a dataset (already preprocessed).
pub fn train(data: &Dataset, fmap: &FeatureMap, cfg: &CgConfig) -> Result<(MrcModel, CgTrace)> {
    if data.n_samples() < 2 {
        return Err(Error::InvalidArgument(
            "training needs at least two samples".into(),
        ));
    }
    let cs = build_constraints(data, fmap)?;
    let stats = cs.moments(&data.labels, cfg.lambda_scale)?;
    let run = train_on(&cs, &stats, cfg)?;
    let mut model = MrcModel::new(
        fmap.clone(),
        None,
        run.mu,
        run.selected,
        run.nu,
        run.r_star,
        run.trace.iterations.clone(),
        Some(ConfigEcho::from_cg(cfg, false)),
    )?;
    attach_names(&mut model, data);
    Ok((model, run.trace))
}

/// How to build the instance map inside [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMapSpec {
    Identity,
    /// Random Fourier features; `gamma: None` uses [`default_rff_gamma`] on
    /// the (standardized) training instances.
    Rff {
        components: usize,
        gamma: Option<f64>,
    },
}

/// Standardizes (optionally), builds the feature map and trains. The
/// returned model applies the same preprocessing to raw instances. Random
/// frequencies are drawn from `cfg.seed`.
pub fn fit(
    data: &Dataset,
    spec: &FeatureMapSpec,
    cfg: &CgConfig,
    standardize: bool,
) -> Result<(MrcModel, CgTrace)> {
    let (train_data, scaler) = if standardize {
        let (z, params) = datasets::standardize(data)?;
        (z, Some(params))
    } else {
        (data.clone(), None)
    };
    let d = train_data.n_features();
    let instance_map = match spec {
        FeatureMapSpec::Identity => InstanceMap::identity(d),
        FeatureMapSpec::Rff { components, gamma } => {
            let gamma = gamma.unwrap_or_else(|| default_rff_gamma(&train_data.instances));
            InstanceMap::rff(d, *components, gamma, cfg.seed)?
        }
    };
    let fmap = FeatureMap::new(instance_map, train_data.n_classes);
    let (mut model, trace) = train(&train_data, &fmap, cfg)?;
    model.scaler = scaler;
    model.config = Some(ConfigEcho::from_cg(cfg, standardize));
    model.validate()?;
    Ok((model, trace))
}

/// The all-features LP baseline as a model.
pub fn solve_full(
    data: &Dataset,
    fmap: &FeatureMap,
    stats: &MomentStats,
    options: &SimplexOptions,
) -> Result<MrcModel> {
    let cs = build_constraints(data, fmap)?;
    let full = solve_full_on(&cs, stats, options)?;
    let selected: Vec<usize> = (0..cs.n_features()).collect();
    let mut model = MrcModel::new(
        fmap.clone(),
        None,
        full.mu,
        selected,
        full.nu,
        full.r_star,
        Vec::new(),
        None,
    )?;
    attach_names(&mut model, data);
    Ok(model)
}

fn attach_names(model: &mut MrcModel, data: &Dataset) {
    if data.label_values.len() == model.n_classes() {
        model.label_values = data.label_values.clone();
    }
    if let Some(names) = &data.feature_names {
        if names.len() == model.input_dim() {
            model.feature_names = Some(names.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats_from(tau: Vec<f64>, lambda: Vec<f64>) -> MomentStats {
        let n = tau.len();
        MomentStats {
            s: lambda.clone(),
            tau,
            lambda,
            lambda_scale: 1.0,
            n,
        }
    }

    #[test]
    fn screening_tie_breaks_by_index() {
        let st = stats_from(vec![0.0; 6], vec![0.0; 6]);
        assert_eq!(initial_features(&st, 3).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn screening_picks_strong_feature() {
        let mut tau = vec![0.0; 5];
        tau[3] = 1.0;
        let st = stats_from(tau, vec![0.0; 5]);
        assert_eq!(initial_features(&st, 1).unwrap(), vec![3]);
        assert!(initial_features(&st, 0).is_err());
        assert!(initial_features(&st, 6).is_err());
    }

    #[test]
    fn screening_matches_full_sort() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = rng.random_range(1..60);
            // Coarse values force ties.
            let tau: Vec<f64> = (0..m)
                .map(|_| rng.random_range(-4..5) as f64 / 4.0)
                .collect();
            let lambda: Vec<f64> = (0..m)
                .map(|_| rng.random_range(0..3) as f64 / 4.0)
                .collect();
            let st = stats_from(tau.clone(), lambda.clone());
            let n_init = rng.random_range(1..=m);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| {
                let sa = tau[a].abs() - lambda[a];
                let sb = tau[b].abs() - lambda[b];
                sb.partial_cmp(&sa).unwrap().then(a.cmp(&b))
            });
            let mut expected = order[..n_init].to_vec();
            expected.sort_unstable();
            assert_eq!(initial_features(&st, n_init).unwrap(), expected);
        }
    }

    #[test]
    fn select_fixed_point() {
        let v = vec![0.0, -1e-12, -0.5, -0.1];
        let s = select(&v, &[0, 1], 1e-4, 100, 1e-8);
        assert_eq!(s.features, vec![0, 1]);
        assert!(s.added.is_empty() && s.removed.is_empty());
    }

    #[test]
    fn select_filters_by_epsilon() {
        let v = vec![0.3, -0.2, 2e-4, 5e-5, 0.01, -1.0];
        let s = select(&v, &[], 1e-4, 100, 1e-8);
        assert_eq!(s.features, vec![0, 2, 4]);
        assert_eq!(s.added, vec![0, 2, 4]);
    }

    #[test]
    fn select_respects_n_max_and_removes_slack() {
        let v = vec![0.3, 0.3, 0.5, -0.2, 0.1];
        let s = select(&v, &[3], 0.0, 2, 1e-8);
        assert_eq!(s.removed, vec![3]);
        // 0.5 first, then the tie at 0.3 goes to index 0.
        assert_eq!(s.features, vec![0, 2]);
    }

    #[test]
    fn trace_csv_header() {
        let mut t = CgTrace::default();
        t.iterations.push(IterationRecord {
            k: 1,
            r_k: 0.25,
            n_features: 3,
            added: 3,
            removed: 0,
            solve_ms: 1.5,
            pivots: 4,
            warm_objective: None,
            warm_violation: None,
        });
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "k,R_k,n_features,added,removed,solve_ms,pivots\n1,0.25,3,3,0,1.500,4\n"
        );
    }
}
