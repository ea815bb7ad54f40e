//! Dense revised simplex with implicit slacks.
//!
//! Every row `aᵣᵀz ≤ uᵣ` carries a slack `sᵣ ≥ 0`. A basis is described by
//! the basic structural columns `K` and the rows `T` whose slacks are
//! nonbasic; `|K| = |T|`. Rows outside `T` have basic slacks, so the basis
//! matrix is block triangular and only the `|T| × |K|` kernel `A[T, K]` is
//! inverted. Duals are nonzero on `T` only. The explicit kernel inverse is
//! updated in `O(|T|²)` per pivot and rebuilt from an LU factorization every
//! few dozen pivots; kernels stay small because MRC optima are sparse.
//! Reduced costs of structural columns are updated from the pivot row and
//! recomputed from scratch with every rebuild and before optimality is
//! declared.
//!
//! Cold starts with a negative right-hand side use a single artificial
//! column `-1` in every row (phase one). Pricing uses Devex reference
//! weights with priority for free columns, falling back to Bland's rule
//! after a run of degenerate pivots.
//!
//! MRC programs are highly degenerate: at `μ = 0` every row with the same
//! label-set size ties. The right-hand sides of rows that are not tight in
//! the starting basis are therefore relaxed by small deterministic amounts.
//! Once the relaxed problem is optimal the true right-hand side is restored
//! and any primal infeasibility this uncovers is removed by dual simplex
//! pivots, which keep the reduced costs optimal.

use log::debug;

use super::lu::DenseLu;
use super::{Basis, LpProblem, LpSolution, LpSolver, LpStatus, VarKind, WarmStart};
use crate::error::{Error, Result};

/// Pivots between rebuilds of the kernel inverse.
const REFACTOR_EVERY: usize = 64;

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    /// Primal feasibility tolerance.
    pub feasibility_tol: f64,
    /// Reduced-cost tolerance for optimality.
    pub optimality_tol: f64,
    /// Smallest direction entry accepted in the ratio test.
    pub pivot_tol: f64,
    /// Iteration cap; `0` picks `20 (rows + cols) + 1000`.
    pub max_iterations: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    /// Relative size of the right-hand-side relaxation; `0` disables it.
    pub perturbation: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            max_iterations: 0,
            bland_after: 50,
            perturbation: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DenseSimplex {
    pub options: SimplexOptions,
}

impl DenseSimplex {
    pub fn new(options: SimplexOptions) -> Self {
        DenseSimplex { options }
    }
}

impl LpSolver for DenseSimplex {
    fn solve(&mut self, problem: &LpProblem, warm: Option<&WarmStart>) -> Result<LpSolution> {
        Engine::new(problem, &self.options).run(warm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy)]
enum Entering {
    Column {
        col: usize,
        sign: f64,
    },
    /// Slack of the tight row at this position of `T`.
    Slack {
        pos: usize,
    },
}

#[derive(Debug, Clone, Copy)]
enum Leaving {
    /// Basic structural at this position of `K`.
    Basic { pos: usize },
    /// Basic slack of this row.
    Slack { row: usize },
}

struct Engine<'a> {
    p: &'a LpProblem,
    opts: &'a SimplexOptions,
    /// Column index used for the artificial variable.
    art: usize,
    cols: Vec<usize>,
    rows: Vec<usize>,
    in_basis: Vec<bool>,
    tight: Vec<bool>,
    /// `A[T, K]⁻¹`, row-major; rows follow `K`, columns follow `T`.
    binv: Vec<f64>,
    /// Pivots since the inverse was last rebuilt.
    updates: usize,
    /// Reduced costs of the structural columns.
    dj: Vec<f64>,
    dj_valid: bool,
    /// Pivots since `dj` was last recomputed.
    dj_age: usize,
    x: Vec<f64>,
    slack: Vec<f64>,
    /// Working right-hand side, possibly relaxed.
    u: Vec<f64>,
    /// Devex weights: structural columns, the artificial, then row slacks.
    weights: Vec<f64>,
    perturbed: bool,
    iterations: usize,
    max_iterations: usize,
    degenerate_run: usize,
    bland: bool,
}

impl<'a> Engine<'a> {
    fn new(p: &'a LpProblem, opts: &'a SimplexOptions) -> Self {
        let max_iterations = if opts.max_iterations == 0 {
            20 * (p.n_rows() + p.n_cols()) + 1000
        } else {
            opts.max_iterations
        };
        Engine {
            p,
            opts,
            art: p.n_cols(),
            cols: Vec::new(),
            rows: Vec::new(),
            in_basis: vec![false; p.n_cols() + 1],
            tight: vec![false; p.n_rows()],
            binv: Vec::new(),
            updates: 0,
            dj: vec![0.0; p.n_cols()],
            dj_valid: false,
            dj_age: 0,
            x: Vec::new(),
            slack: p.rhs().to_vec(),
            u: p.rhs().to_vec(),
            weights: vec![1.0; p.n_cols() + 1 + p.n_rows()],
            perturbed: false,
            iterations: 0,
            max_iterations,
            degenerate_run: 0,
            bland: false,
        }
    }

    #[inline]
    fn a(&self, r: usize, j: usize) -> f64 {
        if j == self.art {
            -1.0
        } else {
            self.p.entry(r, j)
        }
    }

    fn cost(&self, phase: Phase, j: usize) -> f64 {
        match (phase, j == self.art) {
            (Phase::One, true) => 1.0,
            (Phase::One, false) | (Phase::Two, true) => 0.0,
            (Phase::Two, false) => self.p.objective()[j],
        }
    }

    fn slack_index(&self, r: usize) -> usize {
        self.p.n_cols() + 1 + r
    }

    fn is_free(&self, j: usize) -> bool {
        j != self.art && self.p.kinds()[j] == VarKind::Free
    }

    fn set_basis(&mut self, cols: Vec<usize>, rows: Vec<usize>) {
        self.in_basis.iter_mut().for_each(|b| *b = false);
        self.tight.iter_mut().for_each(|t| *t = false);
        for &j in &cols {
            self.in_basis[j] = true;
        }
        for &r in &rows {
            self.tight[r] = true;
        }
        self.cols = cols;
        self.rows = rows;
    }

    fn factor(&mut self) -> Result<()> {
        let k = self.cols.len();
        let mut m = Vec::with_capacity(k * k);
        for &r in &self.rows {
            for &j in &self.cols {
                m.push(self.a(r, j));
            }
        }
        let lu = DenseLu::factor(k, m, 1e-13)
            .ok_or_else(|| Error::Solver("basis became singular".into()))?;
        let mut binv = vec![0.0; k * k];
        let mut e = vec![0.0; k];
        for t in 0..k {
            e[t] = 1.0;
            for (pos, v) in lu.solve(&e).into_iter().enumerate() {
                binv[pos * k + t] = v;
            }
            e[t] = 0.0;
        }
        self.binv = binv;
        self.updates = 0;
        self.dj_valid = false;
        Ok(())
    }

    /// `A[T, K]⁻¹ b` for `b` indexed by `T`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = self.cols.len();
        if k == 0 {
            return Vec::new();
        }
        self.binv
            .chunks_exact(k)
            .map(|row| row.iter().zip(b).map(|(a, v)| a * v).sum())
            .collect()
    }

    /// `A[T, K]⁻ᵀ c` for `c` indexed by `K`.
    fn solve_transpose(&self, c: &[f64]) -> Vec<f64> {
        let k = self.cols.len();
        let mut y = vec![0.0; k];
        if k == 0 {
            return y;
        }
        for (row, &cv) in self.binv.chunks_exact(k).zip(c) {
            if cv != 0.0 {
                for (yt, a) in y.iter_mut().zip(row) {
                    *yt += cv * a;
                }
            }
        }
        y
    }

    /// `A[r, K] v` for `v` indexed by `K`, leaving out the artificial column.
    #[inline]
    fn row_dot(&self, r: usize, v: &[f64]) -> f64 {
        let row = self.p.row(r);
        // The artificial column lies past the end of the row.
        self.cols
            .iter()
            .zip(v)
            .map(|(&j, w)| row.get(j).map_or(0.0, |a| a * w))
            .sum()
    }

    /// `A[r, K] v` for every row outside `T`; other entries are zero. Rows
    /// paired with a negated earlier row reuse its product.
    fn products(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p.n_rows()];
        for r in 0..self.p.n_rows() {
            if self.tight[r] {
                continue;
            }
            out[r] = match self.p.negated_row(r) {
                Some(q) if !self.tight[q] => -out[q],
                _ => self.row_dot(r, v),
            };
        }
        // The artificial column is -1 in every row, so it breaks the pairing
        // and is added last.
        if let Some(pos) = self.cols.iter().position(|&j| j == self.art) {
            for (r, o) in out.iter_mut().enumerate() {
                if !self.tight[r] {
                    *o -= v[pos];
                }
            }
        }
        out
    }

    /// Basic values from scratch: nonbasic variables are all at zero.
    fn compute_primal(&mut self) {
        let rhs_t: Vec<f64> = self.rows.iter().map(|&r| self.u[r]).collect();
        self.x = self.solve(&rhs_t);
        let act = self.products(&self.x);
        for (r, a) in act.into_iter().enumerate() {
            self.slack[r] = if self.tight[r] { 0.0 } else { self.u[r] - a };
        }
    }

    fn refresh(&mut self) -> Result<()> {
        self.factor()?;
        self.compute_primal();
        Ok(())
    }

    fn objective(&self, phase: Phase) -> f64 {
        self.cols
            .iter()
            .zip(&self.x)
            .map(|(&j, v)| self.cost(phase, j) * v)
            .sum()
    }

    /// Row prices on `T`: `A[T, K]ᵀ y = c_K`.
    fn prices(&self, phase: Phase) -> Vec<f64> {
        let c: Vec<f64> = self.cols.iter().map(|&j| self.cost(phase, j)).collect();
        self.solve_transpose(&c)
    }

    fn reduced_costs(&mut self, phase: Phase, y: &[f64]) {
        let n = self.p.n_cols();
        let mut d: Vec<f64> = (0..n).map(|j| self.cost(phase, j)).collect();
        for (&r, &yr) in self.rows.iter().zip(y) {
            if yr != 0.0 {
                for (dj, a) in d.iter_mut().zip(self.p.row(r)) {
                    *dj -= yr * a;
                }
            }
        }
        for &j in &self.cols {
            if j != self.art {
                d[j] = 0.0;
            }
        }
        self.dj = d;
        self.dj_valid = true;
        self.dj_age = 0;
    }

    fn exact_reduced_cost(&self, phase: Phase, y: &[f64], j: usize) -> f64 {
        let z: f64 = self
            .rows
            .iter()
            .zip(y)
            .map(|(&r, yr)| yr * self.a(r, j))
            .sum();
        self.cost(phase, j) - z
    }

    fn qualifies(&self, j: usize, d: f64, tol: f64) -> bool {
        if self.is_free(j) {
            d.abs() > tol
        } else {
            d < -tol
        }
    }

    fn price(&self, y: &[f64], tol: f64) -> Option<Entering> {
        let n = self.p.n_cols();
        let reduced = |j: usize| self.dj[j];

        if self.bland {
            for j in 0..n {
                if self.in_basis[j] {
                    continue;
                }
                let d = reduced(j);
                if self.is_free(j) && d.abs() > tol {
                    return Some(Entering::Column {
                        col: j,
                        sign: -d.signum(),
                    });
                }
                if !self.is_free(j) && d < -tol {
                    return Some(Entering::Column { col: j, sign: 1.0 });
                }
            }
            return self
                .rows
                .iter()
                .enumerate()
                .filter(|(pos, _)| y[*pos] > tol)
                .min_by_key(|(_, &r)| r)
                .map(|(pos, _)| Entering::Slack { pos });
        }

        // Scores are d² / w; the largest wins.
        let mut best_free: Option<(usize, f64)> = None;
        let mut best: Option<(Entering, f64)> = None;
        for j in 0..n {
            if self.in_basis[j] {
                continue;
            }
            let d = reduced(j);
            let score = d * d / self.weights[j];
            if self.is_free(j) {
                if d.abs() > tol && best_free.is_none_or(|(_, b)| score > b) {
                    best_free = Some((j, score));
                }
            } else if d < -tol && best.is_none_or(|(_, b)| score > b) {
                best = Some((Entering::Column { col: j, sign: 1.0 }, score));
            }
        }
        if let Some((j, _)) = best_free {
            let d = reduced(j);
            return Some(Entering::Column {
                col: j,
                sign: -d.signum(),
            });
        }
        for (pos, &yr) in y.iter().enumerate() {
            let d = -yr;
            let score = d * d / self.weights[self.slack_index(self.rows[pos])];
            if d < -tol && best.is_none_or(|(_, b)| score > b) {
                best = Some((Entering::Slack { pos }, score));
            }
        }
        best.map(|(e, _)| e)
    }

    /// Row of `B⁻¹ A` for a basic variable: entries for every structural
    /// column and, through `ρ`, for the slacks of the tight rows.
    fn pivot_row(&self, leaving: Leaving) -> (Vec<f64>, Vec<f64>) {
        let n = self.p.n_cols();
        let k = self.cols.len();
        let (rho, direct) = match leaving {
            Leaving::Basic { pos } => (self.binv[pos * k..(pos + 1) * k].to_vec(), None),
            Leaving::Slack { row } => {
                let a_rk: Vec<f64> = self.cols.iter().map(|&j| self.a(row, j)).collect();
                let z = self.solve_transpose(&a_rk);
                (z.into_iter().map(|v| -v).collect::<Vec<_>>(), Some(row))
            }
        };
        let mut alpha = match direct {
            Some(r) => self.p.row(r).to_vec(),
            None => vec![0.0; n],
        };
        for (&r, &rt) in self.rows.iter().zip(&rho) {
            if rt != 0.0 {
                for (aj, v) in alpha.iter_mut().zip(self.p.row(r)) {
                    *aj += rt * v;
                }
            }
        }
        (alpha, rho)
    }

    fn devex_update(&mut self, entering: Entering, leaving: Leaving, alpha: &[f64], rho: &[f64]) {
        let (q, a_q) = match entering {
            Entering::Column { col, .. } => (col, alpha[col]),
            Entering::Slack { pos } => (self.slack_index(self.rows[pos]), rho[pos]),
        };
        if a_q.abs() < 1e-12 {
            return;
        }
        let w_q = self.weights[q];
        for (j, a) in alpha.iter().enumerate() {
            if !self.in_basis[j] && j != q {
                let r = a / a_q;
                self.weights[j] = self.weights[j].max(r * r * w_q);
            }
        }
        for (&row, a) in self.rows.iter().zip(rho) {
            let idx = self.p.n_cols() + 1 + row;
            if idx != q {
                let r = a / a_q;
                self.weights[idx] = self.weights[idx].max(r * r * w_q);
            }
        }
        let out = match leaving {
            Leaving::Basic { pos } => self.cols[pos],
            Leaving::Slack { row } => self.slack_index(row),
        };
        self.weights[out] = (w_q / (a_q * a_q)).max(1.0);
    }

    /// Direction `w = B⁻¹ h` split into the `K` part and the basic slacks.
    fn direction(&self, entering: Entering) -> (Vec<f64>, Vec<f64>) {
        let h_t: Vec<f64> = match entering {
            Entering::Column { col, sign } => {
                self.rows.iter().map(|&r| sign * self.a(r, col)).collect()
            }
            Entering::Slack { pos } => {
                let mut e = vec![0.0; self.rows.len()];
                e[pos] = 1.0;
                e
            }
        };
        let w_k = self.solve(&h_t);
        let mut w_s = self.products(&w_k);
        for (r, ws) in w_s.iter_mut().enumerate() {
            if self.tight[r] {
                continue;
            }
            let h = match entering {
                Entering::Column { col, sign } => sign * self.a(r, col),
                Entering::Slack { .. } => 0.0,
            };
            *ws = h - *ws;
        }
        (w_k, w_s)
    }

    fn ratio_test(&self, phase: Phase, w_k: &[f64], w_s: &[f64]) -> Option<(Leaving, f64)> {
        let piv = self.opts.pivot_tol;
        let n = self.p.n_cols();
        let n_rows = self.p.n_rows();
        // (leaving, ratio, |w|, variable index for Bland)
        let mut best: Option<(Leaving, f64, f64, usize)> = None;
        let mut consider = |leaving: Leaving, ratio: f64, w: f64, index: usize| {
            let better = match best {
                None => true,
                Some((_, br, bw, bi)) => {
                    if ratio < br - 1e-12 {
                        true
                    } else if ratio <= br + 1e-12 {
                        if self.bland {
                            index < bi
                        } else {
                            w > bw
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                best = Some((leaving, ratio, w, index));
            }
        };
        for (pos, (&j, &w)) in self.cols.iter().zip(w_k).enumerate() {
            if j == self.art {
                let fixed = phase == Phase::Two;
                if fixed && w.abs() > piv {
                    consider(Leaving::Basic { pos }, 0.0, w.abs(), n + n_rows);
                } else if !fixed && w > piv {
                    consider(
                        Leaving::Basic { pos },
                        self.x[pos].max(0.0) / w,
                        w,
                        n + n_rows,
                    );
                }
            } else if !self.is_free(j) && w > piv {
                consider(Leaving::Basic { pos }, self.x[pos].max(0.0) / w, w, j);
            }
        }
        for (r, &w) in w_s.iter().enumerate() {
            if !self.tight[r] && w > piv {
                consider(
                    Leaving::Slack { row: r },
                    self.slack[r].max(0.0) / w,
                    w,
                    n + r,
                );
            }
        }
        best.map(|(l, ratio, _, _)| (l, ratio))
    }

    /// Applies a pivot to the basis and the kernel inverse. The entering
    /// variable takes `value` and the leaving one drops to zero; other basic
    /// values are assumed to be updated already. They are recomputed from
    /// scratch whenever the inverse is rebuilt.
    fn pivot(&mut self, entering: Entering, leaving: Leaving, value: f64) -> Result<()> {
        let k = self.cols.len();
        match (entering, leaving) {
            (Entering::Column { col, .. }, Leaving::Basic { pos }) => {
                let a_t: Vec<f64> = self.rows.iter().map(|&r| self.a(r, col)).collect();
                let w = self.solve(&a_t);
                let piv = w[pos];
                let b = &mut self.binv;
                b[pos * k..(pos + 1) * k].iter_mut().for_each(|v| *v /= piv);
                let prow = b[pos * k..(pos + 1) * k].to_vec();
                for (i, &wi) in w.iter().enumerate() {
                    if i != pos && wi != 0.0 {
                        for (v, p) in b[i * k..(i + 1) * k].iter_mut().zip(&prow) {
                            *v -= wi * p;
                        }
                    }
                }
                self.in_basis[self.cols[pos]] = false;
                self.cols[pos] = col;
                self.in_basis[col] = true;
                self.x[pos] = value;
            }
            (Entering::Column { col, .. }, Leaving::Slack { row }) => {
                // Bordered inverse with Schur complement `s`.
                let a_t: Vec<f64> = self.rows.iter().map(|&r| self.a(r, col)).collect();
                let w = self.solve(&a_t);
                let a_rk: Vec<f64> = self.cols.iter().map(|&j| self.a(row, j)).collect();
                let z = self.solve_transpose(&a_rk);
                let s = self.a(row, col) - a_rk.iter().zip(&w).map(|(a, v)| a * v).sum::<f64>();
                let k1 = k + 1;
                let mut nb = vec![0.0; k1 * k1];
                for i in 0..k {
                    let f = w[i] / s;
                    for t in 0..k {
                        nb[i * k1 + t] = self.binv[i * k + t] + f * z[t];
                    }
                    nb[i * k1 + k] = -f;
                }
                for t in 0..k {
                    nb[k * k1 + t] = -z[t] / s;
                }
                nb[k * k1 + k] = 1.0 / s;
                self.binv = nb;
                self.cols.push(col);
                self.rows.push(row);
                self.in_basis[col] = true;
                self.tight[row] = true;
                self.x.push(value);
                self.slack[row] = 0.0;
            }
            (Entering::Slack { pos: tpos }, Leaving::Basic { pos }) => {
                // Drop row `pos` and column `tpos` of the inverse.
                let h = self.binv[pos * k + tpos];
                let f: Vec<f64> = (0..k).map(|i| self.binv[i * k + tpos] / h).collect();
                let g = self.binv[pos * k..(pos + 1) * k].to_vec();
                let mut keep_k: Vec<usize> = (0..k).collect();
                keep_k.swap_remove(pos);
                let mut keep_t: Vec<usize> = (0..k).collect();
                keep_t.swap_remove(tpos);
                let k1 = k - 1;
                let mut nb = vec![0.0; k1 * k1];
                for (i, &oi) in keep_k.iter().enumerate() {
                    for (t, &ot) in keep_t.iter().enumerate() {
                        nb[i * k1 + t] = self.binv[oi * k + ot] - f[oi] * g[ot];
                    }
                }
                self.binv = nb;
                self.tight[self.rows[tpos]] = false;
                self.slack[self.rows[tpos]] = value;
                self.in_basis[self.cols[pos]] = false;
                self.rows.swap_remove(tpos);
                self.cols.swap_remove(pos);
                self.x.swap_remove(pos);
            }
            (Entering::Slack { pos: tpos }, Leaving::Slack { row }) => {
                // Row `tpos` of the kernel becomes `A[row, K]`.
                let a_rk: Vec<f64> = self.cols.iter().map(|&j| self.a(row, j)).collect();
                let z = self.solve_transpose(&a_rk);
                let zp = z[tpos];
                for i in 0..k {
                    let c = self.binv[i * k + tpos] / zp;
                    for (t, zt) in z.iter().enumerate() {
                        if t == tpos {
                            self.binv[i * k + t] = c;
                        } else {
                            self.binv[i * k + t] -= c * zt;
                        }
                    }
                }
                self.tight[self.rows[tpos]] = false;
                self.slack[self.rows[tpos]] = value;
                self.rows[tpos] = row;
                self.tight[row] = true;
                self.slack[row] = 0.0;
            }
        }
        self.updates += 1;
        if self.updates >= REFACTOR_EVERY {
            self.factor()?;
            self.compute_primal();
        }
        Ok(())
    }

    fn iterate(&mut self, phase: Phase, tol: f64, cap: usize) -> Result<Outcome> {
        let start = self.iterations;
        self.weights.fill(1.0);
        self.dj_valid = false;
        loop {
            let y = self.prices(phase);
            if !self.dj_valid {
                self.reduced_costs(phase, &y);
            }
            let Some(entering) = self.price(&y, tol) else {
                if self.dj_age > 0 {
                    self.dj_valid = false;
                    continue;
                }
                return Ok(Outcome::Optimal);
            };
            let d_q = match entering {
                Entering::Column { col, .. } => {
                    let exact = self.exact_reduced_cost(phase, &y, col);
                    let drift = (exact - self.dj[col]).abs() > 1e-9 * (1.0 + exact.abs());
                    if self.dj_age > 0 && (drift || !self.qualifies(col, exact, tol)) {
                        self.dj_valid = false;
                        continue;
                    }
                    self.dj[col] = exact;
                    exact
                }
                Entering::Slack { pos } => -y[pos],
            };
            if self.iterations >= self.max_iterations || self.iterations - start >= cap {
                return Ok(Outcome::IterationLimit);
            }
            let (w_k, w_s) = self.direction(entering);
            let Some((leaving, ratio)) = self.ratio_test(phase, &w_k, &w_s) else {
                return Ok(Outcome::Unbounded);
            };
            if ratio <= 1e-12 {
                self.degenerate_run += 1;
                if self.degenerate_run > self.opts.bland_after && !self.bland {
                    debug!(
                        "simplex: switching to Bland's rule at iteration {}",
                        self.iterations
                    );
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
                self.bland = false;
            }
            let (alpha, rho) = self.pivot_row(leaving);
            if !self.bland {
                self.devex_update(entering, leaving, &alpha, &rho);
            }
            let a_q = match entering {
                Entering::Column { col, .. } => alpha[col],
                Entering::Slack { pos } => rho[pos],
            };
            let theta = d_q / a_q;
            for (j, (d, a)) in self.dj.iter_mut().zip(&alpha).enumerate() {
                if !self.in_basis[j] {
                    *d -= theta * a;
                }
            }
            if let Leaving::Basic { pos } = leaving {
                let out = self.cols[pos];
                if out != self.art {
                    self.dj[out] = -theta;
                }
            }
            if let Entering::Column { col, .. } = entering {
                self.dj[col] = 0.0;
            }

            // Move along the edge, then swap the basis.
            for (xv, w) in self.x.iter_mut().zip(&w_k) {
                *xv -= ratio * w;
            }
            for (sv, w) in self.slack.iter_mut().zip(&w_s) {
                *sv -= ratio * w;
            }
            let value = match entering {
                Entering::Column { sign, .. } => sign * ratio,
                Entering::Slack { .. } => ratio,
            };
            self.pivot(entering, leaving, value)?;
            self.iterations += 1;
            self.dj_age += 1;
        }
    }

    fn primal_feasible(&self) -> bool {
        let tol = self.opts.feasibility_tol;
        let basics_ok = self
            .cols
            .iter()
            .zip(&self.x)
            .all(|(&j, &v)| self.is_free(j) || v >= -tol);
        basics_ok && self.slack.iter().all(|&s| s >= -tol)
    }

    /// Builds a basis from a warm start. Columns whose kernel pivot vanishes
    /// are dropped. Returns `false` when the resulting point is infeasible.
    fn crash(&mut self, warm: &WarmStart) -> Result<bool> {
        let n = self.p.n_cols();
        if warm.point.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: warm.point.len(),
            });
        }
        let scale = 1.0 + self.p.rhs().iter().fold(0.0f64, |m, u| m.max(u.abs()));
        if self.p.primal_violation(&warm.point) > self.opts.feasibility_tol * scale {
            return Ok(false);
        }
        let (cand_cols, cand_rows): (Vec<usize>, Vec<usize>) = match &warm.basis {
            Some(b) => (b.columns.clone(), b.rows.clone()),
            None => {
                let cols = (0..n).filter(|&j| warm.point[j].abs() > 1e-12).collect();
                let act = self.p.row_activity(&warm.point);
                let rows = (0..self.p.n_rows())
                    .filter(|&r| {
                        (self.p.rhs()[r] - act[r]).abs() <= self.opts.feasibility_tol * scale
                    })
                    .collect();
                (cols, rows)
            }
        };
        let mut seen = vec![false; n];
        let cand_cols: Vec<usize> = cand_cols
            .into_iter()
            .filter(|&j| j < n && !std::mem::replace(&mut seen[j], true))
            .collect();
        let mut seen_r = vec![false; self.p.n_rows()];
        let cand_rows: Vec<usize> = cand_rows
            .into_iter()
            .filter(|&r| r < self.p.n_rows() && !std::mem::replace(&mut seen_r[r], true))
            .collect();

        // Gaussian elimination on A[rows, cols], choosing one pivot row per
        // column in order.
        let nr = cand_rows.len();
        let nc = cand_cols.len();
        let mut g: Vec<f64> = Vec::with_capacity(nr * nc);
        for &r in &cand_rows {
            for &j in &cand_cols {
                g.push(self.p.entry(r, j));
            }
        }
        let mut row_used = vec![false; nr];
        let mut chosen_cols = Vec::new();
        let mut chosen_rows = Vec::new();
        for c in 0..nc {
            let colmax = (0..nr).map(|i| g[i * nc + c].abs()).fold(0.0, f64::max);
            let mut piv = None;
            let mut best = 1e-9 * colmax.max(1.0);
            for i in 0..nr {
                if !row_used[i] && g[i * nc + c].abs() > best {
                    best = g[i * nc + c].abs();
                    piv = Some(i);
                }
            }
            let Some(pi) = piv else {
                continue;
            };
            row_used[pi] = true;
            chosen_cols.push(cand_cols[c]);
            chosen_rows.push(cand_rows[pi]);
            let pv = g[pi * nc + c];
            for i in 0..nr {
                if row_used[i] {
                    continue;
                }
                let f = g[i * nc + c] / pv;
                if f != 0.0 {
                    for cc in c..nc {
                        g[i * nc + cc] -= f * g[pi * nc + cc];
                    }
                }
            }
        }
        if chosen_cols.len() < nc {
            debug!(
                "warm start: dropped {} dependent columns",
                nc - chosen_cols.len()
            );
        }
        self.set_basis(chosen_cols, chosen_rows);
        if self.factor().is_err() {
            return Ok(false);
        }
        self.compute_primal();
        Ok(self.primal_feasible())
    }

    /// Relaxes the right-hand side of every row that is not tight. Basic
    /// structural values do not move, so feasibility is preserved.
    fn perturb(&mut self) {
        let scale = self.opts.perturbation;
        if scale <= 0.0 {
            return;
        }
        let rhs = self.p.rhs();
        for r in 0..self.p.n_rows() {
            if !self.tight[r] {
                self.u[r] = rhs[r] + scale * (1.0 + rhs[r].abs()) * (0.5 + 0.5 * unit_hash(r));
            }
        }
        self.perturbed = true;
        self.compute_primal();
    }

    /// Restores the true right-hand side and repairs primal feasibility.
    fn restore(&mut self) -> Result<()> {
        if !self.perturbed {
            return Ok(());
        }
        self.u.copy_from_slice(self.p.rhs());
        self.perturbed = false;
        self.compute_primal();
        if !self.primal_feasible() && !self.dual_cleanup()? {
            return Err(Error::Solver(
                "could not restore primal feasibility after relaxation".into(),
            ));
        }
        Ok(())
    }

    /// Most infeasible basic variable and its value. The artificial column
    /// is fixed at zero in phase two.
    fn most_infeasible(&self) -> Option<(Leaving, f64)> {
        let tol = self.opts.feasibility_tol;
        let mut worst: Option<(Leaving, f64)> = None;
        let mut consider = |l: Leaving, v: f64| {
            if worst.is_none_or(|(_, w)| v.abs() > w.abs()) {
                worst = Some((l, v));
            }
        };
        for (pos, (&j, &v)) in self.cols.iter().zip(&self.x).enumerate() {
            let bad = if j == self.art {
                v.abs() > tol
            } else {
                !self.is_free(j) && v < -tol
            };
            if bad {
                consider(Leaving::Basic { pos }, v);
            }
        }
        for r in 0..self.p.n_rows() {
            if !self.tight[r] && self.slack[r] < -tol {
                consider(Leaving::Slack { row: r }, self.slack[r]);
            }
        }
        worst
    }

    /// Dual simplex pivots from a dual feasible basis until it is primal
    /// feasible. Returns `false` if no pivot exists or the cap is hit.
    fn dual_cleanup(&mut self) -> Result<bool> {
        let piv = self.opts.pivot_tol;
        let n = self.p.n_cols();
        loop {
            let Some((leaving, value)) = self.most_infeasible() else {
                return Ok(true);
            };
            if self.iterations >= self.max_iterations {
                return Ok(false);
            }
            let (alpha, rho) = self.pivot_row(leaving);
            let y = self.prices(Phase::Two);
            let mut z = vec![0.0; n];
            for (&r, &yr) in self.rows.iter().zip(&y) {
                for (zj, v) in z.iter_mut().zip(self.p.row(r)) {
                    *zj += yr * v;
                }
            }
            // A negative basic value needs α < 0, a positive one α > 0.
            let need = if value < 0.0 { -1.0 } else { 1.0 };
            let mut best: Option<(Entering, f64, f64)> = None;
            let mut consider = |e: Entering, d: f64, a: f64| {
                let ratio = d.max(0.0) / a.abs();
                let better = match best {
                    None => true,
                    Some((_, br, ba)) => {
                        ratio < br - 1e-12 || (ratio <= br + 1e-12 && a.abs() > ba)
                    }
                };
                if better {
                    best = Some((e, ratio, a.abs()));
                }
            };
            for j in 0..n {
                if self.in_basis[j] {
                    continue;
                }
                let d = self.p.objective()[j] - z[j];
                if self.is_free(j) {
                    if alpha[j].abs() > piv {
                        consider(
                            Entering::Column {
                                col: j,
                                sign: -need * alpha[j].signum(),
                            },
                            d.abs(),
                            alpha[j],
                        );
                    }
                } else if need * alpha[j] > piv {
                    consider(Entering::Column { col: j, sign: 1.0 }, d, alpha[j]);
                }
            }
            for (pos, &r) in rho.iter().enumerate() {
                if need * r > piv {
                    consider(Entering::Slack { pos }, -y[pos], r);
                }
            }
            let Some((entering, _, _)) = best else {
                return Ok(false);
            };
            self.pivot(entering, leaving, 0.0)?;
            self.iterations += 1;
            self.compute_primal();
        }
    }

    fn cold_start(&mut self) -> Result<Phase> {
        let u = self.p.rhs();
        let mut worst: Option<usize> = None;
        for (r, &v) in u.iter().enumerate() {
            if v < -self.opts.feasibility_tol && worst.is_none_or(|w| v < u[w]) {
                worst = Some(r);
            }
        }
        match worst {
            None => {
                self.set_basis(Vec::new(), Vec::new());
                self.refresh()?;
                Ok(Phase::Two)
            }
            Some(r) => {
                self.set_basis(vec![self.art], vec![r]);
                self.refresh()?;
                Ok(Phase::One)
            }
        }
    }

    fn run(mut self, warm: Option<&WarmStart>) -> Result<LpSolution> {
        let mut warm_started = false;
        let phase = match warm {
            Some(ws) => {
                if self.crash(ws)? {
                    warm_started = true;
                    Phase::Two
                } else {
                    debug!("warm start infeasible; falling back to a cold start");
                    self.cold_start()?
                }
            }
            None => self.cold_start()?,
        };
        self.perturb();

        if phase == Phase::One {
            match self.iterate(Phase::One, self.opts.optimality_tol, usize::MAX)? {
                Outcome::Optimal => {}
                Outcome::IterationLimit => {
                    return Ok(self.finish(LpStatus::IterationLimit, f64::NAN, false))
                }
                Outcome::Unbounded => {
                    return Err(Error::Solver("phase one reported unbounded".into()))
                }
            }
            let art_value = self
                .cols
                .iter()
                .position(|&j| j == self.art)
                .map_or(0.0, |pos| self.x[pos]);
            let scale = 1.0 + self.p.rhs().iter().fold(0.0f64, |m, u| m.max(u.abs()));
            if art_value > self.opts.feasibility_tol * scale {
                return Ok(self.finish(LpStatus::Infeasible, f64::NAN, false));
            }
            self.degenerate_run = 0;
            self.bland = false;
        }

        let initial_objective = self.objective(Phase::Two);
        let status = match self.iterate(Phase::Two, self.opts.optimality_tol, usize::MAX)? {
            Outcome::Optimal => {
                self.restore()?;
                // Tighten reduced costs so reported duals are non-negative to
                // round-off; the solution is already optimal at the main
                // tolerance, so hitting the cap here is harmless.
                let tight_tol = self.opts.optimality_tol.min(1e-12);
                let cap = 2 * (self.cols.len() + 10);
                let _ = self.iterate(Phase::Two, tight_tol, cap)?;
                LpStatus::Optimal
            }
            Outcome::Unbounded => LpStatus::Unbounded,
            Outcome::IterationLimit => LpStatus::IterationLimit,
        };
        if status != LpStatus::Optimal {
            self.u.copy_from_slice(self.p.rhs());
            self.compute_primal();
        }
        Ok(self.finish(status, initial_objective, warm_started))
    }

    fn finish(self, status: LpStatus, initial_objective: f64, warm_started: bool) -> LpSolution {
        let n = self.p.n_cols();
        let mut primal = vec![0.0; n];
        for (&j, &v) in self.cols.iter().zip(&self.x) {
            if j != self.art {
                primal[j] = if self.is_free(j) { v } else { v.max(0.0) };
            }
        }
        let mut duals = vec![0.0; self.p.n_rows()];
        if status == LpStatus::Optimal {
            let y = self.prices(Phase::Two);
            for (&r, &yr) in self.rows.iter().zip(&y) {
                duals[r] = (-yr).max(0.0);
            }
        }
        let basis = Basis {
            columns: self
                .cols
                .iter()
                .copied()
                .filter(|&j| j != self.art)
                .collect(),
            rows: self.rows.clone(),
        };
        LpSolution {
            status,
            objective: self.p.objective_value(&primal),
            primal,
            duals,
            basis,
            iterations: self.iterations,
            initial_objective,
            warm_started,
        }
    }
}

/// Deterministic value in `[0, 1)` derived from a row index.
fn unit_hash(r: usize) -> f64 {
    let mut z = (r as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}
