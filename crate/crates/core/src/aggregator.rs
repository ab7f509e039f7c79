//! Turning elicited rankings into pairwise weight constraints and re-fitting
//! the worker model under them.
//!
//! The fit solves  min ‖T_O − T_f w‖² + α‖w‖²  s.t.  w[hi] − w[lo] ≥ margin
//! for every constraint. The solver is a primal active-set method on the
//! strictly convex quadratic: walk from a feasible point toward the optimum
//! of the current working set, stop at the first blocking constraint and add
//! it, drop working constraints whose multipliers turn negative. Any returned
//! solution has been verified against the KKT conditions (feasibility 1e−9,
//! stationarity and complementary slackness 1e−6 scaled).

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{add_ridge, check_alpha, dot, gram_regularized, Cholesky, Matrix};
use crate::model::{LabeledTasks, WorkerModel};

/// Default gap enforced for a strict preference `w[hi] > w[lo]`.
pub const DEFAULT_MARGIN: f64 = 1e-6;

const FEAS_TOL: f64 = 1e-9;
const STAT_TOL: f64 = 1e-6;
const COMP_TOL: f64 = 1e-6;
const MAX_ITERATIONS: usize = 10_000;

/// One elicited pairwise preference: factor `higher` outranks factor
/// `lower` by at least `margin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferenceConstraint {
    higher: usize,
    lower: usize,
    margin: f64,
}

impl PreferenceConstraint {
    pub fn new(higher: usize, lower: usize, margin: f64) -> Result<Self> {
        if higher == lower {
            return Err(Error::SelfConstraint { index: higher });
        }
        if !margin.is_finite() {
            return Err(Error::NotFinite("constraint margin"));
        }
        if margin < 0.0 {
            return Err(Error::Negative("constraint margin"));
        }
        Ok(PreferenceConstraint {
            higher,
            lower,
            margin,
        })
    }

    pub fn higher(&self) -> usize {
        self.higher
    }

    pub fn lower(&self) -> usize {
        self.lower
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }
}

/// Expands a full ranking (most preferred first) into the k(k−1)/2 pairwise
/// constraints it implies.
pub fn ranking_to_constraints(
    ranking: &[usize],
    margin: f64,
) -> Result<Vec<PreferenceConstraint>> {
    let mut seen = ranking.to_vec();
    seen.sort_unstable();
    for pair in seen.windows(2) {
        if pair[0] == pair[1] {
            return Err(Error::DuplicateRankingEntry { index: pair[0] });
        }
    }
    let mut out = Vec::with_capacity(ranking.len() * (ranking.len().saturating_sub(1)) / 2);
    for i in 0..ranking.len() {
        for j in (i + 1)..ranking.len() {
            out.push(PreferenceConstraint::new(ranking[i], ranking[j], margin)?);
        }
    }
    Ok(out)
}

/// Whether refits see the whole elicitation history or only the latest
/// answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryMode {
    Full,
    Recent,
}

/// A constraint with the elicitation round that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedConstraint {
    pub constraint: PreferenceConstraint,
    pub iteration: usize,
}

/// Accumulated elicited constraints under a history policy.
///
/// Full mode appends, except that a new answer about a pair replaces
/// whatever was stored for that pair (in either orientation): recency wins.
/// Recent mode keeps only the latest batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintStore {
    mode: HistoryMode,
    items: Vec<StampedConstraint>,
}

impl ConstraintStore {
    pub fn new(mode: HistoryMode) -> Self {
        ConstraintStore {
            mode,
            items: Vec::new(),
        }
    }

    pub fn mode(&self) -> HistoryMode {
        self.mode
    }

    pub fn merge(&mut self, new: Vec<PreferenceConstraint>, iteration: usize) {
        match self.mode {
            HistoryMode::Recent => {
                self.items.clear();
            }
            HistoryMode::Full => {
                self.items.retain(|stored| {
                    !new.iter().any(|n| same_pair(&stored.constraint, n))
                });
            }
        }
        self.items.extend(new.into_iter().map(|constraint| StampedConstraint {
            constraint,
            iteration,
        }));
    }

    pub fn items(&self) -> &[StampedConstraint] {
        &self.items
    }

    pub fn constraints(&self) -> Vec<PreferenceConstraint> {
        self.items.iter().map(|s| s.constraint).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

fn same_pair(a: &PreferenceConstraint, b: &PreferenceConstraint) -> bool {
    (a.higher == b.higher && a.lower == b.lower)
        || (a.higher == b.lower && a.lower == b.higher)
}

/// Fits worker weights under pairwise ordering constraints.
pub fn constrained_fit(
    data: &LabeledTasks,
    alpha: f64,
    constraints: &[PreferenceConstraint],
    factor_names: Vec<alloc::string::String>,
) -> Result<WorkerModel> {
    if data.is_empty() {
        return Err(Error::Empty("labeled tasks"));
    }
    check_alpha(alpha)?;
    let m = data.factors().cols();
    for c in constraints {
        for idx in [c.higher, c.lower] {
            if idx >= m {
                return Err(Error::Dimension {
                    what: "constraint factor index",
                    expected: m,
                    found: idx,
                });
            }
        }
    }
    if let Some(cycle) = find_cycle(m, constraints) {
        return Err(Error::CyclicConstraints { cycle });
    }
    let constraints = dedupe(constraints);

    let g = gram_regularized(data.factors(), alpha)?;
    let chol = Cholesky::factor(&g).map_err(|rank| Error::Singular { rank, dim: m })?;
    let c_vec = data.factors().transpose_mul(data.outcomes());
    let yty = data.outcomes().iter().map(|y| y * y).sum::<f64>();
    let w_u = chol.solve(&c_vec);

    let weights = if constraints.is_empty() || feasible(&w_u, &constraints, 0.0) {
        w_u
    } else {
        let problem = Problem {
            g: &g,
            chol: &chol,
            c: &c_vec,
            yty,
            constraints: &constraints,
        };
        problem.solve(&w_u)?
    };
    WorkerModel::new(weights, alpha, factor_names)
}

fn dedupe(constraints: &[PreferenceConstraint]) -> Vec<PreferenceConstraint> {
    // same ordered pair listed twice: the larger margin subsumes the other
    let mut out: Vec<PreferenceConstraint> = Vec::with_capacity(constraints.len());
    for c in constraints {
        match out
            .iter_mut()
            .find(|o| o.higher == c.higher && o.lower == c.lower)
        {
            Some(o) => o.margin = o.margin.max(c.margin),
            None => out.push(*c),
        }
    }
    out
}

fn feasible(w: &[f64], constraints: &[PreferenceConstraint], tol: f64) -> bool {
    constraints
        .iter()
        .all(|c| w[c.higher] - w[c.lower] >= c.margin - tol)
}

/// Directed cycle in the orientation graph (edges higher → lower), if any.
fn find_cycle(m: usize, constraints: &[PreferenceConstraint]) -> Option<Vec<usize>> {
    let mut adj: Vec<Vec<usize>> = alloc::vec![Vec::new(); m];
    for c in constraints {
        adj[c.higher].push(c.lower);
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut color = alloc::vec![0u8; m];
    let mut parent = alloc::vec![usize::MAX; m];
    for start in 0..m {
        if color[start] != 0 {
            continue;
        }
        // iterative DFS; stack holds (node, next child position)
        let mut stack: Vec<(usize, usize)> = alloc::vec![(start, 0)];
        color[start] = 1;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if *next < adj[node].len() {
                let child = adj[node][*next];
                *next += 1;
                match color[child] {
                    0 => {
                        color[child] = 1;
                        parent[child] = node;
                        stack.push((child, 0));
                    }
                    1 => {
                        // back edge: walk parents from node to child
                        let mut cycle = alloc::vec![child];
                        let mut cur = node;
                        while cur != child {
                            cycle.push(cur);
                            cur = parent[cur];
                        }
                        cycle.reverse();
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                color[node] = 2;
                stack.pop();
            }
        }
    }
    None
}

/// Pivot threshold for Schur-complement factorizations. The working set is
/// kept linearly independent by construction, so only machine-level pivots
/// indicate true dependence; the data-fit threshold would spuriously reject
/// honest ill-conditioned systems.
const SCHUR_PIVOT_REL_TOL: f64 = 1e-14;

/// Cholesky for Schur systems: machine-level pivot tolerance first, then
/// escalating diagonal damping (`max_diag * (1e-12, 1e-10, …)`) as a last
/// resort for nearly dependent sets.
fn schur_cholesky(h: &Matrix) -> Option<Cholesky> {
    if let Ok(c) = Cholesky::factor_with_rel_tol(h, SCHUR_PIVOT_REL_TOL) {
        return Some(c);
    }
    let n = h.cols();
    let max_diag = (0..n).fold(0.0f64, |a, i| a.max(h.get(i, i).abs()));
    if !(max_diag.is_finite() && max_diag > 0.0) {
        return None;
    }
    let mut jitter = max_diag * 1e-12;
    while jitter <= max_diag {
        let mut damped = h.clone();
        add_ridge(&mut damped, jitter);
        if let Ok(c) = Cholesky::factor_with_rel_tol(&damped, SCHUR_PIVOT_REL_TOL) {
            return Some(c);
        }
        jitter *= 100.0;
    }
    None
}

struct Problem<'a> {
    g: &'a Matrix,
    chol: &'a Cholesky,
    c: &'a [f64],
    yty: f64,
    constraints: &'a [PreferenceConstraint],
}

impl Problem<'_> {
    fn objective(&self, w: &[f64]) -> f64 {
        let gw = self.g.mul_vec(w);
        dot(w, &gw) - 2.0 * dot(self.c, w) + self.yty
    }

    fn slacks(&self, w: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| w[c.higher] - w[c.lower] - c.margin)
            .collect()
    }

    /// Primal active-set iteration. The iterate stays feasible throughout
    /// and satisfies the working set as equalities; a constraint that blocks
    /// a step is linearly independent of the working set by construction
    /// (its row has a nonzero product with a step direction the working set
    /// annihilates), so the working set never degenerates.
    fn solve(&self, w_u: &[f64]) -> Result<Vec<f64>> {
        let t = self.constraints.len();
        let m = w_u.len();
        // Z_j = G^{-1} a_j, shared by every working-set solve
        let z: Vec<Vec<f64>> = self
            .constraints
            .iter()
            .map(|c| {
                let mut e = alloc::vec![0.0; m];
                e[c.higher] = 1.0;
                e[c.lower] = -1.0;
                self.chol.solve(&e)
            })
            .collect();

        let mut x = self.feasible_start(w_u);
        let mut working: Vec<usize> = Vec::new();
        let mut lambda = alloc::vec![0.0; t];
        for _iter in 0..MAX_ITERATIONS {
            let Some((nu, target)) = self.working_solve(&working, &z, w_u) else {
                break; // working set numerically dependent: report failure
            };
            for l in lambda.iter_mut() {
                *l = 0.0;
            }
            for (i, &j) in working.iter().enumerate() {
                lambda[j] = 2.0 * nu[i];
            }
            let scale = 1.0 + target.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            let gap = x
                .iter()
                .zip(&target)
                .fold(0.0f64, |a, (xi, ti)| a.max((xi - ti).abs()));
            if gap <= 1e-12 * scale {
                // optimal on the working set: drop the most negative
                // multiplier, or stop when none is negative
                let worst = working
                    .iter()
                    .enumerate()
                    .map(|(i, _)| (i, nu[i]))
                    .filter(|&(_, v)| v < -1e-10)
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                match worst {
                    Some((pos, _)) => {
                        working.remove(pos);
                        continue;
                    }
                    None => {
                        for l in lambda.iter_mut() {
                            *l = l.max(0.0);
                        }
                        self.snap_feasible(&mut x);
                        if self.kkt_ok(&x, &lambda) {
                            return Ok(x);
                        }
                        break;
                    }
                }
            }
            // step toward the working-set optimum, stopping at the first
            // blocking constraint; ties break toward the lowest index
            let slacks = self.slacks(&x);
            let mut candidates: Vec<(f64, usize)> = Vec::new();
            for (j, c) in self.constraints.iter().enumerate() {
                if working.contains(&j) {
                    continue;
                }
                let dp = (target[c.higher] - x[c.higher]) - (target[c.lower] - x[c.lower]);
                if dp < 0.0 {
                    let a_j = slacks[j].max(0.0) / -dp;
                    if a_j < 1.0 {
                        candidates.push((a_j, j));
                    }
                }
            }
            candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            // a row dependent on the working set cannot truly block — its
            // directional derivative along the step is rounding dust — so
            // certify independence before admitting a blocker
            let mut blocker: Option<(f64, usize)> = None;
            for &(a_j, j) in &candidates {
                let mut trial = working.clone();
                trial.push(j);
                if self.independent(&trial, &z) {
                    blocker = Some((a_j, j));
                    break;
                }
            }
            match blocker {
                Some((amax, j)) => {
                    for (xi, ti) in x.iter_mut().zip(&target) {
                        *xi += amax * (ti - *xi);
                    }
                    working.push(j);
                }
                None => x = target,
            }
        }
        let (stat, comp, feas) = self.kkt_residuals(&x, &lambda);
        Err(Error::NoConvergence {
            stationarity: stat,
            complementarity: comp,
            feasibility: feas,
        })
    }

    /// Strictly feasible start: longest-path potentials over the constraint
    /// DAG with padded margins, shifted toward the unconstrained optimum for
    /// the coordinates constraints touch; untouched coordinates keep their
    /// unconstrained values.
    fn feasible_start(&self, w_u: &[f64]) -> Vec<f64> {
        let m = w_u.len();
        const PAD: f64 = 0.5;
        let mut touched = alloc::vec![false; m];
        for c in self.constraints {
            touched[c.higher] = true;
            touched[c.lower] = true;
        }
        let mut phi = alloc::vec![0.0f64; m];
        loop {
            let mut changed = false;
            for c in self.constraints {
                let need = phi[c.lower] + c.margin + PAD;
                if phi[c.higher] < need {
                    phi[c.higher] = need;
                    changed = true;
                }
            }
            if !changed {
                break; // terminates: the graph is a DAG
            }
        }
        let (mut sum_u, mut sum_phi, mut count) = (0.0, 0.0, 0usize);
        for i in 0..m {
            if touched[i] {
                sum_u += w_u[i];
                sum_phi += phi[i];
                count += 1;
            }
        }
        let shift = if count > 0 {
            (sum_u - sum_phi) / count as f64
        } else {
            0.0
        };
        (0..m)
            .map(|i| if touched[i] { phi[i] + shift } else { w_u[i] })
            .collect()
    }

    /// Raises coordinates along the constraint DAG until every slack
    /// measures nonnegative in floating point. Recovering the iterate
    /// through `G^{-1}` leaves rounding at the `eps * cond(G)` scale on the
    /// tight slacks; the raise is at most that dust, and the KKT gate still
    /// verifies the snapped point.
    fn snap_feasible(&self, x: &mut [f64]) {
        loop {
            let mut changed = false;
            for c in self.constraints {
                let need = x[c.lower] + c.margin;
                if x[c.higher] < need {
                    x[c.higher] = need;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    /// Schur matrix `S_ij = a_i^T G^{-1} a_j` over the given constraint
    /// subset.
    fn schur_matrix(&self, subset: &[usize], z: &[Vec<f64>]) -> Matrix {
        let ta = subset.len();
        let mut s = Matrix::zeros(ta, ta);
        for (i, &ci) in subset.iter().enumerate() {
            let c = &self.constraints[ci];
            for (j, &cj) in subset.iter().enumerate() {
                s.set(i, j, z[cj][c.higher] - z[cj][c.lower]);
            }
        }
        s
    }

    /// Whether the subset's constraint rows are numerically independent:
    /// the Schur complement factors with machine-level pivots.
    fn independent(&self, subset: &[usize], z: &[Vec<f64>]) -> bool {
        let s = self.schur_matrix(subset, z);
        Cholesky::factor_with_rel_tol(&s, SCHUR_PIVOT_REL_TOL).is_ok()
    }

    /// Minimizes the objective subject to the working-set constraints held
    /// as equalities: solves the Schur system `S nu = b`, then recovers
    /// `w = w_u + sum nu_i Z_i`. One pass of iterative refinement keeps the
    /// equality satisfaction near machine precision even for poorly
    /// conditioned sets. Returns the multipliers and the minimizer, or
    /// `None` when the working set is numerically dependent.
    fn working_solve(
        &self,
        working: &[usize],
        z: &[Vec<f64>],
        w_u: &[f64],
    ) -> Option<(Vec<f64>, Vec<f64>)> {
        if working.is_empty() {
            return Some((Vec::new(), w_u.to_vec()));
        }
        let ta = working.len();
        let s = self.schur_matrix(working, z);
        let chol_s = schur_cholesky(&s)?;
        let rhs: Vec<f64> = working
            .iter()
            .map(|&j| {
                let c = &self.constraints[j];
                c.margin - (w_u[c.higher] - w_u[c.lower])
            })
            .collect();
        let mut nu = chol_s.solve(&rhs);
        let mut residual = rhs.clone();
        for i in 0..ta {
            let mut acc = 0.0;
            for j in 0..ta {
                acc += s.get(i, j) * nu[j];
            }
            residual[i] -= acc;
        }
        let delta = chol_s.solve(&residual);
        for (n_i, d_i) in nu.iter_mut().zip(&delta) {
            *n_i += d_i;
        }
        let mut w = w_u.to_vec();
        for (i, &j) in working.iter().enumerate() {
            for (wk, zk) in w.iter_mut().zip(&z[j]) {
                *wk += nu[i] * zk;
            }
        }
        Some((nu, w))
    }

    fn kkt_residuals(&self, w: &[f64], lambda: &[f64]) -> (f64, f64, f64) {
        let slacks = self.slacks(w);
        let gw = self.g.mul_vec(w);
        let mut resid: Vec<f64> = (0..w.len()).map(|i| 2.0 * (gw[i] - self.c[i])).collect();
        for (c, &l) in self.constraints.iter().zip(lambda) {
            resid[c.higher] -= l;
            resid[c.lower] += l;
        }
        let stat = resid.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        let comp = slacks
            .iter()
            .zip(lambda)
            .fold(0.0f64, |a, (&s, &l)| a.max((s * l).abs()));
        let feas = slacks.iter().fold(0.0f64, |a, &s| a.max(-s)).max(0.0);
        (stat, comp, feas)
    }

    fn kkt_ok(&self, w: &[f64], lambda: &[f64]) -> bool {
        if lambda.iter().any(|&l| l < 0.0) {
            return false;
        }
        let (stat, comp, feas) = self.kkt_residuals(w, lambda);
        let stat_scale = 1.0 + self.c.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let comp_scale = 1.0 + self.objective(w).abs();
        feas <= FEAS_TOL && stat <= STAT_TOL * stat_scale && comp <= COMP_TOL * comp_scale
    }
}
