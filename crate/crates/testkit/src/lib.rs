//! Slow, independent reference implementations used only by tests.
//!
//! Everything here deliberately avoids the code paths in `exfactor-core`:
//! ridge solutions come from a Jacobi SVD pseudoinverse instead of normal
//! equations, bootstrap expectations from explicit outcome-tree enumeration,
//! and constrained fits from projected pattern search. Agreement between the
//! two stacks is the evidence the fast paths are right.

use exfactor_core::Matrix;

/// Dense column-major helper for the SVD (rows x cols as nested Vecs).
#[derive(Clone, Debug)]
pub struct Svd {
    /// left singular vectors, n x r (columns)
    pub u: Vec<Vec<f64>>,
    /// singular values, descending
    pub sigma: Vec<f64>,
    /// right singular vectors, m x r (columns)
    pub v: Vec<Vec<f64>>,
}

fn to_columns(a: &Matrix) -> Vec<Vec<f64>> {
    (0..a.cols())
        .map(|j| (0..a.rows()).map(|i| a.get(i, j)).collect())
        .collect()
}

fn col_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-sided Jacobi SVD. Orthogonalizes the columns of A by plane rotations;
/// column norms converge to the singular values. For n < m the transpose is
/// decomposed and the factors swapped.
pub fn svd(a: &Matrix) -> Svd {
    let (n, m) = (a.rows(), a.cols());
    if n < m {
        let t = transpose(a);
        let s = svd(&t);
        return Svd {
            u: s.v,
            sigma: s.sigma,
            v: s.u,
        };
    }
    let mut u = to_columns(a); // m columns of length n
    let mut v: Vec<Vec<f64>> = (0..m)
        .map(|j| (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let eps = 1e-14;
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..m {
            for q in (p + 1)..m {
                let app = col_dot(&u[p], &u[p]);
                let aqq = col_dot(&u[q], &u[q]);
                let apq = col_dot(&u[p], &u[q]);
                if apq.abs() <= eps * (app * aqq).sqrt() {
                    continue;
                }
                off = off.max(apq.abs());
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..u[p].len() {
                    let (up, uq) = (u[p][i], u[q][i]);
                    u[p][i] = c * up - s * uq;
                    u[q][i] = s * up + c * uq;
                }
                for i in 0..m {
                    let (vp, vq) = (v[p][i], v[q][i]);
                    v[p][i] = c * vp - s * vq;
                    v[q][i] = s * vp + c * vq;
                }
            }
        }
        if off == 0.0 {
            break;
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    let norms: Vec<f64> = u.iter().map(|c| col_dot(c, c).sqrt()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut su = Vec::with_capacity(m);
    let mut sv = Vec::with_capacity(m);
    let mut sigma = Vec::with_capacity(m);
    for &j in &order {
        let norm = norms[j];
        sigma.push(norm);
        if norm > 0.0 {
            su.push(u[j].iter().map(|x| x / norm).collect());
        } else {
            su.push(vec![0.0; u[j].len()]);
        }
        sv.push(v[j].clone());
    }
    Svd {
        u: su,
        sigma,
        v: sv,
    }
}

fn transpose(a: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.cols(), a.rows());
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            out.set(j, i, a.get(i, j));
        }
    }
    out
}

/// Ridge solution through the SVD: w = V diag(sigma/(sigma^2+alpha)) U^T y.
/// With alpha = 0 this is the minimum-norm least-squares solution, with tiny
/// singular values cut at a relative threshold.
pub fn pinv_ridge(a: &Matrix, y: &[f64], alpha: f64) -> Vec<f64> {
    let dec = svd(a);
    let m = a.cols();
    let smax = dec.sigma.first().copied().unwrap_or(0.0);
    let cutoff = smax * 1e-12;
    let mut w = vec![0.0; m];
    for (k, &s) in dec.sigma.iter().enumerate() {
        if s <= cutoff {
            continue;
        }
        let uy = col_dot(&dec.u[k], y);
        let coeff = s * uy / (s * s + alpha);
        for i in 0..m {
            w[i] += coeff * dec.v[k][i];
        }
    }
    w
}

/// Effective degrees of freedom of ridge at `alpha`: sum sigma^2/(sigma^2+alpha).
pub fn ridge_df(a: &Matrix, alpha: f64) -> f64 {
    svd(&gram_free(a))
        .sigma
        .iter()
        .map(|&ev| {
            // eigenvalues of A^T A are sigma^2 of A
            if ev <= 0.0 {
                0.0
            } else {
                ev / (ev + alpha)
            }
        })
        .sum()
}

fn gram_free(a: &Matrix) -> Matrix {
    // A^T A without touching the core gram() helper
    let m = a.cols();
    let mut g = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut acc = 0.0;
            for r in 0..a.rows() {
                acc += a.get(r, i) * a.get(r, j);
            }
            g.set(i, j, acc);
        }
    }
    g
}

/// Mean squared prediction error of `w` on the given rows.
pub fn direct_mse(rows: &Matrix, y: &[f64], w: &[f64]) -> f64 {
    if rows.rows() == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..rows.rows() {
        let pred: f64 = (0..rows.cols()).map(|j| rows.get(i, j) * w[j]).sum();
        let r = pred - y[i];
        acc += r * r;
    }
    acc / rows.rows() as f64
}

/// Exhaustive bootstrap expectation: walks all 2^b outcome branches of the
/// candidate set, fits each branch with the SVD ridge, and averages the
/// held-out error under the product-Bernoulli branch probabilities.
/// Returns (expected error, total probability mass) — the mass must be 1.
pub fn bootstrap_expectation_oracle(
    tasks: &Matrix,
    candidate: &[usize],
    soft_labels: &[f64],
    alpha: f64,
) -> (f64, f64) {
    let b = candidate.len();
    assert!(b <= 24, "oracle enumerates 2^b branches");
    let m = tasks.cols();
    let held: Vec<usize> = (0..tasks.rows()).filter(|i| !candidate.contains(i)).collect();
    let held_rows = select(tasks, &held);
    let held_y: Vec<f64> = held.iter().map(|&i| soft_labels[i]).collect();
    let cand_rows = select(tasks, candidate);
    let alpha_eff = if b < m { alpha.max(1e-6) } else { alpha };

    let mut expected = 0.0;
    let mut mass = 0.0;
    for branch in 0u64..(1u64 << b) {
        let mut prob = 1.0;
        let mut y = vec![0.0; b];
        for (slot, &task) in candidate.iter().enumerate() {
            let p = soft_labels[task];
            if branch >> slot & 1 == 1 {
                prob *= p;
                y[slot] = 1.0;
            } else {
                prob *= 1.0 - p;
            }
        }
        mass += prob;
        if prob == 0.0 {
            continue;
        }
        let w = pinv_ridge_regularized(&cand_rows, &y, alpha_eff);
        expected += prob * direct_mse(&held_rows, &held_y, &w);
    }
    (expected, mass)
}

/// Like `pinv_ridge` but keeps all directions when alpha > 0 (ridge already
/// regularizes them); used for branch fits where b < m is routine.
fn pinv_ridge_regularized(a: &Matrix, y: &[f64], alpha: f64) -> Vec<f64> {
    if alpha > 0.0 {
        let dec = svd(a);
        let m = a.cols();
        let mut w = vec![0.0; m];
        for (k, &s) in dec.sigma.iter().enumerate() {
            if s * s + alpha <= 0.0 {
                continue;
            }
            let uy = col_dot(&dec.u[k], y);
            let coeff = s * uy / (s * s + alpha);
            for i in 0..m {
                w[i] += coeff * dec.v[k][i];
            }
        }
        w
    } else {
        pinv_ridge(a, y, alpha)
    }
}

/// Per-branch error spread of the bootstrap tree, for Monte Carlo standard
/// errors: returns (expectation, variance of the branch error).
pub fn bootstrap_branch_variance(
    tasks: &Matrix,
    candidate: &[usize],
    soft_labels: &[f64],
    alpha: f64,
) -> (f64, f64) {
    let b = candidate.len();
    assert!(b <= 24);
    let m = tasks.cols();
    let held: Vec<usize> = (0..tasks.rows()).filter(|i| !candidate.contains(i)).collect();
    let held_rows = select(tasks, &held);
    let held_y: Vec<f64> = held.iter().map(|&i| soft_labels[i]).collect();
    let cand_rows = select(tasks, candidate);
    let alpha_eff = if b < m { alpha.max(1e-6) } else { alpha };
    let mut mean = 0.0;
    let mut second = 0.0;
    for branch in 0u64..(1u64 << b) {
        let mut prob = 1.0;
        let mut y = vec![0.0; b];
        for (slot, &task) in candidate.iter().enumerate() {
            let p = soft_labels[task];
            if branch >> slot & 1 == 1 {
                prob *= p;
                y[slot] = 1.0;
            } else {
                prob *= 1.0 - p;
            }
        }
        if prob == 0.0 {
            continue;
        }
        let w = pinv_ridge_regularized(&cand_rows, &y, alpha_eff);
        let err = direct_mse(&held_rows, &held_y, &w);
        mean += prob * err;
        second += prob * err * err;
    }
    (mean, (second - mean * mean).max(0.0))
}

fn select(a: &Matrix, rows: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(rows.len(), a.cols());
    for (r, &src) in rows.iter().enumerate() {
        for j in 0..a.cols() {
            out.set(r, j, a.get(src, j));
        }
    }
    out
}

/// Ridge objective ||y - Xw||^2 + alpha ||w||^2.
pub fn ridge_objective(x: &Matrix, y: &[f64], alpha: f64, w: &[f64]) -> f64 {
    let mut obj = 0.0;
    for i in 0..x.rows() {
        let pred: f64 = (0..x.cols()).map(|j| x.get(i, j) * w[j]).sum();
        let r = y[i] - pred;
        obj += r * r;
    }
    obj + alpha * w.iter().map(|v| v * v).sum::<f64>()
}

/// (higher, lower, margin) triples for the pattern-search oracle.
pub type RawConstraint = (usize, usize, f64);

fn satisfies(w: &[f64], cs: &[RawConstraint], tol: f64) -> bool {
    cs.iter().all(|&(hi, lo, m)| w[hi] - w[lo] >= m - tol)
}

/// Constrained least squares by feasible-start coordinate pattern search.
/// Slow and derivative-free, but independent of the barrier solver; accuracy
/// is roughly the final step size.
pub fn cls_oracle(
    x: &Matrix,
    y: &[f64],
    alpha: f64,
    constraints: &[RawConstraint],
    final_step: f64,
) -> Vec<f64> {
    let m = x.cols();
    assert!(m <= 16, "oracle move set enumerates coordinate subsets");
    // feasible start: longest-path potentials with slack
    let mut w = vec![0.0f64; m];
    loop {
        let mut changed = false;
        for &(hi, lo, margin) in constraints {
            let need = w[lo] + margin + 1.0;
            if w[hi] < need {
                w[hi] = need;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    assert!(satisfies(&w, constraints, 0.0), "oracle start infeasible");
    let mut step = 1.0f64;
    let mut best = ridge_objective(x, y, alpha, &w);
    // Moves along every ±indicator of a coordinate subset. Joint moves keep
    // within-subset differences fixed, so chains of tight constraints cannot
    // stall the search the way single-coordinate moves can.
    while step >= final_step {
        let mut improved = false;
        for subset in 1u32..(1 << m) {
            for dir in [1.0, -1.0] {
                let mut trial = w.clone();
                for (i, t) in trial.iter_mut().enumerate() {
                    if subset >> i & 1 == 1 {
                        *t += dir * step;
                    }
                }
                if satisfies(&trial, constraints, 0.0) {
                    let obj = ridge_objective(x, y, alpha, &trial);
                    if obj < best - 1e-15 {
                        best = obj;
                        w = trial;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    w
}

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Dense matrix with entries uniform in [-1, 1].
pub fn random_matrix(n: usize, m: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(n, m, data).unwrap()
}

/// Random 0/1 matrix where each row has at least one active factor.
pub fn random_binary_matrix(n: usize, m: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * m);
    for _ in 0..n {
        let start = data.len();
        for _ in 0..m {
            data.push(if rng.random_bool(0.5) { 1.0 } else { 0.0 });
        }
        if data[start..].iter().all(|&v| v == 0.0) {
            let j = rng.random_range(0..m);
            data[start + j] = 1.0;
        }
    }
    Matrix::from_vec(n, m, data).unwrap()
}

/// Probabilities bounded away from 0 and 1, for soft-label fixtures.
pub fn random_probs(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0.05..0.95)).collect()
}

/// Acyclic constraint set: orientations follow a hidden random permutation,
/// so any subset of pairs is consistent by construction.
pub fn random_acyclic_constraints(
    m: usize,
    count: usize,
    margin: f64,
    seed: u64,
) -> Vec<RawConstraint> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut rank: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        let j = rng.random_range(0..=i);
        rank.swap(i, j);
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    let mut guard = 0;
    while out.len() < count && guard < count * 50 {
        guard += 1;
        let a = rng.random_range(0..m);
        let b = rng.random_range(0..m);
        if a == b {
            continue;
        }
        let (hi, lo) = if rank[a] < rank[b] { (a, b) } else { (b, a) };
        if seen.insert((hi, lo)) {
            out.push((hi, lo, margin));
        }
    }
    out
}

/// Binary outcomes drawn from given success probabilities.
pub fn random_outcomes(probs: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    probs
        .iter()
        .map(|&p| if rng.random_bool(p.clamp(0.0, 1.0)) { 1.0 } else { 0.0 })
        .collect()
}
