//! Selecting which k factors to ask a worker about.
//!
//! The objective is A-optimality on the retained columns: remove the k
//! columns whose absence minimizes trace((G_S + αI)^{-1}) where G_S is the
//! Gram matrix of the kept columns. Greedy backward removal (`k_exfactor`)
//! carries an m/(m−k) approximation factor; `brute_force_selector` is the
//! exact oracle for small instances and `k_random` the baseline.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    gram_regularized, submatrix_inverse_trace, Cholesky, Matrix, INFINITE_OBJECTIVE,
};

/// Exhaustive search refuses more candidate subsets than this.
pub const MAX_BRUTE_FORCE_SUBSETS: u128 = 1_000_000;

/// Pivot guard for the rank-one trace downdate: below this relative size the
/// naive refactorization path is used instead.
const DOWNDATE_PIVOT_REL_TOL: f64 = 1e-12;

/// The k factors chosen for elicitation plus the objective value of the
/// retained columns (infinite when the retained Gram matrix is singular).
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionSet {
    pub factor_indices: Vec<usize>,
    pub retained_trace: f64,
}

fn validate_k(k: usize, m: usize) -> Result<()> {
    if k >= m {
        return Err(Error::TooManyRemovals { k, m });
    }
    Ok(())
}

/// Backward-greedy factor selection: k rounds, each removing the column
/// whose removal minimizes the retained inverse-Gram trace. Ties break
/// toward the lowest column index.
///
/// Per round the trace after removing column j is computed from the current
/// inverse B by the downdate identity
/// `trace(B') = (trace(B) − B_jj) − Σ_{i≠j} B_ij² / B_jj`,
/// falling back to naive refactorization when B is unavailable (singular
/// retained Gram) or the pivot B_jj is too small to trust.
pub fn k_exfactor(t_f: &Matrix, k: usize, alpha: f64) -> Result<QuestionSet> {
    if t_f.is_empty() {
        return Err(Error::Empty("task factor matrix"));
    }
    validate_k(k, t_f.cols())?;
    let g_full = gram_regularized(t_f, alpha)?;
    let mut remaining: Vec<usize> = (0..t_f.cols()).collect();
    let mut removed = Vec::with_capacity(k);
    for _ in 0..k {
        let traces = removal_traces(&g_full, &remaining);
        let mut best: Option<(f64, usize)> = None; // (trace, position)
        let mut any_finite = false;
        for (pos, &t) in traces.iter().enumerate() {
            if t < INFINITE_OBJECTIVE {
                any_finite = true;
            }
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, pos));
            }
        }
        if !any_finite {
            return Err(Error::AllCandidatesSingular);
        }
        let (_, pos) = best.unwrap();
        removed.push(remaining.remove(pos));
    }
    Ok(QuestionSet {
        retained_trace: submatrix_inverse_trace(&g_full, &remaining),
        factor_indices: removed,
    })
}

/// For each position p in `remaining`, the retained inverse trace after
/// dropping that column.
fn removal_traces(g_full: &Matrix, remaining: &[usize]) -> Vec<f64> {
    let r = remaining.len();
    let mut sub = Matrix::zeros(r, r);
    for (i, &a) in remaining.iter().enumerate() {
        for (j, &b) in remaining.iter().enumerate() {
            sub.set(i, j, g_full.get(a, b));
        }
    }
    let inverse = Cholesky::factor(&sub).ok().map(|c| c.inverse());
    let mut traces = Vec::with_capacity(r);
    for pos in 0..r {
        let downdated = inverse.as_ref().and_then(|b| downdate_trace(b, pos));
        let t = downdated.unwrap_or_else(|| {
            let keep: Vec<usize> = remaining
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != pos)
                .map(|(_, &c)| c)
                .collect();
            submatrix_inverse_trace(g_full, &keep)
        });
        traces.push(t);
    }
    traces
}

/// Trace of the inverse of the principal submatrix dropping row/column `pos`
/// of B's underlying matrix, given B itself. `None` when the pivot is too
/// small for the identity to be numerically safe.
fn downdate_trace(b: &Matrix, pos: usize) -> Option<f64> {
    let r = b.rows();
    let pivot = b.get(pos, pos);
    let mut max_diag = 0.0f64;
    for i in 0..r {
        max_diag = max_diag.max(b.get(i, i).abs());
    }
    if pivot <= DOWNDATE_PIVOT_REL_TOL * max_diag {
        return None;
    }
    let mut trace = 0.0;
    let mut cross = 0.0;
    for i in 0..r {
        if i == pos {
            continue;
        }
        trace += b.get(i, i);
        let v = b.get(i, pos);
        cross += v * v;
    }
    Some(trace - cross / pivot)
}

/// Exact minimizer of the retained trace over all (m choose k) removal
/// subsets, in lexicographic order so ties keep the smallest index set.
pub fn brute_force_selector(t_f: &Matrix, k: usize, alpha: f64) -> Result<QuestionSet> {
    if t_f.is_empty() {
        return Err(Error::Empty("task factor matrix"));
    }
    let m = t_f.cols();
    validate_k(k, m)?;
    let subsets = binomial(m, k);
    if subsets > MAX_BRUTE_FORCE_SUBSETS {
        return Err(Error::SubsetBudget {
            subsets,
            limit: MAX_BRUTE_FORCE_SUBSETS,
        });
    }
    let g_full = gram_regularized(t_f, alpha)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut removed: Vec<usize> = (0..k).collect();
    loop {
        let keep: Vec<usize> = (0..m).filter(|c| !removed.contains(c)).collect();
        let t = submatrix_inverse_trace(&g_full, &keep);
        if best.as_ref().is_none_or(|(bt, _)| t < *bt) {
            best = Some((t, removed.clone()));
        }
        if !next_combination(&mut removed, m) {
            break;
        }
    }
    let (retained_trace, factor_indices) = best.unwrap();
    if retained_trace == INFINITE_OBJECTIVE && k > 0 {
        return Err(Error::AllCandidatesSingular);
    }
    Ok(QuestionSet {
        factor_indices,
        retained_trace,
    })
}

/// Advances `combo` to the next k-combination of 0..m in lexicographic
/// order; returns false after the last one. An empty combination has no
/// successor.
fn next_combination(combo: &mut [usize], m: usize) -> bool {
    let k = combo.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < m - k + i {
            combo[i] += 1;
            for j in (i + 1)..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    result
}

/// Uniformly random question set, deterministic per seed; the retained
/// trace is reported for comparability with the other selectors. `k = m` is
/// allowed here (ask about everything): the retained trace of an empty
/// selection is 0.
pub fn k_random(t_f: &Matrix, k: usize, alpha: f64, seed: u64) -> Result<QuestionSet> {
    if t_f.is_empty() {
        return Err(Error::Empty("task factor matrix"));
    }
    let m = t_f.cols();
    if k > m {
        return Err(Error::TooManyRemovals { k, m });
    }
    let g_full = gram_regularized(t_f, alpha)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let factor_indices: Vec<usize> = rand::seq::index::sample(&mut rng, m, k).into_vec();
    let keep: Vec<usize> = (0..m).filter(|c| !factor_indices.contains(c)).collect();
    Ok(QuestionSet {
        retained_trace: submatrix_inverse_trace(&g_full, &keep),
        factor_indices,
    })
}
