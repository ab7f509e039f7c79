//! Cold-start task selection by minimizing expected reconstruction error
//! over the bootstrap tree of hypothetical outcomes.
//!
//! For a candidate set B of b tasks there are 2^b outcome branches. Each
//! branch fits a worker model on B with those outcomes and scores it on the
//! remaining tasks against soft labels from the outcome-probability model;
//! the expectation weights branches by their product-Bernoulli probability.
//! Exact enumeration is kept cheap by sharing one Cholesky factorization
//! across branches (only the right-hand side changes) and by expressing the
//! held-out MSE as a precomputed quadratic form, so each branch costs O(m²).

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::linalg::{add_ridge, check_alpha, dot, gram, Cholesky, Matrix};
use crate::model::WorkerModel;
use crate::outcome::OutcomeProbabilityModel;
use crate::seed::mix_seed;

/// Exact-mode branch count guard: 2^20 branches is the most we enumerate.
pub const MAX_EXACT_BUDGET: usize = 20;

/// Underdetermined branch fits (fewer tasks than factors) force at least
/// this much ridge regularization.
pub const MIN_BRANCH_ALPHA: f64 = 1e-6;

const MC_SAMPLE_CAP: usize = 4096;

/// How to evaluate the expectation over outcome branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Enumerate all 2^b branches (b ≤ [`MAX_EXACT_BUDGET`]).
    Exact,
    /// Average `samples` branches drawn from the product-Bernoulli
    /// distribution, deterministically from `seed`.
    MonteCarlo { samples: usize, seed: u64 },
}

/// Default monte-carlo sample count: 10% of the branch space, at least 64,
/// capped at 4096.
pub fn default_mc_samples(budget: usize) -> usize {
    if budget >= 16 {
        return MC_SAMPLE_CAP;
    }
    let branches = 1usize << budget;
    branches.div_ceil(10).max(64).min(MC_SAMPLE_CAP)
}

/// A chosen bootstrap set with its expected reconstruction error.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapPlan {
    pub task_ids: Vec<usize>,
    pub expected_error: f64,
    pub evaluation_mode: EvalMode,
}

/// Shared per-candidate state: one factorization, per-branch solves.
struct BranchEvaluator {
    chol: Cholesky,
    candidate_rows: Matrix,
    probs: Vec<f64>,
    /// Held-out quadratic form: mse(w) = (wᵀHw − 2hᵀw + c) / n_held.
    h: Matrix,
    g: Vec<f64>,
    c: f64,
    n_held: usize,
}

impl BranchEvaluator {
    fn new(
        candidate: &[usize],
        tasks: &Matrix,
        soft: &[f64],
        alpha: f64,
    ) -> Result<Self> {
        let n = tasks.rows();
        let m = tasks.cols();
        let b = candidate.len();
        let candidate_rows = tasks.select_rows(candidate);

        let alpha_eff = if b < m { alpha.max(MIN_BRANCH_ALPHA) } else { alpha };
        let mut g_mat = gram(&candidate_rows)?;
        add_ridge(&mut g_mat, alpha_eff);
        let chol = Cholesky::factor(&g_mat).map_err(|rank| Error::Singular { rank, dim: m })?;

        // Held-out stats by downdating pool totals, so greedy's incremental
        // evaluation and the public entry point agree bit for bit.
        let mut h = gram(tasks)?;
        let mut g = alloc::vec![0.0; m];
        let mut c = 0.0;
        for (row, &p) in soft.iter().enumerate() {
            for (gi, v) in g.iter_mut().zip(tasks.row(row)) {
                *gi += p * v;
            }
            c += p * p;
        }
        let mut in_candidate = alloc::vec![false; n];
        for &id in candidate {
            in_candidate[id] = true;
        }
        for &id in candidate {
            let row = tasks.row(id);
            let p = soft[id];
            for j in 0..m {
                let vj = row[j];
                if vj == 0.0 {
                    continue;
                }
                for k in 0..m {
                    h.set(j, k, h.get(j, k) - vj * row[k]);
                }
            }
            for (gi, v) in g.iter_mut().zip(row) {
                *gi -= p * v;
            }
            c -= p * p;
        }
        let n_held = n - b;
        let probs = candidate.iter().map(|&id| soft[id]).collect();
        Ok(BranchEvaluator {
            chol,
            candidate_rows,
            probs,
            h,
            g,
            c,
            n_held,
        })
    }

    /// MSE on held-out soft labels for the branch with the given outcomes.
    fn branch_error(&self, outcomes: &[bool]) -> f64 {
        if self.n_held == 0 {
            return 0.0;
        }
        let m = self.candidate_rows.cols();
        let mut xty = alloc::vec![0.0; m];
        for (row, &o) in outcomes.iter().enumerate() {
            if o {
                for (x, v) in xty.iter_mut().zip(self.candidate_rows.row(row)) {
                    *x += v;
                }
            }
        }
        let w = self.chol.solve(&xty);
        let mut quad = 0.0;
        for j in 0..m {
            quad += w[j] * dot(self.h.row(j), &w);
        }
        let mse = (quad - 2.0 * dot(&self.g, &w) + self.c) / self.n_held as f64;
        mse.max(0.0)
    }
}

fn soft_labels(tasks: &Matrix, prob_model: &OutcomeProbabilityModel) -> Result<Vec<f64>> {
    (0..tasks.rows())
        .map(|r| prob_model.success_probability(tasks.row(r)))
        .collect()
}

fn validate_candidate(candidate: &[usize], n: usize) -> Result<()> {
    if candidate.is_empty() {
        return Err(Error::Empty("candidate task set"));
    }
    let mut seen = alloc::vec![false; n];
    for &id in candidate {
        if id >= n {
            return Err(Error::Dimension {
                what: "task index",
                expected: n,
                found: id,
            });
        }
        if seen[id] {
            return Err(Error::DuplicateRankingEntry { index: id });
        }
        seen[id] = true;
    }
    Ok(())
}

/// Expected reconstruction error of fitting on `candidate` and scoring on
/// the remaining tasks, under the outcome-probability model.
pub fn expected_reconstruction_error(
    candidate: &[usize],
    tasks: &Matrix,
    prob_model: &OutcomeProbabilityModel,
    alpha: f64,
    mode: EvalMode,
) -> Result<f64> {
    check_alpha(alpha)?;
    if tasks.is_empty() {
        return Err(Error::Empty("task factor matrix"));
    }
    validate_candidate(candidate, tasks.rows())?;
    let soft = soft_labels(tasks, prob_model)?;
    let evaluator = BranchEvaluator::new(candidate, tasks, &soft, alpha)?;
    expectation(&evaluator, mode)
}

fn expectation(evaluator: &BranchEvaluator, mode: EvalMode) -> Result<f64> {
    let b = evaluator.probs.len();
    match mode {
        EvalMode::Exact => {
            if b > MAX_EXACT_BUDGET {
                return Err(Error::ExactTreeTooDeep {
                    budget: b,
                    limit: MAX_EXACT_BUDGET,
                });
            }
            let mut outcomes = alloc::vec![false; b];
            let mut total = 0.0;
            for mask in 0u64..(1u64 << b) {
                let mut prob = 1.0;
                for (i, o) in outcomes.iter_mut().enumerate() {
                    let bit = mask >> i & 1 == 1;
                    *o = bit;
                    prob *= if bit {
                        evaluator.probs[i]
                    } else {
                        1.0 - evaluator.probs[i]
                    };
                }
                if prob == 0.0 {
                    continue;
                }
                total += prob * evaluator.branch_error(&outcomes);
            }
            Ok(total)
        }
        EvalMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::NoSamples);
            }
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut outcomes = alloc::vec![false; b];
            let mut total = 0.0;
            for _ in 0..samples {
                for (o, &p) in outcomes.iter_mut().zip(&evaluator.probs) {
                    *o = rng.random_bool(p.clamp(0.0, 1.0));
                }
                total += evaluator.branch_error(&outcomes);
            }
            Ok(total / samples as f64)
        }
    }
}

/// Expected error of the uniform-weights model over all tasks, used for
/// empty bootstrap plans.
fn uniform_plan_error(tasks: &Matrix, soft: &[f64]) -> f64 {
    let m = tasks.cols() as f64;
    let mut total = 0.0;
    for (row, &p) in soft.iter().enumerate() {
        let pred: f64 = tasks.row(row).iter().sum::<f64>() / m;
        let e = p - pred;
        total += e * e;
    }
    total / tasks.rows() as f64
}

/// Greedily grows the bootstrap set one task at a time, each round keeping
/// the task whose addition minimizes the expected reconstruction error.
/// Ties break toward the lowest task index. In monte-carlo mode each
/// candidate evaluation draws its own stream derived from the mode seed, the
/// round, and the candidate index, so results are independent of evaluation
/// order.
pub fn greedy_bootstrap(
    tasks: &Matrix,
    budget: usize,
    prob_model: &OutcomeProbabilityModel,
    alpha: f64,
    mode: EvalMode,
) -> Result<BootstrapPlan> {
    check_alpha(alpha)?;
    if tasks.is_empty() {
        return Err(Error::Empty("task factor matrix"));
    }
    let n = tasks.rows();
    if budget > n {
        return Err(Error::BudgetExceedsPool { budget, pool: n });
    }
    let soft = soft_labels(tasks, prob_model)?;
    if budget == 0 {
        return Ok(BootstrapPlan {
            task_ids: Vec::new(),
            expected_error: uniform_plan_error(tasks, &soft),
            evaluation_mode: mode,
        });
    }
    let mut selected: Vec<usize> = Vec::with_capacity(budget);
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut last_objective = 0.0;
    for round in 0..budget {
        let mut best: Option<(f64, usize, usize)> = None; // (err, candidate, position)
        let mut trial = selected.clone();
        trial.push(0);
        for (pos, &cand) in remaining.iter().enumerate() {
            *trial.last_mut().unwrap() = cand;
            let cand_mode = match mode {
                EvalMode::Exact => EvalMode::Exact,
                EvalMode::MonteCarlo { samples, seed } => EvalMode::MonteCarlo {
                    samples,
                    seed: mix_seed(seed, round as u64, cand as u64),
                },
            };
            let err = match BranchEvaluator::new(&trial, tasks, &soft, alpha) {
                Ok(ev) => match expectation(&ev, cand_mode) {
                    Ok(e) => e,
                    Err(e @ Error::ExactTreeTooDeep { .. }) => return Err(e),
                    Err(Error::NoSamples) => return Err(Error::NoSamples),
                    Err(_) => continue,
                },
                Err(_) => continue, // singular candidate design: unusable
            };
            if best.is_none_or(|(b_err, _, _)| err < b_err) {
                best = Some((err, cand, pos));
            }
        }
        let (err, cand, pos) = best.ok_or(Error::AllCandidatesSingular)?;
        selected.push(cand);
        remaining.remove(pos);
        last_objective = err;
    }
    Ok(BootstrapPlan {
        task_ids: selected,
        expected_error: last_objective,
        evaluation_mode: mode,
    })
}

/// Uniform random bootstrap baseline: samples `budget` distinct tasks and
/// reports their expected reconstruction error.
pub fn random_bootstrap(
    tasks: &Matrix,
    budget: usize,
    prob_model: &OutcomeProbabilityModel,
    alpha: f64,
    mode: EvalMode,
    seed: u64,
) -> Result<BootstrapPlan> {
    check_alpha(alpha)?;
    if tasks.is_empty() {
        return Err(Error::Empty("task factor matrix"));
    }
    let n = tasks.rows();
    if budget > n {
        return Err(Error::BudgetExceedsPool { budget, pool: n });
    }
    let soft = soft_labels(tasks, prob_model)?;
    if budget == 0 {
        return Ok(BootstrapPlan {
            task_ids: Vec::new(),
            expected_error: uniform_plan_error(tasks, &soft),
            evaluation_mode: mode,
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let task_ids: Vec<usize> = rand::seq::index::sample(&mut rng, n, budget).into_vec();
    let evaluator = BranchEvaluator::new(&task_ids, tasks, &soft, alpha)?;
    let expected_error = expectation(&evaluator, mode)?;
    Ok(BootstrapPlan {
        task_ids,
        expected_error,
        evaluation_mode: mode,
    })
}

/// Baseline model assigning every factor the same weight 1/m.
pub fn uniform_model(m: usize, factor_names: Vec<String>) -> Result<WorkerModel> {
    if m == 0 {
        return Err(Error::Empty("factor set"));
    }
    WorkerModel::new(alloc::vec![1.0 / m as f64; m], 0.0, factor_names)
}
