//! Per-worker linear task-completion models.
//!
//! A worker is summarized by one weight per task factor; the predicted
//! completion chance of a task is the dot product of its factor vector with
//! those weights. Weights are estimated by ridge regression and scored by
//! mean squared reconstruction error.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{check_alpha, dot, gram_regularized, ridge_solve, Cholesky, Matrix};

/// Default regularization grid searched by [`select_alpha_gcv`].
pub const DEFAULT_ALPHA_GRID: [f64; 6] = [0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0];

/// Tasks paired with observed (or expected) completion outcomes in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTasks {
    factors: Matrix,
    outcomes: Vec<f64>,
}

impl LabeledTasks {
    pub fn new(factors: Matrix, outcomes: Vec<f64>) -> Result<Self> {
        if outcomes.len() != factors.rows() {
            return Err(Error::Dimension {
                what: "outcome vector length",
                expected: factors.rows(),
                found: outcomes.len(),
            });
        }
        for (row, &v) in outcomes.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutcomeOutOfRange { row, value: v });
            }
        }
        Ok(LabeledTasks { factors, outcomes })
    }

    pub fn factors(&self) -> &Matrix {
        &self.factors
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }
}

/// A fitted linear preference model for one worker.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerModel {
    weights: Vec<f64>,
    alpha: f64,
    factor_names: Vec<String>,
}

impl WorkerModel {
    /// Wraps pre-computed weights. `factor_names` must have one entry per
    /// weight and `alpha` records the regularization used to obtain them.
    pub fn new(weights: Vec<f64>, alpha: f64, factor_names: Vec<String>) -> Result<Self> {
        check_alpha(alpha)?;
        if factor_names.len() != weights.len() {
            return Err(Error::Dimension {
                what: "factor name count",
                expected: weights.len(),
                found: factor_names.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NotFinite("weights"));
        }
        Ok(WorkerModel {
            weights,
            alpha,
            factor_names,
        })
    }

    /// Ridge fit of worker weights on labeled tasks.
    pub fn fit(data: &LabeledTasks, alpha: f64, factor_names: Vec<String>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("labeled tasks"));
        }
        let weights = ridge_solve(data.factors(), data.outcomes(), alpha)?;
        WorkerModel::new(weights, alpha, factor_names)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn factor_names(&self) -> &[String] {
        &self.factor_names
    }

    pub fn factor_count(&self) -> usize {
        self.weights.len()
    }

    /// Predicted completion chance of one task: `t . w`. The value is not
    /// clamped; callers decide how to treat out-of-range predictions.
    pub fn predict(&self, task: &[f64]) -> Result<f64> {
        if task.len() != self.weights.len() {
            return Err(Error::Dimension {
                what: "task factor count",
                expected: self.weights.len(),
                found: task.len(),
            });
        }
        Ok(dot(task, &self.weights))
    }

    /// Mean squared reconstruction error over labeled tasks.
    pub fn mse(&self, data: &LabeledTasks) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Empty("labeled tasks"));
        }
        let mut sum = 0.0;
        for r in 0..data.len() {
            let e = data.outcomes()[r] - self.predict(data.factors().row(r))?;
            sum += e * e;
        }
        Ok(sum / data.len() as f64)
    }
}

/// Picks the ridge penalty from `grid` by generalized cross validation.
///
/// GCV(alpha) = (RSS / n) / (1 - df / n)^2 with the effective degrees of
/// freedom df = m - alpha * trace((M^T M + alpha I)^{-1}). Grid values whose
/// fit is singular or interpolates the data (df = n) are skipped; ties pick
/// the larger alpha, and if every value is skipped the largest grid value is
/// returned.
pub fn select_alpha_gcv(data: &LabeledTasks, grid: &[f64]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("labeled tasks"));
    }
    if grid.is_empty() {
        return Err(Error::Empty("alpha grid"));
    }
    for &a in grid {
        check_alpha(a)?;
    }
    let n = data.len() as f64;
    let m = data.factors().cols() as f64;
    let mut best: Option<(f64, f64)> = None; // (gcv, alpha)
    for &alpha in grid {
        let g = gram_regularized(data.factors(), alpha)?;
        let chol = match Cholesky::factor(&g) {
            Ok(c) => c,
            Err(_) => continue,
        };
        let df = if alpha == 0.0 {
            m
        } else {
            m - alpha * chol.trace_of_inverse()
        };
        if df >= n - 1e-9 {
            continue; // interpolating fit: GCV undefined
        }
        let w = chol.solve(&data.factors().transpose_mul(data.outcomes()));
        let mut rss = 0.0;
        for r in 0..data.len() {
            let e = data.outcomes()[r] - dot(data.factors().row(r), &w);
            rss += e * e;
        }
        let denom = 1.0 - df / n;
        let gcv = (rss / n) / (denom * denom);
        let better = match best {
            None => true,
            Some((bg, ba)) => gcv < bg || (gcv == bg && alpha > ba),
        };
        if better {
            best = Some((gcv, alpha));
        }
    }
    Ok(match best {
        Some((_, alpha)) => alpha,
        None => grid.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use alloc::vec;
    use alloc::vec::Vec;

    fn named(n: usize) -> Vec<String> {
        (0..n).map(|i| alloc::format!("f{i}")).collect()
    }

    #[test]
    fn fit_identity_design() {
        let data = LabeledTasks::new(Matrix::identity(2), vec![1.0, 0.0]).unwrap();
        let m = WorkerModel::fit(&data, 0.0, named(2)).unwrap();
        assert!((m.weights()[0] - 1.0).abs() < 1e-12);
        assert!(m.weights()[1].abs() < 1e-12);
    }

    #[test]
    fn fit_is_invariant_to_duplicated_rows() {
        let a = LabeledTasks::new(
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 1.0]]).unwrap(),
            vec![1.0, 0.0],
        )
        .unwrap();
        let b = LabeledTasks::new(
            Matrix::from_rows(&[
                vec![1.0, 0.0],
                vec![0.5, 1.0],
                vec![1.0, 0.0],
                vec![0.5, 1.0],
            ])
            .unwrap(),
            vec![1.0, 0.0, 1.0, 0.0],
        )
        .unwrap();
        let ma = WorkerModel::fit(&a, 0.0, named(2)).unwrap();
        let mb = WorkerModel::fit(&b, 0.0, named(2)).unwrap();
        for (x, y) in ma.weights().iter().zip(mb.weights()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn fit_rejects_empty_data() {
        let data = LabeledTasks::new(Matrix::from_vec(0, 2, vec![]).unwrap(), vec![]).unwrap();
        assert_eq!(
            WorkerModel::fit(&data, 0.0, named(2)).unwrap_err(),
            Error::Empty("labeled tasks")
        );
    }

    #[test]
    fn labeled_tasks_reject_out_of_range_outcomes() {
        let err = LabeledTasks::new(Matrix::identity(2), vec![0.5, 1.5]).unwrap_err();
        assert_eq!(
            err,
            Error::OutcomeOutOfRange {
                row: 1,
                value: 1.5
            }
        );
    }

    #[test]
    fn predict_hand_values() {
        let m = WorkerModel::new(vec![1.0, 1.0], 0.0, named(2)).unwrap();
        assert_eq!(m.predict(&[1.0, 0.0]).unwrap(), 1.0);
        let m = WorkerModel::new(vec![0.3, 0.4], 0.0, named(2)).unwrap();
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap(), 0.0);
        let m = WorkerModel::new(vec![0.5, 0.25], 0.0, named(2)).unwrap();
        assert!((m.predict(&[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn predict_rejects_wrong_arity() {
        let m = WorkerModel::new(vec![1.0, 1.0], 0.0, named(2)).unwrap();
        assert!(matches!(
            m.predict(&[1.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn mse_hand_values() {
        let data = LabeledTasks::new(Matrix::identity(2), vec![1.0, 0.0]).unwrap();
        let exact = WorkerModel::new(vec![1.0, 0.0], 0.0, named(2)).unwrap();
        assert_eq!(exact.mse(&data).unwrap(), 0.0);

        let ones = LabeledTasks::new(Matrix::identity(2), vec![1.0, 1.0]).unwrap();
        let zero = WorkerModel::new(vec![0.0, 0.0], 0.0, named(2)).unwrap();
        assert_eq!(zero.mse(&ones).unwrap(), 1.0);

        // single weight 1, both tasks have factor 1: residuals 0 and 1
        let unit = WorkerModel::new(vec![1.0], 0.0, named(1)).unwrap();
        let pair = LabeledTasks::new(
            Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap(),
            vec![1.0, 0.0],
        )
        .unwrap();
        assert!((unit.mse(&pair).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mse_rejects_empty_data() {
        let m = WorkerModel::new(vec![1.0], 0.0, named(1)).unwrap();
        let empty = LabeledTasks::new(Matrix::from_vec(0, 1, vec![]).unwrap(), vec![]).unwrap();
        assert!(matches!(m.mse(&empty), Err(Error::Empty(_))));
    }

    #[test]
    fn gcv_singleton_grid() {
        let data = LabeledTasks::new(
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap(),
            vec![1.0, 0.0, 1.0],
        )
        .unwrap();
        assert_eq!(select_alpha_gcv(&data, &[0.5]).unwrap(), 0.5);
    }

    #[test]
    fn gcv_prefers_zero_on_noiseless_linear_data() {
        // outcomes exactly 0.6*f0 + 0.2*f1 on a full-rank design
        let rows = [
            [1.0, 0.0],
            [0.0, 1.0],
            [1.0, 1.0],
            [0.5, 0.5],
            [0.25, 1.0],
        ];
        let factors = Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
            .unwrap();
        let outcomes: Vec<f64> = rows.iter().map(|r| 0.6 * r[0] + 0.2 * r[1]).collect();
        let data = LabeledTasks::new(factors, outcomes).unwrap();
        assert_eq!(select_alpha_gcv(&data, &[0.0, 10.0]).unwrap(), 0.0);
    }

    #[test]
    fn gcv_rejects_empty_grid() {
        let data = LabeledTasks::new(Matrix::identity(2), vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            select_alpha_gcv(&data, &[]),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn gcv_returns_largest_when_all_skipped() {
        // n = m with an exactly interpolating design: df = n for alpha = 0,
        // and near-interpolating for tiny alpha.
        let data = LabeledTasks::new(Matrix::identity(2), vec![1.0, 0.0]).unwrap();
        let picked = select_alpha_gcv(&data, &[0.0]).unwrap();
        assert_eq!(picked, 0.0); // all skipped -> largest grid value
    }
}
