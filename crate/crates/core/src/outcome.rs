//! Naive-Bayes estimate of a task's completion probability from other
//! workers' history, used to weight bootstrap-tree branches.
//!
//! Each factor is treated as categorical over its observed values. Queries
//! return the normalized posterior s1/(s0+s1); the raw unnormalized
//! per-factor product is kept as a separate method for comparison.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::LabeledTasks;

#[derive(Debug, Clone)]
struct FactorTable {
    values: Vec<f64>,
    /// counts[class][value index], class 0 = failure, 1 = success
    counts: [Vec<f64>; 2],
}

impl FactorTable {
    /// (count + λ) / (class count + λ·support), extending the support by one
    /// when the queried value was never observed.
    fn conditional(&self, value: f64, class: usize, class_count: f64, smoothing: f64) -> f64 {
        let support = self.values.len() as f64;
        match self.values.iter().position(|&v| v == value) {
            Some(idx) => {
                (self.counts[class][idx] + smoothing) / (class_count + smoothing * support)
            }
            None => smoothing / (class_count + smoothing * (support + 1.0)),
        }
    }
}

/// Per-factor conditional outcome model with Laplace smoothing.
#[derive(Debug, Clone)]
pub struct OutcomeProbabilityModel {
    prior_success: f64,
    class_counts: [f64; 2],
    smoothing: f64,
    factors: Vec<FactorTable>,
}

impl OutcomeProbabilityModel {
    /// Fits conditional tables from history with hard 0/1 outcomes.
    ///
    /// `prior = (successes + λ) / (n + 2λ)`. An empty history needs `λ > 0`
    /// (everything falls back to the uniform prior 0.5).
    pub fn fit(history: &LabeledTasks, smoothing: f64) -> Result<Self> {
        if !smoothing.is_finite() {
            return Err(Error::NotFinite("smoothing"));
        }
        if smoothing < 0.0 {
            return Err(Error::Negative("smoothing"));
        }
        if history.is_empty() && smoothing == 0.0 {
            return Err(Error::EmptyHistory);
        }
        for (row, &o) in history.outcomes().iter().enumerate() {
            if o != 0.0 && o != 1.0 {
                return Err(Error::OutcomeNotBinary { row, value: o });
            }
        }
        let n = history.len() as f64;
        let successes: f64 = history.outcomes().iter().sum();
        let class_counts = [n - successes, successes];
        let m = history.factors().cols();
        let mut factors = Vec::with_capacity(m);
        for col in 0..m {
            let mut table = FactorTable {
                values: Vec::new(),
                counts: [Vec::new(), Vec::new()],
            };
            for row in 0..history.len() {
                let v = history.factors().get(row, col);
                let class = history.outcomes()[row] as usize;
                let idx = match table.values.iter().position(|&x| x == v) {
                    Some(i) => i,
                    None => {
                        table.values.push(v);
                        table.counts[0].push(0.0);
                        table.counts[1].push(0.0);
                        table.values.len() - 1
                    }
                };
                table.counts[class][idx] += 1.0;
            }
            factors.push(table);
        }
        Ok(OutcomeProbabilityModel {
            prior_success: (successes + smoothing) / (n + 2.0 * smoothing),
            class_counts,
            smoothing,
            factors,
        })
    }

    pub fn prior_success(&self) -> f64 {
        self.prior_success
    }

    pub fn factor_count(&self) -> usize {
        self.factors.len()
    }

    /// Normalized posterior Pr(outcome = 1 | task factors).
    ///
    /// Log-space accumulation keeps hundred-factor products from
    /// underflowing. When both class scores vanish (possible only with
    /// `λ = 0` and an unseen value) the prior is returned.
    pub fn success_probability(&self, t_f: &[f64]) -> Result<f64> {
        let (ls0, ls1) = self.class_log_scores(t_f)?;
        if ls0 == f64::NEG_INFINITY && ls1 == f64::NEG_INFINITY {
            return Ok(self.prior_success);
        }
        if ls1 == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        if ls0 == f64::NEG_INFINITY {
            return Ok(1.0);
        }
        Ok(1.0 / (1.0 + libm::exp(ls0 - ls1)))
    }

    /// Unnormalized product of per-factor posteriors
    /// `∏ᵢ Pr(outcome = 1 | factorᵢ)`. Lies in [0,1] but is not a coherent
    /// probability; exposed only for comparison with the normalized form.
    pub fn unnormalized_success_product(&self, t_f: &[f64]) -> Result<f64> {
        self.check_arity(t_f)?;
        let prior = [1.0 - self.prior_success, self.prior_success];
        let mut log_product = 0.0;
        for (table, &v) in self.factors.iter().zip(t_f) {
            let s0 = prior[0] * table.conditional(v, 0, self.class_counts[0], self.smoothing);
            let s1 = prior[1] * table.conditional(v, 1, self.class_counts[1], self.smoothing);
            let p = if s0 + s1 == 0.0 {
                self.prior_success
            } else {
                s1 / (s0 + s1)
            };
            log_product += libm::log(p);
        }
        Ok(libm::exp(log_product))
    }

    fn check_arity(&self, t_f: &[f64]) -> Result<()> {
        if t_f.len() != self.factors.len() {
            return Err(Error::Dimension {
                what: "task factor count",
                expected: self.factors.len(),
                found: t_f.len(),
            });
        }
        Ok(())
    }

    fn class_log_scores(&self, t_f: &[f64]) -> Result<(f64, f64)> {
        self.check_arity(t_f)?;
        let mut logs = [
            libm::log(1.0 - self.prior_success),
            libm::log(self.prior_success),
        ];
        for (table, &v) in self.factors.iter().zip(t_f) {
            for class in 0..2 {
                logs[class] +=
                    libm::log(table.conditional(v, class, self.class_counts[class], self.smoothing));
            }
        }
        Ok((logs[0], logs[1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use alloc::vec;

    /// Six-task example: three one-hot type columns plus binary payoff
    /// (high = 1) and duration (long = 1) columns.
    fn six_task_history() -> LabeledTasks {
        let factors = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0, 1.0, 1.0],
            vec![1.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0, 1.0],
        ])
        .unwrap();
        LabeledTasks::new(factors, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn prior_counts_successes() {
        let m = OutcomeProbabilityModel::fit(&six_task_history(), 0.0).unwrap();
        assert_eq!(m.prior_success(), 0.5);
    }

    #[test]
    fn conditional_matches_hand_count() {
        // Pr(payoff = 1 | success) = 2/3: successes are rows 0, 2, 4 with
        // payoff values 1, 0, 1.
        let m = OutcomeProbabilityModel::fit(&six_task_history(), 0.0).unwrap();
        let table = &m.factors[3];
        let p = table.conditional(1.0, 1, m.class_counts[1], 0.0);
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn posterior_hand_values() {
        let m = OutcomeProbabilityModel::fit(&six_task_history(), 0.0).unwrap();
        // row 4: s1 = 0.5·16/243, s0 = 0.5·4/243 -> 0.8
        let p5 = m.success_probability(&[0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((p5 - 0.8).abs() < 1e-12, "got {p5}");
        // row 0: both scores 0.5·8/243 -> 0.5
        let p1 = m.success_probability(&[1.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!((p1 - 0.5).abs() < 1e-12, "got {p1}");
    }

    #[test]
    fn empty_history_needs_smoothing() {
        let empty =
            LabeledTasks::new(Matrix::from_vec(0, 3, vec![]).unwrap(), vec![]).unwrap();
        assert_eq!(
            OutcomeProbabilityModel::fit(&empty, 0.0).unwrap_err(),
            Error::EmptyHistory
        );
        let uniform = OutcomeProbabilityModel::fit(&empty, 1.0).unwrap();
        assert_eq!(uniform.prior_success(), 0.5);
        let p = uniform.success_probability(&[1.0, 0.0, 3.5]).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn rejects_soft_labels() {
        let history = LabeledTasks::new(Matrix::identity(2), vec![1.0, 0.25]).unwrap();
        assert_eq!(
            OutcomeProbabilityModel::fit(&history, 1.0).unwrap_err(),
            Error::OutcomeNotBinary {
                row: 1,
                value: 0.25
            }
        );
    }

    #[test]
    fn unseen_value_with_zero_smoothing_falls_back_to_prior() {
        let m = OutcomeProbabilityModel::fit(&six_task_history(), 0.0).unwrap();
        let p = m.success_probability(&[7.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p, m.prior_success());
    }

    #[test]
    fn smoothed_output_strictly_inside_unit_interval() {
        let m = OutcomeProbabilityModel::fit(&six_task_history(), 1.0).unwrap();
        for row in 0..6 {
            let t: vec::Vec<f64> = six_task_history().factors().row(row).to_vec();
            let p = m.success_probability(&t).unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn unnormalized_product_stays_in_unit_interval() {
        let m = OutcomeProbabilityModel::fit(&six_task_history(), 1.0).unwrap();
        let p = m
            .unnormalized_success_product(&[0.0, 0.0, 1.0, 1.0, 0.0])
            .unwrap();
        assert!((0.0..=1.0).contains(&p));
        // and differs from the normalized posterior in general
        let q = m.success_probability(&[0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((p - q).abs() > 1e-6);
    }

    #[test]
    fn arity_mismatch_rejected() {
        let m = OutcomeProbabilityModel::fit(&six_task_history(), 1.0).unwrap();
        assert!(matches!(
            m.success_probability(&[1.0, 0.0]),
            Err(Error::Dimension { .. })
        ));
    }
}
