//! Synthetic workers and the response/outcome simulators behind the
//! experiment harness, plus the implicit-update baselines and the paired
//! significance test used to compare methods.

use exfactor_core::{Error, LabeledTasks, Matrix, Result, WorkerModel};
use rand::Rng;
use rand_distr::{Distribution, Normal, Zipf};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// A simulated worker: hidden preference weights plus ranking noise.
#[derive(Debug, Clone)]
pub struct SyntheticWorker {
    true_weights: Vec<f64>,
    ranking_noise_sigma: f64,
}

impl SyntheticWorker {
    /// Draws `w*` from a symmetric Dirichlet (concentration 1): normalized
    /// unit-exponential draws. Nonnegative, sums to 1.
    pub fn generate(m: usize, ranking_noise_sigma: f64, rng: &mut impl Rng) -> Self {
        assert!(m > 0, "worker needs at least one factor");
        let mut draws: Vec<f64> = (0..m)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let total: f64 = draws.iter().sum();
        for d in &mut draws {
            *d /= total;
        }
        SyntheticWorker {
            true_weights: draws,
            ranking_noise_sigma,
        }
    }

    pub fn from_weights(true_weights: Vec<f64>, ranking_noise_sigma: f64) -> Self {
        SyntheticWorker {
            true_weights,
            ranking_noise_sigma,
        }
    }

    pub fn true_weights(&self) -> &[f64] {
        &self.true_weights
    }

    /// Task completion: Bernoulli with p = clamp(w* . t_f, 0, 1).
    pub fn simulate_outcome(&self, t_f: &[f64], rng: &mut impl Rng) -> f64 {
        let p: f64 = self
            .true_weights
            .iter()
            .zip(t_f)
            .map(|(w, t)| w * t)
            .sum::<f64>()
            .clamp(0.0, 1.0);
        if rng.random_bool(p) {
            1.0
        } else {
            0.0
        }
    }

    /// Worker's answer to "rank these factors": sorts the asked factors by
    /// w* + Normal(0, sigma) descending, ties toward the lower index.
    pub fn simulate_ranking(&self, factor_indices: &[usize], rng: &mut impl Rng) -> Vec<usize> {
        let noise = if self.ranking_noise_sigma > 0.0 {
            let normal = Normal::new(0.0, self.ranking_noise_sigma).expect("finite sigma");
            factor_indices
                .iter()
                .map(|_| normal.sample(rng))
                .collect::<Vec<f64>>()
        } else {
            vec![0.0; factor_indices.len()]
        };
        let mut order: Vec<(usize, f64)> = factor_indices
            .iter()
            .zip(&noise)
            .map(|(&i, &e)| (i, self.true_weights[i] + e))
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        order.into_iter().map(|(i, _)| i).collect()
    }
}

/// Factor layout for generated tasks: `(types, payment bands, duration
/// bands)`. Bands take about a quarter of the factors each (at least two,
/// at most eight); everything else is a task type. Below five factors
/// there is no room for bands and all factors are types.
pub fn group_sizes(m: usize) -> (usize, usize, usize) {
    if m < 5 {
        return (m, 0, 0);
    }
    let band = (m / 4).clamp(2, 8);
    (m - 2 * band, band, band)
}

/// Names for the generated factor columns: the type group followed by the
/// payment and duration bands.
pub fn factor_names(m: usize) -> Vec<String> {
    let (types, pay, dur) = group_sizes(m);
    let mut names: Vec<String> = (0..types).map(|i| format!("type_{i:02}")).collect();
    names.extend((0..pay).map(|i| format!("pay_{i:02}")));
    names.extend((0..dur).map(|i| format!("dur_{i:02}")));
    names
}

/// Task factor rows as one-hot groups: one task type, one payment band,
/// one duration band (see [`group_sizes`]). Every group is Zipf-skewed
/// with the same exponent, so each has a popular head and a rare tail —
/// tail factors show up in few tasks and stay poorly determined. With
/// fewer than 5 factors everything collapses into a single type group.
pub fn generate_tasks(n: usize, m: usize, zipf_exponent: f64, rng: &mut impl Rng) -> Matrix {
    assert!(m >= 1);
    let (types, pay, dur) = group_sizes(m);
    let type_zipf = Zipf::new(types as f64, zipf_exponent).expect("valid zipf");
    let band_zipf = (pay > 0).then(|| Zipf::new(pay as f64, zipf_exponent).expect("valid zipf"));
    let mut data = vec![0.0f64; n * m];
    for row in 0..n {
        let t = (type_zipf.sample(rng) as usize - 1).min(types - 1);
        data[row * m + t] = 1.0;
        if let Some(zipf) = &band_zipf {
            let p = (zipf.sample(rng) as usize - 1).min(pay - 1);
            let d = (zipf.sample(rng) as usize - 1).min(dur - 1);
            data[row * m + types + p] = 1.0;
            data[row * m + types + pay + d] = 1.0;
        }
    }
    Matrix::from_vec(n, m, data).expect("generated rows are finite")
}

/// Implicit baseline 1: exponentially weighted per-factor success-rate
/// tracker. Each active factor's weight moves toward the success rate of
/// this batch's tasks that used it; unseen factors keep their weight.
pub fn implicit1_update(model: &WorkerModel, completed: &LabeledTasks, eta: f64) -> WorkerModel {
    let m = model.factor_count();
    let mut hits = vec![0.0f64; m];
    let mut successes = vec![0.0f64; m];
    for i in 0..completed.len() {
        let row = completed.factors().row(i);
        for (f, &v) in row.iter().enumerate() {
            if v > 0.0 {
                hits[f] += 1.0;
                successes[f] += completed.outcomes()[i];
            }
        }
    }
    let weights: Vec<f64> = model
        .weights()
        .iter()
        .enumerate()
        .map(|(f, &w)| {
            if hits[f] > 0.0 {
                (1.0 - eta) * w + eta * successes[f] / hits[f]
            } else {
                w
            }
        })
        .collect();
    WorkerModel::new(weights, model.alpha(), model.factor_names().to_vec())
        .expect("tracker update keeps weights finite")
}

/// Implicit baseline 2: plain refit on the accumulated history, ignoring
/// preferences entirely.
pub fn implicit2_refit(
    history: &LabeledTasks,
    alpha: f64,
    factor_names: Vec<String>,
) -> Result<WorkerModel> {
    WorkerModel::fit(history, alpha, factor_names)
}

/// Outcome of a two-sided paired t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignificanceReport {
    pub mean_difference: f64,
    pub standard_error: f64,
    pub p_value: f64,
}

/// Two-sided paired t-test on per-replication finals. Zero-variance
/// differences use the degenerate convention: p = 0 unless the mean
/// difference is also zero, then p = 1.
pub fn paired_significance(a: &[f64], b: &[f64]) -> Result<SignificanceReport> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            what: "paired samples",
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::Empty("paired t-test needs at least two pairs"));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let p_value = if se == 0.0 {
        if mean == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        let t = mean / se;
        let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("valid dof");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok(SignificanceReport {
        mean_difference: mean,
        standard_error: se,
        p_value,
    })
}
