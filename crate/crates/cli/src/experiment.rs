//! The seeded elicitation experiment: per replication, one synthetic worker
//! and task pool shared by every method (common random numbers), a
//! method-specific bootstrap, then an iterate loop of draw -> check error ->
//! update -> score holdout.

use std::time::Instant;

use exfactor_core::{
    constrained_fit, greedy_bootstrap, k_exfactor, k_random, mix_seed, random_bootstrap,
    ranking_to_constraints, select_alpha_gcv, uniform_model, ConstraintStore, EvalMode,
    HistoryMode, LabeledTasks, Matrix, OutcomeProbabilityModel, WorkerModel, DEFAULT_ALPHA_GRID,
    DEFAULT_MARGIN,
};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::sim::{
    factor_names, generate_tasks, implicit1_update, implicit2_refit, paired_significance,
    SignificanceReport, SyntheticWorker,
};

/// How the ridge strength is chosen at each refit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaPolicy {
    Fixed(f64),
    Gcv,
}

impl Serialize for AlphaPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AlphaPolicy::Fixed(v) => s.serialize_f64(*v),
            AlphaPolicy::Gcv => s.serialize_str("gcv"),
        }
    }
}

impl<'de> Deserialize<'de> for AlphaPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(AlphaPolicy::Fixed(v)),
            Raw::Text(t) if t == "gcv" => Ok(AlphaPolicy::Gcv),
            Raw::Text(t) => Err(D::Error::custom(format!(
                "alpha must be a number or \"gcv\", got \"{t}\""
            ))),
        }
    }
}

/// Ridge strength used where a fit has not happened yet (bootstrap planning,
/// first question selection) under the GCV policy.
pub const PRE_DATA_ALPHA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Elicitation {
    #[serde(rename = "k-exfactor")]
    KExFactor,
    KRandom,
    #[serde(rename = "implicit-1")]
    Implicit1,
    #[serde(rename = "implicit-2")]
    Implicit2,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BootstrapPolicy {
    Greedy,
    Random,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub name: String,
    pub elicitation: Elicitation,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: BootstrapPolicy,
}

fn default_bootstrap() -> BootstrapPolicy {
    BootstrapPolicy::Random
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistorySetting {
    Full,
    Recent,
}

impl From<HistorySetting> for HistoryMode {
    fn from(h: HistorySetting) -> HistoryMode {
        match h {
            HistorySetting::Full => HistoryMode::Full,
            HistorySetting::Recent => HistoryMode::Recent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// task pool size n
    pub tasks: usize,
    /// factor count m
    pub factors: usize,
    /// ranking length k
    pub questions: usize,
    pub iterations: usize,
    /// x: holdout tasks drawn and completed per iteration
    pub tasks_per_iteration: usize,
    /// b: bootstrap set size
    pub bootstrap_budget: usize,
    /// Monte Carlo sample count for bootstrap planning; omitted = built-in
    /// default for the budget
    pub bootstrap_samples: Option<usize>,
    pub alpha: AlphaPolicy,
    pub history: HistorySetting,
    pub methods: Vec<MethodSpec>,
    pub train_fraction: f64,
    pub replications: usize,
    pub seed: u64,
    pub ranking_noise_sigma: f64,
    /// Laplace smoothing for the outcome-probability model
    pub smoothing: f64,
    /// learning rate of the implicit-1 tracker
    pub eta: f64,
    /// skew of task-type popularity
    pub zipf_exponent: f64,
    /// margin used when rankings become constraints
    pub margin: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            tasks: 2000,
            factors: 90,
            questions: 4,
            iterations: 7,
            tasks_per_iteration: 25,
            bootstrap_budget: 15,
            bootstrap_samples: None,
            alpha: AlphaPolicy::Gcv,
            history: HistorySetting::Full,
            methods: default_methods(),
            train_fraction: 0.7,
            replications: 30,
            seed: 0,
            ranking_noise_sigma: 0.0,
            smoothing: 1.0,
            eta: 0.3,
            zipf_exponent: 1.1,
            margin: DEFAULT_MARGIN,
        }
    }
}

pub fn default_methods() -> Vec<MethodSpec> {
    [
        ("k-exfactor", Elicitation::KExFactor),
        ("k-random", Elicitation::KRandom),
        ("implicit-1", Elicitation::Implicit1),
        ("implicit-2", Elicitation::Implicit2),
    ]
    .into_iter()
    .map(|(name, elicitation)| MethodSpec {
        name: name.to_string(),
        elicitation,
        bootstrap: BootstrapPolicy::Random,
    })
    .collect()
}

/// Scalability preset: the large single-iteration profile.
pub fn scalability_preset() -> ExperimentConfig {
    ExperimentConfig {
        tasks: 50_000,
        factors: 50,
        questions: 3,
        iterations: 1,
        bootstrap_budget: 25,
        replications: 1,
        methods: vec![MethodSpec {
            name: "k-exfactor".to_string(),
            elicitation: Elicitation::KExFactor,
            bootstrap: BootstrapPolicy::Random,
        }],
        ..ExperimentConfig::default()
    }
}

impl ExperimentConfig {
    /// Rejects inconsistent configurations with a message naming the field.
    pub fn validate(&self) -> Result<(), String> {
        if self.tasks < 2 {
            return Err("tasks: need at least 2 tasks".into());
        }
        if self.factors == 0 {
            return Err("factors: need at least 1 factor".into());
        }
        if self.questions >= self.factors {
            return Err(format!(
                "questions: k = {} must be smaller than factors = {}",
                self.questions, self.factors
            ));
        }
        if self.iterations == 0 {
            return Err("iterations: need at least 1".into());
        }
        if self.tasks_per_iteration == 0 {
            return Err("tasks_per_iteration: x must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(format!(
                "train_fraction: {} is outside (0, 1)",
                self.train_fraction
            ));
        }
        if self.methods.is_empty() {
            return Err("methods: list must be nonempty".into());
        }
        let mut names: Vec<&str> = self.methods.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.methods.len() {
            return Err("methods: names must be unique".into());
        }
        if self.replications == 0 {
            return Err("replications: need at least 1".into());
        }
        let train = self.train_size();
        let holdout = self.tasks - train;
        if self.bootstrap_budget > train {
            return Err(format!(
                "bootstrap_budget: {} exceeds the training split of {}",
                self.bootstrap_budget, train
            ));
        }
        if self.iterations * self.tasks_per_iteration >= holdout {
            return Err(format!(
                "tasks_per_iteration: {} iterations x {} tasks would exhaust the holdout of {}",
                self.iterations, self.tasks_per_iteration, holdout
            ));
        }
        if let AlphaPolicy::Fixed(v) = self.alpha {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("alpha: {v} must be finite and nonnegative"));
            }
        }
        if !self.ranking_noise_sigma.is_finite() || self.ranking_noise_sigma < 0.0 {
            return Err("ranking_noise_sigma: must be finite and nonnegative".into());
        }
        if !self.smoothing.is_finite() || self.smoothing < 0.0 {
            return Err("smoothing: must be finite and nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(format!("eta: {} is outside [0, 1]", self.eta));
        }
        if !self.zipf_exponent.is_finite() || self.zipf_exponent <= 0.0 {
            return Err("zipf_exponent: must be positive".into());
        }
        if !self.margin.is_finite() || self.margin < 0.0 {
            return Err("margin: must be finite and nonnegative".into());
        }
        if self.bootstrap_samples == Some(0) {
            return Err("bootstrap_samples: must be positive when given".into());
        }
        Ok(())
    }

    fn train_size(&self) -> usize {
        (((self.tasks as f64) * self.train_fraction).round() as usize).clamp(1, self.tasks - 1)
    }
}

/// One row of the experiment output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationLog {
    pub method: String,
    pub replication: usize,
    pub iteration: usize,
    pub mse: f64,
    pub questions: usize,
    pub constraints_active: usize,
    pub wall_ms: u64,
}

/// The model update fires only when the freshly drawn tasks show a real
/// prediction error.
pub const ERROR_TRIGGER: f64 = 1e-6;

/// Labeled-task accumulator: flat row storage so appends stay cheap.
struct History {
    m: usize,
    rows: Vec<f64>,
    outcomes: Vec<f64>,
}

impl History {
    fn new(m: usize) -> Self {
        History {
            m,
            rows: Vec::new(),
            outcomes: Vec::new(),
        }
    }

    fn push(&mut self, row: &[f64], outcome: f64) {
        self.rows.extend_from_slice(row);
        self.outcomes.push(outcome);
    }

    fn len(&self) -> usize {
        self.outcomes.len()
    }

    fn to_tasks(&self) -> LabeledTasks {
        let mat = Matrix::from_vec(self.len(), self.m, self.rows.clone())
            .expect("accumulated rows are rectangular");
        LabeledTasks::new(mat, self.outcomes.clone()).expect("outcomes already validated")
    }
}

fn subset_tasks(pool: &Matrix, outcomes: &[f64], ids: &[usize]) -> LabeledTasks {
    let rows = pool.select_rows(ids);
    let y: Vec<f64> = ids.iter().map(|&i| outcomes[i]).collect();
    LabeledTasks::new(rows, y).expect("subset of validated outcomes")
}

/// Runs the configured experiment. Replications execute independently (in
/// parallel when the caller installs a rayon pool); logs come back sorted by
/// (method order, replication, iteration) regardless of scheduling.
pub fn run_elicitation_experiment(
    config: &ExperimentConfig,
    timing: bool,
) -> Result<Vec<IterationLog>, String> {
    config.validate()?;
    use rayon::prelude::*;
    let mut per_rep: Vec<Vec<IterationLog>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_replication(config, rep, timing))
        .collect::<Result<_, String>>()?;
    let mut logs: Vec<IterationLog> = per_rep.drain(..).flatten().collect();
    let method_order: Vec<&str> = config.methods.iter().map(|m| m.name.as_str()).collect();
    logs.sort_by_key(|log| {
        (
            method_order
                .iter()
                .position(|&n| n == log.method)
                .unwrap_or(usize::MAX),
            log.replication,
            log.iteration,
        )
    });
    Ok(logs)
}

fn run_replication(
    config: &ExperimentConfig,
    rep: usize,
    timing: bool,
) -> Result<Vec<IterationLog>, String> {
    let m = config.factors;
    let n = config.tasks;
    let rep_seed = mix_seed(config.seed, 1, rep as u64);

    // the environment: worker, tasks, every task's outcome-if-asked.
    // Pre-drawing outcomes gives all methods identical answers (common
    // random numbers).
    let mut worker_rng = ChaCha12Rng::seed_from_u64(mix_seed(rep_seed, 2, 0));
    let worker = SyntheticWorker::generate(m, config.ranking_noise_sigma, &mut worker_rng);
    let mut task_rng = ChaCha12Rng::seed_from_u64(mix_seed(rep_seed, 3, 0));
    let pool = generate_tasks(n, m, config.zipf_exponent, &mut task_rng);
    let mut outcome_rng = ChaCha12Rng::seed_from_u64(mix_seed(rep_seed, 4, 0));
    let outcomes: Vec<f64> = (0..n)
        .map(|i| worker.simulate_outcome(pool.row(i), &mut outcome_rng))
        .collect();

    // train/holdout split
    let mut ids: Vec<usize> = (0..n).collect();
    let mut split_rng = ChaCha12Rng::seed_from_u64(mix_seed(rep_seed, 5, 0));
    for i in (1..n).rev() {
        let j = rand::Rng::random_range(&mut split_rng, 0..=i);
        ids.swap(i, j);
    }
    let train_size = (((n as f64) * config.train_fraction).round() as usize).clamp(1, n - 1);
    let train_ids = &ids[..train_size];
    let holdout_ids = &ids[train_size..];

    // per-iteration draws from the holdout, shared by all methods; drawn
    // tasks leave the holdout for good
    let mut draw_rng = ChaCha12Rng::seed_from_u64(mix_seed(rep_seed, 6, 0));
    let mut undrawn: Vec<usize> = holdout_ids.to_vec();
    let mut draws: Vec<Vec<usize>> = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let picked = rand::seq::index::sample(
            &mut draw_rng,
            undrawn.len(),
            config.tasks_per_iteration,
        );
        let mut chosen: Vec<usize> = picked.iter().map(|p| undrawn[p]).collect();
        chosen.sort_unstable();
        undrawn.retain(|id| !chosen.contains(id));
        draws.push(chosen);
    }

    let train_data = subset_tasks(&pool, &outcomes, train_ids);
    let names = factor_names(m);
    let prob_model = OutcomeProbabilityModel::fit(&train_data, config.smoothing)
        .map_err(|e| format!("outcome model: {e}"))?;

    let mut logs = Vec::with_capacity(config.methods.len() * config.iterations);
    for (midx, method) in config.methods.iter().enumerate() {
        let run = run_method(
            config, rep, rep_seed, midx, method, &worker, &pool, &outcomes, &train_data,
            train_ids, &draws, holdout_ids, &prob_model, &names, timing,
        )
        .map_err(|e| format!("method {}: {e}", method.name))?;
        logs.extend(run);
    }
    Ok(logs)
}

#[allow(clippy::too_many_arguments)]
fn run_method(
    config: &ExperimentConfig,
    rep: usize,
    rep_seed: u64,
    midx: usize,
    method: &MethodSpec,
    worker: &SyntheticWorker,
    pool: &Matrix,
    outcomes: &[f64],
    train_data: &LabeledTasks,
    train_ids: &[usize],
    draws: &[Vec<usize>],
    holdout_ids: &[usize],
    prob_model: &OutcomeProbabilityModel,
    names: &[String],
    timing: bool,
) -> Result<Vec<IterationLog>, String> {
    let m = config.factors;
    let plan_alpha = match config.alpha {
        AlphaPolicy::Fixed(v) => v,
        AlphaPolicy::Gcv => PRE_DATA_ALPHA,
    };
    let mc_samples = config
        .bootstrap_samples
        .unwrap_or_else(|| exfactor_core::default_mc_samples(config.bootstrap_budget));
    // the plan seed depends on the policy, not the method, so methods with
    // the same policy start from identical models
    let policy_tag = match method.bootstrap {
        BootstrapPolicy::Greedy => 1u64,
        BootstrapPolicy::Random => 2,
        BootstrapPolicy::Uniform => 3,
    };
    let plan_seed = mix_seed(rep_seed, 7, policy_tag);
    let mode = EvalMode::MonteCarlo {
        samples: mc_samples,
        seed: plan_seed,
    };

    let mut history = History::new(m);
    let boot_ids: Vec<usize> = match method.bootstrap {
        BootstrapPolicy::Greedy => {
            greedy_bootstrap(train_data.factors(), config.bootstrap_budget, prob_model,
                plan_alpha, mode)
            .map_err(|e| format!("bootstrap: {e}"))?
            .task_ids
        }
        BootstrapPolicy::Random => {
            random_bootstrap(train_data.factors(), config.bootstrap_budget, prob_model,
                plan_alpha, mode, plan_seed)
            .map_err(|e| format!("bootstrap: {e}"))?
            .task_ids
        }
        BootstrapPolicy::Uniform => Vec::new(),
    };
    for &local in &boot_ids {
        let global = train_ids[local];
        history.push(pool.row(global), outcomes[global]);
    }

    let fit_alpha = |data: &LabeledTasks| -> Result<f64, String> {
        match config.alpha {
            AlphaPolicy::Fixed(v) => Ok(v),
            AlphaPolicy::Gcv => select_alpha_gcv(data, &DEFAULT_ALPHA_GRID)
                .map_err(|e| format!("gcv: {e}")),
        }
    };

    let mut model = if history.len() == 0 {
        uniform_model(m, names.to_vec()).map_err(|e| format!("uniform model: {e}"))?
    } else {
        let data = history.to_tasks();
        let alpha = fit_alpha(&data)?;
        WorkerModel::fit(&data, alpha, names.to_vec())
            .map_err(|e| format!("bootstrap fit: {e}"))?
    };

    let mut store = ConstraintStore::new(config.history.into());
    let mut remaining: Vec<usize> = holdout_ids.to_vec();
    let mut logs = Vec::with_capacity(config.iterations);
    for (it, drawn) in draws.iter().enumerate() {
        let iteration = it + 1;
        let started = Instant::now();
        remaining.retain(|id| !drawn.contains(id));
        let drawn_data = subset_tasks(pool, outcomes, drawn);
        let trigger = model
            .mse(&drawn_data)
            .map_err(|e| format!("trigger error: {e}"))?;
        for (row, &y) in drawn.iter().map(|&id| (pool.row(id), &outcomes[id])) {
            history.push(row, y);
        }
        let mut questions = 0usize;
        if trigger > ERROR_TRIGGER {
            match method.elicitation {
                Elicitation::KExFactor | Elicitation::KRandom => {
                    let data = history.to_tasks();
                    let alpha = fit_alpha(&data)?;
                    let asked = match method.elicitation {
                        Elicitation::KExFactor => {
                            k_exfactor(data.factors(), config.questions, alpha)
                                .map_err(|e| format!("selection: {e}"))?
                                .factor_indices
                        }
                        _ => {
                            // One seed per replication and method, not per
                            // iteration: the baseline is deterministic within
                            // a replication just like the greedy selector, so
                            // the two differ only in the selection criterion.
                            let seed = mix_seed(rep_seed, 8 + midx as u64, 0);
                            k_random(data.factors(), config.questions, alpha, seed)
                                .map_err(|e| format!("selection: {e}"))?
                                .factor_indices
                        }
                    };
                    questions = asked.len();
                    let mut rank_rng = ChaCha12Rng::seed_from_u64(mix_seed(
                        rep_seed,
                        100 + midx as u64,
                        iteration as u64,
                    ));
                    let ranking = worker.simulate_ranking(&asked, &mut rank_rng);
                    let constraints = ranking_to_constraints(&ranking, config.margin)
                        .map_err(|e| format!("ranking: {e}"))?;
                    store.merge(constraints, iteration);
                    model = constrained_fit(&data, alpha, &store.constraints(),
                        names.to_vec())
                    .map_err(|e| format!("aggregation: {e}"))?;
                }
                Elicitation::Implicit1 => {
                    model = implicit1_update(&model, &drawn_data, config.eta);
                }
                Elicitation::Implicit2 => {
                    let data = history.to_tasks();
                    let alpha = fit_alpha(&data)?;
                    model = implicit2_refit(&data, alpha, names.to_vec())
                        .map_err(|e| format!("refit: {e}"))?;
                }
                Elicitation::None => {}
            }
        }
        let score_data = subset_tasks(pool, outcomes, &remaining);
        let mse = model
            .mse(&score_data)
            .map_err(|e| format!("holdout score: {e}"))?;
        let wall_ms = if timing {
            started.elapsed().as_millis() as u64
        } else {
            0
        };
        logs.push(IterationLog {
            method: method.name.clone(),
            replication: rep,
            iteration,
            mse,
            questions,
            constraints_active: store.len(),
            wall_ms,
        });
    }
    Ok(logs)
}

/// Per-method aggregate over replications, plus pairwise significance.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub methods: Vec<MethodSummary>,
    pub pairs: Vec<PairSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub mean_final_mse: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairSummary {
    pub method_a: String,
    pub method_b: String,
    pub mean_difference: f64,
    pub p_value: f64,
}

/// Final-iteration MSE per replication, in replication order.
pub fn final_mses(logs: &[IterationLog], method: &str) -> Vec<f64> {
    let last = logs
        .iter()
        .filter(|l| l.method == method)
        .map(|l| l.iteration)
        .max()
        .unwrap_or(0);
    let mut finals: Vec<(usize, f64)> = logs
        .iter()
        .filter(|l| l.method == method && l.iteration == last)
        .map(|l| (l.replication, l.mse))
        .collect();
    finals.sort_by_key(|&(rep, _)| rep);
    finals.into_iter().map(|(_, mse)| mse).collect()
}

pub fn summarize(logs: &[IterationLog], methods: &[MethodSpec]) -> Summary {
    let mut rows = Vec::new();
    let mut finals: Vec<Vec<f64>> = Vec::new();
    for spec in methods {
        let f = final_mses(logs, &spec.name);
        let n = f.len() as f64;
        let mean = f.iter().sum::<f64>() / n.max(1.0);
        let se = if f.len() > 1 {
            let var = f.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        rows.push(MethodSummary {
            method: spec.name.clone(),
            mean_final_mse: mean,
            standard_error: se,
        });
        finals.push(f);
    }
    let mut pairs = Vec::new();
    for i in 0..methods.len() {
        for j in (i + 1)..methods.len() {
            if let Ok(SignificanceReport {
                mean_difference,
                p_value,
                ..
            }) = paired_significance(&finals[i], &finals[j])
            {
                pairs.push(PairSummary {
                    method_a: methods[i].name.clone(),
                    method_b: methods[j].name.clone(),
                    mean_difference,
                    p_value,
                });
            }
        }
    }
    Summary {
        methods: rows,
        pairs,
    }
}

/// Plain-text summary table for the terminal.
pub fn render_summary(summary: &Summary) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:>14} {:>14}\n",
        "method", "mean final MSE", "std error"
    ));
    for row in &summary.methods {
        out.push_str(&format!(
            "{:<14} {:>14.6} {:>14.6}\n",
            row.method, row.mean_final_mse, row.standard_error
        ));
    }
    if !summary.pairs.is_empty() {
        out.push_str(&format!(
            "\n{:<30} {:>14} {:>10}\n",
            "pair", "mean diff", "p-value"
        ));
        for p in &summary.pairs {
            out.push_str(&format!(
                "{:<30} {:>14.6} {:>10.4}\n",
                format!("{} vs {}", p.method_a, p.method_b),
                p.mean_difference,
                p.p_value
            ));
        }
    }
    out
}
