//! Subcommand implementations. Every command is a thin wrapper: read files,
//! call exactly one core operation, serialize its result.

use std::io::BufRead;
use std::path::Path;

use exfactor_core::{
    constrained_fit, default_mc_samples, expected_reconstruction_error, greedy_bootstrap,
    k_exfactor, k_random, random_bootstrap, ranking_to_constraints, select_alpha_gcv, BootstrapPlan,
    EvalMode, OutcomeProbabilityModel, WorkerModel, DEFAULT_ALPHA_GRID,
};
use serde::Serialize;

use crate::experiment::{
    run_elicitation_experiment, render_summary, scalability_preset, summarize, ExperimentConfig,
};
use crate::formats::{
    atomic_write, parse_constraints_csv, parse_model_json, parse_task_csv, render_model_json,
    render_results_csv, render_results_json, FormatError, TaskFile,
};

#[derive(Debug)]
pub enum CliError {
    /// bad input: malformed files, invalid flags, impossible configs
    Validation(String),
    /// the computation itself failed: singular systems, infeasible
    /// constraints, no convergence
    Runtime(String),
    /// the user ended an interactive session
    Abort,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
            CliError::Abort => 130,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
            CliError::Abort => f.write_str("aborted"),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<exfactor_core::Error> for CliError {
    fn from(e: exfactor_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_output(path: &Path, content: &str) -> Result<(), CliError> {
    atomic_write(path, content)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

fn emit(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_output(path, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// four-method elicitation comparison defaults
    Quality,
    /// large single-iteration profile
    Scalability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlanPolicy {
    Greedy,
    Random,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Copy)]
pub struct Global {
    pub seed: Option<u64>,
    pub format: OutputFormat,
    pub jobs: Option<usize>,
    pub timing: bool,
    pub binarize: bool,
}

fn load_tasks(path: &Path, global: &Global) -> Result<TaskFile, CliError> {
    let text = read_file(path)?;
    Ok(parse_task_csv(&text, global.binarize)?)
}

fn alpha_or_gcv(
    alpha: Option<f64>,
    gcv: bool,
    data: &exfactor_core::LabeledTasks,
) -> Result<f64, CliError> {
    if gcv {
        Ok(select_alpha_gcv(data, &DEFAULT_ALPHA_GRID)?)
    } else {
        Ok(alpha.unwrap_or(1e-3))
    }
}

pub fn cmd_simulate(
    config_path: Option<&Path>,
    preset: Option<Preset>,
    out: &Path,
    global: &Global,
) -> Result<(), CliError> {
    let mut config = match (config_path, preset) {
        (Some(path), _) => {
            let text = read_file(path)?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        }
        (None, Some(Preset::Scalability)) => scalability_preset(),
        (None, Some(Preset::Quality)) | (None, None) => ExperimentConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    config.validate().map_err(CliError::Validation)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(global.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let logs = pool
        .install(|| run_elicitation_experiment(&config, global.timing))
        .map_err(CliError::Runtime)?;

    let rendered = match global.format {
        OutputFormat::Csv => render_results_csv(&logs),
        OutputFormat::Json => render_results_json(&logs),
    };
    write_output(out, &rendered)?;
    let summary = summarize(&logs, &config.methods);
    print!("{}", render_summary(&summary));
    println!("wrote {} rows to {}", logs.len(), out.display());
    Ok(())
}

pub fn cmd_fit(
    data: &Path,
    alpha: Option<f64>,
    gcv: bool,
    out: &Path,
    global: &Global,
) -> Result<(), CliError> {
    let file = load_tasks(data, global)?;
    let labeled = file.labeled()?;
    let alpha = alpha_or_gcv(alpha, gcv, &labeled)?;
    let model = WorkerModel::fit(&labeled, alpha, file.factor_names.clone())?;
    write_output(out, &render_model_json(&model))?;
    println!("alpha: {alpha}");
    println!("train mse: {}", model.mse(&labeled)?);
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct PlanFile<'a> {
    task_ids: &'a [usize],
    expected_error: f64,
    evaluation: String,
}

fn render_plan(plan: &BootstrapPlan, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => {
            let mut out = String::from("task_id\n");
            for id in &plan.task_ids {
                out.push_str(&format!("{id}\n"));
            }
            out
        }
        OutputFormat::Json => {
            let evaluation = match plan.evaluation_mode {
                EvalMode::Exact => "exact".to_string(),
                EvalMode::MonteCarlo { samples, .. } => format!("monte-carlo ({samples} samples)"),
            };
            let mut text = serde_json::to_string_pretty(&PlanFile {
                task_ids: &plan.task_ids,
                expected_error: plan.expected_error,
                evaluation,
            })
            .expect("plan serializes");
            text.push('\n');
            text
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_bootstrap(
    data: &Path,
    history: &Path,
    budget: usize,
    policy: PlanPolicy,
    alpha: f64,
    smoothing: f64,
    exact: bool,
    samples: Option<usize>,
    out: Option<&Path>,
    global: &Global,
) -> Result<(), CliError> {
    let pool = load_tasks(data, global)?;
    let hist = load_tasks(history, global)?.labeled()?;
    let prob_model = OutcomeProbabilityModel::fit(&hist, smoothing)?;
    let seed = global.seed.unwrap_or(0);
    let mode = if exact {
        EvalMode::Exact
    } else {
        EvalMode::MonteCarlo {
            samples: samples.unwrap_or_else(|| default_mc_samples(budget)),
            seed,
        }
    };
    let plan = match policy {
        PlanPolicy::Greedy => greedy_bootstrap(&pool.factors, budget, &prob_model, alpha, mode)?,
        PlanPolicy::Random => {
            random_bootstrap(&pool.factors, budget, &prob_model, alpha, mode, seed)?
        }
    };
    emit(out, &render_plan(&plan, global.format))?;
    if out.is_some() {
        println!("expected reconstruction error: {}", plan.expected_error);
    }
    Ok(())
}

/// One Monte Carlo evaluation of an existing plan; the scalability check
/// uses this directly.
pub fn cmd_evaluate_plan(
    data: &Path,
    history: &Path,
    task_ids: &[usize],
    alpha: f64,
    smoothing: f64,
    samples: Option<usize>,
    global: &Global,
) -> Result<(), CliError> {
    let pool = load_tasks(data, global)?;
    let hist = load_tasks(history, global)?.labeled()?;
    let prob_model = OutcomeProbabilityModel::fit(&hist, smoothing)?;
    let mode = EvalMode::MonteCarlo {
        samples: samples.unwrap_or_else(|| default_mc_samples(task_ids.len())),
        seed: global.seed.unwrap_or(0),
    };
    let err = expected_reconstruction_error(task_ids, &pool.factors, &prob_model, alpha, mode)?;
    println!("expected reconstruction error: {err}");
    Ok(())
}

#[derive(Serialize)]
struct QuestionsFile<'a> {
    factor_indices: &'a [usize],
    factor_names: Vec<&'a str>,
    retained_trace: f64,
}

pub fn cmd_select_questions(
    data: &Path,
    k: usize,
    alpha: f64,
    random: bool,
    out: Option<&Path>,
    global: &Global,
) -> Result<(), CliError> {
    let file = load_tasks(data, global)?;
    let set = if random {
        k_random(&file.factors, k, alpha, global.seed.unwrap_or(0))?
    } else {
        k_exfactor(&file.factors, k, alpha)?
    };
    let rendered = match global.format {
        OutputFormat::Csv => {
            let mut text = String::from("factor_index,factor_name\n");
            for &i in &set.factor_indices {
                text.push_str(&format!("{i},{}\n", file.factor_names[i]));
            }
            text
        }
        OutputFormat::Json => {
            let mut text = serde_json::to_string_pretty(&QuestionsFile {
                factor_indices: &set.factor_indices,
                factor_names: set
                    .factor_indices
                    .iter()
                    .map(|&i| file.factor_names[i].as_str())
                    .collect(),
                retained_trace: set.retained_trace,
            })
            .expect("questions serialize");
            text.push('\n');
            text
        }
    };
    emit(out, &rendered)
}

pub fn cmd_aggregate(
    data: &Path,
    constraints: &Path,
    alpha: Option<f64>,
    gcv: bool,
    out: &Path,
    global: &Global,
) -> Result<(), CliError> {
    let file = load_tasks(data, global)?;
    let labeled = file.labeled()?;
    let text = read_file(constraints)?;
    let parsed = parse_constraints_csv(&text, &file.factor_names)?;
    let alpha = alpha_or_gcv(alpha, gcv, &labeled)?;
    let model = constrained_fit(&labeled, alpha, &parsed, file.factor_names.clone())?;
    write_output(out, &render_model_json(&model))?;
    println!("constraints: {}", parsed.len());
    println!("wrote {}", out.display());
    Ok(())
}

pub fn cmd_predict(
    model_path: &Path,
    data: &Path,
    out: Option<&Path>,
    global: &Global,
) -> Result<(), CliError> {
    let model = parse_model_json(&read_file(model_path)?)?;
    let file = load_tasks(data, global)?;
    if file.factor_names != model.factor_names() {
        return Err(CliError::Validation(format!(
            "factor columns {:?} do not match the model's {:?}",
            file.factor_names,
            model.factor_names()
        )));
    }
    let mut preds = Vec::with_capacity(file.factors.rows());
    for i in 0..file.factors.rows() {
        preds.push(model.predict(file.factors.row(i))?);
    }
    let rendered = match global.format {
        OutputFormat::Csv => {
            let mut text = String::from("prediction\n");
            for p in &preds {
                text.push_str(&format!("{p}\n"));
            }
            text
        }
        OutputFormat::Json => {
            let mut text = serde_json::to_string_pretty(&preds).expect("numbers serialize");
            text.push('\n');
            text
        }
    };
    emit(out, &rendered)?;
    if let Some(outcomes) = &file.outcomes {
        let labeled = exfactor_core::LabeledTasks::new(file.factors.clone(), outcomes.clone())
            .map_err(|e| CliError::Validation(e.to_string()))?;
        println!("mse against outcomes: {}", model.mse(&labeled)?);
    }
    Ok(())
}

/// Parses an interactive ranking answer: comma-separated factor names or
/// indices, which must be a permutation of the asked set.
fn parse_ranking(
    line: &str,
    asked: &[usize],
    names: &[String],
) -> Result<Vec<usize>, String> {
    let mut ranking = Vec::with_capacity(asked.len());
    for token in line.split(',').map(str::trim) {
        if token.is_empty() {
            continue;
        }
        let idx = names
            .iter()
            .position(|n| n == token)
            .or_else(|| token.parse::<usize>().ok().filter(|&i| i < names.len()))
            .ok_or_else(|| format!("'{token}' is not a factor name or index"))?;
        if !asked.contains(&idx) {
            return Err(format!("'{token}' was not one of the asked factors"));
        }
        if ranking.contains(&idx) {
            return Err(format!("'{token}' appears twice"));
        }
        ranking.push(idx);
    }
    if ranking.len() != asked.len() {
        return Err(format!(
            "expected all {} asked factors, got {}",
            asked.len(),
            ranking.len()
        ));
    }
    Ok(ranking)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_elicit(
    model_path: &Path,
    data: &Path,
    k: usize,
    margin: f64,
    alpha: Option<f64>,
    out: Option<&Path>,
    global: &Global,
    input: &mut dyn BufRead,
) -> Result<(), CliError> {
    let model = parse_model_json(&read_file(model_path)?)?;
    let file = load_tasks(data, global)?;
    let labeled = file.labeled()?;
    if file.factor_names != model.factor_names() {
        return Err(CliError::Validation(format!(
            "factor columns {:?} do not match the model's {:?}",
            file.factor_names,
            model.factor_names()
        )));
    }
    let alpha = alpha.unwrap_or(model.alpha());
    let set = k_exfactor(&file.factors, k, alpha)?;
    let asked = &set.factor_indices;
    println!("Rank these factors from most to least preferred");
    println!("(comma-separated, names or indices):");
    for &i in asked {
        println!("  [{i}] {}", file.factor_names[i]);
    }

    let mut attempts = 0;
    let ranking = loop {
        let mut line = String::new();
        let read = input
            .read_line(&mut line)
            .map_err(|e| CliError::Runtime(format!("reading answer: {e}")))?;
        if read == 0 {
            return Err(CliError::Abort);
        }
        match parse_ranking(&line, asked, &file.factor_names) {
            Ok(r) => break r,
            Err(msg) => {
                attempts += 1;
                if attempts > 3 {
                    return Err(CliError::Validation(format!(
                        "no valid ranking after {attempts} attempts: {msg}"
                    )));
                }
                println!("{msg}; please answer again:");
            }
        }
    };

    let constraints = ranking_to_constraints(&ranking, margin)?;
    let updated = constrained_fit(&labeled, alpha, &constraints, file.factor_names.clone())?;
    let target = out.unwrap_or(model_path);
    write_output(target, &render_model_json(&updated))?;
    println!("{:<20} {:>12} {:>12}", "factor", "old weight", "new weight");
    for &i in asked {
        println!(
            "{:<20} {:>12.6} {:>12.6}",
            file.factor_names[i],
            model.weights()[i],
            updated.weights()[i]
        );
    }
    println!("wrote {}", target.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_parser_accepts_names_and_indices() {
        let names: Vec<String> = ["pay", "dur", "len"].map(String::from).to_vec();
        let asked = vec![0, 2];
        assert_eq!(parse_ranking("len, pay", &asked, &names).unwrap(), vec![2, 0]);
        assert_eq!(parse_ranking("0,2", &asked, &names).unwrap(), vec![0, 2]);
    }

    #[test]
    fn ranking_parser_rejects_non_permutations() {
        let names: Vec<String> = ["pay", "dur"].map(String::from).to_vec();
        let asked = vec![0, 1];
        assert!(parse_ranking("pay", &asked, &names).is_err());
        assert!(parse_ranking("pay,pay", &asked, &names).is_err());
        assert!(parse_ranking("pay,bogus", &asked, &names).is_err());
        assert!(parse_ranking("pay,dur,pay", &asked, &names).is_err());
    }

    #[test]
    fn ranking_parser_rejects_unasked_factors() {
        let names: Vec<String> = ["pay", "dur", "len"].map(String::from).to_vec();
        let err = parse_ranking("pay,len", &[0, 1], &names).unwrap_err();
        assert!(err.contains("not one of the asked"));
    }
}
