use std::io::BufReader;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use exfactor::commands::{
    cmd_aggregate, cmd_bootstrap, cmd_elicit, cmd_evaluate_plan, cmd_fit, cmd_predict,
    cmd_select_questions, cmd_simulate, CliError, Global, OutputFormat, PlanPolicy, Preset,
};

#[derive(Parser)]
#[command(
    name = "exfactor",
    about = "Fit, bootstrap, and refine linear worker preference models",
    version
)]
struct Cli {
    /// Seed for anything stochastic (simulation, random baselines, sampling)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output format for machine-readable results
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,

    /// Worker threads for simulation (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Record wall-clock milliseconds in simulation logs (off by default so
    /// repeated runs stay byte-identical)
    #[arg(long, global = true)]
    timing: bool,

    /// Expand non-binary CSV columns into one-hot indicator columns
    #[arg(long, global = true)]
    binarize: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the synthetic elicitation experiment and write per-iteration logs
    Simulate {
        /// Experiment config (JSON); omit to use the preset
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Built-in config profile
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Where to write the per-iteration results
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
    },
    /// Fit a ridge model to labeled tasks
    Fit {
        /// Task CSV with an outcome column
        #[arg(long)]
        data: PathBuf,
        /// Ridge strength (default 1e-3)
        #[arg(long, conflicts_with = "gcv")]
        alpha: Option<f64>,
        /// Pick ridge strength by generalized cross-validation
        #[arg(long)]
        gcv: bool,
        /// Where to write the model JSON
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Choose which tasks a new worker should try first
    Bootstrap {
        /// Candidate task pool CSV (no outcome column needed)
        #[arg(long)]
        data: PathBuf,
        /// Labeled history CSV used to predict outcome probabilities
        #[arg(long)]
        history: PathBuf,
        /// How many tasks to pick
        #[arg(long)]
        budget: usize,
        /// Selection policy
        #[arg(long, value_enum, default_value_t = PlanPolicy::Greedy)]
        policy: PlanPolicy,
        #[arg(long, default_value_t = 1e-3)]
        alpha: f64,
        /// Additive smoothing for the outcome probability model
        #[arg(long, default_value_t = 1.0)]
        smoothing: f64,
        /// Enumerate every outcome branch instead of sampling
        #[arg(long, conflicts_with = "samples")]
        exact: bool,
        /// Monte Carlo sample count (default scales with budget)
        #[arg(long)]
        samples: Option<usize>,
        /// Write the plan here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the expected reconstruction error of a given task set
    EvaluatePlan {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        history: PathBuf,
        /// Task row indices making up the plan
        #[arg(long, value_delimiter = ',', required = true)]
        task_ids: Vec<usize>,
        #[arg(long, default_value_t = 1e-3)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        smoothing: f64,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Pick the k factors whose weights the data pins down worst
    SelectQuestions {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1e-3)]
        alpha: f64,
        /// Pick uniformly at random instead (baseline)
        #[arg(long)]
        random: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a model subject to preference-order constraints
    Aggregate {
        #[arg(long)]
        data: PathBuf,
        /// CSV with higher,lower,margin rows (factor names or indices)
        #[arg(long)]
        constraints: PathBuf,
        #[arg(long, conflicts_with = "gcv")]
        alpha: Option<f64>,
        #[arg(long)]
        gcv: bool,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Score tasks with a saved model
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ask for a ranking of the least-determined factors and refit
    Elicit {
        #[arg(long)]
        model: PathBuf,
        /// Labeled tasks to refit against
        #[arg(long)]
        data: PathBuf,
        /// How many factors to ask about
        #[arg(long)]
        k: usize,
        /// Weight separation enforced between consecutive ranked factors
        #[arg(long, default_value_t = exfactor_core::DEFAULT_MARGIN)]
        margin: f64,
        /// Ridge strength (default: the model's stored value)
        #[arg(long)]
        alpha: Option<f64>,
        /// Where to write the refit model (default: overwrite --model)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let global = Global {
        seed: cli.seed,
        format: cli.format,
        jobs: cli.jobs,
        timing: cli.timing,
        binarize: cli.binarize,
    };
    match cli.command {
        Command::Simulate { config, preset, out } => {
            cmd_simulate(config.as_deref(), preset, &out, &global)
        }
        Command::Fit { data, alpha, gcv, out } => cmd_fit(&data, alpha, gcv, &out, &global),
        Command::Bootstrap {
            data,
            history,
            budget,
            policy,
            alpha,
            smoothing,
            exact,
            samples,
            out,
        } => cmd_bootstrap(
            &data,
            &history,
            budget,
            policy,
            alpha,
            smoothing,
            exact,
            samples,
            out.as_deref(),
            &global,
        ),
        Command::EvaluatePlan {
            data,
            history,
            task_ids,
            alpha,
            smoothing,
            samples,
        } => cmd_evaluate_plan(&data, &history, &task_ids, alpha, smoothing, samples, &global),
        Command::SelectQuestions {
            data,
            k,
            alpha,
            random,
            out,
        } => cmd_select_questions(&data, k, alpha, random, out.as_deref(), &global),
        Command::Aggregate {
            data,
            constraints,
            alpha,
            gcv,
            out,
        } => cmd_aggregate(&data, &constraints, alpha, gcv, &out, &global),
        Command::Predict { model, data, out } => {
            cmd_predict(&model, &data, out.as_deref(), &global)
        }
        Command::Elicit {
            model,
            data,
            k,
            margin,
            alpha,
            out,
        } => {
            let stdin = std::io::stdin();
            let mut reader = BufReader::new(stdin.lock());
            cmd_elicit(
                &model,
                &data,
                k,
                margin,
                alpha,
                out.as_deref(),
                &global,
                &mut reader,
            )
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
