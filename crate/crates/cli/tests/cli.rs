//! End-to-end tests against the compiled binary: exit codes, output formats,
//! and agreement between subcommands and direct library calls.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use exfactor::formats::{parse_model_json, parse_task_csv};
use exfactor_core::{k_exfactor, WorkerModel};
use tempfile::TempDir;

const EXAMPLE_TASKS: &str = "\
type_a,type_b,type_c,payoff,duration,outcome
1,0,0,1,1,1
1,0,0,0,0,0
0,1,0,0,0,1
0,1,0,0,1,0
0,0,1,1,0,1
0,0,1,1,1,0
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_exfactor"))
}

fn write(dir: &TempDir, name: &str, content: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, content).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn invalid_config_exits_2_and_names_the_field() {
    let dir = TempDir::new().unwrap();
    let config = write(&dir, "config.json", r#"{"train_fraction": 1.2}"#);
    let out_path = dir.path().join("results.csv");
    let out = run(&[
        "simulate",
        "--config",
        path_str(&config),
        "--out",
        path_str(&out_path),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("train_fraction"));
    assert!(!out_path.exists());
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = TempDir::new().unwrap();
    let config = write(&dir, "config.json", r#"{"taks": 100}"#);
    let out = run(&["simulate", "--config", path_str(&config)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("taks"));
}

#[test]
fn malformed_csv_exits_2_with_line_number() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "bad.csv", "a,b,outcome\n1,0,1\n1,0\n");
    let model = dir.path().join("model.json");
    let out = run(&["fit", "--data", path_str(&data), "--out", path_str(&model)]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("line 3"), "got: {err}");
}

#[test]
fn non_numeric_cell_names_row_and_column() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "bad.csv", "a,b,outcome\n1,oops,1\n");
    let out = run(&["fit", "--data", path_str(&data), "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("line 2") && err.contains("'b'") && err.contains("oops"), "got: {err}");
}

#[test]
fn cyclic_constraints_exit_1_and_list_the_cycle() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "tasks.csv", EXAMPLE_TASKS);
    let cons = write(
        &dir,
        "cons.csv",
        "higher,lower,margin\npayoff,duration,0.01\nduration,payoff,0.01\n",
    );
    let model = dir.path().join("model.json");
    let out = run(&[
        "aggregate",
        "--data",
        path_str(&data),
        "--constraints",
        path_str(&cons),
        "--alpha",
        "0.1",
        "--out",
        path_str(&model),
    ]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr_of(&out));
    let err = stderr_of(&out);
    assert!(err.contains("cycle"), "got: {err}");
    assert!(!model.exists());
}

#[test]
fn fit_matches_a_direct_library_call() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "tasks.csv", EXAMPLE_TASKS);
    let model_path = dir.path().join("model.json");
    let out = run(&[
        "fit",
        "--data",
        path_str(&data),
        "--alpha",
        "0.001",
        "--out",
        path_str(&model_path),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));

    let file = parse_task_csv(EXAMPLE_TASKS, false).unwrap();
    let direct = WorkerModel::fit(&file.labeled().unwrap(), 0.001, file.factor_names.clone())
        .unwrap();
    let saved = parse_model_json(&std::fs::read_to_string(&model_path).unwrap()).unwrap();
    assert_eq!(saved.alpha(), 0.001);
    for (a, b) in saved.weights().iter().zip(direct.weights()) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn near_interpolating_fit_predicts_close_to_the_labels() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "tasks.csv", EXAMPLE_TASKS);
    let model_path = dir.path().join("model.json");
    let out = run(&[
        "fit",
        "--data",
        path_str(&data),
        "--alpha",
        "1e-6",
        "--out",
        path_str(&model_path),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));

    let predict = run(&[
        "predict",
        "--model",
        path_str(&model_path),
        "--data",
        path_str(&data),
    ]);
    assert_eq!(predict.status.code(), Some(0), "stderr: {}", stderr_of(&predict));
    let text = stdout_of(&predict);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("prediction"));
    let preds: Vec<f64> = lines
        .take(6)
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(preds.len(), 6);
    for p in preds {
        assert!((-0.5..=1.5).contains(&p), "prediction {p} out of band");
    }
    assert!(text.contains("mse against outcomes"));
}

#[test]
fn predict_rejects_mismatched_factor_names() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "tasks.csv", EXAMPLE_TASKS);
    let model_path = dir.path().join("model.json");
    run(&["fit", "--data", path_str(&data), "--out", path_str(&model_path)]);
    let other = write(&dir, "other.csv", "x,y\n1,0\n");
    let out = run(&[
        "predict",
        "--model",
        path_str(&model_path),
        "--data",
        path_str(&other),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("do not match"));
}

#[test]
fn select_questions_matches_the_library_selection() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "tasks.csv", EXAMPLE_TASKS);
    let out = run(&[
        "select-questions",
        "--data",
        path_str(&data),
        "--k",
        "2",
        "--alpha",
        "0.01",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let parsed: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();

    let file = parse_task_csv(EXAMPLE_TASKS, false).unwrap();
    let direct = k_exfactor(&file.factors, 2, 0.01).unwrap();
    let indices: Vec<usize> = parsed["factor_indices"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap() as usize)
        .collect();
    assert_eq!(indices, direct.factor_indices);
    let trace = parsed["retained_trace"].as_f64().unwrap();
    assert!((trace - direct.retained_trace).abs() <= 1e-12);
}

#[test]
fn select_zero_questions_is_an_empty_success() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "tasks.csv", EXAMPLE_TASKS);
    let out = run(&["select-questions", "--data", path_str(&data), "--k", "0"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert_eq!(stdout_of(&out), "factor_index,factor_name\n");
}

#[test]
fn simulate_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let config = write(
        &dir,
        "config.json",
        r#"{
            "tasks": 120, "factors": 8, "questions": 3, "iterations": 2,
            "tasks_per_iteration": 5, "bootstrap_budget": 8, "bootstrap_samples": 64,
            "alpha": 0.001, "replications": 2, "seed": 7,
            "methods": [
                {"name": "k-exfactor", "elicitation": "k-exfactor"},
                {"name": "implicit-2", "elicitation": "implicit-2"}
            ]
        }"#,
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out_path in [&a, &b] {
        let out = run(&[
            "simulate",
            "--config",
            path_str(&config),
            "--out",
            path_str(out_path),
        ]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    }
    let bytes_a = std::fs::read(&a).unwrap();
    let bytes_b = std::fs::read(&b).unwrap();
    assert!(!bytes_a.is_empty());
    assert_eq!(bytes_a, bytes_b);

    let text = String::from_utf8(bytes_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("method,replication,iteration,mse,questions,wall_ms")
    );
    // 2 methods x 2 replications x 2 iterations
    assert_eq!(lines.count(), 8);
}

#[test]
fn simulate_seed_flag_overrides_the_config() {
    let dir = TempDir::new().unwrap();
    let config = write(
        &dir,
        "config.json",
        r#"{
            "tasks": 80, "factors": 6, "questions": 2, "iterations": 1,
            "tasks_per_iteration": 5, "bootstrap_budget": 6, "bootstrap_samples": 32,
            "alpha": 0.001, "replications": 1, "seed": 7,
            "methods": [{"name": "k-exfactor", "elicitation": "k-exfactor"}]
        }"#,
    );
    let base = dir.path().join("base.csv");
    let reseeded = dir.path().join("reseeded.csv");
    run(&["simulate", "--config", path_str(&config), "--out", path_str(&base)]);
    let out = run(&[
        "simulate",
        "--config",
        path_str(&config),
        "--seed",
        "8",
        "--out",
        path_str(&reseeded),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert_ne!(std::fs::read(&base).unwrap(), std::fs::read(&reseeded).unwrap());
}

#[test]
fn bootstrap_plan_lists_budget_many_tasks() {
    let dir = TempDir::new().unwrap();
    let unlabeled: String = EXAMPLE_TASKS
        .lines()
        .map(|l| {
            let cut = l.rfind(',').unwrap();
            format!("{}\n", &l[..cut])
        })
        .collect();
    let pool = write(&dir, "pool.csv", &unlabeled);
    let hist = write(&dir, "history.csv", EXAMPLE_TASKS);
    let out = run(&[
        "bootstrap",
        "--data",
        path_str(&pool),
        "--history",
        path_str(&hist),
        "--budget",
        "3",
        "--exact",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("task_id"));
    let ids: Vec<usize> = lines.map(|l| l.parse().unwrap()).collect();
    assert_eq!(ids.len(), 3);
    assert!(ids.iter().all(|&i| i < 6));
}

#[test]
fn evaluate_plan_reports_an_error_estimate() {
    let dir = TempDir::new().unwrap();
    let pool = write(&dir, "pool.csv", EXAMPLE_TASKS);
    let hist = write(&dir, "history.csv", EXAMPLE_TASKS);
    let out = run(&[
        "evaluate-plan",
        "--data",
        path_str(&pool),
        "--history",
        path_str(&hist),
        "--task-ids",
        "0,2,4",
        "--samples",
        "128",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let value: f64 = text
        .trim()
        .rsplit(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(value.is_finite() && value >= 0.0);
}

fn elicit_with_stdin(dir: &TempDir, answer: &str) -> (Output, std::path::PathBuf) {
    let data = write(dir, "tasks.csv", EXAMPLE_TASKS);
    let model_path = dir.path().join("model.json");
    let fit = run(&[
        "fit",
        "--data",
        path_str(&data),
        "--alpha",
        "0.01",
        "--out",
        path_str(&model_path),
    ]);
    assert_eq!(fit.status.code(), Some(0));
    let updated = dir.path().join("updated.json");
    let mut child = bin()
        .args([
            "elicit",
            "--model",
            path_str(&model_path),
            "--data",
            path_str(&data),
            "--k",
            "2",
            "--out",
            path_str(&updated),
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(answer.as_bytes())
        .unwrap();
    (child.wait_with_output().unwrap(), updated)
}

#[test]
fn elicit_applies_a_valid_ranking() {
    let dir = TempDir::new().unwrap();
    let file = parse_task_csv(EXAMPLE_TASKS, false).unwrap();
    let asked = k_exfactor(&file.factors, 2, 0.01).unwrap().factor_indices;
    // answer with the asked factors reversed, by index
    let answer = format!("{},{}\n", asked[1], asked[0]);
    let (out, updated) = elicit_with_stdin(&dir, &answer);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let model = parse_model_json(&std::fs::read_to_string(&updated).unwrap()).unwrap();
    let w = model.weights();
    assert!(
        w[asked[1]] >= w[asked[0]] + exfactor_core::DEFAULT_MARGIN - 1e-9,
        "ranking not enforced: {w:?}"
    );
    let text = stdout_of(&out);
    assert!(text.contains("old weight") && text.contains("new weight"));
}

#[test]
fn elicit_gives_up_after_four_bad_answers() {
    let dir = TempDir::new().unwrap();
    let (out, updated) = elicit_with_stdin(&dir, "what\nno\nstill no\nnope\n");
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(!updated.exists());
}

#[test]
fn elicit_on_eof_exits_130() {
    let dir = TempDir::new().unwrap();
    let (out, updated) = elicit_with_stdin(&dir, "");
    assert_eq!(out.status.code(), Some(130), "stderr: {}", stderr_of(&out));
    assert!(!updated.exists());
}

#[test]
fn binarize_expands_categorical_columns() {
    let dir = TempDir::new().unwrap();
    let data = write(
        &dir,
        "cat.csv",
        "kind,pay,outcome\n2,1,1\n3,0,0\n2,1,1\n3,1,0\n2,0,1\n3,0,1\n",
    );
    let out = run(&[
        "--binarize",
        "select-questions",
        "--data",
        path_str(&data),
        "--k",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(
        text.contains("kind_2") || text.contains("kind_3") || text.contains("pay"),
        "got: {text}"
    );
}

#[test]
fn aggregate_then_predict_round_trips_through_files() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "tasks.csv", EXAMPLE_TASKS);
    let cons = write(&dir, "cons.csv", "higher,lower,margin\npayoff,duration,0.05\n");
    let model_path = dir.path().join("model.json");
    let out = run(&[
        "aggregate",
        "--data",
        path_str(&data),
        "--constraints",
        path_str(&cons),
        "--alpha",
        "0.1",
        "--out",
        path_str(&model_path),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let model = parse_model_json(&std::fs::read_to_string(&model_path).unwrap()).unwrap();
    let w = model.weights();
    assert!(w[3] >= w[4] + 0.05 - 1e-9, "constraint not honored: {w:?}");

    let predict = run(&[
        "predict",
        "--model",
        path_str(&model_path),
        "--data",
        path_str(&data),
        "--format",
        "json",
    ]);
    assert_eq!(predict.status.code(), Some(0));
    let stdout = stdout_of(&predict);
    // the JSON array comes first, followed by the mse line
    let end = stdout.rfind(']').unwrap() + 1;
    let preds: Vec<f64> = serde_json::from_str(&stdout[..end]).unwrap();
    assert_eq!(preds.len(), 6);
}
