//! File formats: task CSV (with optional one-hot binarization), constraints
//! CSV, model JSON, and experiment results. Writers go through a
//! write-temp-then-rename so readers never see partial files.
//!
//! The task CSV is deliberately quote-free: a header of factor names from
//! [A-Za-z0-9_-], comma separators, numeric cells. A final column named
//! `outcome` carries labels.

use std::io::Write;
use std::path::Path;

use exfactor_core::{LabeledTasks, Matrix, PreferenceConstraint, WorkerModel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::IterationLog;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("file is empty")]
    Empty,
    #[error("file has a header but no data rows")]
    NoRows,
    #[error("header: factor name '{0}' has characters outside [A-Za-z0-9_-]")]
    BadName(String),
    #[error("header: duplicate column name '{0}'")]
    DuplicateName(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column {column} ('{name}'): '{value}' is not a number (try --binarize for categorical data)")]
    NotNumeric {
        line: usize,
        column: usize,
        name: String,
        value: String,
    },
    #[error("line {line}, column {column} ('outcome'): {value} is outside [0, 1]")]
    OutcomeRange {
        line: usize,
        column: usize,
        value: f64,
    },
    #[error("line {line}: unknown factor '{value}'")]
    UnknownFactor { line: usize, value: String },
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn name_ok(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// A parsed task file: factor matrix, optional outcome labels, column names.
#[derive(Debug, Clone)]
pub struct TaskFile {
    pub factor_names: Vec<String>,
    pub factors: Matrix,
    pub outcomes: Option<Vec<f64>>,
}

impl TaskFile {
    /// The labeled view; errors when the file had no outcome column.
    pub fn labeled(&self) -> Result<LabeledTasks, FormatError> {
        let outcomes = self
            .outcomes
            .clone()
            .ok_or_else(|| FormatError::Invalid("file has no 'outcome' column".to_string()))?;
        LabeledTasks::new(self.factors.clone(), outcomes)
            .map_err(|e| FormatError::Invalid(e.to_string()))
    }
}

/// Numbered non-blank lines, split into trimmed fields.
fn rows_of(text: &str) -> Vec<(usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect()))
        .collect()
}

pub fn parse_task_csv(text: &str, binarize: bool) -> Result<TaskFile, FormatError> {
    let rows = rows_of(text);
    let Some(((_, header), body)) = rows.split_first() else {
        return Err(FormatError::Empty);
    };
    if body.is_empty() {
        return Err(FormatError::NoRows);
    }
    for name in header {
        if !name_ok(name) {
            return Err(FormatError::BadName(name.to_string()));
        }
    }
    {
        let mut seen = header.to_vec();
        seen.sort_unstable();
        for pair in seen.windows(2) {
            if pair[0] == pair[1] {
                return Err(FormatError::DuplicateName(pair[0].to_string()));
            }
        }
    }
    let has_outcome = header.last() == Some(&"outcome");
    let factor_cols = header.len() - usize::from(has_outcome);
    if factor_cols == 0 {
        return Err(FormatError::Invalid(
            "no factor columns before 'outcome'".to_string(),
        ));
    }

    for &(line, ref fields) in body {
        if fields.len() != header.len() {
            return Err(FormatError::FieldCount {
                line,
                expected: header.len(),
                found: fields.len(),
            });
        }
    }

    // decide which factor columns stay numeric; the rest are one-hot
    // expanded (only when asked)
    let numeric: Vec<bool> = (0..factor_cols)
        .map(|c| body.iter().all(|(_, f)| f[c].parse::<f64>().is_ok()))
        .collect();
    if !binarize {
        if let Some(c) = numeric.iter().position(|&ok| !ok) {
            let (line, fields) = body
                .iter()
                .find(|(_, f)| f[c].parse::<f64>().is_err())
                .expect("column marked non-numeric");
            return Err(FormatError::NotNumeric {
                line: *line,
                column: c + 1,
                name: header[c].to_string(),
                value: fields[c].to_string(),
            });
        }
    }

    // expanded column layout: numeric columns keep their name, categorical
    // columns contribute one column per distinct value in first-appearance
    // order
    let mut out_names: Vec<String> = Vec::new();
    let mut layouts: Vec<(usize, Vec<String>)> = Vec::new(); // (start, values)
    for c in 0..factor_cols {
        if numeric[c] {
            layouts.push((out_names.len(), Vec::new()));
            out_names.push(header[c].to_string());
        } else {
            let mut values: Vec<String> = Vec::new();
            for (_, fields) in body {
                if !values.iter().any(|v| v == fields[c]) {
                    values.push(fields[c].to_string());
                }
            }
            let start = out_names.len();
            for v in &values {
                let combined = format!("{}_{}", header[c], v);
                if !name_ok(&combined) {
                    return Err(FormatError::BadName(combined));
                }
                out_names.push(combined);
            }
            layouts.push((start, values));
        }
    }
    for (i, a) in out_names.iter().enumerate() {
        if out_names[..i].contains(a) {
            return Err(FormatError::DuplicateName(a.clone()));
        }
    }

    let m = out_names.len();
    let mut data = Vec::with_capacity(body.len() * m);
    let mut outcomes = has_outcome.then(|| Vec::with_capacity(body.len()));
    for &(line, ref fields) in body {
        let base = data.len();
        data.resize(base + m, 0.0);
        for c in 0..factor_cols {
            let (start, ref values) = layouts[c];
            if values.is_empty() {
                data[base + start] =
                    fields[c]
                        .parse::<f64>()
                        .map_err(|_| FormatError::NotNumeric {
                            line,
                            column: c + 1,
                            name: header[c].to_string(),
                            value: fields[c].to_string(),
                        })?;
                if !data[base + start].is_finite() {
                    return Err(FormatError::NotNumeric {
                        line,
                        column: c + 1,
                        name: header[c].to_string(),
                        value: fields[c].to_string(),
                    });
                }
            } else {
                let slot = values
                    .iter()
                    .position(|v| v == fields[c])
                    .expect("value catalogued in first pass");
                data[base + start + slot] = 1.0;
            }
        }
        if let Some(list) = outcomes.as_mut() {
            let c = factor_cols;
            let v: f64 = fields[c].parse().map_err(|_| FormatError::NotNumeric {
                line,
                column: c + 1,
                name: "outcome".to_string(),
                value: fields[c].to_string(),
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(FormatError::OutcomeRange {
                    line,
                    column: c + 1,
                    value: v,
                });
            }
            list.push(v);
        }
    }
    let factors = Matrix::from_vec(body.len(), m, data)
        .map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(TaskFile {
        factor_names: out_names,
        factors,
        outcomes,
    })
}

/// Resolves a constraint field to a factor index: exact name first, then a
/// numeric index.
fn resolve_factor(token: &str, names: &[String], line: usize) -> Result<usize, FormatError> {
    if let Some(idx) = names.iter().position(|n| n == token) {
        return Ok(idx);
    }
    if let Ok(idx) = token.parse::<usize>() {
        if idx < names.len() {
            return Ok(idx);
        }
    }
    Err(FormatError::UnknownFactor {
        line,
        value: token.to_string(),
    })
}

/// Constraints CSV: header `higher,lower,margin`; the first two fields are
/// factor names or zero-based indices.
pub fn parse_constraints_csv(
    text: &str,
    names: &[String],
) -> Result<Vec<PreferenceConstraint>, FormatError> {
    let rows = rows_of(text);
    let Some(((_, header), body)) = rows.split_first() else {
        return Err(FormatError::Empty);
    };
    if *header != vec!["higher", "lower", "margin"] {
        return Err(FormatError::Invalid(format!(
            "constraints header must be 'higher,lower,margin', found '{}'",
            header.join(",")
        )));
    }
    let mut out = Vec::with_capacity(body.len());
    for &(line, ref fields) in body {
        if fields.len() != 3 {
            return Err(FormatError::FieldCount {
                line,
                expected: 3,
                found: fields.len(),
            });
        }
        let higher = resolve_factor(fields[0], names, line)?;
        let lower = resolve_factor(fields[1], names, line)?;
        let margin: f64 = fields[2].parse().map_err(|_| FormatError::NotNumeric {
            line,
            column: 3,
            name: "margin".to_string(),
            value: fields[2].to_string(),
        })?;
        out.push(
            PreferenceConstraint::new(higher, lower, margin).map_err(|e| FormatError::Row {
                line,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

/// On-disk model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub factor_names: Vec<String>,
    pub weights: Vec<f64>,
    pub alpha: f64,
}

impl ModelFile {
    pub fn from_model(model: &WorkerModel) -> Self {
        ModelFile {
            factor_names: model.factor_names().to_vec(),
            weights: model.weights().to_vec(),
            alpha: model.alpha(),
        }
    }

    pub fn into_model(self) -> Result<WorkerModel, FormatError> {
        WorkerModel::new(self.weights, self.alpha, self.factor_names)
            .map_err(|e| FormatError::Invalid(e.to_string()))
    }
}

pub fn parse_model_json(text: &str) -> Result<WorkerModel, FormatError> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| FormatError::Invalid(format!("model JSON: {e}")))?;
    file.into_model()
}

pub fn render_model_json(model: &WorkerModel) -> String {
    let mut out = serde_json::to_string_pretty(&ModelFile::from_model(model))
        .expect("model serializes");
    out.push('\n');
    out
}

pub const RESULTS_HEADER: &str = "method,replication,iteration,mse,questions,wall_ms";

pub fn render_results_csv(logs: &[IterationLog]) -> String {
    let mut out = String::with_capacity(logs.len() * 32 + RESULTS_HEADER.len());
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for log in logs {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            log.method, log.replication, log.iteration, log.mse, log.questions, log.wall_ms
        ));
    }
    out
}

pub fn render_results_json(logs: &[IterationLog]) -> String {
    let mut out = serde_json::to_string_pretty(logs).expect("logs serialize");
    out.push('\n');
    out
}

/// Writes through a temp file in the target directory, then renames into
/// place, so a crash cannot leave a half-written file.
pub fn atomic_write(path: &Path, content: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(content.as_bytes())?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
