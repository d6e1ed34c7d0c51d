//! From fine-tuning run logs to leaderboard rows.
//!
//! For each model and task the best run of the learning-rate x epoch sweep is
//! kept, its metric bundle is averaged into a task score, and a model's
//! average is the mean of its task scores. Rounding happens only when a table
//! is rendered.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::MetricBundle;

#[derive(Debug, Error, PartialEq)]
pub enum AggregateError {
    #[error("nothing to aggregate")]
    Empty,
    #[error("runs mix model/task groups: {0}/{1} vs {2}/{3}")]
    MixedGroup(String, String, String, String),
    #[error("run {model}/{task}: learning rate {lr} is not in the sweep")]
    LearningRate { model: String, task: String, lr: f64 },
    #[error("run {model}/{task}: epoch {epoch} outside 1..={max}")]
    Epoch { model: String, task: String, epoch: u32, max: u32 },
    #[error("task {0}: empty metric bundle")]
    EmptyBundle(String),
    #[error("task coverage differs: {0}")]
    Coverage(String),
    #[error("row {model} does not have the same tasks as the first row")]
    RaggedRows { model: String },
    #[error("{0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

/// The hyper-parameter grid every model was fine-tuned over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sweep {
    pub learning_rates: Vec<f64>,
    pub epochs: u32,
}

impl Default for Sweep {
    fn default() -> Self {
        Self { learning_rates: vec![3e-5, 3e-6, 7e-5, 7e-6], epochs: 8 }
    }
}

impl Sweep {
    pub fn contains_lr(&self, lr: f64) -> bool {
        self.learning_rates.iter().any(|&x| (x - lr).abs() <= 1e-9 * x.abs().max(lr.abs()))
    }

    pub fn cells(&self) -> usize {
        self.learning_rates.len() * self.epochs as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: String,
    pub task: String,
    pub lr: f64,
    pub epoch: u32,
    pub metrics: MetricBundle,
}

impl RunRecord {
    pub fn validate(&self, sweep: &Sweep) -> Result<(), AggregateError> {
        if !sweep.contains_lr(self.lr) {
            return Err(AggregateError::LearningRate {
                model: self.model.clone(),
                task: self.task.clone(),
                lr: self.lr,
            });
        }
        if !(1..=sweep.epochs).contains(&self.epoch) {
            return Err(AggregateError::Epoch {
                model: self.model.clone(),
                task: self.task.clone(),
                epoch: self.epoch,
                max: sweep.epochs,
            });
        }
        self.metrics.validate().map_err(|e| AggregateError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task: String,
    pub metrics: MetricBundle,
    pub task_mean: f64,
}

pub fn task_score(task: &str, metrics: MetricBundle) -> Result<TaskScore, AggregateError> {
    let task_mean = metrics.mean().ok_or_else(|| AggregateError::EmptyBundle(task.to_owned()))?;
    Ok(TaskScore { task: task.to_owned(), metrics, task_mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub tasks: Vec<TaskScore>,
    pub average: f64,
}

impl ModelRow {
    pub fn new(model: &str, tasks: Vec<TaskScore>) -> Result<Self, AggregateError> {
        let average = model_average(&tasks)?;
        Ok(Self { model: model.to_owned(), tasks, average })
    }
}

/// Mean of the task means, at full precision.
pub fn model_average(tasks: &[TaskScore]) -> Result<f64, AggregateError> {
    if tasks.is_empty() {
        return Err(AggregateError::Empty);
    }
    Ok(tasks.iter().map(|t| t.task_mean).sum::<f64>() / tasks.len() as f64)
}

/// Half-up (away from zero) rounding to one decimal. A 1e-9 slack absorbs
/// binary representation error, so 17.35 rounds to 17.4.
pub fn round1(x: f64) -> f64 {
    let scaled = x.abs() * 10.0;
    x.signum() * (scaled + 0.5 + 1e-9).floor() / 10.0
}

fn run_order(a: &RunRecord, b: &RunRecord) -> Ordering {
    let ma = a.metrics.mean().unwrap_or(f64::NEG_INFINITY);
    let mb = b.metrics.mean().unwrap_or(f64::NEG_INFINITY);
    // Best first: higher mean, then earlier epoch, then smaller learning rate.
    mb.total_cmp(&ma).then(a.epoch.cmp(&b.epoch)).then(a.lr.total_cmp(&b.lr))
}

/// The run with the highest task mean among runs of one model and task.
pub fn select_best_run(runs: &[RunRecord]) -> Result<&RunRecord, AggregateError> {
    let first = runs.first().ok_or(AggregateError::Empty)?;
    if let Some(r) = runs.iter().find(|r| r.model != first.model || r.task != first.task) {
        return Err(AggregateError::MixedGroup(
            first.model.clone(),
            first.task.clone(),
            r.model.clone(),
            r.task.clone(),
        ));
    }
    if let Some(r) = runs.iter().find(|r| r.metrics.is_empty()) {
        return Err(AggregateError::EmptyBundle(r.task.clone()));
    }
    Ok(runs.iter().min_by(|a, b| run_order(a, b)).expect("non-empty"))
}

/// Groups runs by model and task (first-appearance order), keeps the best of
/// each group and builds one row per model.
pub fn aggregate_runs(runs: &[RunRecord], sweep: &Sweep) -> Result<Vec<ModelRow>, AggregateError> {
    if runs.is_empty() {
        return Err(AggregateError::Empty);
    }
    let mut groups: IndexMap<&str, IndexMap<&str, Vec<RunRecord>>> = IndexMap::new();
    for r in runs {
        r.validate(sweep)?;
        groups.entry(&r.model).or_default().entry(&r.task).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(model, tasks)| {
            let scores = tasks
                .into_iter()
                .map(|(task, group)| task_score(task, select_best_run(&group)?.metrics.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            ModelRow::new(model, scores)
        })
        .collect()
}

pub fn parse_runs_jsonl(text: &str) -> Result<Vec<RunRecord>, AggregateError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| AggregateError::Parse { line: i + 1, message: e.to_string() })
        })
        .collect()
}

/// Mean task score of `a` minus that of `b` over the union of the given rows'
/// tasks. Both sides must cover exactly the same tasks.
pub fn headline_gap(a: &[ModelRow], b: &[ModelRow]) -> Result<f64, AggregateError> {
    let collect = |rows: &[ModelRow]| -> IndexMap<String, f64> {
        rows.iter().flat_map(|r| r.tasks.iter().map(|t| (t.task.clone(), t.task_mean))).collect()
    };
    let (ta, tb) = (collect(a), collect(b));
    if ta.is_empty() {
        return Err(AggregateError::Empty);
    }
    let mut ka: Vec<_> = ta.keys().collect();
    let mut kb: Vec<_> = tb.keys().collect();
    ka.sort();
    kb.sort();
    if ka != kb {
        return Err(AggregateError::Coverage(format!("{ka:?} vs {kb:?}")));
    }
    let mean = |m: &IndexMap<String, f64>| m.values().sum::<f64>() / m.len() as f64;
    Ok(mean(&ta) - mean(&tb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Tsv,
}

impl std::str::FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(Self::Markdown),
            "tsv" => Ok(Self::Tsv),
            other => Err(format!("unknown table format {other:?}")),
        }
    }
}

fn cell(t: &TaskScore) -> String {
    t.metrics.iter().map(|(_, v)| format!("{:.1}", round1(v))).collect::<Vec<_>>().join("/")
}

/// One line per model: task cells as `m1/m2/..` and the average, one decimal.
pub fn render_table(rows: &[ModelRow], format: TableFormat) -> Result<String, AggregateError> {
    let first = rows.first().ok_or(AggregateError::Empty)?;
    let tasks: Vec<&str> = first.tasks.iter().map(|t| t.task.as_str()).collect();
    for r in rows {
        if r.tasks.iter().map(|t| t.task.as_str()).ne(tasks.iter().copied()) {
            return Err(AggregateError::RaggedRows { model: r.model.clone() });
        }
    }
    let metric_names: Vec<String> =
        first.tasks.iter().map(|t| t.metrics.iter().map(|(k, _)| k).collect::<Vec<_>>().join("/")).collect();

    let mut out = String::new();
    let line = |out: &mut String, cells: Vec<String>| match format {
        TableFormat::Markdown => writeln!(out, "| {} |", cells.join(" | ")).unwrap(),
        TableFormat::Tsv => writeln!(out, "{}", cells.join("\t")).unwrap(),
    };
    let header = std::iter::once("Model".to_owned())
        .chain(tasks.iter().map(|s| s.to_string()))
        .chain(std::iter::once("Avg.".to_owned()))
        .collect();
    line(&mut out, header);
    if format == TableFormat::Markdown {
        line(&mut out, vec!["---".to_owned(); tasks.len() + 2]);
    }
    let metrics_row =
        std::iter::once("Metrics".to_owned()).chain(metric_names).chain(std::iter::once("-".to_owned())).collect();
    line(&mut out, metrics_row);
    for r in rows {
        let cells = std::iter::once(r.model.clone())
            .chain(r.tasks.iter().map(cell))
            .chain(std::iter::once(format!("{:.1}", round1(r.average))))
            .collect();
        line(&mut out, cells);
    }
    Ok(out)
}

/// One model's row of a published results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableFixture {
    pub model: String,
    pub table: u32,
    pub published_average: f64,
    pub tasks: Vec<FixtureTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureTask {
    pub task: String,
    pub metrics: MetricBundle,
}

impl TableFixture {
    pub fn to_row(&self) -> Result<ModelRow, AggregateError> {
        let tasks = self.tasks.iter().map(|t| task_score(&t.task, t.metrics.clone())).collect::<Result<Vec<_>, _>>()?;
        ModelRow::new(&self.model, tasks)
    }
}

/// Loads every `*.json` fixture in `dir`, ordered by table then file name.
pub fn load_fixtures(dir: &Path) -> Result<Vec<TableFixture>, AggregateError> {
    let io = |e: std::io::Error| AggregateError::Io(format!("{}: {e}", dir.display()));
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| AggregateError::Io(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<TableFixture>(&text)
                .map_err(|e| AggregateError::Invalid(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    out.sort_by_key(|f| f.table);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureCheck {
    pub model: String,
    pub table: u32,
    pub computed: f64,
    pub published: f64,
    pub passed: bool,
}

/// Tolerance on the unrounded average versus the published one.
pub const TABLE_TOLERANCE: f64 = 0.05;

pub fn verify_fixtures(fixtures: &[TableFixture]) -> Result<Vec<FixtureCheck>, AggregateError> {
    fixtures
        .iter()
        .map(|f| {
            let row = f.to_row()?;
            Ok(FixtureCheck {
                model: f.model.clone(),
                table: f.table,
                computed: row.average,
                published: f.published_average,
                passed: (row.average - f.published_average).abs() <= TABLE_TOLERANCE + 1e-9,
            })
        })
        .collect()
}
