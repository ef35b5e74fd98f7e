//! Scenario runner: reads a JSON scenario, runs its tasks in order and writes
//! `report.json` plus one CSV per time series.

pub mod model;
pub mod output;
pub mod scenario;
pub mod tasks;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

pub use model::Model;
pub use scenario::{MatrixInput, Scenario, ScenarioError, TaskKind};

use output::write_atomic;
use tasks::Runner;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Numbers only; nothing to pass or fail.
    Computed,
    Passed,
    Failed,
    /// The task could not run; counts as a failure.
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskRecord {
    pub index: usize,
    pub task: TaskKind,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Formula behind each reported quantity.
    pub formulas: BTreeMap<&'static str, String>,
    pub result: Value,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub scenario: Scenario,
    pub model: model::ModelSummary,
    pub tasks: Vec<TaskRecord>,
    pub all_passed: bool,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        if self.all_passed {
            0
        } else {
            1
        }
    }
}

/// Builds and validates the model; schema problems come back with a field path.
pub fn prepare(scenario: &Scenario) -> std::result::Result<Model, ScenarioError> {
    let model = Model::build(scenario)?;
    model::validate(scenario, &model)?;
    Ok(model)
}

/// Runs every task, writing artifacts into `out`. A failing task does not stop
/// the ones after it.
pub fn run(scenario: &Scenario, out: &Path) -> Result<Report> {
    let model = prepare(scenario)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let runner = Runner::new(scenario, &model)?;
    let mut records = Vec::with_capacity(scenario.tasks.len());
    for (index, &task) in scenario.tasks.iter().enumerate() {
        let record = match runner.run(task) {
            Ok(output) => {
                let mut files = Vec::new();
                for table in &output.tables {
                    let name = format!("{index:02}_{}", table.file_name());
                    write_atomic(&out.join(&name), table.to_csv().as_bytes())
                        .with_context(|| format!("writing {name}"))?;
                    files.push(name);
                }
                TaskRecord {
                    index,
                    task,
                    status: match output.passed {
                        None => Status::Computed,
                        Some(true) => Status::Passed,
                        Some(false) => Status::Failed,
                    },
                    error: None,
                    formulas: output.formulas.into_iter().collect(),
                    result: output.result,
                    files,
                }
            }
            Err(e) => TaskRecord {
                index,
                task,
                status: Status::Error,
                error: Some(format!("{e:#}")),
                formulas: BTreeMap::new(),
                result: Value::Null,
                files: Vec::new(),
            },
        };
        records.push(record);
    }
    let all_passed = records.iter().all(|r| matches!(r.status, Status::Computed | Status::Passed));
    let report = Report {
        tool: "gramctl",
        version: env!("CARGO_PKG_VERSION"),
        scenario: scenario.clone(),
        model: model.summary(),
        tasks: records,
        all_passed,
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_atomic(&out.join("report.json"), json.as_bytes()).context("writing report.json")?;
    Ok(report)
}
