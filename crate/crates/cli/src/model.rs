//! Turning a scenario's `model` field into something the tasks can run on.

use gramctl::gramian::LinearSystemSpec;
use gramctl::models::{DelaySystem, ModelPreset, ShiftSystem, SpectralPreset, SpectralSystem};
use gramctl::LinearSystem;
use serde::Serialize;

use crate::scenario::{Scenario, ScenarioError, TaskKind};

#[derive(Debug, Clone)]
pub enum Model {
    Linear {
        sys: LinearSystem,
        /// Set when the system is the truncation of a spectral preset.
        spectral: Option<(SpectralPreset, SpectralSystem)>,
    },
    Delay(DelaySystem),
    Shift(ShiftSystem),
}

/// Short names accepted in place of full preset strings.
fn expand_alias(name: &str) -> &str {
    match name {
        "landau-ginzburg" | "lg" => "spectral:landau-ginzburg",
        "double-exponential" => "spectral:double-exponential",
        other => other,
    }
}

fn model_error(message: impl Into<String>) -> ScenarioError {
    ScenarioError::new("model", message)
}

impl Model {
    pub fn build(scenario: &Scenario) -> Result<Model, ScenarioError> {
        match &scenario.model {
            serde_json::Value::String(name) => {
                if name == "scalar" {
                    let sys = LinearSystem::new(
                        nalgebra::DMatrix::from_element(1, 1, -1.0),
                        nalgebra::DMatrix::from_element(1, 1, 1.0),
                    )
                    .map_err(|e| model_error(e.to_string()))?;
                    return Ok(Model::Linear { sys, spectral: None });
                }
                let preset: ModelPreset = expand_alias(name).parse().map_err(|e: gramctl::Error| model_error(e.to_string()))?;
                Model::from_preset(preset, scenario)
            }
            serde_json::Value::Object(_) => {
                let spec: LinearSystemSpec =
                    serde_json::from_value(scenario.model.clone()).map_err(|e| model_error(e.to_string()))?;
                let sys = LinearSystem::try_from(&spec).map_err(|e| model_error(e.to_string()))?;
                Ok(Model::Linear { sys, spectral: None })
            }
            _ => Err(model_error("expected a preset name or an object with \"A\" and \"B\"")),
        }
    }

    fn from_preset(preset: ModelPreset, scenario: &Scenario) -> Result<Model, ScenarioError> {
        match preset {
            ModelPreset::Spectral(p) => {
                let order = scenario.order.unwrap_or_else(|| p.default_order());
                let spectral = p.build(order).map_err(|e| ScenarioError::new("order", e.to_string()))?;
                let sys = spectral.to_linear_system().map_err(|e| model_error(e.to_string()))?;
                Ok(Model::Linear {
                    sys,
                    spectral: Some((p, spectral)),
                })
            }
            ModelPreset::Delay { a0, a1, b0, d } => {
                let cells = scenario.mesh.unwrap_or_else(|| default_cells(a0, a1, d));
                DelaySystem::new(a0, a1, b0, d, cells)
                    .map(Model::Delay)
                    .map_err(|e| ScenarioError::new("mesh", e.to_string()))
            }
            ModelPreset::Shift { m } => ShiftSystem::new(m).map(Model::Shift).map_err(|e| model_error(e.to_string())),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::Linear { sys, .. } => sys.dim(),
            Model::Delay(d) => d.dim(),
            Model::Shift(s) => s.cells(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Linear { spectral: Some(_), .. } => "spectral",
            Model::Linear { .. } => "linear",
            Model::Delay(_) => "delay",
            Model::Shift(_) => "shift",
        }
    }

    pub fn supports(&self, task: TaskKind) -> bool {
        match self {
            Model::Linear { .. } => true,
            Model::Delay(_) => matches!(task, TaskKind::Gramian | TaskKind::NullControllability),
            Model::Shift(_) => matches!(task, TaskKind::Sweep | TaskKind::NullControllability),
        }
    }

    pub fn summary(&self) -> ModelSummary {
        let (inputs, stability_margin, commuting) = match self {
            Model::Linear { sys, .. } => (
                Some(sys.inputs()),
                sys.is_stable().then(|| sys.stability_margin()),
                Some(sys.is_commuting_symmetric()),
            ),
            _ => (None, None, None),
        };
        ModelSummary {
            kind: self.kind(),
            dim: self.dim(),
            inputs,
            stability_margin,
            commuting,
        }
    }
}

/// At least 32 cells, and fine enough for the mesh rule of [`DelaySystem`].
fn default_cells(a0: f64, a1: f64, d: f64) -> usize {
    let needed = ((a0.abs() + a1.abs()) * d).ceil();
    if needed.is_finite() && needed > 32.0 {
        needed as usize
    } else {
        32
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub kind: &'static str,
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inputs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub commuting: Option<bool>,
}

fn check_positive(path: String, v: f64) -> Result<(), ScenarioError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ScenarioError::new(path, format!("must be positive and finite, got {v}")))
    }
}

/// Checks the fields each task needs, against the built model.
pub fn validate(scenario: &Scenario, model: &Model) -> Result<(), ScenarioError> {
    check_positive("tol".into(), scenario.tol)?;
    for (i, &t) in scenario.horizons.iter().enumerate() {
        check_positive(format!("horizons[{i}]"), t)?;
    }
    for (i, x) in scenario.targets.iter().enumerate() {
        if x.len() != model.dim() {
            return Err(ScenarioError::new(
                format!("targets[{i}]"),
                format!("has length {}, model dimension is {}", x.len(), model.dim()),
            ));
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(ScenarioError::new(format!("targets[{i}][{j}]"), "must be finite"));
        }
    }
    for (name, v) in [("t0", scenario.t0), ("t_star", scenario.t_star)] {
        if let Some(v) = v {
            check_positive(name.into(), v)?;
        }
    }
    if scenario.grid_points < 2 {
        return Err(ScenarioError::new("grid_points", "need at least 2"));
    }
    if scenario.oracle_steps == 0 {
        return Err(ScenarioError::new("oracle_steps", "must be positive"));
    }
    if let Some(n) = scenario.nodes {
        if n < 2 {
            return Err(ScenarioError::new("nodes", "quadrature needs at least 2 nodes per panel"));
        }
    }
    for (i, &task) in scenario.tasks.iter().enumerate() {
        let path = format!("tasks[{i}]");
        if !model.supports(task) {
            return Err(ScenarioError::new(path, format!("{task} is not available for {} models", model.kind())));
        }
        let needs_horizons = !matches!(task, TaskKind::VerifyLyapunov);
        if needs_horizons && scenario.horizons.is_empty() {
            return Err(ScenarioError::new("horizons", format!("required by {task} ({path})")));
        }
        let needs_targets = matches!(task, TaskKind::MinEnergy)
            || (task == TaskKind::Sweep && matches!(model, Model::Linear { .. }));
        if needs_targets && scenario.targets.is_empty() {
            return Err(ScenarioError::new("targets", format!("required by {task} ({path})")));
        }
        if task == TaskKind::ProjectCheck && scenario.projection.is_none() {
            return Err(ScenarioError::new("projection", format!("required by {task} ({path})")));
        }
    }
    Ok(())
}
