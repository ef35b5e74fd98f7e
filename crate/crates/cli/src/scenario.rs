//! Scenario files: what to build, which tasks to run, where to write.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TaskKind {
    Gramian,
    MinEnergy,
    VerifyRiccati,
    VerifyLyapunov,
    CommutingFamily,
    RecoverL,
    ProjectCheck,
    NullControllability,
    Sweep,
}

impl TaskKind {
    pub const ALL: [TaskKind; 9] = [
        TaskKind::Gramian,
        TaskKind::MinEnergy,
        TaskKind::VerifyRiccati,
        TaskKind::VerifyLyapunov,
        TaskKind::CommutingFamily,
        TaskKind::RecoverL,
        TaskKind::ProjectCheck,
        TaskKind::NullControllability,
        TaskKind::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Gramian => "gramian",
            TaskKind::MinEnergy => "min-energy",
            TaskKind::VerifyRiccati => "verify-riccati",
            TaskKind::VerifyLyapunov => "verify-lyapunov",
            TaskKind::CommutingFamily => "commuting-family",
            TaskKind::RecoverL => "recover-L",
            TaskKind::ProjectCheck => "project-check",
            TaskKind::NullControllability => "null-controllability",
            TaskKind::Sweep => "sweep",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    /// Case-insensitive; `_` and `-` are interchangeable.
    fn from_str(s: &str) -> Result<Self, String> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        TaskKind::ALL
            .into_iter()
            .find(|t| t.name().to_ascii_lowercase() == key)
            .ok_or_else(|| {
                let names: Vec<_> = TaskKind::ALL.iter().map(|t| t.name()).collect();
                format!("unknown task '{s}'; expected one of {}", names.join(", "))
            })
    }
}

impl TryFrom<String> for TaskKind {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<TaskKind> for String {
    fn from(t: TaskKind) -> String {
        t.name().to_string()
    }
}

/// A matrix given in full, or by its diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixInput {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Preset name (`"spectral:landau-ginzburg"`, `"delay(0,1,1,1)"`, ...) or
    /// an inline system `{"A": [[..]], "B": [[..]]}`.
    pub model: serde_json::Value,
    #[serde(default)]
    pub tasks: Vec<TaskKind>,
    #[serde(default)]
    pub horizons: Vec<f64>,
    #[serde(default)]
    pub targets: Vec<Vec<f64>>,
    #[serde(default = "default_output", skip_serializing)]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Scale applied to every verification tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Truncation order of spectral presets.
    #[serde(default)]
    pub order: Option<usize>,
    /// Cells on the delay history interval.
    #[serde(default)]
    pub mesh: Option<usize>,
    /// Gauss–Legendre nodes per quadrature panel.
    #[serde(default)]
    pub nodes: Option<usize>,
    /// Samples per control signal or trajectory, and points per sweep.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Steps of the brute-force energy oracle.
    #[serde(default = "default_oracle_steps")]
    pub oracle_steps: usize,
    /// Null-controllability horizon for the Riccati tasks.
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(default)]
    pub t_star: Option<f64>,
    /// Initial datum of the commuting family (identity when absent).
    #[serde(default)]
    pub k: Option<MatrixInput>,
    #[serde(default)]
    pub projection: Option<MatrixInput>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_tol() -> f64 {
    1.0
}

fn default_grid_points() -> usize {
    201
}

fn default_oracle_steps() -> usize {
    1000
}

impl Scenario {
    /// A scenario with every optional field at its default.
    pub fn new(model: serde_json::Value) -> Self {
        Scenario {
            model,
            tasks: Vec::new(),
            horizons: Vec::new(),
            targets: Vec::new(),
            output: default_output(),
            seed: 0,
            tol: default_tol(),
            order: None,
            mesh: None,
            nodes: None,
            grid_points: default_grid_points(),
            oracle_steps: default_oracle_steps(),
            t0: None,
            t_star: None,
            k: None,
            projection: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ScenarioError::new(if path == "." { "$".into() } else { path }, e.into_inner().to_string())
        })
    }
}

/// Schema violation at a field path such as `targets[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    pub path: String,
    pub message: String,
}

impl ScenarioError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ScenarioError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_aliases() {
        assert_eq!("recover_l".parse::<TaskKind>().unwrap(), TaskKind::RecoverL);
        assert_eq!("Verify-Riccati".parse::<TaskKind>().unwrap(), TaskKind::VerifyRiccati);
        assert!("solve".parse::<TaskKind>().is_err());
    }

    #[test]
    fn paths_in_errors() {
        let err = Scenario::from_json(r#"{"model": "x", "tasks": ["gramian", "bogus"]}"#).unwrap_err();
        assert_eq!(err.path, "tasks[1]");
        let err = Scenario::from_json(r#"{"model": "x", "horizon": [1]}"#).unwrap_err();
        assert!(err.message.contains("horizon"));
        let err = Scenario::from_json(r#"{"tasks": []}"#).unwrap_err();
        assert!(err.message.contains("model"));
    }

    #[test]
    fn defaults() {
        let s = Scenario::from_json(r#"{"model": "spectral:landau-ginzburg"}"#).unwrap();
        assert_eq!(s, Scenario::new(serde_json::json!("spectral:landau-ginzburg")));
        let k: MatrixInput = serde_json::from_str("[1, 2]").unwrap();
        assert_eq!(k, MatrixInput::Diagonal(vec![1.0, 2.0]));
    }
}
