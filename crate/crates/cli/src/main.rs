use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gramctl_cli::{run, MatrixInput, Scenario, ScenarioError, Status, TaskKind};

/// Gramian, minimum-energy and Riccati computations driven by JSON scenarios.
#[derive(Parser)]
#[command(name = "gramctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (overrides the scenario's `output`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for random probes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scale applied to every verification tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Cells on the delay history interval.
    #[arg(long, global = true)]
    mesh: Option<usize>,
    /// Gauss–Legendre nodes per quadrature panel.
    #[arg(long, global = true)]
    nodes: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task of a scenario file.
    Run { scenario: PathBuf },
    Gramian(TaskArgs),
    MinEnergy(TaskArgs),
    VerifyRiccati(TaskArgs),
    VerifyLyapunov(TaskArgs),
    CommutingFamily(TaskArgs),
    #[command(name = "recover-L", alias = "recover-l")]
    RecoverL(TaskArgs),
    ProjectCheck(TaskArgs),
    NullControllability(TaskArgs),
    Sweep(TaskArgs),
}

#[derive(Args)]
struct TaskArgs {
    /// Preset name, inline JSON system, or `@file.json`.
    #[arg(long)]
    model: String,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    horizons: Vec<f64>,
    /// Target vectors, components separated by commas (repeatable).
    #[arg(long = "target", allow_hyphen_values = true)]
    targets: Vec<String>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    t_star: Option<f64>,
    /// Diagonal of the commuting family's initial datum.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<f64>>,
    /// Diagonal of the projection for `project-check`.
    #[arg(long, value_delimiter = ',')]
    projection: Option<Vec<f64>>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    oracle_steps: Option<usize>,
}

fn parse_model(text: &str) -> Result<serde_json::Value> {
    if let Some(path) = text.strip_prefix('@') {
        let body = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        return serde_json::from_str(&body).with_context(|| format!("parsing {path}"));
    }
    if text.trim_start().starts_with('{') {
        return serde_json::from_str(text).context("parsing inline model");
    }
    Ok(serde_json::Value::String(text.to_string()))
}

fn scenario_from_args(task: TaskKind, args: TaskArgs) -> Result<Scenario> {
    let mut s = Scenario::new(parse_model(&args.model)?);
    s.tasks = vec![task];
    s.horizons = args.horizons;
    s.targets = args
        .targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            t.split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| ScenarioError::new(format!("targets[{i}]"), e.to_string()))
        })
        .collect::<Result<_, _>>()?;
    s.order = args.order;
    s.t0 = args.t0;
    s.t_star = args.t_star;
    s.k = args.k.map(MatrixInput::Diagonal);
    s.projection = args.projection.map(MatrixInput::Diagonal);
    if let Some(g) = args.grid_points {
        s.grid_points = g;
    }
    if let Some(o) = args.oracle_steps {
        s.oracle_steps = o;
    }
    Ok(s)
}

fn load(cli_command: Command) -> Result<Scenario> {
    let (task, args) = match cli_command {
        Command::Run { scenario } => {
            let text = fs::read_to_string(&scenario).with_context(|| format!("reading {}", scenario.display()))?;
            return Ok(Scenario::from_json(&text)?);
        }
        Command::Gramian(a) => (TaskKind::Gramian, a),
        Command::MinEnergy(a) => (TaskKind::MinEnergy, a),
        Command::VerifyRiccati(a) => (TaskKind::VerifyRiccati, a),
        Command::VerifyLyapunov(a) => (TaskKind::VerifyLyapunov, a),
        Command::CommutingFamily(a) => (TaskKind::CommutingFamily, a),
        Command::RecoverL(a) => (TaskKind::RecoverL, a),
        Command::ProjectCheck(a) => (TaskKind::ProjectCheck, a),
        Command::NullControllability(a) => (TaskKind::NullControllability, a),
        Command::Sweep(a) => (TaskKind::Sweep, a),
    };
    scenario_from_args(task, args)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (out, seed, tol, mesh, nodes) = (cli.out, cli.seed, cli.tol, cli.mesh, cli.nodes);
    let mut scenario = match load(cli.command) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = seed {
        scenario.seed = s;
    }
    if let Some(t) = tol {
        scenario.tol = t;
    }
    if mesh.is_some() {
        scenario.mesh = mesh;
    }
    if nodes.is_some() {
        scenario.nodes = nodes;
    }
    let out = out.unwrap_or_else(|| scenario.output.clone());
    match run(&scenario, &out) {
        Ok(report) => {
            for t in &report.tasks {
                let status = match t.status {
                    Status::Computed => "computed",
                    Status::Passed => "passed",
                    Status::Failed => "FAILED",
                    Status::Error => "ERROR",
                };
                match &t.error {
                    Some(e) => println!("[{:02}] {}: {status}: {e}", t.index, t.task),
                    None => println!("[{:02}] {}: {status}", t.index, t.task),
                }
            }
            println!("report written to {}", out.join("report.json").display());
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            match e.downcast_ref::<ScenarioError>() {
                Some(se) => eprintln!("error: invalid scenario at {se}"),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::from(2)
        }
    }
}
