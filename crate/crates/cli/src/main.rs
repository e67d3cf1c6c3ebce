//! `cfsync`: scenario-driven analysis and simulation of dVOC converter networks.
//!
//! Exit codes: 0 when every check passes, 2 when a stability check fails,
//! 1 on input or numerical errors.

mod commands;
mod output;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use commands::{DataFormat, OutputOptions, Section};
use scenario::{LoadedScenario, Overrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] cfsync::Error),
}

#[derive(Parser)]
#[command(
    name = "cfsync",
    version,
    about = "Complex-frequency synchronization analysis of dVOC converter networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fast-system spectrum and the two synchronization conditions.
    AnalyzeFast(Common),
    /// Slow-system equilibrium, steady-state frequency and error spectrum.
    AnalyzeSlow(Common),
    /// Time-domain simulation of the configured model.
    Simulate(Common),
    /// Nyquist criteria for synchronization and voltage stabilization.
    Nyquist(Common),
    /// Run every applicable analysis and cross-validate the verdicts.
    Check {
        #[command(flatten)]
        common: Common,
        /// Treat the scenario path as a directory and check every `*.toml` in it.
        #[arg(long)]
        all: bool,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (or directory with `check --all`).
    scenario: PathBuf,
    /// Integrator step override, seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Simulation horizon override, seconds.
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Directory for the report and data files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Data file format for trajectories and curves.
    #[arg(long, value_enum, default_value = "csv")]
    format: DataFormat,
    /// Also write SVG plots (needs --out).
    #[arg(long)]
    plot: bool,
    /// Seed for randomized initial states.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            dt: self.dt,
            t_end: self.t_end,
            seed: self.seed,
        }
    }

    fn output(&self, dir: Option<PathBuf>) -> OutputOptions {
        OutputOptions {
            dir,
            format: self.format,
            plot: self.plot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Outcome {
    Pass,
    Fail,
    Error,
}

impl Outcome {
    fn code(self) -> u8 {
        match self {
            Outcome::Pass => 0,
            Outcome::Fail => 2,
            Outcome::Error => 1,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::Error => "error",
        }
    }
}

type Runner = fn(&LoadedScenario, &OutputOptions) -> Result<Section, CliError>;

fn report(
    command: &str,
    path: &Path,
    sc: Option<&LoadedScenario>,
    result: &Result<Section, CliError>,
) -> (Value, Outcome) {
    let outcome = match result {
        Ok(s) if s.pass => Outcome::Pass,
        Ok(_) => Outcome::Fail,
        Err(_) => Outcome::Error,
    };
    let mut r = json!({
        "tool": "cfsync",
        "version": env!("CARGO_PKG_VERSION"),
        "schema_version": scenario::SCHEMA_VERSION,
        "command": command,
        "source": path.display().to_string(),
        "status": outcome.label(),
    });
    if let Some(sc) = sc {
        r["scenario"] = json!(sc.name);
        r["config_sha256"] = json!(sc.sha256);
        r["overrides"] = json!({"dt": sc.overrides.dt, "t_end": sc.overrides.t_end, "seed": sc.overrides.seed});
    }
    match result {
        Ok(s) => {
            r["result"] = s.value.clone();
            r["files"] = json!(s.files);
        }
        Err(e) => r["error"] = json!(e.to_string()),
    }
    (r, outcome)
}

/// Loads, runs and reports one scenario; writes `<name>.report.json` when an
/// output directory is given.
fn run_one(command: &str, path: &Path, common: &Common, dir: Option<PathBuf>, runner: Runner) -> (Value, Outcome) {
    let out = common.output(dir.clone());
    let (loaded, result) = match scenario::load(path, common.overrides()) {
        Ok(sc) => {
            let result = match &dir {
                Some(d) => std::fs::create_dir_all(d).map_err(|e| CliError::Io(format!("{}: {e}", d.display()))),
                None => Ok(()),
            }
            .and_then(|()| runner(&sc, &out));
            (Some(sc), result)
        }
        Err(e) => (None, Err(e)),
    };
    let (mut value, mut outcome) = report(command, path, loaded.as_ref(), &result);
    if let (Some(sc), Some(d)) = (&loaded, &dir) {
        let p = d.join(format!("{}.report.json", sc.name));
        let text = serde_json::to_string_pretty(&value).expect("report serializes") + "\n";
        if let Err(e) = output::write_text(&p, &text) {
            value["error"] = json!(e.to_string());
            value["status"] = json!(Outcome::Error.label());
            outcome = Outcome::Error;
        }
    }
    (value, outcome)
}

fn thread_pool() -> Result<rayon::ThreadPool, String> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("CFSYNC_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("CFSYNC_THREADS must be a positive integer, got {v:?}"))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| e.to_string())
}

fn check_all(common: &Common) -> (Value, Outcome) {
    let dir = &common.scenario;
    let mut paths: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect(),
        Err(e) => {
            let err: Result<Section, CliError> = Err(CliError::Io(format!("{}: {e}", dir.display())));
            return report("check", dir, None, &err);
        }
    };
    paths.sort();
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(e) => return report("check", dir, None, &Err(CliError::Input(e))),
    };
    let results: Vec<(Value, Outcome)> = pool.install(|| {
        paths
            .par_iter()
            .map(|p| run_one("check", p, common, common.out.clone(), commands::check))
            .collect()
    });
    let outcome = results.iter().map(|r| r.1).max().unwrap_or(Outcome::Pass);
    let value = json!({
        "tool": "cfsync",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "check --all",
        "source": dir.display().to_string(),
        "status": outcome.label(),
        "scenarios": results.into_iter().map(|r| r.0).collect::<Vec<_>>(),
    });
    (value, outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (value, outcome) = match &cli.command {
        Command::AnalyzeFast(c) => run_one("analyze-fast", &c.scenario, c, c.out.clone(), |sc, _| {
            commands::analyze_fast(sc)
        }),
        Command::AnalyzeSlow(c) => run_one("analyze-slow", &c.scenario, c, c.out.clone(), |sc, _| {
            commands::analyze_slow(sc)
        }),
        Command::Simulate(c) => run_one("simulate", &c.scenario, c, c.out.clone(), commands::simulate_scenario),
        Command::Nyquist(c) => run_one("nyquist", &c.scenario, c, c.out.clone(), commands::nyquist),
        Command::Check { common, all: false } => {
            run_one("check", &common.scenario, common, common.out.clone(), commands::check)
        }
        Command::Check { common, all: true } => check_all(common),
    };
    println!("{}", serde_json::to_string_pretty(&value).expect("report serializes"));
    if let Some(err) = value.get("error").and_then(Value::as_str) {
        eprintln!("cfsync: {err}");
    }
    ExitCode::from(outcome.code())
}
