//! `ler`: run scenarios, verify logs, report on the workspace and serve live
//! sessions.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0  | success |
//! | 1  | other failure (unreadable config file, cannot bind or write) |
//! | 2  | `simulate`: the script is invalid |
//! | 3  | `replay`: telemetry diverged from the log |
//! | 4  | `replay`: the log is unreadable, corrupt or not runnable |
//! | 64 | usage error |

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ler_core::command::GrammarConfig;
use ler_core::kinematics::JointLimits;
use ler_core::scene::SceneDescription;
use ler_core::service::{replay, run_scenario, ScenarioScript, SessionConfig, SessionLog, Verdict};
use ler_server::{serve, ServerConfig};

const EXIT_SCRIPT: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_BAD_LOG: u8 = 4;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "ler",
    version,
    about = "Simulator and control stack for a 3-DOF endoscope holder"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario script on the logical clock and write its session log.
    Simulate {
        #[arg(long, value_name = "FILE")]
        script: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Re-run a session log and check every telemetry frame byte for byte.
    Replay {
        #[arg(long, value_name = "FILE")]
        log: PathBuf,
    },
    /// Serve a live session over TCP and WebSocket until interrupted.
    Serve {
        #[arg(long, value_name = "ADDR", default_value = "127.0.0.1:7878")]
        listen: String,
        /// Scene description sent to clients in the greeting.
        #[arg(long, value_name = "FILE")]
        scene: Option<PathBuf>,
        /// Command grammar file.
        #[arg(long, value_name = "FILE")]
        grammar: Option<PathBuf>,
        /// Joint limits JSON file.
        #[arg(long, value_name = "FILE")]
        limits: Option<PathBuf>,
        /// Write the session log here on shutdown.
        #[arg(long, value_name = "FILE")]
        record: Option<PathBuf>,
    },
    /// Report workspace volume, cavity coverage and trocar clearance.
    Workspace {
        /// Joint limits JSON file.
        #[arg(long, value_name = "FILE")]
        limits: Option<PathBuf>,
        /// Scene description file: cavity, trocars and base.
        #[arg(long, value_name = "FILE")]
        cavity: Option<PathBuf>,
        #[arg(long, value_name = "N", default_value_t = report::DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, value_name = "S", default_value_t = 0)]
        seed: u64,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
        Err(e) => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Simulate { script, out } => simulate(&script, &out),
        Command::Replay { log } => replay_log(&log),
        Command::Serve {
            listen,
            scene,
            grammar,
            limits,
            record,
        } => {
            let mut session = SessionConfig::default();
            if let Some(path) = grammar {
                session.grammar = GrammarConfig::parse_file(&read(&path)?)
                    .with_context(|| path.display().to_string())?;
            }
            if let Some(path) = limits {
                session.controller.limits = load_limits(&path)?;
            }
            let scene = scene.map(|p| load_scene(&p)).transpose()?;
            serve_until_interrupted(
                ServerConfig {
                    listen,
                    session,
                    scene,
                    tick_period: None,
                },
                record.as_deref(),
            )
        }
        Command::Workspace {
            limits,
            cavity,
            samples,
            seed,
            json,
        } => {
            let limits = limits
                .map(|p| load_limits(&p))
                .transpose()?
                .unwrap_or_default();
            let scene = cavity
                .map(|p| load_scene(&p))
                .transpose()?
                .unwrap_or_default();
            let report = report::WorkspaceReport::compute(&limits, &scene, samples, seed)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report.to_json())?);
            } else {
                print!("{}", report.to_text());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_limits(path: &Path) -> Result<JointLimits> {
    let limits: JointLimits =
        serde_json::from_str(&read(path)?).with_context(|| path.display().to_string())?;
    limits
        .validate()
        .with_context(|| path.display().to_string())?;
    Ok(limits)
}

fn load_scene(path: &Path) -> Result<SceneDescription> {
    SceneDescription::from_json(&read(path)?).with_context(|| path.display().to_string())
}

fn simulate(script: &Path, out: &Path) -> Result<ExitCode> {
    let log = match ScenarioScript::load(script).and_then(|s| run_scenario(&s)) {
        Ok(log) => log,
        Err(e) => {
            eprintln!("error: {}: {e}", script.display());
            return Ok(ExitCode::from(EXIT_SCRIPT));
        }
    };
    fs::write(out, log.to_text()).with_context(|| format!("cannot write {}", out.display()))?;
    println!(
        "{} ticks, {} inputs, {} frames -> {}",
        log.header.ticks,
        log.inputs().count(),
        log.telemetry().count(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn replay_log(path: &Path) -> Result<ExitCode> {
    let verdict = fs::read_to_string(path)
        .map_err(|e| e.to_string())
        .and_then(|text| SessionLog::parse(&text).map_err(|e| e.to_string()))
        .and_then(|log| replay(&log).map_err(|e| e.to_string()));
    match verdict {
        Ok(Verdict::Ok { frames }) => {
            println!("OK: {frames} frames identical");
            Ok(ExitCode::SUCCESS)
        }
        Ok(Verdict::Diverged(d)) => {
            println!("DIVERGED: {d}");
            Ok(ExitCode::from(EXIT_DIVERGED))
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            Ok(ExitCode::from(EXIT_BAD_LOG))
        }
    }
}

fn serve_until_interrupted(config: ServerConfig, record: Option<&Path>) -> Result<ExitCode> {
    let (tx, rx) = mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = tx.send(());
    })
    .context("cannot install the interrupt handler")?;
    let handle = serve(config)?;
    println!("listening on {}", handle.addr());
    let _ = rx.recv();
    let log = handle.shutdown();
    eprintln!("stopped after {} ticks", log.header.ticks);
    if let Some(path) = record {
        fs::write(path, log.to_text())
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}
