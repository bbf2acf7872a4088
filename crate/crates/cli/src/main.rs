//! `teamsim`: serve a session over websocket, replay a transcript, or run
//! the scripted task checks headless.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use teamsim_core::session::{self, BackendSpec, SessionConfig};
use teamsim_core::BackendParams;

#[derive(Parser)]
#[command(
    name = "teamsim",
    version,
    about = "Simulated robot team steered through LLM agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a live session and serve it over websocket at /ws.
    Serve(ServeArgs),
    /// Print the events of a transcript, optionally paced by sim time.
    Replay {
        transcript: PathBuf,
        /// Wait between events as long as sim time passed, divided by speed.
        #[arg(long)]
        realtime: bool,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Blank wall_time so outputs of two runs can be diffed.
        #[arg(long)]
        mask_wall_time: bool,
    },
    /// Run scripted scenarios at fast-forward; fails if any goal is unmet.
    Check {
        /// A suite file listing scenarios, or a single scenario.
        script: PathBuf,
        /// Write one transcript per scenario here.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        tick_ms: u64,
        #[arg(long, default_value_t = 6.0)]
        door_open_s: f64,
    },
}

#[derive(clap::Args)]
struct ServeArgs {
    /// `scripted:<rules.json>` or `remote`.
    #[arg(long, default_value = "remote")]
    backend: String,
    #[arg(long, default_value = "https://api.openai.com/v1/chat/completions")]
    endpoint: String,
    #[arg(long, default_value = "gpt-4-0613")]
    model: String,
    #[arg(long, default_value_t = 0.2)]
    temperature: f64,
    #[arg(long, default_value_t = 8765)]
    port: u16,
    #[arg(long, default_value = "logs")]
    log_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    tick_ms: u64,
    #[arg(long, default_value_t = 6.0)]
    door_open_s: f64,
    #[arg(long, default_value = "English")]
    language: String,
}

impl ServeArgs {
    fn config(&self) -> Result<SessionConfig> {
        let backend = match self.backend.split_once(':') {
            Some(("scripted", path)) if !path.is_empty() => BackendSpec::Scripted(path.into()),
            None if self.backend == "remote" => BackendSpec::Remote {
                endpoint: self.endpoint.clone(),
                params: BackendParams {
                    model: self.model.clone(),
                    temperature: self.temperature,
                    ..BackendParams::default()
                },
            },
            _ => bail!(
                "--backend must be 'remote' or 'scripted:<file>', got '{}'",
                self.backend
            ),
        };
        Ok(SessionConfig {
            backend,
            tick_ms: self.tick_ms,
            door_open_s: self.door_open_s,
            language: self.language.clone(),
            log_dir: Some(self.log_dir.clone()),
            port: self.port,
            ..SessionConfig::default()
        })
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

async fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Cmd::Serve(args) => {
            let config = args.config()?;
            session::serve(config).await?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Replay {
            transcript,
            realtime,
            speed,
            mask_wall_time,
        } => replay(&transcript, realtime, speed, mask_wall_time).await,
        Cmd::Check {
            script,
            log_dir,
            tick_ms,
            door_open_s,
        } => check(&script, log_dir, tick_ms, door_open_s).await,
    }
}

async fn replay(
    path: &std::path::Path,
    realtime: bool,
    speed: f64,
    mask: bool,
) -> Result<ExitCode> {
    if !(speed.is_finite() && speed > 0.0) {
        bail!("--speed must be positive");
    }
    let events = session::read_transcript(path)?;
    let mut last_time = events.first().map(|e| e.sim_time).unwrap_or_default();
    for (i, mut event) in events.into_iter().enumerate() {
        if event.seq != i as u64 + 1 {
            bail!(
                "transcript is not gap-free: line {} has seq {}",
                i + 1,
                event.seq
            );
        }
        if realtime {
            let gap = (event.sim_time - last_time).max(0.0) / speed;
            tokio::time::sleep(Duration::from_secs_f64(gap)).await;
        }
        last_time = event.sim_time;
        if mask {
            event.wall_time.clear();
        }
        println!("{}", serde_json::to_string(&event)?);
    }
    Ok(ExitCode::SUCCESS)
}

async fn check(
    script: &std::path::Path,
    log_dir: Option<PathBuf>,
    tick_ms: u64,
    door_open_s: f64,
) -> Result<ExitCode> {
    let plan =
        session::load_check(script).with_context(|| format!("loading {}", script.display()))?;
    let base = SessionConfig {
        backend: BackendSpec::Scripted(script.to_path_buf()),
        tick_ms,
        door_open_s,
        log_dir,
        ..SessionConfig::default()
    };
    let started = Instant::now();
    let mut failed = 0;
    for scenario in &plan.scenarios {
        let report = session::run_scenario(scenario, &base).await?;
        let verdict = if report.passed() { "PASS" } else { "FAIL" };
        let outcome = if report.goal_reached {
            "goal reached"
        } else {
            "goal not reached"
        };
        println!(
            "{verdict} {} (task {}): {outcome} at {:.1} s sim time",
            report.name, report.task, report.sim_time
        );
        if let Some(p) = &report.transcript {
            println!("     transcript {}", p.display());
        }
        if !report.passed() {
            failed += 1;
        }
    }
    println!(
        "{} of {} scenarios passed in {:.2} s",
        plan.scenarios.len() - failed,
        plan.scenarios.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
