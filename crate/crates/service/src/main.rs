use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use mirror_core::episode::{EpisodeConfig, Mode};
use mirror_core::fit::render_side_by_side;
use mirror_core::fixtures;
use mirror_service::service::EpisodeRequest;
use mirror_service::{api, Service, ServiceConfig, ServiceError};

#[derive(Parser)]
#[command(name = "mirror", version, about = "Context-aware decision episodes over a persistent profile graph")]
struct Cli {
    /// Data directory holding the log and stored episodes.
    #[arg(long, env = "MIRROR_DATA_DIR", default_value = "mirror-data", global = true)]
    data_dir: PathBuf,
    /// Episode config file (JSON); built-in defaults when absent.
    #[arg(long, env = "MIRROR_CONFIG", global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Append a line-delimited event log (the bundled scenario if no path is given).
    Ingest {
        log: Option<PathBuf>,
        /// Reject the whole batch if any event is bad.
        #[arg(long)]
        strict: bool,
    },
    /// Run and store one decision episode; prints the episode document.
    Episode {
        #[arg(long, default_value = "context_rich")]
        mode: String,
        #[arg(long)]
        framework: Option<PathBuf>,
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the ranking of a fresh episode as a table.
    Rank {
        #[arg(long, default_value = "context_rich")]
        mode: String,
    },
    /// Compare a human evaluation with a machine ranking.
    Fit {
        #[arg(long, default_value = "ceo")]
        human: String,
        #[arg(long, default_value = "context_rich")]
        machine: String,
        /// Also print the two rankings side by side.
        #[arg(long)]
        side_by_side: bool,
    },
    /// Verify and replay the log; prints the resulting snapshot hash.
    Replay,
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "MIRROR_PORT", default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

fn read(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.clone(),
        source,
    })
}

fn parse_mode(s: &str) -> Result<Mode, CliError> {
    s.parse().map_err(|_| CliError::Usage(format!("unknown mode `{s}` (context_rich|context_free)")))
}

fn open(cli: &Cli) -> Result<Service, CliError> {
    let mut config = ServiceConfig::new(&cli.data_dir);
    if let Some(path) = &cli.config {
        config.episode = serde_json::from_str::<EpisodeConfig>(&read(path)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    Ok(Service::open(config)?)
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

fn run(cli: Cli) -> Result<(), CliError> {
    let service = open(&cli)?;
    match cli.command {
        Command::Ingest { log, strict } => {
            let text = match &log {
                Some(path) => read(path)?,
                None => fixtures::EVENTS.to_string(),
            };
            let report = service.ingest(&text, strict)?;
            print_json(&report);
            eprintln!("snapshot {}", service.snapshot_hash());
        }
        Command::Episode {
            mode,
            framework,
            profiles,
            seed,
        } => {
            let framework = framework
                .map(|p| read(&p).and_then(|t| serde_json::from_str(&t).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))))
                .transpose()?;
            let profiles = profiles
                .map(|p| {
                    read(&p).and_then(|t| {
                        mirror_core::ingest::load_profiles(&t).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
                    })
                })
                .transpose()?;
            let request = EpisodeRequest {
                mode: Some(parse_mode(&mode)?),
                seed,
                framework,
                profiles,
                signals: None,
            };
            let episode = service.run_episode(&request)?;
            println!("{}", episode.to_document());
        }
        Command::Rank { mode } => {
            let request = EpisodeRequest {
                mode: Some(parse_mode(&mode)?),
                ..Default::default()
            };
            let episode = service.run_episode(&request)?;
            println!("{:<5} {:<14} {:>7} {:>7} {:>8}  gate", "rank", "candidate", "total", "comp", "context");
            for row in &episode.ranking {
                let gate = match &row.gate {
                    mirror_core::episode::GateResult::Passed => "passed".to_string(),
                    mirror_core::episode::GateResult::Warned { confidence, .. } => format!("warned ({confidence:.3})"),
                    mirror_core::episode::GateResult::Disqualified { confidence, .. } => {
                        format!("disqualified ({confidence:.3})")
                    }
                };
                println!(
                    "{:<5} {:<14} {:>7.4} {:>7.4} {:>+8.4}  {gate}",
                    row.rank, row.candidate, row.total, row.competence, row.context_adjustment
                );
            }
            println!("recommendation: {}  (episode {})", episode.recommendation, episode.id);
        }
        Command::Fit {
            human,
            machine,
            side_by_side,
        } => {
            let report = service.fit(&human, &machine)?;
            print!("{}", report.to_table());
            if side_by_side {
                let h = service.evaluation(&human)?;
                let m = service.evaluation(&machine)?;
                println!();
                print!("{}", render_side_by_side(&[&h, &m]));
            }
        }
        Command::Replay => {
            println!("entries  {}", service.log_len());
            println!("version  {}", service.snapshot().version());
            println!("snapshot {}", service.snapshot_hash());
        }
        Command::Serve { port } => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Usage(e.to_string()))?;
            runtime.block_on(async move {
                let app = api::router(Arc::new(service));
                let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
                    .await
                    .map_err(|e| CliError::Usage(format!("bind {port}: {e}")))?;
                eprintln!("listening on {}", listener.local_addr().map_err(|e| CliError::Usage(e.to_string()))?);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
                    .map_err(|e| CliError::Usage(e.to_string()))
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
