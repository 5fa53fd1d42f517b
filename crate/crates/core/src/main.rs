use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use multicam::bench::{run_suite, BenchConfig, BenchError, ReportFormat, SubsetMode};
use multicam::session::{ClockMode, Session, SessionConfig, SessionError};
use multicam::switching::SwitchStrategy;

#[derive(Parser)]
#[command(name = "multicam", version, about = "Multi-camera video chat simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measurement suite.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
    /// Serve a live session over HTTP and WebSocket.
    #[cfg(feature = "gateway")]
    Serve {
        /// Session config (TOML); the built-in two-peer session if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: std::net::SocketAddr,
        /// Frames per second pushed to each viewer.
        #[arg(long, default_value_t = 10.0)]
        stream_fps: f64,
    },
    /// Run a session on the virtual clock and print its event log as JSON
    /// lines.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        duration_ms: u64,
        /// Leave out per-frame events.
        #[arg(long)]
        no_frames: bool,
    },
    /// Print a sample config.
    ExampleConfig {
        #[arg(value_enum)]
        kind: ConfigKind,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run every camera subset and write a report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        #[arg(long, value_enum)]
        subsets: Option<SubsetArg>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    All,
    One,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum SubsetArg {
    All,
    Single,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConfigKind {
    Session,
    Bench,
}

/// Errors that map to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct ConfigError(String);

fn bench_run(
    config: PathBuf,
    out: PathBuf,
    strategy: Option<StrategyArg>,
    subsets: Option<SubsetArg>,
    format: FormatArg,
) -> anyhow::Result<()> {
    let mut cfg = BenchConfig::load(&config).map_err(|e| ConfigError(e.to_string()))?;
    if let Some(s) = strategy {
        cfg.strategies = match s {
            StrategyArg::All => vec![SwitchStrategy::AllAtOnce],
            StrategyArg::One => vec![SwitchStrategy::OneAtATime],
            StrategyArg::Both => vec![SwitchStrategy::AllAtOnce, SwitchStrategy::OneAtATime],
        };
    }
    if let Some(s) = subsets {
        cfg.subsets = match s {
            SubsetArg::All => SubsetMode::All,
            SubsetArg::Single => SubsetMode::Single,
        };
    }
    let report = match run_suite(&cfg) {
        Ok(r) => r,
        Err(BenchError::Config(e)) => return Err(ConfigError(e).into()),
        Err(e) => return Err(e.into()),
    };
    let format = match format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Text => ReportFormat::Text,
    };
    let path = report
        .write_to(&out, format)
        .with_context(|| format!("writing report to {}", out.display()))?;
    eprintln!("{} runs written to {}", report.records.len(), path.display());
    Ok(())
}

fn load_session_config(path: Option<PathBuf>) -> anyhow::Result<SessionConfig> {
    match path {
        Some(p) => SessionConfig::load(&p).map_err(|e| ConfigError(e.to_string()).into()),
        None => Ok(SessionConfig::default()),
    }
}

fn new_session(cfg: SessionConfig) -> anyhow::Result<Session> {
    Session::new(cfg).map_err(|e| match e {
        SessionError::Config(m) => ConfigError(m).into(),
        other => other.into(),
    })
}

fn simulate(config: Option<PathBuf>, duration_ms: u64, no_frames: bool) -> anyhow::Result<()> {
    let mut cfg = load_session_config(config)?;
    cfg.clock = ClockMode::Deterministic;
    let mut session = new_session(cfg)?;
    session.step(duration_ms * 1000)?;
    for ev in session.events() {
        if no_frames && matches!(ev.kind, multicam::session::EventKind::FrameEmitted { .. }) {
            continue;
        }
        println!("{}", serde_json::to_string(ev)?);
    }
    Ok(())
}

#[cfg(feature = "gateway")]
fn serve(config: Option<PathBuf>, bind: std::net::SocketAddr, stream_fps: f64) -> anyhow::Result<()> {
    use multicam::gateway::{GatewayError, GatewayOptions};

    let mut cfg = load_session_config(config)?;
    cfg.clock = ClockMode::Wall;
    if cfg.log_limit.is_none() {
        cfg.log_limit = Some(100_000);
    }
    let session = new_session(cfg)?;
    let opts = GatewayOptions {
        stream_fps,
        ..GatewayOptions::default()
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let gw = multicam::gateway::Gateway::start(session, bind, opts).await?;
        eprintln!("listening on http://{}", gw.local_addr());
        gw.wait().await?;
        Ok::<_, GatewayError>(())
    })?;
    Ok(())
}

fn example_config(kind: ConfigKind) {
    match kind {
        ConfigKind::Session => print!("{}", SessionConfig::default().to_toml_string()),
        ConfigKind::Bench => print!("{}", include_str!("../configs/bench.toml")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench {
            command:
                BenchCommand::Run {
                    config,
                    out,
                    strategy,
                    subsets,
                    format,
                },
        } => bench_run(config, out, strategy, subsets, format),
        #[cfg(feature = "gateway")]
        Command::Serve {
            config,
            bind,
            stream_fps,
        } => serve(config, bind, stream_fps),
        Command::Simulate {
            config,
            duration_ms,
            no_frames,
        } => simulate(config, duration_ms, no_frames),
        Command::ExampleConfig { kind } => {
            example_config(kind);
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<ConfigError>() => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
