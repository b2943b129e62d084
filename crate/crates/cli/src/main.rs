use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use ditto_core::config::DittoConfig;
use ditto_core::harness::{
    build_engine, reference_scenarios, replay, run_with, ReplayVerdict, ResponderKind, Scenario, ScenarioBuilder,
    Services, SessionRecord,
};
use ditto_core::journal::Journal;
use ditto_core::memory::load_context;
use ditto_gateway::{ClockMode, Gateway, GatewayOptions};

#[derive(Parser)]
#[command(name = "ditto", version, about = "Hallway agent engine and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResponderArg {
    Scripted,
    External,
}

impl From<ResponderArg> for ResponderKind {
    fn from(r: ResponderArg) -> Self {
        match r {
            ResponderArg::Scripted => ResponderKind::Scripted,
            ResponderArg::External => ResponderKind::External,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Live,
    Lockstep,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file in lockstep and print the journal.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the session record (JSON) here.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Write the journal as JSON lines here.
        #[arg(long)]
        journal: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "scripted")]
        responder: ResponderArg,
    },
    /// Re-run a session record and compare its output.
    Replay {
        record: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve the WebSocket gateway.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8787")]
        bind: String,
        #[arg(long, value_enum, default_value = "live")]
        mode: ModeArg,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scenario whose registry, first day and script set up the engine.
        /// Its timeline is ignored.
        #[arg(long)]
        setup: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "scripted")]
        responder: ResponderArg,
        /// Session journal file; appended to if it exists.
        #[arg(long)]
        journal: Option<PathBuf>,
        /// On shutdown, re-run the received inputs and write a session record.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Check a context document.
    ValidateContext { file: PathBuf },
    /// Write the built-in reference scenarios as scenario files.
    ExportReference { dir: PathBuf },
}

fn load_config(path: Option<&Path>) -> Result<DittoConfig> {
    match path {
        Some(p) => DittoConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(DittoConfig::default()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            scenario,
            config,
            record,
            journal,
            responder,
        } => {
            let config = load_config(config.as_deref())?;
            let scenario = Scenario::load(&scenario).with_context(|| format!("loading {}", scenario.display()))?;
            let services = Services::from_config(&config, &scenario, responder.into())?;
            let rec = run_with(&scenario, &config, services)?;
            for e in &rec.journal {
                println!("{:>4} {:>10} {}", e.sequence_no, e.timestamp, e.rendered);
            }
            for r in &rec.rejected {
                eprintln!("rejected event {}: {} ({})", r.index, r.code, r.detail);
            }
            println!("journal_hash {}", rec.journal_hash);
            println!("transcript_hash {}", rec.transcript_hash);
            println!("record_hash {}", rec.record_hash);
            if let Some(path) = journal {
                let mut text = rec.journal_lines().join("\n");
                text.push('\n');
                std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            }
            if let Some(path) = record {
                rec.save(&path)?;
            }
            if let Some(expected) = scenario.expected.as_ref().and_then(|e| e.transcript_hash.as_ref()) {
                if expected != &rec.transcript_hash {
                    eprintln!("transcript hash differs from the expected {expected}");
                    return Ok(ExitCode::from(1));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { record, config } => {
            let config = load_config(config.as_deref())?;
            let rec = SessionRecord::load(&record).with_context(|| format!("loading {}", record.display()))?;
            let verdict = replay(&rec, &config)?;
            println!("{}", serde_json::to_string(&verdict)?);
            Ok(match verdict {
                ReplayVerdict::Pass => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            })
        }
        Command::Serve {
            bind,
            mode,
            config,
            setup,
            responder,
            journal,
            record,
        } => {
            let config = load_config(config.as_deref())?;
            let setup = match setup {
                Some(p) => Scenario::load(&p)?,
                None => ScenarioBuilder::new("served").build(),
            };
            serve(&bind, mode, config, setup, responder.into(), journal, record)
        }
        Command::ValidateContext { file } => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            match load_context(&text) {
                Ok(ctx) => {
                    println!("ok: {} relationship entries", ctx.social_relationships.len());
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    println!("invalid: {e}");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::ExportReference { dir } => {
            std::fs::create_dir_all(&dir)?;
            for s in reference_scenarios() {
                let path = dir.join(format!("{}.json", s.name));
                std::fs::write(&path, s.to_json())?;
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn serve(
    bind: &str,
    mode: ModeArg,
    config: DittoConfig,
    setup: Scenario,
    responder: ResponderKind,
    journal: Option<PathBuf>,
    record: Option<PathBuf>,
) -> Result<ExitCode> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .init();
    if record.is_some() && responder != ResponderKind::Scripted {
        bail!("--record needs the scripted responder so the session can be re-run");
    }
    let start = setup.days[0].start_ms;
    let journal = match &journal {
        Some(p) => Journal::open(p, start)?,
        None => Journal::started(start),
    };
    let services = Services::from_config(&config, &setup, responder)?;
    let engine = build_engine(&setup, &config, services, journal)?;
    let mode = match mode {
        ModeArg::Live => ClockMode::Live,
        ModeArg::Lockstep => ClockMode::Lockstep,
    };
    let gateway = Gateway::start(engine, GatewayOptions::from_config(&config, mode));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind).await?;
        eprintln!("listening on ws://{}/ws", listener.local_addr()?);
        gateway
            .serve(listener, async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    let finished = gateway.stop();
    if let Some(path) = record {
        let mut scenario = setup;
        scenario.name = format!("{}-session", scenario.name);
        scenario.end_ms = Some(finished.engine.clock());
        scenario.timeline = finished.inputs;
        let rec = run_with(&scenario, &config, Services::scripted(&scenario)?)?;
        rec.save(&path)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}
