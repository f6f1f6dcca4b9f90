//! `kg2data` command line.
//!
//! Usage errors exit with status 1 and runtime failures with status 2.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{ArgAction, Parser, Subcommand};

use super::fixtures::record_fixtures;
use super::service::{router, ServiceState};
use super::{make_gateway, parse_kinds, Config, InterfaceError, LlmSource, Workspace};
use crate::agent::{trace_id, tracelog, Agent, Timer};
use crate::catalog::server::serve_catalog;
use crate::eval::pairs::generate_pairs;
use crate::eval::{cases_to_jsonl, run_ablation};
use crate::kg::build_graph;
use crate::kg::snapshot::write_snapshot;
use crate::corpus::load_corpus;
use crate::memory::MemoryKind;

#[derive(Debug, Parser)]
#[command(name = "kg2data", version, about = "Knowledge-graph-augmented agent for meteorological data APIs")]
pub struct Cli {
    /// TOML configuration file; built-in data is used when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the virtual APIs over HTTP.
    ServeApis {
        #[arg(long, default_value = "127.0.0.1:8000")]
        bind: SocketAddr,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build the knowledge graph from a corpus and write its snapshot.
    BuildKg {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "replay")]
        llm: LlmSource,
        /// Defaults to `cassettes/kg_build.jsonl`.
        #[arg(long)]
        cassette: Option<PathBuf>,
    },
    /// Generate instruction cases for every API.
    GenPairs {
        #[arg(long, default_value_t = 2)]
        per_api: usize,
        /// Writes JSONL here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "replay")]
        llm: LlmSource,
        /// Defaults to `cassettes/pairs.jsonl`.
        #[arg(long)]
        cassette: Option<PathBuf>,
    },
    /// Answer questions read from stdin, one per line, printing each step.
    Chat {
        #[arg(long, default_value = "kg")]
        memory: MemoryKind,
        #[arg(long, default_value = "replay")]
        llm: LlmSource,
        /// Defaults to the memory kind's gold cassette.
        #[arg(long)]
        cassette: Option<PathBuf>,
        /// Appends each trace to this JSONL log.
        #[arg(long)]
        trace_log: Option<PathBuf>,
    },
    /// Run the ablation and write the report.
    Eval {
        #[arg(long, default_value = "kg,vector,null")]
        systems: String,
        /// Directory holding `gold/{kind}.jsonl` cassettes.
        #[arg(long)]
        cassettes: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to `reports/latest.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "replay")]
        llm: LlmSource,
    },
    /// Print the results table of a written report.
    Report {
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
    /// Serve the chat session API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long, default_value = "replay")]
        llm: LlmSource,
    },
    /// Re-record the shipped cassettes and graph snapshot with the scripted model.
    RecordFixtures,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config, InterfaceError> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn execute(cli: Cli) -> Result<(), InterfaceError> {
    let mut config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::ServeApis { bind, seed } => {
            let ws = Workspace::load(config.clone())?;
            let seed = seed.unwrap_or(config.seed);
            runtime()?.block_on(async move {
                let handle = serve_catalog(ws.catalog.clone(), bind, seed).await?;
                println!("serving {} apis on {}", ws.catalog.len(), handle.base_url());
                let _ = tokio::signal::ctrl_c().await;
                handle.shutdown().await;
                Ok(())
            })
        }
        Command::BuildKg { corpus, out, llm, cassette } => {
            let ws = Workspace::load(config.clone())?;
            let docs = match corpus {
                Some(dir) => load_corpus(dir)?,
                None => ws.docs.clone(),
            };
            let cassette = cassette.unwrap_or_else(|| config.path(&config.cassettes).join("kg_build.jsonl"));
            let gateway = make_gateway(&config, llm, &cassette)?;
            let graph = build_graph(&docs, &gateway, &ws.curation, &config.kg)?;
            gateway.save()?;
            let out = out.unwrap_or_else(|| config.path(&config.graph));
            write_snapshot(&graph, &out)?;
            println!(
                "{} entities, {} triples, {} levels written to {}",
                graph.entity_count(),
                graph.edge_count(),
                graph.hierarchy.as_ref().map_or(0, |h| h.level_count()),
                out.display()
            );
            Ok(())
        }
        Command::GenPairs { per_api, out, llm, cassette } => {
            let ws = Workspace::load(config.clone())?;
            let cassette = cassette.unwrap_or_else(|| config.path(&config.cassettes).join("pairs.jsonl"));
            let gateway = make_gateway(&config, llm, &cassette)?;
            let cases = generate_pairs(&ws.catalog, &gateway, per_api)?;
            gateway.save()?;
            let text = cases_to_jsonl(&cases);
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Chat { memory, llm, cassette, trace_log } => {
            let ws = Workspace::load(config.clone())?;
            let cassette = cassette.unwrap_or_else(|| config.gold_cassette(memory));
            let gateway = Arc::new(make_gateway(&config, llm, &cassette)?);
            let agent = ws.agent(memory, gateway.clone())?.with_timer(Timer::Wall);
            chat(&agent, trace_log.as_deref())?;
            gateway.save()?;
            Ok(())
        }
        Command::Eval { systems, cassettes, seed, out, llm } => {
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let kinds = parse_kinds(&systems).map_err(InterfaceError::Config)?;
            if kinds.is_empty() {
                return Err(InterfaceError::Config("no systems given".into()));
            }
            let ws = Workspace::load(config.clone())?;
            let cases = ws.cases()?;
            let cassettes = cassettes.unwrap_or_else(|| config.path(&config.cassettes));
            let setup = ws.ablation_setup(&kinds, llm, &cassettes)?;
            let run = run_ablation(&cases, &kinds, &setup)?;
            for gateway in setup.gateways.values() {
                gateway.save()?;
            }
            let out = out.unwrap_or_else(|| config.report_path());
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&out, run.to_json())?;
            print!("{}", run.table());
            Ok(())
        }
        Command::Report { input } => {
            let path = input.unwrap_or_else(|| config.report_path());
            let text = std::fs::read_to_string(&path).map_err(|e| InterfaceError::Load(format!("{}: {e}", path.display())))?;
            let doc: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| InterfaceError::Load(format!("{}: {e}", path.display())))?;
            let table = doc
                .get("table")
                .and_then(|t| t.as_str())
                .ok_or_else(|| InterfaceError::Load(format!("{}: not a report", path.display())))?;
            print!("{table}");
            Ok(())
        }
        Command::Serve { port, host, llm } => {
            let ws = Workspace::load(config.clone())?;
            let mut agents = BTreeMap::new();
            for kind in MemoryKind::ALL {
                let gateway = Arc::new(make_gateway(&config, llm, &config.gold_cassette(kind))?);
                match ws.agent(kind, gateway) {
                    Ok(agent) => {
                        agents.insert(kind, Arc::new(agent.with_timer(Timer::Wall)));
                    }
                    Err(e) => log::warn!("{kind} sessions unavailable: {e}"),
                }
            }
            let reports = config.path(&config.reports);
            let state = ServiceState::new(agents, config.report_path(), Some(reports.join("traces")));
            let app = router(state);
            runtime()?.block_on(async move {
                let listener = tokio::net::TcpListener::bind(SocketAddr::new(host, port)).await?;
                println!("session api on http://{}", listener.local_addr()?);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                Ok(())
            })
        }
        Command::RecordFixtures => {
            let summary = record_fixtures(&config)?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            Ok(())
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, InterfaceError> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn chat(agent: &Agent, trace_log: Option<&Path>) -> Result<(), InterfaceError> {
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    for (n, line) in stdin.lock().lines().enumerate() {
        let query = line?;
        let query = query.trim();
        if query.is_empty() {
            continue;
        }
        let id = trace_id(agent.memory_kind(), query, &format!("cli#{}", n + 1));
        let trace = agent.run_with(query, &id, &mut |step, _| {
            let _ = writeln!(stdout, "{}", step.render());
            let _ = stdout.flush();
        });
        if let Some(err) = &trace.error {
            writeln!(stdout, "[{}] {err}", trace.status.as_str())?;
        }
        writeln!(stdout)?;
        if let Some(path) = trace_log {
            tracelog::append(path, &trace, agent.config())?;
        }
    }
    Ok(())
}
