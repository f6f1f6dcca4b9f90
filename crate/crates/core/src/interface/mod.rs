//! Operator surface: configuration, collaborator loading, the CLI and the
//! HTTP session service.

pub mod cli;
pub mod fixtures;
pub mod service;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Agent, AgentConfig};
use crate::catalog::{load_catalog, Catalog};
use crate::corpus::{load_corpus, Document};
use crate::eval::{load_cases, AblationSetup, InstructionCase};
use crate::gateway::{Cassette, ChatBackend, Gateway, RemoteBackend, RemoteConfig};
use crate::kg::snapshot::read_snapshot;
use crate::kg::{Curation, KgConfig, KnowledgeGraph};
use crate::memory::{KgMemory, MemoryBackend, MemoryKind, NullMemory, VectorMemory, DEFAULT_HOPS, DEFAULT_TOP_K};
use crate::simulate::ScriptedLlm;
use crate::tools::{ApiClient, HttpApiClient, LocalApiClient, ToolRegistry};

/// Built-in data directory of this crate.
pub const DEFAULT_DATA_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

#[derive(Debug, Error)]
pub enum InterfaceError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Load(String),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Kg(#[from] crate::kg::KgError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
    #[error(transparent)]
    Agent(#[from] crate::agent::AgentError),
    #[error(transparent)]
    Tools(#[from] crate::tools::ToolError),
    #[error(transparent)]
    Memory(#[from] crate::memory::MemoryError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Settings read from a TOML file. Relative paths resolve against `data_dir`,
/// which itself resolves against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub data_dir: PathBuf,
    pub catalog: PathBuf,
    pub cases: PathBuf,
    pub corpus: PathBuf,
    pub aliases: PathBuf,
    pub synonyms: PathBuf,
    pub graph: PathBuf,
    pub cassettes: PathBuf,
    pub reports: PathBuf,
    pub seed: u64,
    /// Base URL of a running catalog server; in-process answers when unset.
    pub api_server: Option<String>,
    pub llm: RemoteConfig,
    pub agent: AgentConfig,
    pub kg: KgConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from(DEFAULT_DATA_DIR),
            catalog: "catalog.json".into(),
            cases: "cases.jsonl".into(),
            corpus: "corpus".into(),
            aliases: "kg/aliases.tsv".into(),
            synonyms: "kg/synonyms.tsv".into(),
            graph: "kg/graph.jsonl".into(),
            cassettes: "cassettes".into(),
            reports: "reports".into(),
            seed: 7,
            api_server: None,
            llm: RemoteConfig::default(),
            agent: AgentConfig::default(),
            kg: KgConfig::default(),
        }
    }
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, InterfaceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| InterfaceError::Config(format!("{}: {e}", path.display())))?;
        let mut config: Config = toml::from_str(&text).map_err(|e| InterfaceError::Config(format!("{}: {e}", path.display())))?;
        if config.data_dir.is_relative() {
            config.data_dir = path.parent().unwrap_or(Path::new(".")).join(&config.data_dir);
        }
        config.agent.check()?;
        Ok(config)
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_dir.join(p)
        }
    }

    pub fn gold_cassette(&self, kind: MemoryKind) -> PathBuf {
        self.path(&self.cassettes).join("gold").join(format!("{kind}.jsonl"))
    }

    pub fn report_path(&self) -> PathBuf {
        self.path(&self.reports).join("latest.json")
    }
}

/// Where model completions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmSource {
    /// Recorded cassette only; a miss is an error.
    Replay,
    /// The deterministic scripted stand-ins.
    Scripted,
    /// The configured remote endpoint.
    Remote,
    /// The remote endpoint, recording into the cassette.
    Record,
}

impl FromStr for LlmSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "replay" => Ok(LlmSource::Replay),
            "scripted" => Ok(LlmSource::Scripted),
            "remote" => Ok(LlmSource::Remote),
            "record" => Ok(LlmSource::Record),
            other => Err(format!("unknown llm source {other:?} (expected replay, scripted, remote or record)")),
        }
    }
}

pub fn scripted_backend(config: &Config) -> Result<Arc<dyn ChatBackend>, InterfaceError> {
    Ok(Arc::new(ScriptedLlm::from_data_dir(&config.data_dir).map_err(InterfaceError::Load)?))
}

/// Gateway for `source`, replaying or recording `cassette`.
pub fn make_gateway(config: &Config, source: LlmSource, cassette: &Path) -> Result<Gateway, InterfaceError> {
    Ok(match source {
        LlmSource::Replay => Gateway::replay_file(cassette)?,
        LlmSource::Scripted => Gateway::live(scripted_backend(config)?),
        LlmSource::Remote => Gateway::live(Arc::new(RemoteBackend::new(config.llm.clone())?)),
        LlmSource::Record => Gateway::recording(Arc::new(RemoteBackend::new(config.llm.clone())?), cassette)?,
    })
}

/// Everything an episode or evaluation needs, loaded once.
pub struct Workspace {
    pub config: Config,
    pub catalog: Arc<Catalog>,
    pub registry: Arc<ToolRegistry>,
    pub docs: Vec<Document>,
    pub curation: Curation,
    pub graph: Option<Arc<KnowledgeGraph>>,
    pub client: Arc<dyn ApiClient>,
}

impl Workspace {
    pub fn load(config: Config) -> Result<Self, InterfaceError> {
        let catalog = Arc::new(load_catalog(config.path(&config.catalog)).map_err(|e| InterfaceError::Load(e.to_string()))?);
        let registry = Arc::new(ToolRegistry::from_catalog(catalog.clone())?);
        let docs = load_corpus(config.path(&config.corpus))?;
        let curation = Curation::load(config.path(&config.aliases), config.path(&config.synonyms))?;
        let graph_path = config.path(&config.graph);
        let graph = if graph_path.exists() { Some(Arc::new(read_snapshot(&graph_path)?)) } else { None };
        let client: Arc<dyn ApiClient> = match &config.api_server {
            Some(url) => Arc::new(HttpApiClient::new(url.clone(), config.seed)?),
            None => Arc::new(LocalApiClient::new(catalog.clone(), config.seed)),
        };
        Ok(Self { config, catalog, registry, docs, curation, graph, client })
    }

    pub fn cases(&self) -> Result<Vec<InstructionCase>, InterfaceError> {
        Ok(load_cases(self.config.path(&self.config.cases), &self.registry)?)
    }

    pub fn memory(&self, kind: MemoryKind) -> Result<Arc<dyn MemoryBackend>, InterfaceError> {
        Ok(match kind {
            MemoryKind::Kg => {
                let graph = self.graph.clone().ok_or_else(|| {
                    InterfaceError::Load(format!("no graph snapshot at {}; run build-kg first", self.config.path(&self.config.graph).display()))
                })?;
                Arc::new(KgMemory::new(graph, DEFAULT_HOPS)?)
            }
            MemoryKind::Vector => Arc::new(VectorMemory::build(
                &self.docs,
                self.config.kg.chunk_target,
                self.config.kg.chunk_overlap,
                DEFAULT_TOP_K,
            )?),
            MemoryKind::Null => Arc::new(NullMemory::new(&self.docs)),
        })
    }

    pub fn agent(&self, kind: MemoryKind, gateway: Arc<Gateway>) -> Result<Agent, InterfaceError> {
        Ok(Agent::new(self.memory(kind)?, self.registry.clone(), self.client.clone(), gateway, self.config.agent.clone())?)
    }

    /// Ablation collaborators; with `Replay`, each system replays its gold
    /// cassette under `cassettes/gold/`.
    pub fn ablation_setup(&self, kinds: &[MemoryKind], source: LlmSource, cassettes: &Path) -> Result<AblationSetup, InterfaceError> {
        let mut memories = BTreeMap::new();
        let mut gateways = BTreeMap::new();
        for &kind in kinds {
            memories.insert(kind, self.memory(kind)?);
            let path = cassettes.join("gold").join(format!("{kind}.jsonl"));
            let gateway = match source {
                LlmSource::Replay if !path.exists() => Gateway::replay(Cassette::default()),
                _ => make_gateway(&self.config, source, &path)?,
            };
            gateways.insert(kind, Arc::new(gateway));
        }
        Ok(AblationSetup {
            registry: self.registry.clone(),
            client: self.client.clone(),
            memories,
            gateways,
            config: self.config.agent.clone(),
            seed: self.config.seed,
        })
    }
}

/// Parses `kg,vector,null` style lists.
pub fn parse_kinds(list: &str) -> Result<Vec<MemoryKind>, String> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}
