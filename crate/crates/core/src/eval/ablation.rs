//! Three-system ablation over one case set.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use super::metrics::{compute_metrics, render_report, significance, EvalReport, SignificanceMark, System};
use super::{classify_case, CaseResult, EvalError, InstructionCase};
use crate::agent::{trace_id, Agent, AgentConfig, Trace, TraceStatus};
use crate::gateway::{Gateway, GatewayMode};
use crate::memory::{ensure_same_corpus, MemoryBackend, MemoryKind};
use crate::tools::{ApiClient, ToolRegistry};

/// Collaborators for an ablation run. The API client must answer with the
/// same seed recorded in the reports.
pub struct AblationSetup {
    pub registry: Arc<ToolRegistry>,
    pub client: Arc<dyn ApiClient>,
    pub memories: BTreeMap<MemoryKind, Arc<dyn MemoryBackend>>,
    pub gateways: BTreeMap<MemoryKind, Arc<Gateway>>,
    pub config: AgentConfig,
    pub seed: u64,
}

impl AblationSetup {
    pub fn agent(&self, kind: MemoryKind) -> Result<Agent, EvalError> {
        let memory = self.memories.get(&kind).ok_or_else(|| EvalError::Episode {
            system: kind,
            case: String::new(),
            message: "no memory backend configured".into(),
        })?;
        let gateway = self.gateways.get(&kind).ok_or_else(|| EvalError::Episode {
            system: kind,
            case: String::new(),
            message: "no gateway configured".into(),
        })?;
        Ok(Agent::new(memory.clone(), self.registry.clone(), self.client.clone(), gateway.clone(), self.config.clone())?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub system: System,
    pub against: System,
    pub marks: Vec<SignificanceMark>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRun {
    pub reports: Vec<EvalReport>,
    pub significance: Vec<Comparison>,
    #[serde(skip)]
    pub results: BTreeMap<System, Vec<CaseResult>>,
    #[serde(skip)]
    pub traces: BTreeMap<System, Vec<Trace>>,
}

impl AblationRun {
    pub fn table(&self) -> String {
        let marks: Vec<(System, Vec<SignificanceMark>)> =
            self.significance.iter().map(|c| (c.system, c.marks.clone())).collect();
        render_report(&self.reports, &marks)
    }

    /// Machine-readable report document; byte-stable for fixed inputs.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            reports: &'a [EvalReport],
            significance: &'a [Comparison],
            results: &'a BTreeMap<System, Vec<CaseResult>>,
            table: String,
        }
        let doc = Doc { reports: &self.reports, significance: &self.significance, results: &self.results, table: self.table() };
        serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
    }
}

/// One episode per (system, case), classified and aggregated. Systems are
/// reported in KG2data, RAG2data, chat2data order; every other system is
/// tested for significance against the first.
pub fn run_ablation(cases: &[InstructionCase], systems: &[MemoryKind], setup: &AblationSetup) -> Result<AblationRun, EvalError> {
    let mut kinds = systems.to_vec();
    kinds.sort();
    kinds.dedup();
    let backends: Vec<&dyn MemoryBackend> = kinds
        .iter()
        .filter_map(|k| setup.memories.get(k).map(|m| m.as_ref() as &dyn MemoryBackend))
        .collect();
    ensure_same_corpus(&backends).map_err(|e| EvalError::Episode {
        system: kinds[0],
        case: String::new(),
        message: e.to_string(),
    })?;

    let mut run = AblationRun { reports: Vec::new(), significance: Vec::new(), results: BTreeMap::new(), traces: BTreeMap::new() };
    for &kind in &kinds {
        let agent = setup.agent(kind)?;
        let gateway = &setup.gateways[&kind];
        let mut results = Vec::with_capacity(cases.len());
        let mut traces = Vec::with_capacity(cases.len());
        for case in cases {
            let misses = gateway.stats().misses;
            let trace = agent.run(&case.instruction, &trace_id(kind, &case.instruction, &case.id));
            if trace.status == TraceStatus::GatewayError
                && gateway.mode() == GatewayMode::ReplayStrict
                && gateway.stats().misses > misses
            {
                return Err(EvalError::MissingCassette { system: kind, case: case.id.clone() });
            }
            results.push(classify_case(&trace, case, &setup.registry)?);
            traces.push(trace);
        }
        let system = System::from(kind);
        let report = compute_metrics(&results, system, setup.memories[&kind].corpus_hash(), setup.seed)?;
        log::info!("{system}: ACAR {} over {} cases", report.rates.acar.percent, report.n);
        run.reports.push(report);
        run.results.insert(system, results);
        run.traces.insert(system, traces);
    }
    if let Some((first, rest)) = run.reports.split_first() {
        for other in rest {
            run.significance.push(Comparison { system: other.system, against: first.system, marks: significance(first, other) });
        }
    }
    Ok(run)
}
