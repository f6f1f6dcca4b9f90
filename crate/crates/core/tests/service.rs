//! Session service over HTTP: the event stream, long-polling, resumption and
//! error statuses, plus agreement with the command-line chat.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::{json, Value};

use kg2data::agent::{tracelog, Trace, TraceStatus, TraceStep};
use kg2data::gateway::{ChatBackend, CompletionRequest, Gateway, GatewayError};
use kg2data::interface::service::{router, traces_from_events, EventBody, ServiceState, TraceEvent};
use kg2data::interface::{scripted_backend, Config, Workspace};
use kg2data::memory::MemoryKind;
use kg2data::serve::BackgroundServer;

fn question(ws: &Workspace) -> String {
    let cases = ws.cases().unwrap();
    cases.iter().find(|c| c.gold_tool == "get_daily_precipitation").map(|c| c.instruction.clone()).expect("a precipitation case")
}

fn start(agents: BTreeMap<MemoryKind, Arc<kg2data::agent::Agent>>, report: &Path) -> BackgroundServer {
    let state = ServiceState::new(agents, report.to_path_buf(), None);
    BackgroundServer::start(router(state), "127.0.0.1:0".parse().unwrap()).unwrap()
}

fn replay_agents(ws: &Workspace) -> BTreeMap<MemoryKind, Arc<kg2data::agent::Agent>> {
    MemoryKind::ALL
        .into_iter()
        .map(|k| {
            let gw = Arc::new(Gateway::replay_file(ws.config.gold_cassette(k)).unwrap());
            (k, Arc::new(ws.agent(k, gw).unwrap()))
        })
        .collect()
}

fn create_session(http: &Client, url: &str, kind: &str) -> String {
    let resp = http.post(format!("{url}/v1/sessions")).json(&json!({ "memory_kind": kind })).send().unwrap();
    assert_eq!(resp.status(), 201);
    let body: Value = resp.json().unwrap();
    assert_eq!(body["memory_kind"], kind);
    body["id"].as_str().unwrap().to_string()
}

fn post_message(http: &Client, url: &str, session: &str, text: &str) -> reqwest::blocking::Response {
    http.post(format!("{url}/v1/sessions/{session}/messages")).json(&json!({ "text": text })).send().unwrap()
}

/// Reads an event stream to its end and returns `(id, event name, event)`.
fn read_sse(http: &Client, url: &str, session: &str, query: &str, last_event_id: Option<u64>) -> Vec<(u64, String, TraceEvent)> {
    let mut req = http.get(format!("{url}/v1/sessions/{session}/events{query}")).header("Accept", "text/event-stream");
    if let Some(id) = last_event_id {
        req = req.header("Last-Event-ID", id.to_string());
    }
    let resp = req.send().unwrap();
    assert_eq!(resp.status(), 200);
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    let text = resp.text().unwrap();
    text.split("\n\n")
        .filter(|block| block.lines().any(|l| l.starts_with("data:")))
        .map(|block| {
            let field = |name: &str| {
                block.lines().find_map(|l| l.strip_prefix(name)).map(|v| v.trim_start().to_string()).unwrap_or_default()
            };
            let id: u64 = field("id:").parse().unwrap();
            let event: TraceEvent = serde_json::from_str(&field("data:")).unwrap();
            (id, field("event:"), event)
        })
        .collect()
}

fn poll(http: &Client, url: &str, session: &str, after: u64) -> Value {
    let resp = http.get(format!("{url}/v1/sessions/{session}/events?after={after}&timeout_ms=5000")).send().unwrap();
    assert_eq!(resp.status(), 200);
    resp.json().unwrap()
}

fn wait_idle(http: &Client, url: &str, session: &str) {
    for _ in 0..200 {
        let view: Value = http.get(format!("{url}/v1/sessions/{session}")).send().unwrap().json().unwrap();
        if view["status"] == "idle" {
            return;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    panic!("session {session} never became idle");
}

#[test]
fn event_stream_reconstructs_the_trace() {
    let ws = Workspace::load(Config::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let server = start(replay_agents(&ws), &dir.path().join("latest.json"));
    let (http, url) = (Client::new(), server.base_url());

    let session = create_session(&http, &url, "kg");
    let resp = post_message(&http, &url, &session, &question(&ws));
    assert_eq!(resp.status(), 202);
    let trace_id = resp.json::<Value>().unwrap()["trace_id"].as_str().unwrap().to_string();

    let events = read_sse(&http, &url, &session, "", None);
    let seqs: Vec<u64> = events.iter().map(|e| e.0).collect();
    assert_eq!(seqs, (1..=events.len() as u64).collect::<Vec<_>>());
    assert!(events.iter().all(|(id, _, e)| e.seq == *id && e.trace_id == trace_id && e.session_id == session));
    let (_, name, last) = events.last().unwrap();
    assert_eq!(name, "final");
    assert!(matches!(last.body, EventBody::Final { .. }));
    assert!(events[..events.len() - 1].iter().all(|(_, n, _)| n == "step"));

    let trace: Trace = http.get(format!("{url}/v1/traces/{trace_id}")).send().unwrap().json().unwrap();
    assert_eq!(trace.status, TraceStatus::Completed);
    let rebuilt = traces_from_events(&events.iter().map(|e| e.2.clone()).collect::<Vec<_>>());
    let (steps, terminal) = &rebuilt[&trace_id];
    assert_eq!(steps, &trace.steps);
    assert_eq!(terminal, &Some(EventBody::Final { final_answer: trace.final_answer().unwrap().to_string() }));
    assert!(matches!(trace.steps[1], TraceStep::Action { ref tool_name } if tool_name == "get_daily_precipitation"));

    // Resuming after seq 3, by query or by header, yields exactly the rest.
    for (query, header) in [("?after=3", None), ("", Some(3))] {
        let rest = read_sse(&http, &url, &session, query, header);
        assert_eq!(rest.iter().map(|e| e.0).collect::<Vec<_>>(), seqs[3..].to_vec());
        assert_eq!(rest.iter().map(|e| e.2.clone()).collect::<Vec<_>>(), events[3..].iter().map(|e| e.2.clone()).collect::<Vec<_>>());
    }

    // Long-polling returns the same events as JSON.
    let polled = poll(&http, &url, &session, 0);
    assert_eq!(polled["running"], false);
    let polled: Vec<TraceEvent> = serde_json::from_value(polled["events"].clone()).unwrap();
    assert_eq!(polled, events.iter().map(|e| e.2.clone()).collect::<Vec<_>>());

    // A second message continues the session-wide sequence.
    let resp = post_message(&http, &url, &session, &question(&ws));
    assert_eq!(resp.status(), 202);
    let more = read_sse(&http, &url, &session, &format!("?after={}", seqs.len()), None);
    assert_eq!(more.first().unwrap().0, seqs.len() as u64 + 1);
    let view: Value = http.get(format!("{url}/v1/sessions/{session}")).send().unwrap().json().unwrap();
    assert_eq!(view["traces"].as_array().unwrap().len(), 2);
}

#[test]
fn unknown_sessions_and_malformed_bodies() {
    let ws = Workspace::load(Config::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let server = start(replay_agents(&ws), &dir.path().join("latest.json"));
    let (http, url) = (Client::new(), server.base_url());

    assert_eq!(http.get(format!("{url}/v1/sessions/s-9999/events")).send().unwrap().status(), 404);
    assert_eq!(post_message(&http, &url, "s-9999", "hello").status(), 404);
    assert_eq!(http.get(format!("{url}/v1/sessions/s-9999")).send().unwrap().status(), 404);
    assert_eq!(http.get(format!("{url}/v1/traces/tr-0000")).send().unwrap().status(), 404);

    let bad = http.post(format!("{url}/v1/sessions")).body("{memory_kind").send().unwrap();
    assert_eq!(bad.status(), 400);
    let bad = http.post(format!("{url}/v1/sessions")).json(&json!({ "memory_kind": "quantum" })).send().unwrap();
    assert_eq!(bad.status(), 400);

    let session = create_session(&http, &url, "vector");
    let bad = http.post(format!("{url}/v1/sessions/{session}/messages")).body("not json").send().unwrap();
    assert_eq!(bad.status(), 400);
    assert!(bad.json::<Value>().unwrap()["error"].as_str().unwrap().contains("malformed"));
    assert_eq!(post_message(&http, &url, &session, "   ").status(), 400);

    // Nothing has run yet: an idle session polls empty at once.
    let polled = poll(&http, &url, &session, 0);
    assert_eq!(polled["events"], json!([]));
}

/// Delays every completion so an episode stays running for a while.
struct Slow(Arc<dyn ChatBackend>);

impl ChatBackend for Slow {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        std::thread::sleep(Duration::from_millis(300));
        self.0.complete(request)
    }
}

#[test]
fn busy_session_rejects_a_second_message() {
    let ws = Workspace::load(Config::default()).unwrap();
    let slow = Arc::new(Gateway::live(Arc::new(Slow(scripted_backend(&ws.config).unwrap()))));
    let agents = BTreeMap::from([(MemoryKind::Null, Arc::new(ws.agent(MemoryKind::Null, slow).unwrap()))]);
    let dir = tempfile::tempdir().unwrap();
    let server = start(agents, &dir.path().join("latest.json"));
    let (http, url) = (Client::new(), server.base_url());

    let session = create_session(&http, &url, "null");
    assert_eq!(post_message(&http, &url, &session, &question(&ws)).status(), 202);
    let busy = post_message(&http, &url, &session, &question(&ws));
    assert_eq!(busy.status(), 409);
    assert!(busy.json::<Value>().unwrap()["error"].as_str().unwrap().contains("busy"));

    // Long-polling while running waits for the next event.
    let polled = poll(&http, &url, &session, 0);
    assert!(!polled["events"].as_array().unwrap().is_empty());

    wait_idle(&http, &url, &session);
    assert_eq!(post_message(&http, &url, &session, &question(&ws)).status(), 202);
    wait_idle(&http, &url, &session);

    // Memory kinds without an agent are refused.
    let bad = http.post(format!("{url}/v1/sessions")).json(&json!({ "memory_kind": "kg" })).send().unwrap();
    assert_eq!(bad.status(), 400);
}

#[test]
fn latest_report_is_served_verbatim() {
    let ws = Workspace::load(Config::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("latest.json");
    let server = start(replay_agents(&ws), &report);
    let (http, url) = (Client::new(), server.base_url());

    assert_eq!(http.get(format!("{url}/v1/reports/latest")).send().unwrap().status(), 404);
    let status = Command::new(env!("CARGO_BIN_EXE_kg2data"))
        .args(["eval", "--systems", "kg,vector,null", "--out"])
        .arg(&report)
        .stdout(Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    let resp = http.get(format!("{url}/v1/reports/latest")).send().unwrap();
    assert_eq!(resp.status(), 200);
    assert_eq!(resp.headers()["content-type"], "application/json");
    assert_eq!(resp.bytes().unwrap().to_vec(), std::fs::read(&report).unwrap());
}

#[test]
fn http_and_cli_produce_the_same_trace() {
    let ws = Workspace::load(Config::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let server = start(replay_agents(&ws), &dir.path().join("latest.json"));
    let (http, url) = (Client::new(), server.base_url());
    let q = question(&ws);

    let session = create_session(&http, &url, "kg");
    let trace_id = post_message(&http, &url, &session, &q).json::<Value>().unwrap()["trace_id"].as_str().unwrap().to_string();
    read_sse(&http, &url, &session, "", None);
    let over_http: Trace = http.get(format!("{url}/v1/traces/{trace_id}")).send().unwrap().json().unwrap();

    let log = dir.path().join("cli.jsonl");
    let mut child = Command::new(env!("CARGO_BIN_EXE_kg2data"))
        .args(["chat", "--memory", "kg", "--trace-log"])
        .arg(&log)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    writeln!(child.stdin.take().unwrap(), "{q}").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let printed = String::from_utf8(out.stdout).unwrap();
    let from_cli = tracelog::from_jsonl(&std::fs::read_to_string(&log).unwrap()).unwrap();
    assert_eq!(from_cli.len(), 1);
    assert_eq!(from_cli[0].steps, over_http.steps);
    assert_eq!(from_cli[0].status, over_http.status);
    for step in &over_http.steps {
        assert!(printed.contains(&step.render()), "missing {:?}", step.render());
    }
}
