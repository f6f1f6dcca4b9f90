//! HTTP session service consumed by the chat client.
//!
//! Sessions live in memory. Each message starts one episode on a blocking
//! worker; its steps are published as events with a session-wide sequence
//! number, readable as a server-sent event stream (resumable through
//! `after=` or `Last-Event-ID`) or by long-polling the same endpoint.

use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::watch;

use crate::agent::tracelog;
use crate::agent::{trace_id, Agent, Trace, TraceStatus, TraceStep};
use crate::memory::MemoryKind;

const DEFAULT_POLL_MS: u64 = 25_000;
const MAX_POLL_MS: u64 = 60_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventBody {
    Step { step: TraceStep, duration_ms: u64 },
    Final { final_answer: String },
    Error { status: TraceStatus, error: String },
}

impl EventBody {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, EventBody::Step { .. })
    }

    fn name(&self) -> &'static str {
        match self {
            EventBody::Step { .. } => "step",
            EventBody::Final { .. } => "final",
            EventBody::Error { .. } => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub session_id: String,
    pub trace_id: String,
    pub seq: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Idle,
    Running,
}

#[derive(Default)]
struct SessionState {
    traces: Vec<String>,
    running: bool,
    events: Vec<TraceEvent>,
}

pub struct Session {
    pub id: String,
    pub memory_kind: MemoryKind,
    pub created_at: String,
    state: Mutex<SessionState>,
    last_seq: watch::Sender<u64>,
}

impl Session {
    fn new(id: String, memory_kind: MemoryKind) -> Self {
        Self {
            id,
            memory_kind,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            state: Mutex::new(SessionState::default()),
            last_seq: watch::channel(0).0,
        }
    }

    fn view(&self) -> Value {
        let s = self.state.lock().expect("session lock");
        json!({
            "id": self.id,
            "memory_kind": self.memory_kind,
            "created_at": self.created_at,
            "traces": s.traces,
            "status": if s.running { SessionStatus::Running } else { SessionStatus::Idle },
        })
    }

    /// Appends an event; a terminal event also marks the session idle.
    fn publish(&self, trace_id: &str, body: EventBody) {
        let seq = {
            let mut s = self.state.lock().expect("session lock");
            let seq = s.events.len() as u64 + 1;
            if body.is_terminal() {
                s.running = false;
            }
            s.events.push(TraceEvent { session_id: self.id.clone(), trace_id: trace_id.to_string(), seq, body });
            seq
        };
        self.last_seq.send_replace(seq);
    }

    fn events_after(&self, after: u64) -> (Vec<TraceEvent>, bool) {
        let s = self.state.lock().expect("session lock");
        (s.events.iter().filter(|e| e.seq > after).cloned().collect(), s.running)
    }
}

pub struct ServiceState {
    agents: BTreeMap<MemoryKind, Arc<Agent>>,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
    traces: Mutex<HashMap<String, Trace>>,
    report_path: PathBuf,
    trace_dir: Option<PathBuf>,
    next_session: AtomicU64,
}

impl ServiceState {
    pub fn new(agents: BTreeMap<MemoryKind, Arc<Agent>>, report_path: PathBuf, trace_dir: Option<PathBuf>) -> Arc<Self> {
        Arc::new(Self {
            agents,
            sessions: Mutex::new(HashMap::new()),
            traces: Mutex::new(HashMap::new()),
            report_path,
            trace_dir,
            next_session: AtomicU64::new(1),
        })
    }

    fn session(&self, id: &str) -> Option<Arc<Session>> {
        self.sessions.lock().expect("sessions lock").get(id).cloned()
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| error(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))
}

#[derive(Deserialize)]
struct CreateSession {
    memory_kind: String,
}

async fn create_session(State(state): State<Arc<ServiceState>>, body: Bytes) -> Response {
    let req: CreateSession = match parse_body(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let kind: MemoryKind = match req.memory_kind.parse() {
        Ok(k) => k,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    if !state.agents.contains_key(&kind) {
        return error(StatusCode::BAD_REQUEST, format!("memory kind {kind} is not available"));
    }
    let id = format!("s-{:04}", state.next_session.fetch_add(1, Ordering::SeqCst));
    let session = Arc::new(Session::new(id.clone(), kind));
    let view = session.view();
    state.sessions.lock().expect("sessions lock").insert(id, session);
    (StatusCode::CREATED, Json(view)).into_response()
}

async fn get_session(State(state): State<Arc<ServiceState>>, Path(id): Path<String>) -> Response {
    match state.session(&id) {
        Some(s) => Json(s.view()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown session {id}")),
    }
}

#[derive(Deserialize)]
struct PostMessage {
    text: String,
}

async fn post_message(State(state): State<Arc<ServiceState>>, Path(id): Path<String>, body: Bytes) -> Response {
    let Some(session) = state.session(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown session {id}"));
    };
    let req: PostMessage = match parse_body(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let text = req.text.trim().to_string();
    if text.is_empty() {
        return error(StatusCode::BAD_REQUEST, "message text is empty");
    }
    let trace = {
        let mut s = session.state.lock().expect("session lock");
        if s.running {
            return error(StatusCode::CONFLICT, "agent busy: an episode is already running in this session");
        }
        s.running = true;
        let trace = trace_id(session.memory_kind, &text, &format!("{}#{}", session.id, s.traces.len() + 1));
        s.traces.push(trace.clone());
        trace
    };
    let agent = state.agents[&session.memory_kind].clone();
    let (state2, session2, trace2) = (state.clone(), session.clone(), trace.clone());
    tokio::task::spawn_blocking(move || run_episode(&state2, &session2, &agent, &text, &trace2));
    (StatusCode::ACCEPTED, Json(json!({ "trace_id": trace }))).into_response()
}

fn run_episode(state: &ServiceState, session: &Session, agent: &Agent, text: &str, id: &str) {
    let trace = agent.run_with(text, id, &mut |step, ms| {
        session.publish(id, EventBody::Step { step: step.clone(), duration_ms: ms });
    });
    if let Some(dir) = &state.trace_dir {
        if let Err(e) = tracelog::append(dir.join(format!("{}.jsonl", session.id)), &trace, agent.config()) {
            log::warn!("cannot persist trace {id}: {e}");
        }
    }
    let terminal = match (trace.status, trace.final_answer()) {
        (TraceStatus::Completed, Some(answer)) => EventBody::Final { final_answer: answer.to_string() },
        (status, _) => EventBody::Error { status, error: trace.error.clone().unwrap_or_default() },
    };
    state.traces.lock().expect("traces lock").insert(id.to_string(), trace);
    session.publish(id, terminal);
}

#[derive(Deserialize)]
struct EventsQuery {
    after: Option<u64>,
    timeout_ms: Option<u64>,
}

async fn get_events(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Response {
    let Some(session) = state.session(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown session {id}"));
    };
    let last_event_id = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok());
    let after = last_event_id.or(q.after).unwrap_or(0);
    let wants_sse = headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("text/event-stream"));
    if wants_sse {
        Sse::new(event_stream(session, after)).keep_alive(KeepAlive::default()).into_response()
    } else {
        long_poll(session, after, q.timeout_ms.unwrap_or(DEFAULT_POLL_MS).min(MAX_POLL_MS)).await
    }
}

async fn long_poll(session: Arc<Session>, after: u64, timeout_ms: u64) -> Response {
    let mut rx = session.last_seq.subscribe();
    let deadline = tokio::time::Instant::now() + Duration::from_millis(timeout_ms);
    loop {
        rx.borrow_and_update();
        let (events, running) = session.events_after(after);
        if !events.is_empty() || !running {
            return Json(json!({ "events": events, "running": running })).into_response();
        }
        match tokio::time::timeout_at(deadline, rx.changed()).await {
            Ok(Ok(())) => continue,
            _ => return Json(json!({ "events": [], "running": running })).into_response(),
        }
    }
}

/// Pending events, then new ones as they are published. The stream ends
/// after a terminal event once the session is idle with nothing pending.
fn event_stream(session: Arc<Session>, after: u64) -> impl Stream<Item = Result<Event, Infallible>> {
    let rx = session.last_seq.subscribe();
    stream::unfold((session, rx, after, false), |(session, mut rx, after, done)| async move {
        if done {
            return None;
        }
        loop {
            rx.borrow_and_update();
            let (events, running) = session.events_after(after);
            if let Some(last) = events.last() {
                let next = last.seq;
                let finished = last.body.is_terminal() && !running;
                let out: Vec<Result<Event, Infallible>> = events
                    .iter()
                    .map(|e| {
                        Ok(Event::default()
                            .id(e.seq.to_string())
                            .event(e.body.name())
                            .data(serde_json::to_string(e).expect("event serializes")))
                    })
                    .collect();
                return Some((stream::iter(out), (session, rx, next, finished)));
            }
            if rx.changed().await.is_err() {
                return None;
            }
        }
    })
    .flatten()
}

async fn get_trace(State(state): State<Arc<ServiceState>>, Path(id): Path<String>) -> Response {
    match state.traces.lock().expect("traces lock").get(&id) {
        Some(t) => Json(t).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown or unfinished trace {id}")),
    }
}

async fn latest_report(State(state): State<Arc<ServiceState>>) -> Response {
    match std::fs::read(&state.report_path) {
        Ok(bytes) => ([(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, "no report has been written yet; run eval first"),
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/messages", post(post_message))
        .route("/v1/sessions/{id}/events", get(get_events))
        .route("/v1/traces/{id}", get(get_trace))
        .route("/v1/reports/latest", get(latest_report))
        .with_state(state)
}

/// Reassembles each trace's steps and terminal event from an event list.
pub fn traces_from_events(events: &[TraceEvent]) -> BTreeMap<String, (Vec<TraceStep>, Option<EventBody>)> {
    let mut out: BTreeMap<String, (Vec<TraceStep>, Option<EventBody>)> = BTreeMap::new();
    for e in events {
        let entry = out.entry(e.trace_id.clone()).or_default();
        match &e.body {
            EventBody::Step { step, .. } => entry.0.push(step.clone()),
            terminal => entry.1 = Some(terminal.clone()),
        }
    }
    out
}
