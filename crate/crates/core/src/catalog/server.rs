//! HTTP mock data provider.
//!
//! `GET /apis` lists the specs; `POST /apis/{name}` takes a JSON params object
//! and returns the [`ApiResponse`]. Handlers are stateless over an immutable
//! catalog, so the body for a valid request is byte-identical to serializing
//! [`ApiResponse::answer`] in-process.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde_json::{Map, Value};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use super::{ApiResponse, Catalog, ResponseStatus};
pub use crate::serve::BackgroundServer;

#[derive(Clone)]
struct AppState {
    catalog: Arc<Catalog>,
    default_seed: u64,
}

pub fn router(catalog: Arc<Catalog>, default_seed: u64) -> Router {
    Router::new()
        .route("/apis", get(list_apis))
        .route("/apis/{name}", post(call_api))
        .with_state(AppState { catalog, default_seed })
}

fn json_response(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn list_apis(State(state): State<AppState>) -> Response {
    let body = serde_json::to_vec(&serde_json::json!({ "apis": state.catalog.apis() })).expect("specs serialize");
    json_response(StatusCode::OK, body)
}

async fn call_api(State(state): State<AppState>, Path(name): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    let seed = match headers.get("x-seed") {
        None => state.default_seed,
        Some(v) => match v.to_str().ok().and_then(|s| s.trim().parse::<u64>().ok()) {
            Some(seed) => seed,
            None => return malformed(&name, "X-Seed header must be a non-negative integer"),
        },
    };
    let params: Map<String, Value> = match serde_json::from_slice::<Value>(&body) {
        Ok(Value::Object(map)) => map,
        Ok(_) => return malformed(&name, "body must be a JSON object of params"),
        Err(e) => return malformed(&name, &format!("malformed body: {e}")),
    };
    let response = ApiResponse::answer(&state.catalog, &name, &params, seed);
    let status = match response.status {
        ResponseStatus::Ok => StatusCode::OK,
        ResponseStatus::InvalidParams => StatusCode::BAD_REQUEST,
        ResponseStatus::NotFound => StatusCode::NOT_FOUND,
    };
    json_response(status, serde_json::to_vec(&response).expect("response serializes"))
}

fn malformed(name: &str, message: &str) -> Response {
    let response = ApiResponse::invalid(name, vec![message.to_string()]);
    json_response(StatusCode::BAD_REQUEST, serde_json::to_vec(&response).expect("response serializes"))
}

/// A server running on a background tokio task.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl ServerHandle {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = self.task.await;
    }
}

/// Binds `bind` and serves the catalog until the handle is shut down.
pub async fn serve_catalog(catalog: Arc<Catalog>, bind: SocketAddr, default_seed: u64) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(bind).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(catalog, default_seed);
    let task = tokio::spawn(async move {
        let result = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
        if let Err(e) = result {
            log::error!("api server stopped: {e}");
        }
    });
    log::info!("serving virtual apis on http://{addr}");
    Ok(ServerHandle { addr, shutdown: Some(tx), task })
}

/// Serves the catalog on a dedicated runtime thread, for synchronous callers.
pub fn serve_catalog_background(catalog: Arc<Catalog>, bind: SocketAddr, default_seed: u64) -> std::io::Result<BackgroundServer> {
    BackgroundServer::start(router(catalog, default_seed), bind)
}
