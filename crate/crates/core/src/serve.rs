//! Running an axum router on a background thread with its own runtime, so
//! synchronous code (CLI commands, blocking clients, tests) can host servers.

use std::net::SocketAddr;
use std::sync::mpsc;
use std::thread::JoinHandle;

use axum::Router;

/// A server bound on a private single-threaded runtime. Dropping the handle
/// shuts the server down gracefully and joins the thread.
pub struct BackgroundServer {
    pub addr: SocketAddr,
    stop: Option<mpsc::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl BackgroundServer {
    pub fn start(router: Router, bind: SocketAddr) -> std::io::Result<Self> {
        let (ready_tx, ready_rx) = mpsc::channel::<std::io::Result<SocketAddr>>();
        let (stop_tx, stop_rx) = mpsc::channel::<()>();
        let thread = std::thread::spawn(move || {
            let runtime = match tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build() {
                Ok(rt) => rt,
                Err(e) => {
                    let _ = ready_tx.send(Err(e));
                    return;
                }
            };
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::bind(bind).await {
                    Ok(l) => l,
                    Err(e) => {
                        let _ = ready_tx.send(Err(e));
                        return;
                    }
                };
                let _ = ready_tx.send(listener.local_addr());
                let stopped = async move {
                    let _ = tokio::task::spawn_blocking(move || stop_rx.recv()).await;
                };
                if let Err(e) = axum::serve(listener, router).with_graceful_shutdown(stopped).await {
                    log::error!("background server stopped: {e}");
                }
            });
        });
        let addr = ready_rx.recv().map_err(|_| std::io::Error::other("server thread exited"))??;
        Ok(Self { addr, stop: Some(stop_tx), thread: Some(thread) })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        drop(self.stop.take());
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
