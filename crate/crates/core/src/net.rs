//! Process-wide network policy.
//!
//! Offline runs (tests, replayed evaluations) switch the guard on; every
//! outbound HTTP client in the crate checks it before connecting. Loopback
//! addresses stay reachable so the local mock API server keeps working.

use std::sync::atomic::{AtomicBool, Ordering};

use thiserror::Error;

static FORBID: AtomicBool = AtomicBool::new(false);
static ATTEMPTS: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);

#[derive(Debug, Error)]
#[error("network access to {url} is forbidden in offline mode")]
pub struct NetworkForbidden {
    pub url: String,
}

/// Forbids non-loopback network access for the rest of the process.
pub fn forbid_network() {
    FORBID.store(true, Ordering::SeqCst);
}

pub fn network_forbidden() -> bool {
    FORBID.load(Ordering::SeqCst) || std::env::var("KG2DATA_OFFLINE").is_ok_and(|v| v == "1")
}

/// Number of non-loopback connection attempts made (allowed or refused).
pub fn remote_attempts() -> u64 {
    ATTEMPTS.load(Ordering::SeqCst)
}

/// Checks `url` against the policy. Loopback hosts are always allowed.
pub fn check_url(url: &str) -> Result<(), NetworkForbidden> {
    if is_loopback(url) {
        return Ok(());
    }
    ATTEMPTS.fetch_add(1, Ordering::SeqCst);
    if network_forbidden() {
        return Err(NetworkForbidden { url: url.to_string() });
    }
    Ok(())
}

fn is_loopback(url: &str) -> bool {
    let rest = url.split_once("://").map_or(url, |(_, r)| r);
    let authority = rest.split(['/', '?', '#']).next().unwrap_or("");
    let host = authority.rsplit_once('@').map_or(authority, |(_, h)| h);
    let host = if let Some(stripped) = host.strip_prefix('[') {
        stripped.split(']').next().unwrap_or("")
    } else {
        host.split(':').next().unwrap_or("")
    };
    matches!(host, "localhost" | "::1") || host.starts_with("127.")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loopback_detection() {
        assert!(is_loopback("http://127.0.0.1:8080/apis"));
        assert!(is_loopback("http://localhost/x"));
        assert!(is_loopback("http://[::1]:3000"));
        assert!(!is_loopback("https://api.example.com/v1/chat/completions"));
        assert!(!is_loopback("http://127example.com"));
    }
}
