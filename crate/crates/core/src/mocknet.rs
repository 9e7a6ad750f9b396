//! Local HTTP stand-in for the reputation services. Serves canned v3 URL
//! reports from a fixture directory, replays scripted faults, and logs every
//! request with a timestamp from the injected clock.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use base64::Engine as _;
use chrono::{DateTime, Utc};
use serde::Serialize;
use tiny_http::{Header, Response, Server};

use crate::clock::Clock;
use crate::error::{Error, Result};
use crate::reputation::url_hash;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultStep {
    /// Reply with this status; 200 means serve normally.
    Status(u16),
    /// Hold the connection past any sane client timeout, then reply 504.
    Timeout,
}

/// Comma-separated steps such as `429,429,200` or `timeout,200`, consumed one
/// per API request; once exhausted every request is served normally.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultScript(pub VecDeque<FaultStep>);

impl FromStr for FaultScript {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut steps = VecDeque::new();
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            if tok.eq_ignore_ascii_case("timeout") {
                steps.push_back(FaultStep::Timeout);
            } else {
                let code: u16 = tok
                    .parse()
                    .ok()
                    .filter(|c| (100..600).contains(c))
                    .ok_or_else(|| Error::InvalidArgument(format!("bad fault step {tok:?}")))?;
                steps.push_back(FaultStep::Status(code));
            }
        }
        Ok(FaultScript(steps))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RequestRecord {
    pub at: DateTime<Utc>,
    pub method: String,
    pub path: String,
    pub has_key: bool,
    /// None when the step was a scripted timeout.
    pub status: Option<u16>,
}

pub struct MockConfig {
    pub fixtures: PathBuf,
    /// 0 picks a free port.
    pub port: u16,
    pub faults: FaultScript,
    pub timeout_delay: Duration,
    pub clock: Arc<dyn Clock>,
}

impl MockConfig {
    pub fn new(fixtures: &Path, clock: Arc<dyn Clock>) -> Self {
        Self {
            fixtures: fixtures.to_path_buf(),
            port: 0,
            faults: FaultScript::default(),
            timeout_delay: Duration::from_secs(2),
            clock,
        }
    }
}

struct State {
    fixtures: PathBuf,
    faults: Mutex<FaultScript>,
    log: Mutex<Vec<RequestRecord>>,
    timeout_delay: Duration,
    clock: Arc<dyn Clock>,
}

pub struct MockServer {
    addr: SocketAddr,
    server: Arc<Server>,
    state: Arc<State>,
    worker: Option<JoinHandle<()>>,
}

fn json_header() -> Header {
    Header::from_bytes("Content-Type", "application/json").expect("static header")
}

fn error_body(code: &str, message: &str) -> String {
    serde_json::json!({"error": {"code": code, "message": message}}).to_string()
}

impl State {
    fn fixture_for(&self, id: &str) -> Option<String> {
        let hash = if id.len() == 64 && id.bytes().all(|b| b.is_ascii_hexdigit()) {
            id.to_ascii_lowercase()
        } else {
            let raw = base64::engine::general_purpose::URL_SAFE_NO_PAD
                .decode(id.trim_end_matches('='))
                .ok()?;
            url_hash(std::str::from_utf8(&raw).ok()?)
        };
        std::fs::read_to_string(self.fixtures.join(format!("{hash}.json"))).ok()
    }

    /// Decides the reply for one request; the fault script and the log are
    /// advanced together under the log lock so their order matches.
    fn route(&self, method: &str, path: &str, has_key: bool) -> (Option<u16>, String) {
        let path_only = path.split('?').next().unwrap_or(path);
        if let Some(id) = path_only.strip_prefix("/api/v3/urls/") {
            if !has_key {
                return (Some(401), error_body("WrongCredentialsError", "missing x-apikey header"));
            }
            match self.faults.lock().unwrap().0.pop_front() {
                Some(FaultStep::Timeout) => return (None, error_body("DeadlineExceededError", "timeout")),
                Some(FaultStep::Status(code)) if code != 200 => {
                    return (Some(code), error_body("ScriptedFault", &format!("scripted status {code}")))
                }
                _ => {}
            }
            if method != "GET" {
                return (Some(405), error_body("MethodNotAllowed", method));
            }
            return match self.fixture_for(id) {
                Some(body) => (Some(200), body),
                None => (Some(404), error_body("NotFoundError", &format!("URL \"{id}\" not found"))),
            };
        }
        if let Some(name) = path_only.strip_prefix("/feeds/") {
            if matches!(name, "blocklist.json" | "blocklist.csv") {
                if let Ok(body) = std::fs::read_to_string(self.fixtures.join(name)) {
                    return (Some(200), body);
                }
            }
        }
        (Some(404), error_body("NotFoundError", "unknown resource"))
    }
}

impl MockServer {
    pub fn start(config: MockConfig) -> Result<Self> {
        if !config.fixtures.is_dir() {
            return Err(Error::Startup(format!("fixture directory {} not found", config.fixtures.display())));
        }
        let server = Server::http(("127.0.0.1", config.port))
            .map_err(|e| Error::Startup(format!("cannot bind port {}: {e}", config.port)))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Startup("server has no IP address".into()))?;
        let server = Arc::new(server);
        let state = Arc::new(State {
            fixtures: config.fixtures,
            faults: Mutex::new(config.faults),
            log: Mutex::new(Vec::new()),
            timeout_delay: config.timeout_delay,
            clock: config.clock,
        });
        let worker = {
            let server = server.clone();
            let state = state.clone();
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    let method = request.method().to_string().to_ascii_uppercase();
                    let path = request.url().to_string();
                    let has_key = request
                        .headers()
                        .iter()
                        .any(|h| h.field.equiv("x-apikey") && !h.value.as_str().trim().is_empty());
                    let (status, body) = {
                        let mut log = state.log.lock().unwrap();
                        let (status, body) = state.route(&method, &path, has_key);
                        let now = state.clock.now();
                        let at = log.last().map_or(now, |r| r.at.max(now));
                        log.push(RequestRecord { at, method, path, has_key, status });
                        (status, body)
                    };
                    match status {
                        Some(code) => {
                            let resp = Response::from_string(body).with_status_code(code).with_header(json_header());
                            let _ = request.respond(resp);
                        }
                        None => {
                            let delay = state.timeout_delay;
                            std::thread::spawn(move || {
                                std::thread::sleep(delay);
                                let resp =
                                    Response::from_string(body).with_status_code(504).with_header(json_header());
                                let _ = request.respond(resp);
                            });
                        }
                    }
                }
            })
        };
        log::info!("mock reputation service listening on {addr}");
        Ok(Self {
            addr,
            server,
            state,
            worker: Some(worker),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Snapshot of the request log.
    pub fn log(&self) -> Vec<RequestRecord> {
        self.state.log.lock().unwrap().clone()
    }

    /// Blocks until the server is shut down from another thread or the
    /// process ends.
    pub fn wait(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Largest number of logged API requests inside any window of `window`
/// length (a request exactly `window` after another starts a new window).
pub fn max_requests_in_window(log: &[RequestRecord], window: chrono::Duration) -> usize {
    let stamps: Vec<DateTime<Utc>> = log
        .iter()
        .filter(|r| r.path.starts_with("/api/"))
        .map(|r| r.at)
        .collect();
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..stamps.len() {
        while stamps[hi] - stamps[lo] >= window {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best
}
