//! URL reputation lookups: an aggregate scanner speaking the v3 URL-report
//! wire shape, a community blocklist feed, a report cache with delayed
//! re-checks, and the manual review queue for URLs that scanned benign.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::Engine as _;
use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::claims;
use crate::clock::Clock;
use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "SCANNER_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Malicious,
    Benign,
    Undetected,
}

impl Category {
    /// Maps a scanner category string. Only "malicious" and "harmless" carry
    /// a verdict; everything else (suspicious, timeout, ...) is undetected.
    pub fn from_wire(raw: &str) -> Self {
        match raw.to_ascii_lowercase().as_str() {
            "malicious" => Category::Malicious,
            "harmless" | "benign" | "clean" => Category::Benign,
            _ => Category::Undetected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineVerdict {
    pub engine: String,
    pub category: Category,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportSource {
    Live,
    Cache,
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReputationReport {
    pub url: String,
    pub scanned_at: DateTime<Utc>,
    pub verdicts: Vec<EngineVerdict>,
    pub malicious_count: u32,
    pub benign_count: u32,
    pub source: ReportSource,
    /// The scanner had no record of the URL.
    #[serde(default)]
    pub unknown: bool,
    /// Threshold in force when the report was taken.
    pub malicious_threshold: u32,
}

impl ReputationReport {
    pub fn new(
        url: &str,
        scanned_at: DateTime<Utc>,
        verdicts: Vec<EngineVerdict>,
        source: ReportSource,
        malicious_threshold: u32,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        if let Some(dup) = verdicts.iter().find(|v| !seen.insert(v.engine.as_str())) {
            return Err(Error::Validation(format!("engine {} reported twice for {url}", dup.engine)));
        }
        let count = |c| verdicts.iter().filter(|v| v.category == c).count() as u32;
        Ok(Self {
            url: url.to_string(),
            scanned_at,
            malicious_count: count(Category::Malicious),
            benign_count: count(Category::Benign),
            unknown: false,
            verdicts,
            source,
            malicious_threshold,
        })
    }

    pub fn unknown(url: &str, scanned_at: DateTime<Utc>, source: ReportSource, malicious_threshold: u32) -> Self {
        Self {
            unknown: true,
            ..Self::new(url, scanned_at, Vec::new(), source, malicious_threshold).expect("no verdicts")
        }
    }

    /// Counts agree with the verdict list.
    pub fn is_consistent(&self) -> bool {
        let count = |c| self.verdicts.iter().filter(|v| v.category == c).count() as u32;
        count(Category::Malicious) == self.malicious_count && count(Category::Benign) == self.benign_count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanPolicy {
    pub recheck_delay_days: u32,
    pub malicious_threshold: u32,
    pub rate_limit_per_minute: u32,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub timeout_ms: u64,
}

impl Default for ScanPolicy {
    fn default() -> Self {
        Self {
            recheck_delay_days: 21,
            malicious_threshold: 1,
            rate_limit_per_minute: 4,
            max_retries: 3,
            backoff_base_ms: 1000,
            timeout_ms: 10_000,
        }
    }
}

impl ScanPolicy {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("recheck_delay_days", self.recheck_delay_days as u64),
            ("malicious_threshold", self.malicious_threshold as u64),
            ("rate_limit_per_minute", self.rate_limit_per_minute as u64),
            ("max_retries", self.max_retries as u64),
            ("backoff_base_ms", self.backoff_base_ms),
            ("timeout_ms", self.timeout_ms),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(Error::Validation(format!("scan policy field {name} must be positive"))),
            None => Ok(()),
        }
    }

    pub fn from_toml(raw: &str) -> Result<Self> {
        let p: ScanPolicy = toml::from_str(raw)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn recheck_delay(&self) -> chrono::Duration {
        chrono::Duration::days(self.recheck_delay_days as i64)
    }

    /// Delay before retry number `attempt` (0-based): base * 2^attempt, capped at 64 s.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.backoff_base_ms.saturating_mul(1u64 << attempt.min(16));
        Duration::from_millis(ms.min(64_000))
    }
}

/// Reads the scanner key from the environment; it is never taken from config.
pub fn api_key_from_env() -> Result<String> {
    match std::env::var(API_KEY_ENV) {
        Ok(k) if !k.trim().is_empty() => Ok(k),
        _ => Err(Error::Credential(format!("{API_KEY_ENV} is not set"))),
    }
}

/// URL identifier used in report paths: unpadded URL-safe base64.
pub fn url_id(url: &str) -> String {
    base64::engine::general_purpose::URL_SAFE_NO_PAD.encode(url.as_bytes())
}

/// Fixture file stem for a URL: hex SHA-256 of the URL.
pub fn url_hash(url: &str) -> String {
    hex::encode(Sha256::digest(url.as_bytes()))
}

// ---------------------------------------------------------------------------
// wire format

#[derive(Debug, Deserialize, Serialize)]
struct WireReport {
    data: WireData,
}

#[derive(Debug, Deserialize, Serialize)]
struct WireData {
    #[serde(default)]
    id: String,
    attributes: WireAttributes,
}

#[derive(Debug, Deserialize, Serialize)]
struct WireAttributes {
    #[serde(default)]
    url: Option<String>,
    #[serde(default)]
    last_analysis_results: IndexMap<String, WireEngine>,
}

#[derive(Debug, Deserialize, Serialize)]
struct WireEngine {
    category: String,
    #[serde(default)]
    engine_name: Option<String>,
    #[serde(default)]
    result: Option<String>,
}

/// Parses a v3-shaped URL report body into engine verdicts, in body order.
pub fn parse_report_body(body: &str) -> Result<Vec<EngineVerdict>> {
    let w: WireReport =
        serde_json::from_str(body).map_err(|e| Error::Validation(format!("unexpected report body: {e}")))?;
    Ok(w.data
        .attributes
        .last_analysis_results
        .into_iter()
        .map(|(key, e)| EngineVerdict {
            engine: e.engine_name.unwrap_or(key),
            category: Category::from_wire(&e.category),
        })
        .collect())
}

/// Renders verdicts as a v3-shaped body; used to build fixtures.
pub fn render_report_body(url: &str, verdicts: &[(String, Category)]) -> String {
    let results = verdicts
        .iter()
        .map(|(engine, c)| {
            let (category, result) = match c {
                Category::Malicious => ("malicious", "phishing"),
                Category::Benign => ("harmless", "clean"),
                Category::Undetected => ("undetected", "unrated"),
            };
            (
                engine.clone(),
                WireEngine {
                    category: category.into(),
                    engine_name: Some(engine.clone()),
                    result: Some(result.into()),
                },
            )
        })
        .collect();
    let w = WireReport {
        data: WireData {
            id: url_hash(url),
            attributes: WireAttributes {
                url: Some(url.to_string()),
                last_analysis_results: results,
            },
        },
    };
    serde_json::to_string_pretty(&w).expect("serializable")
}

// ---------------------------------------------------------------------------
// clients

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchOutcome {
    Found(Vec<EngineVerdict>),
    NotFound,
    /// Worth retrying: throttling, server errors, timeouts, connection failures.
    Transient(String),
    Auth(String),
    Fatal(String),
}

pub trait ReportClient: Send + Sync {
    fn fetch(&self, url: &str) -> FetchOutcome;
    fn source(&self) -> ReportSource;
    /// Whether calls count against the rate limiter.
    fn rate_limited(&self) -> bool {
        self.source() == ReportSource::Live
    }
}

pub struct HttpClient {
    base_url: String,
    api_key: String,
    http: reqwest::blocking::Client,
}

impl HttpClient {
    pub fn new(base_url: &str, api_key: String, timeout: Duration) -> Result<Self> {
        if api_key.trim().is_empty() {
            return Err(Error::Credential("empty scanner API key".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("http client: {e}")))?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            http,
        })
    }

    pub fn report_endpoint(&self, url: &str) -> String {
        format!("{}/api/v3/urls/{}", self.base_url, url_id(url))
    }
}

impl ReportClient for HttpClient {
    fn fetch(&self, url: &str) -> FetchOutcome {
        let resp = match self
            .http
            .get(self.report_endpoint(url))
            .header("x-apikey", &self.api_key)
            .header("accept", "application/json")
            .send()
        {
            Ok(r) => r,
            Err(e) => return FetchOutcome::Transient(e.to_string()),
        };
        let status = resp.status().as_u16();
        let body = match resp.text() {
            Ok(b) => b,
            Err(e) => return FetchOutcome::Transient(e.to_string()),
        };
        match status {
            200 => match parse_report_body(&body) {
                Ok(v) => FetchOutcome::Found(v),
                Err(e) => FetchOutcome::Fatal(e.to_string()),
            },
            404 => FetchOutcome::NotFound,
            401 | 403 => FetchOutcome::Auth(format!("scanner rejected credentials (HTTP {status})")),
            429 | 500..=599 => FetchOutcome::Transient(format!("HTTP {status}")),
            _ => FetchOutcome::Fatal(format!("HTTP {status}")),
        }
    }

    fn source(&self) -> ReportSource {
        ReportSource::Live
    }
}

/// Serves reports straight from a fixture directory of `<url_hash>.json`
/// bodies, without HTTP.
pub struct FixtureClient {
    dir: PathBuf,
}

impl FixtureClient {
    pub fn new(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::InvalidArgument(format!("fixture directory {} not found", dir.display())));
        }
        Ok(Self { dir: dir.to_path_buf() })
    }
}

impl ReportClient for FixtureClient {
    fn fetch(&self, url: &str) -> FetchOutcome {
        let path = self.dir.join(format!("{}.json", url_hash(url)));
        match std::fs::read_to_string(&path) {
            Ok(body) => match parse_report_body(&body) {
                Ok(v) => FetchOutcome::Found(v),
                Err(e) => FetchOutcome::Fatal(e.to_string()),
            },
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => FetchOutcome::NotFound,
            Err(e) => FetchOutcome::Fatal(format!("{}: {e}", path.display())),
        }
    }

    fn source(&self) -> ReportSource {
        ReportSource::Fixture
    }
}

// ---------------------------------------------------------------------------
// rate limiting

/// Sliding 60-second window shared by all workers. A request holds a slot
/// while in flight and is then stamped with its completion time, so the
/// bound holds for server-side receipt times whatever the latency.
pub struct RateLimiter {
    limit: usize,
    window: chrono::Duration,
    clock: Arc<dyn Clock>,
    slots: Mutex<Slots>,
    freed: Condvar,
}

#[derive(Default)]
struct Slots {
    in_flight: usize,
    done: VecDeque<DateTime<Utc>>,
}

/// Held for the duration of one request.
pub struct Permit<'a> {
    limiter: &'a RateLimiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut slots = self.limiter.slots.lock().unwrap();
        slots.in_flight -= 1;
        let now = self.limiter.clock.now();
        let pos = slots.done.partition_point(|&t| t <= now);
        slots.done.insert(pos, now);
        self.limiter.freed.notify_all();
    }
}

impl RateLimiter {
    pub fn per_minute(limit: u32, clock: Arc<dyn Clock>) -> Self {
        Self {
            limit: limit.max(1) as usize,
            window: chrono::Duration::seconds(60),
            clock,
            slots: Mutex::new(Slots::default()),
            freed: Condvar::new(),
        }
    }

    /// Blocks until a request may be sent.
    pub fn acquire(&self) -> Permit<'_> {
        let mut slots = self.slots.lock().unwrap();
        loop {
            let now = self.clock.now();
            while slots.done.front().is_some_and(|&t| t + self.window <= now) {
                slots.done.pop_front();
            }
            if slots.in_flight + slots.done.len() < self.limit {
                slots.in_flight += 1;
                return Permit { limiter: self };
            }
            match slots.done.front() {
                Some(&oldest) => {
                    let wait = (oldest + self.window - now).to_std().unwrap_or(Duration::from_millis(1));
                    drop(slots);
                    self.clock.sleep(wait);
                    slots = self.slots.lock().unwrap();
                }
                // every slot is in flight
                None => slots = self.freed.wait(slots).unwrap(),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// storage

pub trait ReportStore: Send + Sync {
    fn latest(&self, url: &str) -> Result<Option<ReputationReport>>;
    fn append(&self, report: &ReputationReport) -> Result<()>;
    /// Every report in insertion order.
    fn history(&self) -> Result<Vec<ReputationReport>>;
}

#[derive(Default)]
pub struct MemoryStore {
    reports: Mutex<Vec<ReputationReport>>,
}

impl ReportStore for MemoryStore {
    fn latest(&self, url: &str) -> Result<Option<ReputationReport>> {
        Ok(self.reports.lock().unwrap().iter().rev().find(|r| r.url == url).cloned())
    }

    fn append(&self, report: &ReputationReport) -> Result<()> {
        self.reports.lock().unwrap().push(report.clone());
        Ok(())
    }

    fn history(&self) -> Result<Vec<ReputationReport>> {
        Ok(self.reports.lock().unwrap().clone())
    }
}

/// Append-only line-delimited store keyed by canonical URL; the newest
/// record for a URL wins.
pub struct JsonlStore {
    path: PathBuf,
    inner: Mutex<(Vec<ReputationReport>, BTreeMap<String, usize>)>,
}

impl JsonlStore {
    pub fn open(path: &Path) -> Result<Self> {
        let mut reports = Vec::new();
        let mut latest = BTreeMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: ReputationReport = serde_json::from_str(&line)
                    .map_err(|e| Error::Validation(format!("{}:{}: {e}", path.display(), i + 1)))?;
                latest.insert(r.url.clone(), reports.len());
                reports.push(r);
            }
        } else if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            inner: Mutex::new((reports, latest)),
        })
    }
}

impl ReportStore for JsonlStore {
    fn latest(&self, url: &str) -> Result<Option<ReputationReport>> {
        let inner = self.inner.lock().unwrap();
        Ok(inner.1.get(url).map(|&i| inner.0[i].clone()))
    }

    fn append(&self, report: &ReputationReport) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        let mut line = serde_json::to_string(report)?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        let idx = inner.0.len();
        inner.1.insert(report.url.clone(), idx);
        inner.0.push(report.clone());
        Ok(())
    }

    fn history(&self) -> Result<Vec<ReputationReport>> {
        Ok(self.inner.lock().unwrap().0.clone())
    }
}

// ---------------------------------------------------------------------------
// scanning

pub struct Scanner {
    client: Box<dyn ReportClient>,
    policy: ScanPolicy,
    store: Arc<dyn ReportStore>,
    limiter: RateLimiter,
    clock: Arc<dyn Clock>,
}

impl Scanner {
    pub fn new(
        client: Box<dyn ReportClient>,
        policy: ScanPolicy,
        store: Arc<dyn ReportStore>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        policy.validate()?;
        Ok(Self {
            limiter: RateLimiter::per_minute(policy.rate_limit_per_minute, clock.clone()),
            client,
            policy,
            store,
            clock,
        })
    }

    pub fn policy(&self) -> &ScanPolicy {
        &self.policy
    }

    pub fn store(&self) -> &Arc<dyn ReportStore> {
        &self.store
    }

    /// Cached report when fresher than the re-check delay, else one fetch
    /// (with retries) whose result is persisted.
    pub fn scan(&self, url: &str) -> Result<ReputationReport> {
        if let Some(mut cached) = self.store.latest(url)? {
            if self.clock.now() - cached.scanned_at < self.policy.recheck_delay() {
                cached.source = ReportSource::Cache;
                return Ok(cached);
            }
        }
        self.fetch_fresh(url)
    }

    fn fetch_fresh(&self, url: &str) -> Result<ReputationReport> {
        let mut attempt = 0;
        let report = loop {
            let permit = self.client.rate_limited().then(|| self.limiter.acquire());
            let now = self.clock.now();
            let threshold = self.policy.malicious_threshold;
            let outcome = self.client.fetch(url);
            drop(permit);
            match outcome {
                FetchOutcome::Found(v) => break ReputationReport::new(url, now, v, self.client.source(), threshold)?,
                FetchOutcome::NotFound => break ReputationReport::unknown(url, now, self.client.source(), threshold),
                FetchOutcome::Auth(reason) => return Err(Error::Credential(reason)),
                FetchOutcome::Fatal(reason) => {
                    return Err(Error::ServiceUnavailable { url: url.to_string(), reason })
                }
                FetchOutcome::Transient(reason) => {
                    if attempt >= self.policy.max_retries {
                        return Err(Error::ServiceUnavailable {
                            url: url.to_string(),
                            reason: format!("{reason} after {} retries", self.policy.max_retries),
                        });
                    }
                    let delay = self.policy.backoff(attempt);
                    log::warn!("scan of {url} failed ({reason}); retrying in {delay:?}");
                    self.clock.sleep(delay);
                    attempt += 1;
                }
            }
        };
        self.store.append(&report)?;
        Ok(report)
    }

    /// Scans `urls` with `workers` threads; results keep input order.
    pub fn scan_all(&self, urls: &[String], workers: usize) -> Vec<Result<ReputationReport>> {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<ReputationReport>>>> = urls.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..workers.max(1).min(urls.len().max(1)) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= urls.len() {
                        break;
                    }
                    *slots[i].lock().unwrap() = Some(self.scan(&urls[i]));
                });
            }
        });
        slots.into_iter().map(|m| m.into_inner().unwrap().expect("every slot filled")).collect()
    }

    /// URLs whose newest report is at least the re-check delay old.
    pub fn pending_rechecks(&self) -> Result<Vec<String>> {
        let now = self.clock.now();
        let mut latest: IndexMap<String, DateTime<Utc>> = IndexMap::new();
        for r in self.store.history()? {
            latest.insert(r.url.clone(), r.scanned_at);
        }
        Ok(latest
            .into_iter()
            .filter(|(_, t)| now - *t >= self.policy.recheck_delay())
            .map(|(u, _)| u)
            .collect())
    }

    /// One-shot delayed rescan of every due URL.
    pub fn rescan(&self) -> Result<Vec<ReputationReport>> {
        self.pending_rechecks()?.iter().map(|u| self.fetch_fresh(u)).collect()
    }
}

// ---------------------------------------------------------------------------
// blocklist

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlocklistStatus {
    ListedVerified,
    NotListed,
}

#[derive(Debug, Deserialize)]
struct FeedEntry {
    url: String,
    #[serde(default)]
    verified: Option<serde_json::Value>,
}

fn truthy(v: &serde_json::Value) -> bool {
    match v {
        serde_json::Value::Bool(b) => *b,
        serde_json::Value::String(s) => matches!(s.to_ascii_lowercase().as_str(), "yes" | "true" | "y" | "1"),
        serde_json::Value::Number(n) => n.as_u64() == Some(1),
        _ => false,
    }
}

fn match_key(url: &str) -> String {
    let c = claims::canonicalize(url.trim()).map(|(c, _)| c).unwrap_or_else(|_| url.trim().to_string());
    c.strip_suffix('/').map(str::to_string).unwrap_or(c)
}

/// Verified entries of a community phishing feed dump.
#[derive(Debug, Clone, Default)]
pub struct Blocklist {
    listed: HashSet<String>,
}

impl Blocklist {
    pub fn from_urls<I: IntoIterator<Item = S>, S: AsRef<str>>(urls: I) -> Self {
        Self {
            listed: urls.into_iter().map(|u| match_key(u.as_ref())).collect(),
        }
    }

    /// JSON array of `{url, verified}` objects; unverified entries are ignored.
    pub fn from_json(raw: &str) -> Result<Self> {
        let entries: Vec<FeedEntry> =
            serde_json::from_str(raw).map_err(|e| Error::Validation(format!("blocklist feed: {e}")))?;
        Ok(Self::from_urls(
            entries.into_iter().filter(|e| e.verified.as_ref().is_some_and(truthy)).map(|e| e.url),
        ))
    }

    /// CSV with `url` and `verified` header columns.
    pub fn from_csv(raw: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(raw.as_bytes());
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
        let (Some(u), Some(v)) = (col("url"), col("verified")) else {
            return Err(Error::Validation("blocklist CSV needs url and verified columns".into()));
        };
        let mut urls = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if truthy(&serde_json::Value::String(rec.get(v).unwrap_or("").trim().to_string())) {
                urls.push(rec.get(u).unwrap_or("").to_string());
            }
        }
        Ok(Self::from_urls(urls))
    }

    pub fn parse(raw: &str, format_hint: &str) -> Result<Self> {
        if format_hint.eq_ignore_ascii_case("csv") {
            Self::from_csv(raw)
        } else {
            Self::from_json(raw)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("json");
        Self::parse(&raw, ext)
    }

    /// Downloads a feed dump, retrying transient failures per `policy`.
    pub fn fetch(feed_url: &str, policy: &ScanPolicy, clock: &dyn Clock) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(policy.timeout_ms))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("http client: {e}")))?;
        let mut attempt = 0;
        loop {
            let reason = match http.get(feed_url).send() {
                Ok(r) if r.status().is_success() => {
                    let body = r.text().map_err(|e| Error::ServiceUnavailable {
                        url: feed_url.into(),
                        reason: e.to_string(),
                    })?;
                    let hint = if feed_url.ends_with(".csv") { "csv" } else { "json" };
                    return Self::parse(&body, hint);
                }
                Ok(r) if matches!(r.status().as_u16(), 401 | 403) => {
                    return Err(Error::Credential(format!("blocklist feed returned HTTP {}", r.status())))
                }
                Ok(r) => format!("HTTP {}", r.status()),
                Err(e) => e.to_string(),
            };
            if attempt >= policy.max_retries {
                return Err(Error::ServiceUnavailable { url: feed_url.into(), reason });
            }
            clock.sleep(policy.backoff(attempt));
            attempt += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.listed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.listed.is_empty()
    }

    pub fn lookup(&self, url: &str) -> BlocklistStatus {
        if self.listed.contains(&match_key(url)) {
            BlocklistStatus::ListedVerified
        } else {
            BlocklistStatus::NotListed
        }
    }
}

// ---------------------------------------------------------------------------
// classification and review

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UrlVerdict {
    Malicious,
    Benign,
}

impl fmt::Display for UrlVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UrlVerdict::Malicious => "malicious",
            UrlVerdict::Benign => "benign",
        })
    }
}

impl FromStr for UrlVerdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "malicious" => Ok(UrlVerdict::Malicious),
            "benign" => Ok(UrlVerdict::Benign),
            other => Err(Error::Validation(format!("unknown verdict {other:?}"))),
        }
    }
}

pub fn classify_url(report: &ReputationReport, blocklist: BlocklistStatus, policy: &ScanPolicy) -> UrlVerdict {
    if report.malicious_count >= policy.malicious_threshold || blocklist == BlocklistStatus::ListedVerified {
        UrlVerdict::Malicious
    } else {
        UrlVerdict::Benign
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelBasis {
    Scanner,
    Blocklist,
    Review,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlLabel {
    pub url: String,
    pub verdict: UrlVerdict,
    pub basis: LabelBasis,
    pub malicious_count: u32,
    pub malicious_threshold: u32,
    pub blocklist: BlocklistStatus,
}

pub fn label_url(report: &ReputationReport, blocklist: BlocklistStatus, policy: &ScanPolicy) -> UrlLabel {
    let verdict = classify_url(report, blocklist, policy);
    let basis = if report.malicious_count >= policy.malicious_threshold {
        LabelBasis::Scanner
    } else if blocklist == BlocklistStatus::ListedVerified {
        LabelBasis::Blocklist
    } else {
        LabelBasis::Scanner
    };
    UrlLabel {
        url: report.url.clone(),
        verdict,
        basis,
        malicious_count: report.malicious_count,
        malicious_threshold: policy.malicious_threshold,
        blocklist,
    }
}

pub const REVIEW_COLUMNS: [&str; 6] = ["url", "first_seen_post", "screenshot", "verdict", "analyst", "notes"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub url: String,
    pub first_seen_post: String,
}

/// Worksheet CSV for manual inspection; verdict, analyst and notes are left
/// blank for the analyst.
pub fn export_review_queue(items: &[ReviewItem]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REVIEW_COLUMNS)?;
    for it in items {
        w.write_record([it.url.as_str(), it.first_seen_post.as_str(), "", "", "", ""])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writes utf-8"))
}

/// Benign, unlisted URLs with the first post that claimed each.
pub fn review_candidates(labels: &[UrlLabel], first_seen: &IndexMap<String, Vec<String>>) -> Vec<ReviewItem> {
    labels
        .iter()
        .filter(|l| l.verdict == UrlVerdict::Benign && l.blocklist == BlocklistStatus::NotListed)
        .map(|l| ReviewItem {
            url: l.url.clone(),
            first_seen_post: first_seen.get(&l.url).and_then(|p| p.first()).cloned().unwrap_or_default(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewOverride {
    pub url: String,
    pub verdict: UrlVerdict,
    pub analyst: String,
    pub notes: String,
}

/// Parses a filled worksheet. Rows with a blank verdict are skipped; any
/// bad row fails the whole import with every offending row listed.
pub fn import_review(raw: &str) -> Result<Vec<ReviewOverride>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(raw.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(cu), Some(cv)) = (col("url"), col("verdict")) else {
        return Err(Error::Validation("review file needs url and verdict columns".into()));
    };
    let (ca, cn) = (col("analyst"), col("notes"));
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("row {row}: {e}"));
                continue;
            }
        };
        let get = |c: Option<usize>| c.and_then(|c| rec.get(c)).unwrap_or("").trim().to_string();
        let url = get(Some(cu));
        let verdict = get(Some(cv));
        if verdict.is_empty() {
            continue;
        }
        if url.is_empty() {
            problems.push(format!("row {row}: missing url"));
            continue;
        }
        match verdict.parse::<UrlVerdict>() {
            Ok(v) => out.push(ReviewOverride {
                url,
                verdict: v,
                analyst: get(ca),
                notes: get(cn),
            }),
            Err(_) => problems.push(format!("row {row}: verdict {verdict:?} is not malicious or benign")),
        }
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(Error::Validation(format!("review file rejected: {}", problems.join("; "))))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRow {
    pub url: String,
    pub from: UrlVerdict,
    pub to: UrlVerdict,
    pub analyst: String,
    pub notes: String,
    pub review_file_sha256: String,
    pub applied_at: DateTime<Utc>,
}

/// Applies overrides to `labels`, appending one audit row per change.
/// Re-applying the same override (same url, verdict, analyst, notes) is a
/// no-op. Returns the rows added.
pub fn apply_overrides(
    labels: &mut [UrlLabel],
    overrides: &[ReviewOverride],
    audit: &mut Vec<AuditRow>,
    review_file_sha256: &str,
    now: DateTime<Utc>,
) -> Result<Vec<AuditRow>> {
    let mut added = Vec::new();
    for o in overrides {
        let key = match_key(&o.url);
        let Some(label) = labels.iter_mut().find(|l| match_key(&l.url) == key) else {
            return Err(Error::Validation(format!("review row for unknown url {}", o.url)));
        };
        let already = audit
            .iter()
            .any(|a| match_key(&a.url) == key && a.to == o.verdict && a.analyst == o.analyst && a.notes == o.notes);
        if already && label.verdict == o.verdict && label.basis == LabelBasis::Review {
            continue;
        }
        let row = AuditRow {
            url: label.url.clone(),
            from: label.verdict,
            to: o.verdict,
            analyst: o.analyst.clone(),
            notes: o.notes.clone(),
            review_file_sha256: review_file_sha256.to_string(),
            applied_at: now,
        };
        label.verdict = o.verdict;
        label.basis = LabelBasis::Review;
        audit.push(row.clone());
        added.push(row);
    }
    Ok(added)
}

/// Replays an audit log on freshly computed labels, so review decisions
/// survive re-classification.
pub fn replay_audit(labels: &mut [UrlLabel], audit: &[AuditRow]) {
    for a in audit {
        let key = match_key(&a.url);
        if let Some(l) = labels.iter_mut().find(|l| match_key(&l.url) == key) {
            l.verdict = a.to;
            l.basis = LabelBasis::Review;
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
