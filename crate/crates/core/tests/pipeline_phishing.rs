use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::TimeZone;
use misinfo_core::clock::{Clock, ManualClock};
use misinfo_core::mocknet::{max_requests_in_window, MockConfig, MockServer};
use misinfo_core::pipeline::*;
use misinfo_core::reputation::UrlVerdict;
use misinfo_core::Error;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn truth() -> BTreeMap<String, String> {
    let raw = std::fs::read_to_string(fixtures().join("phishing/truth.csv")).unwrap();
    raw.lines().skip(1).map(|l| {
        let (u, v) = l.split_once(',').unwrap();
        (u.to_string(), v.to_string())
    }).collect()
}

fn config(out: &Path) -> PhishingConfig {
    let f = fixtures();
    let raw = format!(
        r#"
[phishing]
posts = "{p}/phishing/posts.jsonl"
out_dir = "{out}"
review = "{p}/phishing/review.csv"
[phishing.select]
keywords = ["phishing"]
same_day = true
[phishing.scanner]
mode = "fixture"
fixtures = "{p}/vt"
workers = 3
[phishing.blocklist]
path = "{p}/vt/blocklist.json"
[phishing.graph]
edges = "{p}/phishing/follows.csv"
seed = 3
"#,
        p = f.display(),
        out = out.display()
    );
    PipelineConfig::from_toml(&raw).unwrap().phishing.unwrap()
}

fn clock() -> ManualClock {
    ManualClock::new(chrono::Utc.with_ymd_and_hms(2020, 8, 2, 0, 0, 0).unwrap())
}

fn opts(clock: &ManualClock) -> PhishingOptions {
    PhishingOptions { clock: Arc::new(clock.clone()), live: false, api_key: None, from: None }
}

fn labels_of(o: &PhishingOutcome) -> BTreeMap<String, String> {
    o.url_labels.iter().map(|l| (l.url.clone(), l.verdict.to_string())).collect()
}

#[test]
fn fixture_run_matches_truth_table() {
    let out = tempfile::tempdir().unwrap();
    let o = run_phishing_pipeline(&config(out.path()), &opts(&clock())).unwrap();
    assert_eq!(labels_of(&o), truth());
    assert!(o.prevalence.identities_hold());
    assert_eq!(o.ran.len(), 6);
    for f in ["prevalence.csv", "campaigns.csv", "communities.csv", "echo.csv", "review_queue.csv"] {
        assert!(out.path().join(f).exists(), "{f}");
    }
    let queue = std::fs::read_to_string(out.path().join("review_queue.csv")).unwrap();
    assert!(!queue.contains("parcel-notice"));
    assert!(queue.contains("news0.example"));
}

#[test]
fn rerun_resumes_and_reproduces_reports() {
    let out = tempfile::tempdir().unwrap();
    let c = clock();
    let cfg = config(out.path());
    run_phishing_pipeline(&cfg, &opts(&c)).unwrap();
    let read = |f: &str| std::fs::read(out.path().join(f)).unwrap();
    let before: Vec<_> = ["prevalence.csv", "prevalence.json", "campaigns.csv", "url_labels.jsonl", "communities.csv"]
        .iter().map(|f| read(f)).collect();

    let o = run_phishing_pipeline(&cfg, &opts(&c)).unwrap();
    assert!(o.ran.is_empty());

    // Simulate an interruption after the scan stage.
    for f in ["url_labels.jsonl", "labeled_claims.jsonl", "communities.csv"] {
        std::fs::remove_file(out.path().join(f)).unwrap();
    }
    let o = run_phishing_pipeline(&cfg, &opts(&c)).unwrap();
    assert_eq!(o.ran, [PhishingStage::Labels, PhishingStage::Prevalence, PhishingStage::Graph]);
    let after: Vec<_> = ["prevalence.csv", "prevalence.json", "campaigns.csv", "url_labels.jsonl", "communities.csv"]
        .iter().map(|f| read(f)).collect();
    assert_eq!(before, after);

    let o = run_phishing_pipeline(&cfg, &PhishingOptions { from: Some(PhishingStage::Claims), ..opts(&c) }).unwrap();
    assert_eq!(o.ran.len(), 5);
    assert_eq!(labels_of(&o), truth());
}

#[test]
fn live_without_key_fails_before_any_request() {
    let out = tempfile::tempdir().unwrap();
    let c = clock();
    let mut cfg = config(out.path());
    cfg.scanner.base_url = "http://127.0.0.1:9".into();
    let err = run_phishing_pipeline(&cfg, &PhishingOptions { live: true, ..opts(&c) }).unwrap_err();
    assert!(matches!(err, Error::Credential(_)), "{err:?}");
    assert_eq!(err.exit_code(), 2);
    assert!(!out.path().join("filtered.jsonl").exists());
}

#[test]
fn mocknet_run_honours_rate_limit() {
    let out = tempfile::tempdir().unwrap();
    let c = clock();
    let mut mc = MockConfig::new(&fixtures().join("vt"), Arc::new(c.clone()));
    mc.faults = "429,200,timeout".parse().unwrap();
    mc.timeout_delay = std::time::Duration::from_millis(400);
    let srv = MockServer::start(mc).unwrap();
    let mut cfg = config(out.path());
    cfg.scanner.mode = ScannerMode::Http;
    cfg.scanner.base_url = srv.base_url();
    cfg.scanner.policy.timeout_ms = 200;
    cfg.scanner.workers = 4;
    cfg.blocklist = Some(BlocklistSection { path: None, url: Some(format!("{}/feeds/blocklist.json", srv.base_url())) });
    let t0 = c.now();
    let o = run_phishing_pipeline(&cfg, &PhishingOptions { api_key: Some("k".into()), ..opts(&c) }).unwrap();
    assert_eq!(labels_of(&o), truth());
    let log = srv.log();
    assert!(max_requests_in_window(&log, chrono::Duration::seconds(60)) <= 4);
    assert!(c.now() - t0 >= chrono::Duration::minutes(9));
    let malicious = o.url_labels.iter().filter(|l| l.verdict == UrlVerdict::Malicious).count();
    assert_eq!(malicious, truth().values().filter(|v| *v == "malicious").count());
}
