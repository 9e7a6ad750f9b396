//! The two end-to-end runs driven by one TOML file. Each stage writes its
//! output into the run directory and is skipped on later runs while that
//! output exists; delete a checkpoint (or pass a `from` stage) to redo it and
//! everything after it.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::NaiveDate;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::annotate::Label;
use crate::claims::{extract_claims, unique_urls, UrlClaim};
use crate::clock::Clock;
use crate::error::{Error, Result};
use crate::graph::{echo_analysis, louvain, network_metrics, FollowGraph};
use crate::ingest::{self, Account, FilterOptions, KeywordSet, Platform, Post, TimeWindow};
use crate::jsonl;
use crate::model::{classify_posts, train_stage, Stage, StageModel, TrainOptions, TrainReport};
use crate::prevalence::{
    campaign_urls, false_claim_rates, label_claims, prevalence_report, retweet_spread, CampaignReport, LabeledClaim,
    PrevalenceReport, DEFAULT_MIN_TWEETS,
};
use crate::report::{growth_series, platform_summary, summary_csv, summary_table, Bucket, Prediction};
use crate::reputation::{
    apply_overrides, export_review_queue, import_review, label_url, replay_audit, review_candidates, sha256_hex,
    AuditRow, Blocklist, FixtureClient, HttpClient, JsonlStore, ReportClient, ReportStore,
    ScanPolicy, Scanner, UrlLabel, UrlVerdict,
};

pub const DEFAULT_SCANNER_URL: &str = "https://www.virustotal.com";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub phishing: Option<PhishingConfig>,
    pub zoom: Option<ZoomConfig>,
}

impl PipelineConfig {
    pub fn from_toml(raw: &str) -> Result<Self> {
        Ok(toml::from_str(raw)?)
    }

    /// Reads the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&raw)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = cfg.phishing.as_mut() {
            p.resolve_paths(base);
        }
        if let Some(z) = cfg.zoom.as_mut() {
            z.resolve_paths(base);
        }
        Ok(cfg)
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn rebase_opt(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(p) = p.as_mut() {
        rebase(base, p);
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selection {
    #[serde(default)]
    pub keywords: Vec<String>,
    pub keywords_file: Option<PathBuf>,
    /// `start..end` as RFC 3339 timestamps or dates.
    pub window: Option<String>,
    #[serde(default)]
    pub same_day: bool,
    pub ingestion_date: Option<NaiveDate>,
    #[serde(default)]
    pub english_only: bool,
    #[serde(default)]
    pub dedup_retweets: bool,
}

impl Selection {
    fn keyword_set(&self) -> Result<KeywordSet> {
        let mut terms = self.keywords.clone();
        if let Some(path) = &self.keywords_file {
            terms.extend(KeywordSet::load(path)?.accepted);
        }
        Ok(KeywordSet::from_terms(terms))
    }

    fn filter_options(&self) -> Result<FilterOptions> {
        Ok(FilterOptions {
            window: self.window.as_deref().map(TimeWindow::parse).transpose()?,
            same_day: self.same_day,
            ingestion_date: self.ingestion_date,
            english_only: self.english_only,
            dedup_retweets: self.dedup_retweets,
        })
    }

    fn apply(&self, posts: &[Post]) -> Result<Vec<Post>> {
        ingest::filter_posts(posts, &self.keyword_set()?, &self.filter_options()?)
    }
}

fn load_platform_posts(path: &Path, platform: Platform) -> Result<Vec<Post>> {
    let loaded = ingest::load_posts(path, platform)?;
    for d in &loaded.diagnostics {
        log::warn!("{}:{}: {}", path.display(), d.line, d.message);
    }
    Ok(loaded.records)
}

// ---------------------------------------------------------------------------
// phishing

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScannerMode {
    /// Canned reports read straight from a directory.
    #[default]
    Fixture,
    /// The reputation API at `base_url`; needs the API key.
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScannerSection {
    #[serde(default)]
    pub mode: ScannerMode,
    pub fixtures: Option<PathBuf>,
    #[serde(default = "default_scanner_url")]
    pub base_url: String,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub policy: ScanPolicy,
}

fn default_scanner_url() -> String {
    DEFAULT_SCANNER_URL.into()
}

fn one() -> usize {
    1
}

impl Default for ScannerSection {
    fn default() -> Self {
        Self {
            mode: ScannerMode::Fixture,
            fixtures: None,
            base_url: default_scanner_url(),
            workers: 1,
            policy: ScanPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlocklistSection {
    pub path: Option<PathBuf>,
    pub url: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    /// CSV of follower edges: `source,target[,weight]`.
    pub edges: PathBuf,
    #[serde(default = "unit")]
    pub resolution: f64,
    #[serde(default)]
    pub seed: u64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhishingConfig {
    pub posts: PathBuf,
    #[serde(default = "twitter")]
    pub platform: Platform,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub select: Selection,
    #[serde(default)]
    pub scanner: ScannerSection,
    pub blocklist: Option<BlocklistSection>,
    /// Filled review worksheet; applied by the labels stage.
    pub review: Option<PathBuf>,
    #[serde(default = "default_min_tweets")]
    pub campaign_min_tweets: u64,
    pub graph: Option<GraphSection>,
}

fn twitter() -> Platform {
    Platform::Twitter
}

fn default_min_tweets() -> u64 {
    DEFAULT_MIN_TWEETS
}

impl PhishingConfig {
    fn resolve_paths(&mut self, base: &Path) {
        rebase(base, &mut self.posts);
        rebase(base, &mut self.out_dir);
        rebase_opt(base, &mut self.select.keywords_file);
        rebase_opt(base, &mut self.scanner.fixtures);
        rebase_opt(base, &mut self.review);
        if let Some(b) = self.blocklist.as_mut() {
            rebase_opt(base, &mut b.path);
        }
        if let Some(g) = self.graph.as_mut() {
            rebase(base, &mut g.edges);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhishingStage {
    Filter,
    Claims,
    Scan,
    Labels,
    Prevalence,
    Graph,
}

impl PhishingStage {
    pub const ALL: [PhishingStage; 6] = [
        PhishingStage::Filter,
        PhishingStage::Claims,
        PhishingStage::Scan,
        PhishingStage::Labels,
        PhishingStage::Prevalence,
        PhishingStage::Graph,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PhishingStage::Filter => "filter",
            PhishingStage::Claims => "claims",
            PhishingStage::Scan => "scan",
            PhishingStage::Labels => "labels",
            PhishingStage::Prevalence => "prevalence",
            PhishingStage::Graph => "graph",
        }
    }

    /// Files owned by the stage, relative to the run directory. The first
    /// one marks the stage as done.
    pub fn checkpoints(self) -> &'static [&'static str] {
        match self {
            PhishingStage::Filter => &["filtered.jsonl"],
            PhishingStage::Claims => &["claims.jsonl"],
            PhishingStage::Scan => &["scan.done", "reports.jsonl"],
            PhishingStage::Labels => &["url_labels.jsonl", "review_queue.csv"],
            PhishingStage::Prevalence => &[
                "labeled_claims.jsonl",
                "prevalence.json",
                "prevalence.csv",
                "prevalence.txt",
                "false_claim_rates.csv",
                "retweet_histogram.csv",
                "campaigns.csv",
            ],
            PhishingStage::Graph => &["communities.csv", "network.json", "echo.csv"],
        }
    }
}

impl std::str::FromStr for PhishingStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown phishing stage {s:?}")))
    }
}

pub struct PhishingOptions {
    pub clock: Arc<dyn Clock>,
    /// Force the HTTP scanner against `scanner.base_url`.
    pub live: bool,
    pub api_key: Option<String>,
    /// Redo this stage and every later one.
    pub from: Option<PhishingStage>,
}

#[derive(Debug, Clone)]
pub struct PhishingOutcome {
    pub out_dir: PathBuf,
    pub ran: Vec<PhishingStage>,
    pub skipped: Vec<PhishingStage>,
    pub url_labels: Vec<UrlLabel>,
    pub prevalence: PrevalenceReport,
    pub campaigns: CampaignReport,
}

fn clear_from(out: &Path, from: PhishingStage) -> Result<()> {
    for st in PhishingStage::ALL.into_iter().filter(|&s| s >= from) {
        for f in st.checkpoints() {
            let p = out.join(f);
            if p.exists() {
                std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
            }
        }
    }
    Ok(())
}

fn done(out: &Path, stage: PhishingStage) -> bool {
    out.join(stage.checkpoints()[0]).exists()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    jsonl::write_atomic(path, text.as_bytes())
}

fn make_client(cfg: &ScannerSection, mode: ScannerMode, api_key: Option<&str>) -> Result<Box<dyn ReportClient>> {
    match mode {
        ScannerMode::Http => {
            let key = api_key.ok_or_else(|| {
                Error::Credential(format!("{} is not set; the HTTP scanner needs it", crate::reputation::API_KEY_ENV))
            })?;
            Ok(Box::new(HttpClient::new(
                &cfg.base_url,
                key.to_string(),
                Duration::from_millis(cfg.policy.timeout_ms),
            )?))
        }
        ScannerMode::Fixture => {
            let dir = cfg
                .fixtures
                .as_deref()
                .ok_or_else(|| Error::Validation("scanner.fixtures is required in fixture mode".into()))?;
            Ok(Box::new(FixtureClient::new(dir)?))
        }
    }
}

fn load_blocklist(cfg: Option<&BlocklistSection>, policy: &ScanPolicy, clock: &dyn Clock) -> Result<Blocklist> {
    match cfg {
        None => Ok(Blocklist::from_urls(Vec::<String>::new())),
        Some(b) => match (&b.path, &b.url) {
            (Some(p), _) => Blocklist::load(p),
            (None, Some(u)) => Blocklist::fetch(u, policy, clock),
            (None, None) => Err(Error::Validation("blocklist needs a path or a url".into())),
        },
    }
}

pub fn run_phishing_pipeline(cfg: &PhishingConfig, opts: &PhishingOptions) -> Result<PhishingOutcome> {
    let mode = if opts.live { ScannerMode::Http } else { cfg.scanner.mode };
    if mode == ScannerMode::Http && opts.api_key.as_deref().is_none_or(str::is_empty) {
        return Err(Error::Credential(format!(
            "{} is not set; live scanning needs it",
            crate::reputation::API_KEY_ENV
        )));
    }
    cfg.scanner.policy.validate()?;
    let out = cfg.out_dir.as_path();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    if let Some(from) = opts.from {
        clear_from(out, from)?;
    }
    let mut ran = Vec::new();
    let mut skipped = Vec::new();
    let mut mark = |st: PhishingStage, did: bool| if did { ran.push(st) } else { skipped.push(st) };

    // filter
    let filtered_path = out.join("filtered.jsonl");
    let filtered = if done(out, PhishingStage::Filter) {
        mark(PhishingStage::Filter, false);
        load_platform_posts(&filtered_path, cfg.platform)?
    } else {
        let posts = load_platform_posts(&cfg.posts, cfg.platform)?;
        let kept = cfg.select.apply(&posts)?;
        log::info!("filter: kept {} of {} posts", kept.len(), posts.len());
        ingest::write_posts(&filtered_path, &kept)?;
        mark(PhishingStage::Filter, true);
        kept
    };

    // claims
    let claims_path = out.join("claims.jsonl");
    let claims: Vec<UrlClaim> = if done(out, PhishingStage::Claims) {
        mark(PhishingStage::Claims, false);
        jsonl::read_all(&claims_path)?
    } else {
        let mut claims = Vec::new();
        for p in &filtered {
            let ex = extract_claims(p);
            for d in ex.diagnostics {
                log::warn!("post {}: {d}", p.id);
            }
            claims.extend(ex.claims);
        }
        jsonl::write_all(&claims_path, &claims)?;
        mark(PhishingStage::Claims, true);
        claims
    };
    let first_seen = unique_urls(&claims);
    let urls: Vec<String> = first_seen.keys().cloned().collect();

    // scan
    let store: Arc<dyn ReportStore> = Arc::new(JsonlStore::open(&out.join("reports.jsonl"))?);
    if done(out, PhishingStage::Scan) {
        mark(PhishingStage::Scan, false);
    } else {
        let missing: Vec<String> =
            urls.iter().filter(|u| matches!(store.latest(u), Ok(None))).cloned().collect();
        let client = make_client(&cfg.scanner, mode, opts.api_key.as_deref())?;
        let scanner = Scanner::new(client, cfg.scanner.policy.clone(), store.clone(), opts.clock.clone())?;
        log::info!("scan: {} urls, {} already stored", urls.len(), urls.len() - missing.len());
        let results = scanner.scan_all(&missing, cfg.scanner.workers);
        if let Some(err) = results.into_iter().find_map(|r| r.err()) {
            return Err(err);
        }
        write_text(&out.join("scan.done"), &format!("{}\n", urls.len()))?;
        mark(PhishingStage::Scan, true);
    }

    // labels
    let labels_path = out.join("url_labels.jsonl");
    let url_labels: Vec<UrlLabel> = if done(out, PhishingStage::Labels) {
        mark(PhishingStage::Labels, false);
        jsonl::read_all(&labels_path)?
    } else {
        let blocklist = load_blocklist(cfg.blocklist.as_ref(), &cfg.scanner.policy, opts.clock.as_ref())?;
        let mut labels = Vec::with_capacity(urls.len());
        for u in &urls {
            let report = store
                .latest(u)?
                .ok_or_else(|| Error::Validation(format!("no reputation report stored for {u}")))?;
            labels.push(label_url(&report, blocklist.lookup(u), &cfg.scanner.policy));
        }
        let audit_path = out.join("review_audit.jsonl");
        let mut audit: Vec<AuditRow> = if audit_path.exists() { jsonl::read_all(&audit_path)? } else { Vec::new() };
        replay_audit(&mut labels, &audit);
        if let Some(review) = &cfg.review {
            let raw = std::fs::read(review).map_err(|e| Error::io(review, e))?;
            let overrides = import_review(&String::from_utf8_lossy(&raw))?;
            let added = apply_overrides(&mut labels, &overrides, &mut audit, &sha256_hex(&raw), opts.clock.now())?;
            if !added.is_empty() {
                log::info!("review: {} labels changed", added.len());
                jsonl::write_all(&audit_path, &audit)?;
            }
        }
        let queue: Vec<_> = review_candidates(&labels, &first_seen)
            .into_iter()
            .filter(|c| labels.iter().any(|l| l.url == c.url && l.basis != crate::reputation::LabelBasis::Review))
            .collect();
        write_text(&out.join("review_queue.csv"), &export_review_queue(&queue)?)?;
        jsonl::write_all(&labels_path, &labels)?;
        mark(PhishingStage::Labels, true);
        labels
    };

    // prevalence
    let labeled_path = out.join("labeled_claims.jsonl");
    let labeled: Vec<LabeledClaim> = if done(out, PhishingStage::Prevalence) {
        mark(PhishingStage::Prevalence, false);
        jsonl::read_all(&labeled_path)?
    } else {
        let verdicts: HashMap<String, UrlVerdict> = url_labels.iter().map(|l| (l.url.clone(), l.verdict)).collect();
        let labeled = label_claims(&claims, &filtered, &verdicts)?;
        write_prevalence_outputs(out, &labeled, cfg.campaign_min_tweets)?;
        jsonl::write_all(&labeled_path, &labeled)?;
        mark(PhishingStage::Prevalence, true);
        labeled
    };

    // graph
    if let Some(g) = &cfg.graph {
        if done(out, PhishingStage::Graph) {
            mark(PhishingStage::Graph, false);
        } else {
            run_graph_stage(out, g, &labeled)?;
            mark(PhishingStage::Graph, true);
        }
    }

    Ok(PhishingOutcome {
        out_dir: out.to_path_buf(),
        ran,
        skipped,
        url_labels,
        prevalence: prevalence_report(&labeled),
        campaigns: campaign_urls(&labeled, cfg.campaign_min_tweets),
    })
}

fn write_prevalence_outputs(out: &Path, labeled: &[LabeledClaim], min_tweets: u64) -> Result<()> {
    let report = prevalence_report(labeled);
    write_text(&out.join("prevalence.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    write_text(&out.join("prevalence.csv"), &report.to_csv())?;
    write_text(&out.join("prevalence.txt"), &report.to_table())?;
    write_text(&out.join("false_claim_rates.csv"), &false_claim_rates(labeled).histogram.to_csv())?;
    write_text(&out.join("retweet_histogram.csv"), &retweet_spread(labeled).histogram.to_csv())?;
    write_text(&out.join("campaigns.csv"), &campaigns_csv(&campaign_urls(labeled, min_tweets)))?;
    Ok(())
}

pub fn campaigns_csv(report: &CampaignReport) -> String {
    let mut s = format!("# min_tweets: {}\n# distinct_users: {}\nurl,tweet_count,distinct_users\n", report.min_tweets, report.distinct_users);
    for u in &report.urls {
        s.push_str(&format!("{},{},{}\n", u.url, u.tweet_count, u.distinct_users));
    }
    s
}

fn run_graph_stage(out: &Path, g: &GraphSection, labeled: &[LabeledClaim]) -> Result<()> {
    let graph = FollowGraph::from_csv(&g.edges)?;
    let partition = louvain(&graph, g.resolution, g.seed)?;
    let metrics = network_metrics(&graph)?;
    let false_claims: Vec<(String, String)> = labeled
        .iter()
        .filter(|c| c.url_verdict == UrlVerdict::Benign)
        .map(|c| (c.user_id.clone(), c.url.clone()))
        .collect();
    let echo = echo_analysis(&graph, &partition, &false_claims);
    let mut echo_csv = String::from("community,members,echo_users\n");
    for r in &echo {
        echo_csv.push_str(&format!("{},{},{}\n", r.community, r.members, r.echo_users));
    }
    write_text(&out.join("network.json"), &(serde_json::to_string_pretty(&serde_json::json!({
        "metrics": metrics,
        "modularity": partition.modularity,
        "communities": partition.community_count(),
        "resolution": g.resolution,
        "seed": g.seed,
    }))? + "\n"))?;
    write_text(&out.join("echo.csv"), &echo_csv)?;
    write_text(&out.join("communities.csv"), &partition.to_csv(&graph))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// zoom misinformation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelMode {
    /// Train when the model files are absent, reuse them otherwise.
    #[default]
    Train,
    /// Only load existing models.
    ClassifyOnly,
}

impl std::str::FromStr for ModelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(ModelMode::Train),
            "classify-only" => Ok(ModelMode::ClassifyOnly),
            other => Err(Error::InvalidArgument(format!("unknown stage {other:?}; use train or classify-only"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformInput {
    pub platform: Platform,
    pub posts: PathBuf,
    pub accounts: Option<PathBuf>,
    /// Line-delimited `{post_id, label}` records; extra fields are ignored.
    pub groundtruth: Option<PathBuf>,
    pub relevance_model: Option<PathBuf>,
    pub misinfo_model: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoomConfig {
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stage: ModelMode,
    #[serde(default)]
    pub select: Selection,
    #[serde(default)]
    pub markers: Vec<NaiveDate>,
    #[serde(default)]
    pub train: TrainOptions,
    pub platforms: Vec<PlatformInput>,
}

impl ZoomConfig {
    fn resolve_paths(&mut self, base: &Path) {
        rebase(base, &mut self.out_dir);
        rebase_opt(base, &mut self.select.keywords_file);
        for p in &mut self.platforms {
            rebase(base, &mut p.posts);
            rebase_opt(base, &mut p.accounts);
            rebase_opt(base, &mut p.groundtruth);
            rebase_opt(base, &mut p.relevance_model);
            rebase_opt(base, &mut p.misinfo_model);
        }
    }

    pub fn model_path(&self, input: &PlatformInput, stage: Stage) -> PathBuf {
        let explicit = match stage {
            Stage::Relevance => &input.relevance_model,
            Stage::Misinfo => &input.misinfo_model,
        };
        explicit.clone().unwrap_or_else(|| {
            let name = match stage {
                Stage::Relevance => "relevance",
                Stage::Misinfo => "misinfo",
            };
            self.out_dir.join("models").join(format!("{}_{name}.json", input.platform))
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
struct LabelRecord {
    post_id: String,
    label: Label,
}

pub fn load_groundtruth(path: &Path) -> Result<HashMap<String, Label>> {
    let rows: Vec<LabelRecord> = jsonl::read_all(path)?;
    let mut out = HashMap::with_capacity(rows.len());
    for r in rows {
        if let Some(prev) = out.insert(r.post_id.clone(), r.label) {
            if prev != r.label {
                return Err(Error::Validation(format!("conflicting groundtruth labels for post {}", r.post_id)));
            }
        }
    }
    Ok(out)
}

fn load_account_map(path: Option<&Path>, platform: Platform) -> Result<HashMap<String, Account>> {
    let Some(path) = path else { return Ok(HashMap::new()) };
    let loaded = ingest::load_accounts(path, platform)?;
    for d in &loaded.diagnostics {
        log::warn!("{}:{}: {}", path.display(), d.line, d.message);
    }
    Ok(loaded.records.into_iter().map(|a| (a.id.clone(), a)).collect())
}

#[derive(Debug, Clone)]
pub struct ZoomOutcome {
    pub out_dir: PathBuf,
    pub predictions: Vec<Prediction>,
    pub training: BTreeMap<String, TrainReport>,
}

fn load_or_train(
    cfg: &ZoomConfig,
    input: &PlatformInput,
    stage: Stage,
    posts: &[Post],
    accounts: &HashMap<String, Account>,
    training: &mut BTreeMap<String, TrainReport>,
) -> Result<StageModel> {
    let path = cfg.model_path(input, stage);
    let report_path = cfg
        .out_dir
        .join(input.platform.as_str())
        .join(format!("train_{}.json", if stage == Stage::Relevance { "relevance" } else { "misinfo" }));
    match cfg.stage {
        ModelMode::ClassifyOnly => StageModel::load(&path),
        ModelMode::Train if path.exists() => {
            if report_path.exists() {
                let raw = std::fs::read_to_string(&report_path).map_err(|e| Error::io(&report_path, e))?;
                training.insert(format!("{}/{stage:?}", input.platform), serde_json::from_str(&raw)?);
            }
            StageModel::load(&path)
        }
        ModelMode::Train => {
            let gt_path = input.groundtruth.as_deref().ok_or_else(|| {
                Error::Validation(format!("{}: training needs a groundtruth file", input.platform))
            })?;
            let labels = load_groundtruth(gt_path)?;
            let opts = TrainOptions { seed: cfg.seed, ..cfg.train };
            let (model, report) = train_stage(input.platform, stage, posts, &labels, accounts, &opts)?;
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            model.save(&path)?;
            write_text(&report_path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
            training.insert(format!("{}/{stage:?}", input.platform), report);
            Ok(model)
        }
    }
}

pub fn run_misinfo_pipeline(cfg: &ZoomConfig) -> Result<ZoomOutcome> {
    if cfg.platforms.is_empty() {
        return Err(Error::Validation("zoom.platforms is empty".into()));
    }
    let out = cfg.out_dir.as_path();
    let mut predictions = Vec::new();
    let mut training = BTreeMap::new();
    for input in &cfg.platforms {
        let dir = out.join(input.platform.as_str());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let accounts = load_account_map(input.accounts.as_deref(), input.platform)?;

        let filtered_path = dir.join("filtered.jsonl");
        let raw_posts = if filtered_path.exists() && cfg.stage == ModelMode::ClassifyOnly {
            Vec::new()
        } else {
            load_platform_posts(&input.posts, input.platform)?
        };
        let filtered = if filtered_path.exists() {
            load_platform_posts(&filtered_path, input.platform)?
        } else {
            let kept = cfg.select.apply(&raw_posts)?;
            log::info!("{}: kept {} of {} posts", input.platform, kept.len(), raw_posts.len());
            ingest::write_posts(&filtered_path, &kept)?;
            kept
        };

        let pred_path = dir.join("predictions.jsonl");
        let preds: Vec<Prediction> = if pred_path.exists() {
            jsonl::read_all(&pred_path)?
        } else {
            let train_posts = if raw_posts.is_empty() { &filtered } else { &raw_posts };
            let rel = load_or_train(cfg, input, Stage::Relevance, train_posts, &accounts, &mut training)?;
            let mis = load_or_train(cfg, input, Stage::Misinfo, train_posts, &accounts, &mut training)?;
            if rel.platform != input.platform || mis.platform != input.platform {
                return Err(Error::Model(format!("model was trained for another platform than {}", input.platform)));
            }
            let preds = classify_posts(&rel, &mis, &filtered, &accounts)?;
            jsonl::write_all(&pred_path, &preds)?;
            preds
        };
        predictions.extend(preds);
    }

    let rows = platform_summary(&predictions);
    write_text(&out.join("summary.csv"), &summary_csv(&rows))?;
    write_text(&out.join("summary.txt"), &summary_table(&rows))?;
    let growth = growth_series(&predictions, Bucket::Month, &cfg.markers);
    write_text(&out.join("growth.csv"), &growth.to_csv())?;
    write_text(&out.join("growth.vl.json"), &(serde_json::to_string_pretty(&growth.plot_spec())? + "\n"))?;
    Ok(ZoomOutcome {
        out_dir: out.to_path_buf(),
        predictions,
        training,
    })
}

/// Writes `labels` as groundtruth records next to `posts` for a synthetic
/// demo corpus.
pub fn write_groundtruth(path: &Path, labels: &[(String, Label)]) -> Result<()> {
    let rows: Vec<IndexMap<&str, serde_json::Value>> = labels
        .iter()
        .map(|(id, l)| IndexMap::from([("post_id", serde_json::json!(id)), ("label", serde_json::json!(l))]))
        .collect();
    jsonl::write_all(path, &rows)
}
