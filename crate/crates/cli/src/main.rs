use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use misinfo_core::annotate::{self, TerminalPrompter};
use misinfo_core::claims::{extract_claims, unique_urls, UrlClaim};
use misinfo_core::clock;
use misinfo_core::graph::{louvain, network_metrics, FollowGraph};
use misinfo_core::ingest::{self, FilterOptions, KeywordSet, Platform, Post, TimeWindow};
use misinfo_core::mocknet::{MockConfig, MockServer};
use misinfo_core::model::{classify_posts, train_stage, Stage, StageModel, TrainOptions};
use misinfo_core::pipeline::{self, ModelMode, PhishingOptions, PhishingStage, PipelineConfig};
use misinfo_core::prevalence::{
    campaign_urls, false_claim_rates, label_claims, prevalence_report, retweet_spread, LabeledClaim,
    DEFAULT_MIN_TWEETS,
};
use misinfo_core::report::{growth_series, platform_summary, summary_csv, summary_table, Bucket, Prediction};
use misinfo_core::reputation::{
    self, apply_overrides, export_review_queue, import_review, review_candidates, sha256_hex, AuditRow,
    FixtureClient, HttpClient, JsonlStore, ReportClient, ReportStore, ScanPolicy, Scanner, UrlLabel,
};
use misinfo_core::stats::{self, Alternative};
use misinfo_core::synth::{self, SynthOptions};
use misinfo_core::{jsonl, Error};

#[derive(Parser)]
#[command(name = "misinfo-sentinel", version, about = "Phishing-claim verification and security misinformation detection")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// End-to-end phishing-claim pipeline.
    Phishing {
        #[command(subcommand)]
        cmd: RunCmd,
    },
    /// End-to-end security misinformation pipeline.
    Zoom {
        #[command(subcommand)]
        cmd: RunCmd,
    },
    /// Load and keyword-filter a post file.
    Ingest(IngestArgs),
    /// Extract defanged URL claims from posts.
    Claims {
        #[command(subcommand)]
        cmd: ClaimsCmd,
    },
    /// Scan URLs, rescan stale reports, review worksheets.
    Reputation {
        #[command(subcommand)]
        cmd: ReputationCmd,
    },
    /// Label claims and summarize misinformation prevalence.
    Prevalence {
        #[command(subcommand)]
        cmd: PrevalenceCmd,
    },
    /// Community detection on a follow graph.
    Graph {
        #[command(subcommand)]
        cmd: GraphCmd,
    },
    /// Two-sample and contingency tests.
    Stats {
        #[command(subcommand)]
        cmd: StatsCmd,
    },
    /// Label posts interactively, measure coder agreement.
    Annotate {
        #[command(subcommand)]
        cmd: AnnotateCmd,
    },
    /// Train one classifier stage for one platform.
    Train(TrainArgs),
    /// Classify posts with one stage model, or both stages.
    Classify(ClassifyArgs),
    /// Per-platform summary and growth tables.
    Report {
        #[command(subcommand)]
        cmd: ReportCmd,
    },
    /// Local stand-in for the scanner API.
    Mocknet {
        #[command(subcommand)]
        cmd: MocknetCmd,
    },
    /// Generate a labeled synthetic corpus for demos.
    Synth(SynthArgs),
}

#[derive(Subcommand)]
enum RunCmd {
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(short, long)]
    config: PathBuf,
    /// Query the live scanner API (needs SCANNER_API_KEY).
    #[arg(long)]
    live: bool,
    /// Redo this stage and all later ones (phishing only).
    #[arg(long)]
    from: Option<PhishingStage>,
    /// train or classify-only (zoom only); overrides the config.
    #[arg(long)]
    stage: Option<ModelMode>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    platform: Platform,
    #[arg(long)]
    input: PathBuf,
    /// One keyword per line.
    #[arg(long)]
    keywords: Option<PathBuf>,
    /// Extra keyword; repeatable.
    #[arg(long = "keyword")]
    keyword: Vec<String>,
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    same_day: bool,
    #[arg(long)]
    english_only: bool,
    #[arg(long)]
    dedup_retweets: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ClaimsCmd {
    /// Find defanged URLs in posts and write one claim per line.
    Extract {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "twitter")]
        platform: Platform,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ScannerArgs {
    /// Read canned reports from this directory instead of HTTP.
    #[arg(long, conflicts_with = "base_url")]
    fixtures: Option<PathBuf>,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Append-only report store.
    #[arg(long, default_value = "reports.jsonl")]
    store: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum ReputationCmd {
    /// Scan every unique URL in a claims file.
    Scan {
        #[arg(long)]
        claims: PathBuf,
        #[command(flatten)]
        scanner: ScannerArgs,
    },
    /// Re-query stored URLs whose report is older than the recheck delay.
    Rescan {
        #[command(flatten)]
        scanner: ScannerArgs,
    },
    Review {
        #[command(subcommand)]
        cmd: ReviewCmd,
    },
}

#[derive(Subcommand)]
enum ReviewCmd {
    /// Worksheet of benign, unlisted URLs for manual inspection.
    Export {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        claims: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Apply a filled worksheet to a label file, recording an audit trail.
    Import {
        #[arg(long)]
        review: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        audit: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum PrevalenceCmd {
    /// Prevalence table from labeled claims.
    Report {
        /// Labeled claims (as written by the phishing pipeline).
        #[arg(long)]
        claims: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_TWEETS)]
        min_tweets: u64,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Also write histograms and campaign CSVs here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Join raw claims, posts and URL labels into labeled claims.
    Label {
        #[arg(long)]
        claims: PathBuf,
        #[arg(long)]
        posts: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value = "twitter")]
        platform: Platform,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GraphCmd {
    /// Louvain communities of a follower graph.
    Communities {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        resolution: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        dot: Option<PathBuf>,
        #[arg(long)]
        metrics: bool,
    },
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Compare one numeric column between two groups.
    Compare {
        #[arg(long)]
        feature: String,
        #[arg(long)]
        group_a: PathBuf,
        #[arg(long)]
        group_b: PathBuf,
        #[arg(long, default_value = "two-sided")]
        alternative: Alternative,
        /// Welch's t-test instead of Mann-Whitney U.
        #[arg(long)]
        welch: bool,
    },
    /// Pearson chi-square on a 2x2 table given as a,b,c,d.
    Chi2 {
        #[arg(value_delimiter = ',', required = true)]
        table: Vec<f64>,
    },
}

#[derive(Subcommand)]
enum AnnotateCmd {
    /// Interactive three-question labeling session.
    Run {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        annotator: String,
        #[arg(long, default_value = "twitter")]
        platform: Platform,
        /// Session file; defaults to <annotator>.jsonl.
        #[arg(long)]
        session: Option<PathBuf>,
        #[arg(long)]
        rationale: bool,
    },
    /// Cohen's kappa and disagreements across annotators.
    Agreement {
        #[arg(long, num_args = 2..)]
        labels: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    platform: Platform,
    #[arg(long)]
    stage: Stage,
    #[arg(long)]
    groundtruth: PathBuf,
    /// Posts the groundtruth refers to.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    accounts: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TOML file with training options.
    #[arg(long)]
    options: Option<PathBuf>,
    #[arg(long)]
    balance: Option<misinfo_core::balance::Method>,
    #[arg(long)]
    grid_search: bool,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Stage model; give both stages for final labels.
    #[arg(long, num_args = 1..=2, required = true)]
    model: Vec<PathBuf>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    accounts: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ReportCmd {
    Summary {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    Growth {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value = "month")]
        bucket: Bucket,
        #[arg(long)]
        marker: Vec<chrono::NaiveDate>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Vega-Lite description of the chart.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum MocknetCmd {
    /// Serve canned scanner reports and blocklist feeds until interrupted.
    Serve {
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long, default_value_t = 8099)]
        port: u16,
        /// Status script such as "429,429,200,timeout".
        #[arg(long, default_value = "")]
        faults: String,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    platform: Platform,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Error>().map_or(4, Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn emit(output: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match output {
        Some(p) => jsonl::write_atomic(p, text.as_bytes())?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json_pretty<T: serde::Serialize>(v: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn load_posts(path: &Path, platform: Platform) -> anyhow::Result<Vec<Post>> {
    let loaded = ingest::load_posts(path, platform)?;
    for d in &loaded.diagnostics {
        log::warn!("{}:{d}", path.display());
    }
    Ok(loaded.records)
}

fn load_config(path: &Path) -> anyhow::Result<PipelineConfig> {
    PipelineConfig::load(path).with_context(|| format!("reading config {}", path.display()))
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Phishing { cmd: RunCmd::Run(a) } => {
            let cfg = load_config(&a.config)?;
            let Some(p) = cfg.phishing else { bail!(Error::Validation("config has no [phishing] section".into())) };
            let opts = PhishingOptions {
                clock: clock::system(),
                live: a.live,
                api_key: reputation::api_key_from_env().ok(),
                from: a.from,
            };
            let out = pipeline::run_phishing_pipeline(&p, &opts)?;
            print!("{}", out.prevalence.to_table());
            eprintln!(
                "stages run: {:?}; reused: {:?}; outputs in {}",
                out.ran.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
                out.skipped.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
                out.out_dir.display()
            );
        }
        Command::Zoom { cmd: RunCmd::Run(a) } => {
            let cfg = load_config(&a.config)?;
            let Some(mut z) = cfg.zoom else { bail!(Error::Validation("config has no [zoom] section".into())) };
            if let Some(stage) = a.stage {
                z.stage = stage;
            }
            let out = pipeline::run_misinfo_pipeline(&z)?;
            print!("{}", summary_table(&platform_summary(&out.predictions)));
            for (key, r) in &out.training {
                if let Some(m) = r.holdout {
                    eprintln!("{key}: held-out accuracy {:.3} f1 {:.3}", m.accuracy, m.f1);
                }
            }
        }
        Command::Ingest(a) => {
            let mut terms = a.keyword.clone();
            if let Some(p) = &a.keywords {
                terms.extend(KeywordSet::load(p)?.accepted);
            }
            let posts = load_posts(&a.input, a.platform)?;
            let opts = FilterOptions {
                window: a.window.as_deref().map(TimeWindow::parse).transpose()?,
                same_day: a.same_day,
                ingestion_date: None,
                english_only: a.english_only,
                dedup_retweets: a.dedup_retweets,
            };
            let kept = ingest::filter_posts(&posts, &KeywordSet::from_terms(terms), &opts)?;
            eprintln!("kept {} of {} posts", kept.len(), posts.len());
            emit(a.output.as_deref(), &ingest::posts_to_jsonl(&kept))?;
        }
        Command::Claims { cmd: ClaimsCmd::Extract { input, platform, output } } => {
            let posts = load_posts(&input, platform)?;
            let mut claims = Vec::new();
            for p in &posts {
                let ex = extract_claims(p);
                for d in ex.diagnostics {
                    log::warn!("{d}");
                }
                claims.extend(ex.claims);
            }
            eprintln!("{} claims, {} unique urls", claims.len(), unique_urls(&claims).len());
            emit(output.as_deref(), &jsonl::to_string(&claims)?)?;
        }
        Command::Reputation { cmd } => reputation_cmd(cmd)?,
        Command::Prevalence { cmd } => prevalence_cmd(cmd)?,
        Command::Graph {
            cmd: GraphCmd::Communities { edges, seed, resolution, output, dot, metrics },
        } => {
            let graph = FollowGraph::from_csv(&edges)?;
            let part = louvain(&graph, resolution, seed)?;
            eprintln!("{} communities, modularity {:.4}", part.community_count(), part.modularity);
            emit(output.as_deref(), &part.to_csv(&graph))?;
            if let Some(d) = dot {
                jsonl::write_atomic(&d, graph.to_dot(Some(&part)).as_bytes())?;
            }
            if metrics {
                eprint!("{}", json_pretty(&network_metrics(&graph)?)?);
            }
        }
        Command::Stats { cmd } => stats_cmd(cmd)?,
        Command::Annotate { cmd } => annotate_cmd(cmd)?,
        Command::Train(a) => train_cmd(a)?,
        Command::Classify(a) => classify_cmd(a)?,
        Command::Report { cmd } => report_cmd(cmd)?,
        Command::Mocknet { cmd: MocknetCmd::Serve { fixtures, port, faults } } => {
            let mut cfg = MockConfig::new(&fixtures, clock::system());
            cfg.port = port;
            cfg.faults = faults.parse()?;
            let srv = MockServer::start(cfg)?;
            eprintln!("serving {} on {}", fixtures.display(), srv.base_url());
            srv.wait();
        }
        Command::Synth(a) => {
            let c = synth::zoom_corpus(a.platform, synth::groundtruth_counts(a.platform), &SynthOptions::default(), a.seed);
            std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
            ingest::write_posts(&a.out_dir.join(format!("{}.jsonl", a.platform)), &c.posts)?;
            pipeline::write_groundtruth(&a.out_dir.join(format!("{}_gt.jsonl", a.platform)), &c.labels)?;
            if !c.accounts.is_empty() {
                jsonl::write_all(&a.out_dir.join(format!("{}_accounts.jsonl", a.platform)), &c.accounts)?;
            }
            eprintln!("{} posts written to {}", c.posts.len(), a.out_dir.display());
        }
    }
    Ok(())
}

fn scanner_from(a: &ScannerArgs) -> anyhow::Result<Scanner> {
    let policy = match &a.policy {
        Some(p) => ScanPolicy::load(p)?,
        None => ScanPolicy::default(),
    };
    let client: Box<dyn ReportClient> = match (&a.fixtures, &a.base_url) {
        (Some(dir), _) => Box::new(FixtureClient::new(dir)?),
        (None, url) => {
            let key = reputation::api_key_from_env()?;
            let url = url.as_deref().unwrap_or(pipeline::DEFAULT_SCANNER_URL);
            Box::new(HttpClient::new(url, key, Duration::from_millis(policy.timeout_ms))?)
        }
    };
    let store: Arc<dyn ReportStore> = Arc::new(JsonlStore::open(&a.store)?);
    Ok(Scanner::new(client, policy, store, clock::system())?)
}

fn reputation_cmd(cmd: ReputationCmd) -> anyhow::Result<()> {
    match cmd {
        ReputationCmd::Scan { claims, scanner } => {
            let claims: Vec<UrlClaim> = jsonl::read_all(&claims)?;
            let urls: Vec<String> = unique_urls(&claims).into_keys().collect();
            let s = scanner_from(&scanner)?;
            let mut failed = None;
            for (url, r) in urls.iter().zip(s.scan_all(&urls, scanner.workers)) {
                match r {
                    Ok(rep) => println!("{}\t{}/{}\t{:?}", url, rep.malicious_count, rep.verdicts.len(), rep.source),
                    Err(e) => {
                        eprintln!("{url}: {e}");
                        failed.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = failed {
                return Err(e.into());
            }
        }
        ReputationCmd::Rescan { scanner } => {
            let s = scanner_from(&scanner)?;
            let done = s.rescan()?;
            eprintln!("rescanned {} urls", done.len());
        }
        ReputationCmd::Review { cmd: ReviewCmd::Export { labels, claims, output } } => {
            let labels: Vec<UrlLabel> = jsonl::read_all(&labels)?;
            let claims: Vec<UrlClaim> = jsonl::read_all(&claims)?;
            let items = review_candidates(&labels, &unique_urls(&claims));
            emit(output.as_deref(), &export_review_queue(&items)?)?;
        }
        ReputationCmd::Review { cmd: ReviewCmd::Import { review, labels, audit } } => {
            let raw = std::fs::read(&review).with_context(|| format!("reading {}", review.display()))?;
            let overrides = import_review(&String::from_utf8_lossy(&raw))?;
            let mut current: Vec<UrlLabel> = jsonl::read_all(&labels)?;
            let mut trail: Vec<AuditRow> = if audit.exists() { jsonl::read_all(&audit)? } else { Vec::new() };
            let added = apply_overrides(&mut current, &overrides, &mut trail, &sha256_hex(&raw), clock::system().now())?;
            jsonl::write_all(&audit, &trail)?;
            jsonl::write_all(&labels, &current)?;
            eprintln!("{} labels changed", added.len());
        }
    }
    Ok(())
}

fn prevalence_cmd(cmd: PrevalenceCmd) -> anyhow::Result<()> {
    match cmd {
        PrevalenceCmd::Report { claims, min_tweets, format, out_dir } => {
            let labeled: Vec<LabeledClaim> = jsonl::read_all(&claims)?;
            let report = prevalence_report(&labeled);
            match format {
                Format::Table => print!("{}", report.to_table()),
                Format::Csv => print!("{}", report.to_csv()),
                Format::Json => print!("{}", json_pretty(&report)?),
            }
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                jsonl::write_atomic(&dir.join("false_claim_rates.csv"), false_claim_rates(&labeled).histogram.to_csv().as_bytes())?;
                jsonl::write_atomic(&dir.join("retweet_histogram.csv"), retweet_spread(&labeled).histogram.to_csv().as_bytes())?;
                let campaigns = pipeline::campaigns_csv(&campaign_urls(&labeled, min_tweets));
                jsonl::write_atomic(&dir.join("campaigns.csv"), campaigns.as_bytes())?;
            }
        }
        PrevalenceCmd::Label { claims, posts, labels, platform, output } => {
            let claims: Vec<UrlClaim> = jsonl::read_all(&claims)?;
            let posts = load_posts(&posts, platform)?;
            let labels: Vec<UrlLabel> = jsonl::read_all(&labels)?;
            let verdicts: HashMap<_, _> = labels.into_iter().map(|l| (l.url, l.verdict)).collect();
            let labeled = label_claims(&claims, &posts, &verdicts)?;
            emit(output.as_deref(), &jsonl::to_string(&labeled)?)?;
        }
    }
    Ok(())
}

fn stats_cmd(cmd: StatsCmd) -> anyhow::Result<()> {
    match cmd {
        StatsCmd::Compare { feature, group_a, group_b, alternative, welch } => {
            let a = stats::load_column(&group_a, &feature)?;
            let b = stats::load_column(&group_b, &feature)?;
            let test = if welch { stats::welch_t_test(&a, &b)? } else { stats::mann_whitney_u(&a, &b, alternative)? };
            let out = serde_json::json!({
                "feature": feature,
                "group_a": stats::describe(&a)?,
                "group_b": stats::describe(&b)?,
                "test": test,
            });
            print!("{}", json_pretty(&out)?);
        }
        StatsCmd::Chi2 { table } => {
            if table.len() != 4 {
                bail!(Error::InvalidArgument(format!("a 2x2 table needs 4 counts, got {}", table.len())));
            }
            let t = [[table[0], table[1]], [table[2], table[3]]];
            print!("{}", json_pretty(&stats::chi_square_2x2(t)?)?);
        }
    }
    Ok(())
}

fn annotate_cmd(cmd: AnnotateCmd) -> anyhow::Result<()> {
    match cmd {
        AnnotateCmd::Run { corpus, annotator, platform, session, rationale } => {
            let posts = load_posts(&corpus, platform)?;
            let session = session.unwrap_or_else(|| PathBuf::from(format!("{annotator}.jsonl")));
            let stdin = std::io::stdin();
            let mut prompter = TerminalPrompter::new(stdin.lock(), std::io::stderr());
            prompter.ask_rationale = rationale;
            let out = annotate::annotation_session(&posts, &annotator, &mut prompter, &session, clock::system().as_ref())?;
            let counts = annotate::label_counts(&out.labels);
            for (label, n) in counts {
                println!("{label}\t{n}");
            }
            if !out.complete {
                eprintln!("session paused; rerun the same command to resume");
            }
        }
        AnnotateCmd::Agreement { labels } => {
            let sets = labels.iter().map(|p| annotate::load_labels(p)).collect::<Result<Vec<_>, _>>()?;
            print!("{}", json_pretty(&annotate::agreement_report(&sets)?)?);
        }
    }
    Ok(())
}

fn load_accounts(path: Option<&Path>, platform: Platform) -> anyhow::Result<HashMap<String, ingest::Account>> {
    let Some(path) = path else { return Ok(HashMap::new()) };
    let loaded = ingest::load_accounts(path, platform)?;
    Ok(loaded.records.into_iter().map(|a| (a.id.clone(), a)).collect())
}

fn train_cmd(a: TrainArgs) -> anyhow::Result<()> {
    let mut opts = match &a.options {
        Some(p) => {
            let raw = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<TrainOptions>(&raw).map_err(Error::from)?
        }
        None => TrainOptions::default(),
    };
    opts.seed = a.seed;
    opts.grid_search |= a.grid_search;
    if a.balance.is_some() {
        opts.balance = a.balance;
    }
    let posts = load_posts(&a.input, a.platform)?;
    let labels = pipeline::load_groundtruth(&a.groundtruth)?;
    let accounts = load_accounts(a.accounts.as_deref(), a.platform)?;
    let (model, report) = train_stage(a.platform, a.stage, &posts, &labels, &accounts, &opts)?;
    model.save(&a.output)?;
    print!("{}", json_pretty(&report)?);
    Ok(())
}

fn classify_cmd(a: ClassifyArgs) -> anyhow::Result<()> {
    let models = a.model.iter().map(|p| StageModel::load(p)).collect::<Result<Vec<_>, _>>()?;
    let platform = models[0].platform;
    if models.iter().any(|m| m.platform != platform) {
        bail!(Error::Model("models belong to different platforms".into()));
    }
    let posts = load_posts(&a.input, platform)?;
    let accounts = load_accounts(a.accounts.as_deref(), platform)?;
    let text = if models.len() == 2 {
        let (rel, mis) = if models[0].stage == Stage::Relevance { (&models[0], &models[1]) } else { (&models[1], &models[0]) };
        jsonl::to_string(&classify_posts(rel, mis, &posts, &accounts)?)?
    } else {
        let m = &models[0];
        let rows = posts
            .iter()
            .map(|p| Ok(serde_json::json!({"post_id": p.id, "stage": m.stage, "class": m.predict(p, accounts.get(&p.author_id))?})))
            .collect::<Result<Vec<_>, Error>>()?;
        jsonl::to_string(&rows)?
    };
    emit(a.output.as_deref(), &text)
}

fn report_cmd(cmd: ReportCmd) -> anyhow::Result<()> {
    match cmd {
        ReportCmd::Summary { predictions, format } => {
            let preds: Vec<Prediction> = jsonl::read_all(&predictions)?;
            let rows = platform_summary(&preds);
            match format {
                Format::Table => print!("{}", summary_table(&rows)),
                Format::Csv => print!("{}", summary_csv(&rows)),
                Format::Json => print!("{}", json_pretty(&rows)?),
            }
        }
        ReportCmd::Growth { predictions, bucket, marker, output, plot } => {
            let preds: Vec<Prediction> = jsonl::read_all(&predictions)?;
            let g = growth_series(&preds, bucket, &marker);
            emit(output.as_deref(), &g.to_csv())?;
            if let Some(p) = plot {
                jsonl::write_atomic(&p, json_pretty(&g.plot_spec())?.as_bytes())?;
            }
        }
    }
    Ok(())
}
