//! Loading, normalizing and filtering social-media posts, plus keyword-list
//! expansion by snowball sampling.
//!
//! Every platform ships line-delimited JSON records. The common keys are
//! `id`, `text`, `created_at` (ISO-8601), `author`, and optionally `lang`,
//! `has_media`, `urls`, `retweet_of`, `collected_at`. Reaction counters use the
//! platform's own key names:
//!
//! | platform  | likes        | shares          | comments        |
//! |-----------|--------------|-----------------|-----------------|
//! | twitter   | `like_count` | `retweet_count` | `reply_count`   |
//! | facebook  | `like_count` | `share_count`   | `comment_count` |
//! | instagram | `like_count` | -               | `comment_count` |
//! | reddit    | `score`      | -               | `num_comments`  |
//!
//! A counter the platform does not expose, or a record that omits it, is kept
//! as `None` rather than zero.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::lexicon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Twitter,
    Facebook,
    Instagram,
    Reddit,
}

impl Platform {
    pub const ALL: [Platform; 4] = [
        Platform::Instagram,
        Platform::Facebook,
        Platform::Reddit,
        Platform::Twitter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Platform::Twitter => "twitter",
            Platform::Facebook => "facebook",
            Platform::Instagram => "instagram",
            Platform::Reddit => "reddit",
        }
    }

    /// Record keys for (likes, shares, comments); `None` when the platform has
    /// no such counter.
    fn reaction_keys(self) -> [Option<&'static str>; 3] {
        match self {
            Platform::Twitter => [
                Some("like_count"),
                Some("retweet_count"),
                Some("reply_count"),
            ],
            Platform::Facebook => [
                Some("like_count"),
                Some("share_count"),
                Some("comment_count"),
            ],
            Platform::Instagram => [Some("like_count"), None, Some("comment_count")],
            Platform::Reddit => [Some("score"), None, Some("num_comments")],
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Platform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "twitter" => Ok(Platform::Twitter),
            "facebook" => Ok(Platform::Facebook),
            "instagram" => Ok(Platform::Instagram),
            "reddit" => Ok(Platform::Reddit),
            other => Err(Error::InvalidArgument(format!(
                "unknown platform '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactionCounts {
    pub likes: Option<u64>,
    pub shares: Option<u64>,
    pub comments: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub platform: Platform,
    pub author_id: String,
    pub created_at: DateTime<Utc>,
    pub text: String,
    pub language: Option<String>,
    pub has_media: bool,
    pub urls: Vec<String>,
    pub reactions: ReactionCounts,
    pub retweet_of: Option<String>,
    pub collected_at: Option<DateTime<Utc>>,
}

impl Post {
    pub fn is_english_or_untagged(&self) -> bool {
        match self.language.as_deref() {
            None => true,
            Some(tag) => {
                let tag = tag.to_ascii_lowercase();
                tag == "en" || tag.starts_with("en-") || tag == "und" || tag.is_empty()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Account {
    pub id: String,
    pub platform: Platform,
    pub followers_count: u64,
    pub friends_count: u64,
    pub statuses_count: u64,
    pub listed_count: u64,
    pub verified: bool,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub profile_description: String,
    #[serde(default)]
    pub has_url: bool,
    #[serde(default)]
    pub has_profile_image: bool,
    #[serde(default)]
    pub protected: bool,
}

impl Account {
    /// Whole years between account creation and `reference`, floored at 0.
    pub fn account_age_years(&self, reference: DateTime<Utc>) -> u32 {
        if reference <= self.created_at {
            return 0;
        }
        let created = self.created_at.date_naive();
        let reference = reference.date_naive();
        reference.years_since(created).unwrap_or(0)
    }
}

/// One problem found while reading a record file. Line numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub diagnostics: Vec<Diagnostic>,
}

impl<T> Default for Loaded<T> {
    fn default() -> Self {
        Self {
            records: Vec::new(),
            diagnostics: Vec::new(),
        }
    }
}

/// Streams posts from a reader, yielding a diagnostic for each malformed line.
pub struct PostReader<R> {
    lines: std::io::Lines<R>,
    platform: Platform,
    line_no: usize,
    seen: HashSet<String>,
}

impl<R: BufRead> PostReader<R> {
    pub fn new(reader: R, platform: Platform) -> Self {
        Self {
            lines: reader.lines(),
            platform,
            line_no: 0,
            seen: HashSet::new(),
        }
    }
}

impl<R: BufRead> Iterator for PostReader<R> {
    type Item = std::result::Result<Post, Diagnostic>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    return Some(Err(Diagnostic {
                        line: self.line_no,
                        message: format!("unreadable line: {e}"),
                    }))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let parsed = parse_post(&line, self.platform).and_then(|post| {
                if self.seen.insert(post.id.clone()) {
                    Ok(post)
                } else {
                    Err(format!("duplicate post id '{}'", post.id))
                }
            });
            return Some(parsed.map_err(|message| Diagnostic {
                line: self.line_no,
                message,
            }));
        }
    }
}

pub fn load_posts(path: &Path, platform: Platform) -> Result<Loaded<Post>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut loaded = Loaded::default();
    for item in PostReader::new(BufReader::new(file), platform) {
        match item {
            Ok(p) => loaded.records.push(p),
            Err(d) => loaded.diagnostics.push(d),
        }
    }
    Ok(loaded)
}

pub fn load_posts_from_str(raw: &str, platform: Platform) -> Loaded<Post> {
    let mut loaded = Loaded::default();
    for item in PostReader::new(raw.as_bytes(), platform) {
        match item {
            Ok(p) => loaded.records.push(p),
            Err(d) => loaded.diagnostics.push(d),
        }
    }
    loaded
}

fn parse_timestamp(value: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(value)
        .map(|t| t.with_timezone(&Utc).trunc_subsecs(0))
        .map_err(|e| format!("bad timestamp '{value}': {e}"))
}

fn required_str<'a>(
    obj: &'a Map<String, Value>,
    key: &str,
) -> std::result::Result<&'a str, String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(format!("field '{key}' must be a string")),
        None => Err(format!("missing field '{key}'")),
    }
}

fn optional_count(
    obj: &Map<String, Value>,
    key: Option<&str>,
) -> std::result::Result<Option<u64>, String> {
    let Some(key) = key else { return Ok(None) };
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_u64()
            .map(Some)
            .ok_or_else(|| format!("field '{key}' must be a non-negative integer")),
    }
}

fn optional_string(
    obj: &Map<String, Value>,
    key: &str,
) -> std::result::Result<Option<String>, String> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(Value::Number(n)) => Ok(Some(n.to_string())),
        Some(_) => Err(format!("field '{key}' must be a string")),
    }
}

fn parse_post(line: &str, platform: Platform) -> std::result::Result<Post, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value.as_object().ok_or("record is not a JSON object")?;
    let id = match obj.get("id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err("missing or empty field 'id'".into()),
    };
    let text = required_str(obj, "text")?.to_owned();
    let created_at = parse_timestamp(required_str(obj, "created_at")?)?;
    let author_id = match obj.get("author") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err("missing or empty field 'author'".into()),
    };
    let [likes_key, shares_key, comments_key] = platform.reaction_keys();
    let reactions = ReactionCounts {
        likes: optional_count(obj, likes_key)?,
        shares: optional_count(obj, shares_key)?,
        comments: optional_count(obj, comments_key)?,
    };
    let urls = match obj.get("urls") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_owned)
                    .ok_or("field 'urls' must hold strings")
            })
            .collect::<std::result::Result<_, _>>()?,
        Some(_) => return Err("field 'urls' must be an array".into()),
    };
    let has_media = match obj.get("has_media") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => return Err("field 'has_media' must be a boolean".into()),
    };
    let collected_at = optional_string(obj, "collected_at")?
        .map(|s| parse_timestamp(&s))
        .transpose()?;
    Ok(Post {
        id,
        platform,
        author_id,
        created_at,
        text,
        language: optional_string(obj, "lang")?,
        has_media,
        urls,
        reactions,
        retweet_of: optional_string(obj, "retweet_of")?,
        collected_at,
    })
}

/// Serializes a post back into its platform's record schema.
pub fn post_to_record(post: &Post) -> Value {
    let mut obj = Map::new();
    obj.insert("id".into(), Value::String(post.id.clone()));
    obj.insert("text".into(), Value::String(post.text.clone()));
    obj.insert(
        "created_at".into(),
        Value::String(
            post.created_at
                .to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        ),
    );
    obj.insert("author".into(), Value::String(post.author_id.clone()));
    obj.insert(
        "lang".into(),
        post.language
            .clone()
            .map(Value::String)
            .unwrap_or(Value::Null),
    );
    obj.insert("has_media".into(), Value::Bool(post.has_media));
    obj.insert(
        "urls".into(),
        Value::Array(post.urls.iter().cloned().map(Value::String).collect()),
    );
    let counts = [
        post.reactions.likes,
        post.reactions.shares,
        post.reactions.comments,
    ];
    for (key, count) in post.platform.reaction_keys().into_iter().zip(counts) {
        if let Some(key) = key {
            obj.insert(key.into(), count.map(Value::from).unwrap_or(Value::Null));
        }
    }
    obj.insert(
        "retweet_of".into(),
        post.retweet_of
            .clone()
            .map(Value::String)
            .unwrap_or(Value::Null),
    );
    if let Some(at) = post.collected_at {
        obj.insert(
            "collected_at".into(),
            Value::String(at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
        );
    }
    Value::Object(obj)
}

pub fn posts_to_jsonl(posts: &[Post]) -> String {
    let mut out = String::new();
    for post in posts {
        out.push_str(&post_to_record(post).to_string());
        out.push('\n');
    }
    out
}

pub fn write_posts(path: &Path, posts: &[Post]) -> Result<()> {
    crate::jsonl::write_atomic(path, posts_to_jsonl(posts).as_bytes())
}

pub fn load_accounts(path: &Path, platform: Platform) -> Result<Loaded<Account>> {
    #[derive(Deserialize)]
    struct AccountRecord {
        id: String,
        #[serde(default)]
        followers_count: u64,
        #[serde(default)]
        friends_count: u64,
        #[serde(default)]
        statuses_count: u64,
        #[serde(default)]
        listed_count: u64,
        #[serde(default)]
        verified: bool,
        created_at: String,
        #[serde(default)]
        description: String,
        #[serde(default)]
        url: Option<String>,
        #[serde(default)]
        has_profile_image: bool,
        #[serde(default)]
        protected: bool,
    }

    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut loaded = Loaded::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<AccountRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| {
                Ok(Account {
                    created_at: parse_timestamp(&r.created_at)?,
                    id: r.id,
                    platform,
                    followers_count: r.followers_count,
                    friends_count: r.friends_count,
                    statuses_count: r.statuses_count,
                    listed_count: r.listed_count,
                    verified: r.verified,
                    profile_description: r.description,
                    has_url: r.url.is_some_and(|u| !u.is_empty()),
                    has_profile_image: r.has_profile_image,
                    protected: r.protected,
                })
            });
        match parsed {
            Ok(a) => loaded.records.push(a),
            Err(message) => loaded.diagnostics.push(Diagnostic {
                line: i + 1,
                message,
            }),
        }
    }
    Ok(loaded)
}

/// Inclusive time window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidArgument(format!(
                "inverted window: {start} is after {end}"
            )));
        }
        Ok(Self { start, end })
    }

    /// Parses `YYYY-MM-DD..YYYY-MM-DD`; both days are included in full.
    pub fn parse(spec: &str) -> Result<Self> {
        let (a, b) = spec
            .split_once("..")
            .ok_or_else(|| Error::InvalidArgument(format!("window '{spec}' must be START..END")))?;
        let day = |s: &str| {
            NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
                .map_err(|e| Error::InvalidArgument(format!("bad date '{s}': {e}")))
        };
        let start = day(a)?.and_time(NaiveTime::MIN).and_utc();
        let end = day(b)?
            .and_hms_opt(23, 59, 59)
            .expect("valid time")
            .and_utc();
        Self::new(start, end)
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t <= self.end
    }
}

/// Keyword list state; `composites` are the phrases used for filtering when
/// present, otherwise `accepted` is used directly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KeywordSet {
    pub seeds: Vec<String>,
    pub accepted: Vec<String>,
    #[serde(default)]
    pub composites: Vec<String>,
    #[serde(default)]
    pub rejected: Vec<String>,
    #[serde(default)]
    pub rounds: u32,
}

impl KeywordSet {
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = KeywordSet::default();
        let mut seen = HashSet::new();
        for t in terms {
            let t: String = t.into();
            let t = t.trim().to_owned();
            if !t.is_empty() && seen.insert(t.to_lowercase()) {
                set.seeds.push(t.clone());
                set.accepted.push(t);
            }
        }
        set
    }

    /// Reads one keyword per line; blank lines and `#` comments are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_terms(
            raw.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        ))
    }

    pub fn filter_terms(&self) -> &[String] {
        if self.composites.is_empty() {
            &self.accepted
        } else {
            &self.composites
        }
    }

    pub fn is_empty(&self) -> bool {
        self.filter_terms().is_empty()
    }
}

/// Case-insensitive phrase matcher over NFC-normalized word tokens.
#[derive(Debug, Clone)]
pub struct KeywordMatcher {
    phrases: Vec<Vec<String>>,
}

impl KeywordMatcher {
    pub fn new<S: AsRef<str>>(keywords: &[S]) -> Self {
        let phrases = keywords
            .iter()
            .map(|k| lexicon::words(k.as_ref()))
            .filter(|p| !p.is_empty())
            .collect();
        Self { phrases }
    }

    pub fn matches_tokens(&self, tokens: &[String]) -> bool {
        self.phrases.iter().any(|p| contains_sequence(tokens, p))
    }

    pub fn matches(&self, text: &str) -> bool {
        self.matches_tokens(&lexicon::words(text))
    }
}

fn contains_sequence(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

#[derive(Debug, Clone, Default)]
pub struct FilterOptions {
    pub window: Option<TimeWindow>,
    /// Keep only posts created on their ingestion (collection) date.
    pub same_day: bool,
    /// Fallback ingestion date for records that lack `collected_at`.
    pub ingestion_date: Option<NaiveDate>,
    pub english_only: bool,
    pub dedup_retweets: bool,
}

pub fn filter_posts(
    posts: &[Post],
    keywords: &KeywordSet,
    opts: &FilterOptions,
) -> Result<Vec<Post>> {
    if keywords.is_empty() {
        return Err(Error::InvalidArgument("keyword set is empty".into()));
    }
    if let Some(w) = opts.window {
        if w.end < w.start {
            return Err(Error::InvalidArgument("inverted window".into()));
        }
    }
    let matcher = KeywordMatcher::new(keywords.filter_terms());
    Ok(posts
        .iter()
        .filter(|p| opts.window.map_or(true, |w| w.contains(p.created_at)))
        .filter(|p| !opts.english_only || p.is_english_or_untagged())
        .filter(|p| !opts.dedup_retweets || p.retweet_of.is_none())
        .filter(|p| {
            if !opts.same_day {
                return true;
            }
            let ingested = p
                .collected_at
                .map(|t| t.date_naive())
                .or(opts.ingestion_date);
            ingested == Some(p.created_at.date_naive())
        })
        .filter(|p| matcher.matches(&p.text))
        .cloned()
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approval {
    Accept,
    Reject,
}

#[derive(Debug, Clone)]
pub struct SnowballConfig {
    pub min_cooccurrence: f64,
    /// Longest candidate phrase, in words.
    pub max_ngram: usize,
}

impl Default for SnowballConfig {
    fn default() -> Self {
        Self {
            min_cooccurrence: 0.05,
            max_ngram: 2,
        }
    }
}

/// Grows a keyword list from `seeds`. Each round proposes the terms that occur
/// in at least `min_cooccurrence` of the posts matching an accepted keyword;
/// `approve` decides each proposal. Stops after a round with no acceptances.
/// Composites pair the first seed (the topic) with every other accepted term.
pub fn snowball_expand<F>(
    corpus: &[Post],
    seeds: &[String],
    cfg: &SnowballConfig,
    mut approve: F,
) -> Result<KeywordSet>
where
    F: FnMut(&str, f64) -> Approval,
{
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("no seed keywords".into()));
    }
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("empty corpus".into()));
    }
    let mut set = KeywordSet::from_terms(seeds.iter().cloned());
    let mut known: HashSet<String> = set.accepted.iter().map(|k| k.to_lowercase()).collect();

    let docs: Vec<(Vec<String>, HashSet<String>)> = corpus
        .iter()
        .map(|p| {
            let tokens = lexicon::words(&p.text);
            let content: Vec<&String> = tokens
                .iter()
                .filter(|t| t.chars().count() >= 2 && !lexicon::is_stopword(t))
                .collect();
            let mut grams = HashSet::new();
            for n in 1..=cfg.max_ngram.max(1) {
                for w in content.windows(n) {
                    grams.insert(w.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" "));
                }
            }
            (tokens, grams)
        })
        .collect();

    loop {
        set.rounds += 1;
        let matcher = KeywordMatcher::new(&set.accepted);
        let matching: Vec<&HashSet<String>> = docs
            .iter()
            .filter(|(tokens, _)| matcher.matches_tokens(tokens))
            .map(|(_, grams)| grams)
            .collect();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for grams in &matching {
            for g in grams.iter() {
                *counts.entry(g.as_str()).or_default() += 1;
            }
        }
        let total = matching.len().max(1) as f64;
        let mut candidates: Vec<(&str, f64)> = counts
            .into_iter()
            .map(|(g, c)| (g, c as f64 / total))
            .filter(|(g, rate)| *rate >= cfg.min_cooccurrence && !known.contains(*g))
            .collect();
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut accepted_this_round = 0;
        for (term, rate) in candidates {
            known.insert(term.to_owned());
            match approve(term, rate) {
                Approval::Accept => {
                    set.accepted.push(term.to_owned());
                    accepted_this_round += 1;
                }
                Approval::Reject => set.rejected.push(term.to_owned()),
            }
        }
        if accepted_this_round == 0 {
            break;
        }
    }

    let topic = set.seeds[0].to_lowercase();
    set.composites = set
        .accepted
        .iter()
        .filter(|t| t.to_lowercase() != topic)
        .map(|t| {
            let lower = t.to_lowercase();
            if lower.starts_with(&topic) {
                title_case(&lower)
            } else {
                title_case(&format!("{topic} {lower}"))
            }
        })
        .collect();
    Ok(set)
}

fn title_case(phrase: &str) -> String {
    phrase
        .split_whitespace()
        .map(|w| {
            let mut chars = w.chars();
            match chars.next() {
                Some(first) => first.to_uppercase().chain(chars).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn post(id: &str, text: &str, day: u32) -> Post {
        Post {
            id: id.into(),
            platform: Platform::Twitter,
            author_id: "u1".into(),
            created_at: Utc.with_ymd_and_hms(2020, 3, day, 12, 0, 0).unwrap(),
            text: text.into(),
            language: Some("en".into()),
            has_media: false,
            urls: vec![],
            reactions: ReactionCounts::default(),
            retweet_of: None,
            collected_at: None,
        }
    }

    #[test]
    fn empty_file_yields_nothing() {
        let loaded = load_posts_from_str("", Platform::Twitter);
        assert!(loaded.records.is_empty());
        assert!(loaded.diagnostics.is_empty());
    }

    #[test]
    fn malformed_lines_are_reported_with_line_numbers() {
        let raw = concat!(
            r#"{"id":"1","text":"a","created_at":"2020-03-01T00:00:00Z","author":"u"}"#,
            "\n",
            r#"{"id":"2","text":"b","created_at":"2020-03-01T00:00:00Z","author":"u"}"#,
            "\n",
            "{not json\n",
            r#"{"id":"3","text":"c","created_at":"2020-03-01T00:00:00Z","author":"u"}"#,
            "\n"
        );
        let loaded = load_posts_from_str(raw, Platform::Twitter);
        assert_eq!(loaded.records.len(), 3);
        assert_eq!(loaded.diagnostics.len(), 1);
        assert_eq!(loaded.diagnostics[0].line, 3);
    }

    #[test]
    fn missing_reaction_is_unknown_not_zero() {
        let raw = r#"{"id":"1","text":"a","created_at":"2020-03-01T00:00:00Z","author":"u","like_count":5}"#;
        let p = &load_posts_from_str(raw, Platform::Instagram).records[0];
        assert_eq!(p.reactions.likes, Some(5));
        assert_eq!(p.reactions.comments, None);
        assert_eq!(p.reactions.shares, None);
    }

    #[test]
    fn reddit_score_maps_to_likes() {
        let raw = r#"{"id":"1","text":"a","created_at":"2020-03-01T00:00:00Z","author":"u","score":12,"num_comments":3}"#;
        let p = &load_posts_from_str(raw, Platform::Reddit).records[0];
        assert_eq!(p.reactions.likes, Some(12));
        assert_eq!(p.reactions.comments, Some(3));
    }

    #[test]
    fn duplicate_ids_are_diagnosed() {
        let line = r#"{"id":"1","text":"a","created_at":"2020-03-01T00:00:00Z","author":"u"}"#;
        let loaded = load_posts_from_str(&format!("{line}\n{line}\n"), Platform::Twitter);
        assert_eq!(loaded.records.len(), 1);
        assert_eq!(loaded.diagnostics.len(), 1);
    }

    #[test]
    fn direct_keyword_match_is_retained() {
        let kw = KeywordSet::from_terms(["phishing"]);
        let out = filter_posts(
            &[post("1", "Beware of phishing", 1)],
            &kw,
            &FilterOptions::default(),
        )
        .unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn composite_requires_adjacent_words() {
        let kw = KeywordSet::from_terms(["Zoom Security"]);
        let posts = [
            post("1", "Zoom update", 1),
            post("2", "zoom is great. Security matters", 1),
            post("3", "ZOOM   security flaw", 1),
        ];
        let out = filter_posts(&posts, &kw, &FilterOptions::default()).unwrap();
        let ids: Vec<_> = out.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["3"]);
    }

    #[test]
    fn inverted_window_is_rejected() {
        assert!(TimeWindow::parse("2020-11-30..2019-06-01").is_err());
        let w = TimeWindow::parse("2019-06-01..2020-11-30").unwrap();
        assert!(w.contains(Utc.with_ymd_and_hms(2020, 11, 30, 23, 0, 0).unwrap()));
    }

    #[test]
    fn same_day_uses_collection_date() {
        let kw = KeywordSet::from_terms(["phishing"]);
        let mut a = post("a", "phishing", 2);
        a.collected_at = Some(Utc.with_ymd_and_hms(2020, 3, 2, 23, 0, 0).unwrap());
        let mut b = post("b", "phishing", 1);
        b.collected_at = Some(Utc.with_ymd_and_hms(2020, 3, 2, 23, 0, 0).unwrap());
        let opts = FilterOptions {
            same_day: true,
            ..Default::default()
        };
        let out = filter_posts(&[a, b], &kw, &opts).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, "a");
    }

    #[test]
    fn non_english_posts_dropped_when_requested() {
        let kw = KeywordSet::from_terms(["zoom"]);
        let mut es = post("1", "zoom seguridad", 1);
        es.language = Some("es".into());
        let mut untagged = post("2", "zoom", 1);
        untagged.language = None;
        let opts = FilterOptions {
            english_only: true,
            ..Default::default()
        };
        let out = filter_posts(&[es, untagged], &kw, &opts).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn empty_keywords_rejected() {
        let err = filter_posts(&[], &KeywordSet::default(), &FilterOptions::default());
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn snowball_accepts_fully_cooccurring_term() {
        let corpus: Vec<Post> = (0..10)
            .map(|i| post(&i.to_string(), &format!("zoom security item{i}"), 1))
            .collect();
        let set = snowball_expand(
            &corpus,
            &["zoom".into()],
            &SnowballConfig {
                min_cooccurrence: 0.5,
                max_ngram: 1,
            },
            |_, _| Approval::Accept,
        )
        .unwrap();
        assert!(set.accepted.contains(&"security".to_string()));
        assert!(set.composites.contains(&"Zoom Security".to_string()));
    }

    #[test]
    fn snowball_approve_none_stops_after_one_round() {
        let corpus = vec![post("1", "zoom security", 1), post("2", "zoom privacy", 1)];
        let seeds = vec!["zoom".to_string()];
        let set = snowball_expand(&corpus, &seeds, &SnowballConfig::default(), |_, _| {
            Approval::Reject
        })
        .unwrap();
        assert_eq!(set.accepted, seeds);
        assert_eq!(set.rounds, 1);
    }

    #[test]
    fn account_age_in_whole_years() {
        let acct = Account {
            id: "a".into(),
            platform: Platform::Twitter,
            followers_count: 0,
            friends_count: 0,
            statuses_count: 0,
            listed_count: 0,
            verified: false,
            created_at: Utc.with_ymd_and_hms(2014, 6, 1, 0, 0, 0).unwrap(),
            profile_description: String::new(),
            has_url: false,
            has_profile_image: false,
            protected: false,
        };
        assert_eq!(
            acct.account_age_years(Utc.with_ymd_and_hms(2021, 5, 31, 0, 0, 0).unwrap()),
            6
        );
        assert_eq!(
            acct.account_age_years(Utc.with_ymd_and_hms(2010, 1, 1, 0, 0, 0).unwrap()),
            0
        );
    }
}
