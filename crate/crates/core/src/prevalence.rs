//! Joins URL labels back onto claims and users: prevalence table, per-user
//! false-claim rates, retweet spread and campaign candidates.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::claims::UrlClaim;
use crate::error::{Error, Result};
use crate::ingest::Post;
use crate::reputation::UrlVerdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimVerdict {
    TrueClaim,
    FalseClaim,
}

impl From<UrlVerdict> for ClaimVerdict {
    fn from(v: UrlVerdict) -> Self {
        match v {
            UrlVerdict::Malicious => ClaimVerdict::TrueClaim,
            UrlVerdict::Benign => ClaimVerdict::FalseClaim,
        }
    }
}

/// A claim joined with its author, retweet count and the URL's final label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledClaim {
    pub post_id: String,
    pub user_id: String,
    pub url: String,
    pub url_verdict: UrlVerdict,
    pub retweets: u64,
}

impl LabeledClaim {
    pub fn verdict(&self) -> ClaimVerdict {
        self.url_verdict.into()
    }
}

/// Joins claims to posts and URL labels. Retweets come from the post's share
/// count, or from counting retweets of it in `posts` when that is unknown.
pub fn label_claims(
    claims: &[UrlClaim],
    posts: &[Post],
    labels: &HashMap<String, UrlVerdict>,
) -> Result<Vec<LabeledClaim>> {
    let by_id: HashMap<&str, &Post> = posts.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut retweeted: HashMap<&str, u64> = HashMap::new();
    for p in posts {
        if let Some(orig) = &p.retweet_of {
            *retweeted.entry(orig.as_str()).or_default() += 1;
        }
    }
    let mut missing = BTreeSet::new();
    let mut out = Vec::with_capacity(claims.len());
    for c in claims {
        let Some(&verdict) = labels.get(&c.canonical_url) else {
            missing.insert(c.canonical_url.clone());
            continue;
        };
        let post = by_id
            .get(c.post_id.as_str())
            .ok_or_else(|| Error::Validation(format!("claim references unknown post {}", c.post_id)))?;
        out.push(LabeledClaim {
            post_id: c.post_id.clone(),
            user_id: post.author_id.clone(),
            url: c.canonical_url.clone(),
            url_verdict: verdict,
            retweets: post
                .reactions
                .shares
                .unwrap_or_else(|| retweeted.get(c.post_id.as_str()).copied().unwrap_or(0)),
        });
    }
    if !missing.is_empty() {
        let list: Vec<_> = missing.into_iter().collect();
        return Err(Error::Validation(format!("claims without a url label: {}", list.join(", "))));
    }
    Ok(out)
}

/// Percentage rounded to one decimal.
pub fn pct1(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        return 0.0;
    }
    (part as f64 * 1000.0 / whole as f64).round() / 10.0
}

/// Percentage rounded to an integer, as printed in the human table.
pub fn pct0(part: u64, whole: u64) -> u64 {
    if whole == 0 {
        return 0;
    }
    (part as f64 * 100.0 / whole as f64).round() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceReport {
    pub tweets: u64,
    pub unique_users: u64,
    pub unique_urls: u64,
    pub malicious_urls: u64,
    pub benign_urls: u64,
    pub malicious_url_pct: f64,
    pub benign_url_pct: f64,
    pub malicious_tweets: u64,
    pub benign_tweets: u64,
    pub malicious_tweet_pct: f64,
    /// Share of claims that are misinformation.
    pub benign_tweet_pct: f64,
    pub users_with_true_claims: u64,
    pub users_with_false_claims: u64,
    pub users_with_both: u64,
    pub users_only_true: u64,
    pub users_only_false: u64,
}

/// Published totals to compare a computed report against.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceCounts {
    pub unique_users: Option<u64>,
    pub users_with_true_claims: Option<u64>,
    pub users_with_false_claims: Option<u64>,
    pub users_with_both: Option<u64>,
}

pub fn prevalence_report(claims: &[LabeledClaim]) -> PrevalenceReport {
    let mut url_label: BTreeMap<&str, UrlVerdict> = BTreeMap::new();
    let mut true_users = BTreeSet::new();
    let mut false_users = BTreeSet::new();
    let mut malicious_tweets = 0;
    for c in claims {
        url_label.insert(&c.url, c.url_verdict);
        match c.verdict() {
            ClaimVerdict::TrueClaim => {
                malicious_tweets += 1;
                true_users.insert(c.user_id.as_str());
            }
            ClaimVerdict::FalseClaim => {
                false_users.insert(c.user_id.as_str());
            }
        }
    }
    let tweets = claims.len() as u64;
    let unique_urls = url_label.len() as u64;
    let malicious_urls = url_label.values().filter(|&&v| v == UrlVerdict::Malicious).count() as u64;
    let benign_urls = unique_urls - malicious_urls;
    let benign_tweets = tweets - malicious_tweets;
    let both = true_users.intersection(&false_users).count() as u64;
    let report = PrevalenceReport {
        tweets,
        unique_users: true_users.union(&false_users).count() as u64,
        unique_urls,
        malicious_urls,
        benign_urls,
        malicious_url_pct: pct1(malicious_urls, unique_urls),
        benign_url_pct: pct1(benign_urls, unique_urls),
        malicious_tweets,
        benign_tweets,
        malicious_tweet_pct: pct1(malicious_tweets, tweets),
        benign_tweet_pct: pct1(benign_tweets, tweets),
        users_with_true_claims: true_users.len() as u64,
        users_with_false_claims: false_users.len() as u64,
        users_with_both: both,
        users_only_true: true_users.len() as u64 - both,
        users_only_false: false_users.len() as u64 - both,
    };
    debug_assert!(report.identities_hold());
    report
}

impl PrevalenceReport {
    pub fn identities_hold(&self) -> bool {
        self.malicious_tweets + self.benign_tweets == self.tweets
            && self.malicious_urls + self.benign_urls == self.unique_urls
            && self.users_with_true_claims + self.users_with_false_claims - self.users_with_both == self.unique_users
    }

    /// Lists every published figure that the computed sets do not reproduce.
    pub fn discrepancies(&self, reference: &ReferenceCounts) -> Vec<String> {
        let pairs = [
            ("unique_users", reference.unique_users, self.unique_users),
            ("users_with_true_claims", reference.users_with_true_claims, self.users_with_true_claims),
            ("users_with_false_claims", reference.users_with_false_claims, self.users_with_false_claims),
            ("users_with_both", reference.users_with_both, self.users_with_both),
        ];
        let mut out: Vec<String> = pairs
            .iter()
            .filter_map(|&(name, r, c)| r.filter(|&r| r != c).map(|r| format!("{name}: reported {r}, computed {c}")))
            .collect();
        if let (Some(u), Some(t), Some(f)) =
            (reference.unique_users, reference.users_with_true_claims, reference.users_with_false_claims)
        {
            let both = reference.users_with_both.unwrap_or(0);
            if t + f < u + both {
                out.push(format!(
                    "reported user sets cannot form the reported union: {t} true + {f} false - {both} both < {u}"
                ));
            }
        }
        out
    }

    pub const CSV_HEADER: [&'static str; 16] = [
        "tweets",
        "unique_users",
        "unique_urls",
        "malicious_urls",
        "benign_urls",
        "malicious_url_pct",
        "benign_url_pct",
        "malicious_tweets",
        "benign_tweets",
        "malicious_tweet_pct",
        "benign_tweet_pct",
        "users_with_true_claims",
        "users_with_false_claims",
        "users_with_both",
        "users_only_true",
        "users_only_false",
    ];

    pub fn to_csv(&self) -> String {
        let row = [
            self.tweets.to_string(),
            self.unique_users.to_string(),
            self.unique_urls.to_string(),
            self.malicious_urls.to_string(),
            self.benign_urls.to_string(),
            format!("{:.1}", self.malicious_url_pct),
            format!("{:.1}", self.benign_url_pct),
            self.malicious_tweets.to_string(),
            self.benign_tweets.to_string(),
            format!("{:.1}", self.malicious_tweet_pct),
            format!("{:.1}", self.benign_tweet_pct),
            self.users_with_true_claims.to_string(),
            self.users_with_false_claims.to_string(),
            self.users_with_both.to_string(),
            self.users_only_true.to_string(),
            self.users_only_false.to_string(),
        ];
        format!("{}\n{}\n", Self::CSV_HEADER.join(","), row.join(","))
    }

    /// Human table with integer percentages.
    pub fn to_table(&self) -> String {
        let rows = [
            ("Tweets", self.tweets.to_string()),
            ("Unique users", self.unique_users.to_string()),
            ("Unique URLs", self.unique_urls.to_string()),
            ("Malicious URLs", self.malicious_urls.to_string()),
            ("Benign URLs", format!("{} ({}%)", self.benign_urls, pct0(self.benign_urls, self.unique_urls))),
            ("Malicious tweets", self.malicious_tweets.to_string()),
            (
                "Benign tweets (misinformation)",
                format!("{} ({}%)", self.benign_tweets, pct0(self.benign_tweets, self.tweets)),
            ),
            ("Accounts with true claims", self.users_with_true_claims.to_string()),
            ("Accounts with false claims", self.users_with_false_claims.to_string()),
            ("Accounts with both", self.users_with_both.to_string()),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
    }
}

// ---------------------------------------------------------------------------
// histograms

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Bin i covers [edges[i], edges[i+1]); the last bin is closed.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn population(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn bin_of(&self, v: f64) -> usize {
        let last = self.counts.len() - 1;
        self.edges[1..].partition_point(|&e| e <= v).min(last)
    }

    pub fn from_edges(edges: Vec<f64>, values: impl IntoIterator<Item = f64>) -> Self {
        assert!(edges.len() >= 2 && edges.windows(2).all(|w| w[0] < w[1]));
        let mut h = Histogram {
            counts: vec![0; edges.len() - 1],
            edges,
        };
        for v in values {
            let b = h.bin_of(v);
            h.counts[b] += 1;
        }
        h
    }

    /// Count data: one bin per integer value up to 100, then five
    /// log-spaced bins per decade, enough to cover the maximum.
    pub fn counts(values: &[u64]) -> Self {
        Self::from_edges(count_edges(values.iter().copied().max().unwrap_or(0)), values.iter().map(|&v| v as f64))
    }

    /// Rates in [0, 1]: ten equal-width bins, 1.0 in the last.
    pub fn rates(values: &[f64]) -> Self {
        Self::from_edges((0..=10).map(|i| i as f64 / 10.0).collect(), values.iter().copied())
    }

    pub fn header(&self) -> String {
        let edges: Vec<String> = self.edges.iter().map(|e| format!("{e}")).collect();
        format!("# bin edges: {}", edges.join(" "))
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header();
        s.push_str("\nlower,upper,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{},{},{c}\n", self.edges[i], self.edges[i + 1]));
        }
        s
    }
}

pub const EXACT_BIN_LIMIT: u64 = 100;

pub fn count_edges(max: u64) -> Vec<f64> {
    let mut edges: Vec<f64> = (0..=EXACT_BIN_LIMIT.min(max + 1)).map(|v| v as f64).collect();
    if max >= EXACT_BIN_LIMIT {
        let mut k = 1;
        loop {
            let e = (EXACT_BIN_LIMIT as f64 * 10f64.powf(k as f64 / 5.0)).ceil();
            edges.push(e);
            if e > max as f64 {
                break;
            }
            k += 1;
        }
    }
    edges
}

// ---------------------------------------------------------------------------
// users, retweets, campaigns

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserClaimSummary {
    pub user_id: String,
    pub true_count: u64,
    pub false_count: u64,
    pub false_claim_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalseClaimRates {
    pub users: Vec<UserClaimSummary>,
    pub histogram: Histogram,
    pub only_true: u64,
    pub only_false: u64,
}

/// Per-user true/false claim counts, users in id order. A user with no
/// claims never appears, so every rate is defined.
pub fn false_claim_rates(claims: &[LabeledClaim]) -> FalseClaimRates {
    let mut counts: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for c in claims {
        let e = counts.entry(&c.user_id).or_default();
        match c.verdict() {
            ClaimVerdict::TrueClaim => e.0 += 1,
            ClaimVerdict::FalseClaim => e.1 += 1,
        }
    }
    let users: Vec<UserClaimSummary> = counts
        .into_iter()
        .map(|(u, (t, f))| UserClaimSummary {
            user_id: u.to_string(),
            true_count: t,
            false_count: f,
            false_claim_rate: f as f64 / (t + f) as f64,
        })
        .collect();
    let rates: Vec<f64> = users.iter().map(|u| u.false_claim_rate).collect();
    FalseClaimRates {
        histogram: Histogram::rates(&rates),
        only_true: users.iter().filter(|u| u.false_count == 0).count() as u64,
        only_false: users.iter().filter(|u| u.true_count == 0).count() as u64,
        users,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetweetSpread {
    /// Total retweets per false-claimed URL, URLs in order.
    pub per_url: Vec<(String, u64)>,
    pub histogram: Histogram,
    pub retweeted_more_than_once: u64,
    pub share_pct: f64,
}

pub fn retweet_spread(claims: &[LabeledClaim]) -> RetweetSpread {
    let mut per: BTreeMap<&str, u64> = BTreeMap::new();
    for c in claims.iter().filter(|c| c.verdict() == ClaimVerdict::FalseClaim) {
        *per.entry(&c.url).or_default() += c.retweets;
    }
    let values: Vec<u64> = per.values().copied().collect();
    let more = values.iter().filter(|&&v| v > 1).count() as u64;
    RetweetSpread {
        histogram: Histogram::counts(&values),
        retweeted_more_than_once: more,
        share_pct: pct1(more, values.len() as u64),
        per_url: per.into_iter().map(|(u, v)| (u.to_string(), v)).collect(),
    }
}

pub const DEFAULT_MIN_TWEETS: u64 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignUrl {
    pub url: String,
    pub tweet_count: u64,
    pub distinct_users: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub min_tweets: u64,
    pub urls: Vec<CampaignUrl>,
    /// Users behind any qualifying URL.
    pub distinct_users: u64,
    /// Tweets per false-claimed URL.
    pub tweet_histogram: Histogram,
}

/// False-claimed URLs tweeted at least `min_tweets` times, most tweeted first.
pub fn campaign_urls(claims: &[LabeledClaim], min_tweets: u64) -> CampaignReport {
    let mut per: BTreeMap<&str, (u64, BTreeSet<&str>)> = BTreeMap::new();
    for c in claims.iter().filter(|c| c.verdict() == ClaimVerdict::FalseClaim) {
        let e = per.entry(&c.url).or_default();
        e.0 += 1;
        e.1.insert(&c.user_id);
    }
    let tweet_counts: Vec<u64> = per.values().map(|(n, _)| *n).collect();
    let mut all_users = BTreeSet::new();
    let mut urls: Vec<CampaignUrl> = per
        .iter()
        .filter(|(_, (n, _))| *n >= min_tweets)
        .map(|(u, (n, users))| {
            all_users.extend(users.iter().copied());
            CampaignUrl {
                url: u.to_string(),
                tweet_count: *n,
                distinct_users: users.len() as u64,
            }
        })
        .collect();
    urls.sort_by(|a, b| b.tweet_count.cmp(&a.tweet_count).then_with(|| a.url.cmp(&b.url)));
    CampaignReport {
        min_tweets,
        urls,
        distinct_users: all_users.len() as u64,
        tweet_histogram: Histogram::counts(&tweet_counts),
    }
}
