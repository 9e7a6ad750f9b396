//! Synthetic labeled corpora for demos and end-to-end tests. Class text is
//! drawn from overlapping vocabularies so the classes are learnable but not
//! trivially separable.

use std::collections::HashMap;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotate::Label;
use crate::ingest::{Account, Platform, Post, ReactionCounts};

/// Groundtruth sizes per platform as (security_privacy, misinformation,
/// irrelevant).
pub fn groundtruth_counts(platform: Platform) -> [usize; 3] {
    match platform {
        Platform::Instagram => [545, 15, 2_740],
        Platform::Facebook => [560, 42, 2_734],
        Platform::Reddit => [1_045, 16, 2_234],
        Platform::Twitter => [1_865, 36, 1_468],
    }
}

const SHARED: &[&str] = &[
    "zoom", "meeting", "call", "today", "people", "using", "app", "work", "video", "time", "just", "think", "know",
    "school", "class", "week",
];

const SECURITY: &[&str] = &[
    "security", "privacy", "encryption", "data", "password", "settings", "update", "patch", "vulnerability",
    "waiting room", "meeting id", "end to end", "report", "researchers", "fixed", "version", "enable", "host",
    "feature", "announced", "policy", "article", "blog post", "audit",
];

const MISINFO: &[&str] = &[
    "spying", "china", "steals", "backdoor", "selling your data", "delete zoom", "they are watching",
    "government", "warning", "wake up", "stealing", "spyware", "do not use", "hackers control", "everyone",
    "camera on", "listening", "share this",
];

const IRRELEVANT: &[&str] = &[
    "lens", "camera", "photo", "birthday", "party", "family", "happy hour", "yoga", "lecture", "lunch", "stream",
    "concert", "friends", "fun", "drinks", "zoom in", "background", "quiz", "wedding", "game night", "lol",
    "love", "weekend", "music",
];

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub start: DateTime<Utc>,
    pub days: i64,
    /// Probability that a content word is drawn from another class.
    pub noise: f64,
    pub authors: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            start: Utc.with_ymd_and_hms(2019, 12, 1, 0, 0, 0).unwrap(),
            days: 183,
            noise: 0.12,
            authors: 900,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub posts: Vec<Post>,
    pub labels: Vec<(String, Label)>,
    pub accounts: Vec<Account>,
}

impl SynthCorpus {
    pub fn label_map(&self) -> HashMap<String, Label> {
        self.labels.iter().cloned().collect()
    }

    pub fn account_map(&self) -> HashMap<String, Account> {
        self.accounts.iter().map(|a| (a.id.clone(), a.clone())).collect()
    }
}

fn pool(label: Label) -> &'static [&'static str] {
    match label {
        Label::SecurityPrivacy => SECURITY,
        Label::Misinformation => MISINFO,
        Label::Irrelevant => IRRELEVANT,
    }
}

fn text_for(label: Label, rng: &mut ChaCha8Rng, noise: f64) -> String {
    let mut words: Vec<&str> = vec!["zoom"];
    for _ in 0..rng.gen_range(2..5) {
        words.push(SHARED.choose(rng).unwrap());
    }
    let content = rng.gen_range(3..6);
    for _ in 0..content {
        let from = if rng.gen_bool(noise) {
            *[Label::SecurityPrivacy, Label::Misinformation, Label::Irrelevant].choose(rng).unwrap()
        } else {
            label
        };
        words.push(pool(from).choose(rng).unwrap());
    }
    // Misinformation is a subset of the security/privacy conversation.
    if label == Label::Misinformation && rng.gen_bool(0.6) {
        words.push(SECURITY.choose(rng).unwrap());
    }
    words.shuffle(rng);
    let mut text = words.join(" ");
    if label == Label::Misinformation && rng.gen_bool(0.3) {
        text = text.to_uppercase();
    }
    if rng.gen_bool(0.2) {
        text.push_str(" https://example.com/x");
    }
    text
}

/// Zoom-topic corpus with `counts` posts per class in the order
/// security_privacy, misinformation, irrelevant. Misinformation is placed
/// later in the time range on average.
pub fn zoom_corpus(platform: Platform, counts: [usize; 3], opts: &SynthOptions, seed: u64) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = [Label::SecurityPrivacy, Label::Misinformation, Label::Irrelevant];
    let mut order: Vec<Label> = classes.iter().zip(counts).flat_map(|(&l, n)| std::iter::repeat(l).take(n)).collect();
    order.shuffle(&mut rng);
    let prefix = &platform.as_str()[..2];
    let mut posts = Vec::with_capacity(order.len());
    let mut labels = Vec::with_capacity(order.len());
    for (i, label) in order.into_iter().enumerate() {
        let day = match label {
            Label::Misinformation => opts.days / 2 + rng.gen_range(0..(opts.days - opts.days / 2).max(1)),
            _ => rng.gen_range(0..opts.days.max(1)),
        };
        let created_at = opts.start + Duration::days(day) + Duration::seconds(rng.gen_range(0..86_400));
        let author = rng.gen_range(0..opts.authors.max(1));
        let id = format!("{prefix}{i:05}");
        posts.push(Post {
            id: id.clone(),
            platform,
            author_id: format!("{prefix}u{author:04}"),
            created_at,
            text: text_for(label, &mut rng, opts.noise),
            language: Some("en".into()),
            has_media: rng.gen_bool(0.3),
            urls: Vec::new(),
            reactions: ReactionCounts {
                likes: Some(rng.gen_range(0..200)),
                shares: Some(rng.gen_range(0..40)),
                comments: Some(rng.gen_range(0..30)),
            },
            retweet_of: None,
            collected_at: None,
        });
        labels.push((id, label));
    }
    let accounts = if platform == Platform::Twitter {
        (0..opts.authors)
            .map(|a| Account {
                id: format!("{prefix}u{a:04}"),
                platform,
                followers_count: rng.gen_range(0..5_000),
                friends_count: rng.gen_range(0..2_000),
                statuses_count: rng.gen_range(1..50_000),
                listed_count: rng.gen_range(0..50),
                verified: rng.gen_bool(0.02),
                created_at: opts.start - Duration::days(rng.gen_range(30..4_000)),
                profile_description: String::new(),
                has_url: rng.gen_bool(0.4),
                has_profile_image: rng.gen_bool(0.9),
                protected: false,
            })
            .collect()
    } else {
        Vec::new()
    };
    SynthCorpus { posts, labels, accounts }
}
