//! Independent oracles shared by the integration suites and the acceptance run.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use misinfo_core::balance::LabeledSet;
use misinfo_core::graph::{modularity, FollowGraph};
use misinfo_core::prevalence::LabeledClaim;
use misinfo_core::reputation::UrlVerdict;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

// ---- claims ----

pub struct RefangCase {
    pub input: String,
    pub expected: Vec<String>,
}

pub fn refang_cases() -> Vec<RefangCase> {
    let raw = std::fs::read_to_string(fixtures().join("claims/cases.tsv")).unwrap();
    raw.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| {
            let (input, expected) = l.split_once('\t').expect("tab separated");
            RefangCase {
                input: input.to_string(),
                expected: expected
                    .split('|')
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect(),
            }
        })
        .collect()
}

const FUZZ_TOKENS: &[&str] = &[
    "[.]", "[dot]", "(.)", "(dot)", " dot ", "[:]", "[//]", "[/]", "[://]", "[at]", "hxxp", "hXXp",
    "HXXPS", "http", "://", ".", "[", "]", "(", ")", "x", "X", "/", ":", "d", "o", "t", " ", "é",
    "[[", "]]", "h", "p", "s",
];

/// Random strings built from defang fragments and their pieces.
pub fn fuzz_input(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(0..24);
    (0..n)
        .map(|_| *FUZZ_TOKENS.choose(rng).unwrap())
        .collect()
}

// ---- statistics ----

/// Mann-Whitney U of `a` against `b` by pair counting.
pub fn u_by_pairs(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

/// Exact two-sided p by enumerating every assignment of the pooled values
/// to the first sample.
pub fn mw_enumeration_p(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let n1 = a.len();
    let u_obs = u_by_pairs(a, b);
    let (mut le, mut ge, mut total) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let (x, y): (Vec<f64>, Vec<f64>) = {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for (i, v) in pooled.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    x.push(*v);
                } else {
                    y.push(*v);
                }
            }
            (x, y)
        };
        let u = u_by_pairs(&x, &y);
        total += 1;
        if u <= u_obs + 1e-9 {
            le += 1;
        }
        if u >= u_obs - 1e-9 {
            ge += 1;
        }
    }
    let less = le as f64 / total as f64;
    let greater = ge as f64 / total as f64;
    ((2.0 * less.min(greater)).min(1.0), less, greater)
}

/// Two-sided permutation p from `draws` random relabelings.
pub fn mw_permutation_p(a: &[f64], b: &[f64], draws: usize, seed: u64) -> f64 {
    let n1 = a.len();
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let center = (a.len() * b.len()) as f64 / 2.0;
    let obs = (u_by_pairs(a, b) - center).abs();
    // ranks make each draw O(n)
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r as f64 + 1.0;
    }
    pooled.clear();
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..draws {
        let (head, _) = ranks.partial_shuffle(&mut rng, n1);
        let u = head.iter().sum::<f64>() - offset;
        if (u - center).abs() >= obs - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / draws as f64
}

/// Location-shifted normal samples without ties, redrawn until the plain
/// (uncorrected) U z-score lies in [2.0, 3.3]: p between about 0.001 and
/// 0.05, where a 1e5-draw permutation estimate has standard error under 7e-4.
pub fn shifted_samples(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n1 = rng.gen_range(30..=50);
        let n2 = rng.gen_range(30..=50);
        let shift = rng.gen_range(0.4..0.9);
        let mut draw = |mu: f64| -> f64 {
            // Box-Muller
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen();
            mu + (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        let a: Vec<f64> = (0..n1).map(|_| draw(0.0)).collect();
        let b: Vec<f64> = (0..n2).map(|_| draw(shift)).collect();
        let (f1, f2) = (n1 as f64, n2 as f64);
        let z = (u_by_pairs(&a, &b) - f1 * f2 / 2.0).abs() / (f1 * f2 * (f1 + f2 + 1.0) / 12.0).sqrt();
        if (2.0..=3.3).contains(&z) {
            return (a, b);
        }
    }
}

// ---- graphs ----

/// Calls `f` with every set partition of `n` nodes as a restricted growth string.
pub fn for_each_partition(n: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(a: &mut Vec<usize>, i: usize, max: usize, n: usize, f: &mut impl FnMut(&[usize])) {
        if i == n {
            f(a);
            return;
        }
        for c in 0..=max + 1 {
            a[i] = c;
            rec(a, i + 1, max.max(c), n, f);
        }
    }
    let mut a = vec![0; n];
    if n == 1 {
        f(&a);
        return;
    }
    rec(&mut a, 1, 0, n, f);
}

pub fn brute_force_optimum(g: &FollowGraph) -> (f64, Vec<usize>) {
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for_each_partition(g.node_count(), &mut |p| {
        let q = modularity(g, p, 1.0);
        if q > best.0 + 1e-12 {
            best = (q, p.to_vec());
        }
    });
    best
}

pub fn random_graph(seed: u64) -> FollowGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..=10);
    let p = rng.gen_range(0.15..0.5);
    let mut g = FollowGraph::new();
    for i in 0..n {
        g.add_node(&format!("n{i}"));
    }
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.gen_bool(p) {
                g.add_edge(&format!("n{a}"), &format!("n{b}"), 1.0).unwrap();
            }
        }
    }
    if g.edge_count() == 0 {
        g.add_edge("n0", "n1", 1.0).unwrap();
    }
    g
}

/// Two directed 4-cliques joined by a single edge.
pub fn two_cliques() -> FollowGraph {
    let mut g = FollowGraph::new();
    for block in [0, 4] {
        for a in block..block + 4 {
            for b in block..block + 4 {
                if a != b {
                    g.add_edge(&format!("v{a}"), &format!("v{b}"), 1.0).unwrap();
                }
            }
        }
    }
    g.add_edge("v3", "v4", 1.0).unwrap();
    g
}

// ---- oversampling ----

pub fn point_segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let ap: Vec<f64> = a.iter().zip(p).map(|(x, y)| y - x).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 == 0.0 {
        0.0
    } else {
        (ap.iter().zip(&ab).map(|(x, y)| x * y).sum::<f64>() / len2).clamp(0.0, 1.0)
    };
    a.iter()
        .zip(&ab)
        .zip(p)
        .map(|((x, d), q)| (x + t * d - q).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Overlapping Gaussian classes; every third fixture has a second minority class.
pub fn imbalanced_fixture(seed: u64) -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = rng.gen_range(2..=4);
    let mut sizes = vec![rng.gen_range(60..=100), rng.gen_range(8..=30)];
    if seed % 3 == 0 {
        sizes.push(rng.gen_range(5..=20));
    }
    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (class, &n) in sizes.iter().enumerate() {
        for _ in 0..n {
            features.push(
                (0..dims)
                    .map(|d| rng.gen_range(-1.0..1.0) + if d == 0 { class as f64 * 0.8 } else { 0.0 })
                    .collect(),
            );
            labels.push(class);
        }
    }
    // interleave classes so originals are not grouped by label
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut rng);
    LabeledSet::new(
        order.iter().map(|&i| features[i].clone()).collect(),
        order.iter().map(|&i| labels[i]).collect(),
    )
    .unwrap()
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Hand evaluation of ADASYN quotas: for each row of `label`, the share of
/// other-class rows among its k nearest neighbors (index breaks distance
/// ties), normalized to r-hat and apportioned by largest remainder.
pub fn adasyn_quota_oracle(set: &LabeledSet, label: usize, k: usize, beta: f64) -> Vec<usize> {
    let n = set.len();
    let minority: Vec<usize> = (0..n).filter(|&i| set.labels[i] == label).collect();
    let majority = (0..=*set.labels.iter().max().unwrap())
        .map(|c| set.labels.iter().filter(|&&l| l == c).count())
        .max()
        .unwrap();
    let g = ((majority - minority.len()) as f64 * beta).round() as usize;
    let k = k.min(n - 1);
    let r: Vec<f64> = minority
        .iter()
        .map(|&i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&x, &y| {
                sq(&set.features[i], &set.features[x])
                    .total_cmp(&sq(&set.features[i], &set.features[y]))
                    .then(x.cmp(&y))
            });
            others[..k].iter().filter(|&&j| set.labels[j] != label).count() as f64 / k as f64
        })
        .collect();
    let sum: f64 = r.iter().sum();
    if sum == 0.0 {
        return vec![0; r.len()];
    }
    let exact: Vec<f64> = r.iter().map(|x| x / sum * g as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = g - quota.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..r.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    for i in by_remainder {
        if left == 0 {
            break;
        }
        quota[i] += 1;
        left -= 1;
    }
    quota
}

// ---- trees ----

#[derive(Debug)]
pub enum OracleNode {
    Leaf(usize),
    Split(usize, f64, Box<OracleNode>, Box<OracleNode>),
}

fn gini_weighted(labels: &[usize], n_classes: usize) -> f64 {
    let mut c = vec![0.0; n_classes];
    for &l in labels {
        c[l] += 1.0;
    }
    let n = labels.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    n - c.iter().map(|x| x * x).sum::<f64>() / n
}

/// Exhaustive CART: every feature and every midpoint between distinct
/// values is scored; a split must lower impurity by more than 1e-9; score
/// ties go to the lowest feature, then the lowest threshold.
pub fn exhaustive_tree(x: &[Vec<f64>], y: &[usize], rows: &[usize], n_classes: usize) -> OracleNode {
    let labels: Vec<usize> = rows.iter().map(|&i| y[i]).collect();
    let parent = gini_weighted(&labels, n_classes);
    let majority = {
        let mut c = vec![0usize; n_classes];
        for &l in &labels {
            c[l] += 1;
        }
        let max = *c.iter().max().unwrap();
        c.iter().position(|&v| v == max).unwrap()
    };
    if parent <= 0.0 || rows.len() < 2 {
        return OracleNode::Leaf(majority);
    }
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|&i| x[i][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
            let ly: Vec<usize> = l.iter().map(|&i| y[i]).collect();
            let ry: Vec<usize> = r.iter().map(|&i| y[i]).collect();
            let score = gini_weighted(&ly, n_classes) + gini_weighted(&ry, n_classes);
            if score >= parent - 1e-9 {
                continue;
            }
            if best.is_none_or(|(s, _, _)| score < s - 1e-9) {
                best = Some((score, f, t));
            }
        }
    }
    match best {
        None => OracleNode::Leaf(majority),
        Some((_, f, t)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
            OracleNode::Split(
                f,
                t,
                Box::new(exhaustive_tree(x, y, &l, n_classes)),
                Box::new(exhaustive_tree(x, y, &r, n_classes)),
            )
        }
    }
}

pub fn oracle_predict(node: &OracleNode, row: &[f64]) -> usize {
    match node {
        OracleNode::Leaf(c) => *c,
        OracleNode::Split(f, t, l, r) => {
            if row[*f] <= *t {
                oracle_predict(l, row)
            } else {
                oracle_predict(r, row)
            }
        }
    }
}

/// Small integer-valued table (many ties) with up to three classes.
pub fn small_tree_fixture(seed: u64) -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(8..=30);
    let d = rng.gen_range(1..=4);
    let k = rng.gen_range(2..=3);
    let features: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(0..6) as f64).collect())
        .collect();
    let labels: Vec<usize> = features
        .iter()
        .map(|r| {
            let base = if r[0] + r[d - 1] > 5.0 { 1 } else { 0 };
            if rng.gen_bool(0.15) {
                rng.gen_range(0..k)
            } else {
                base.min(k - 1)
            }
        })
        .collect();
    LabeledSet::new(features, labels).unwrap()
}

/// Two well separated Gaussian classes in 6 dimensions, 3 of them noise.
pub fn separable_set(n: usize, seed: u64) -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let row: Vec<f64> = (0..6)
            .map(|d| {
                let centre = if d < 3 { class as f64 * 4.0 } else { 0.0 };
                centre + rng.gen_range(-1.5..1.5)
            })
            .collect();
        features.push(row);
        labels.push(class);
    }
    LabeledSet::new(features, labels).unwrap()
}

// ---- prevalence ----

/// Published phishing claim totals.
pub struct Table1 {
    pub tweets: u64,
    pub unique_urls: u64,
    pub malicious_urls: u64,
    pub benign_urls: u64,
    pub malicious_tweets: u64,
    pub benign_tweets: u64,
    pub users_true: u64,
    pub users_false: u64,
    pub users_both: u64,
}

pub const TABLE1: Table1 = Table1 {
    tweets: 17_770,
    unique_urls: 10_578,
    malicious_urls: 9_603,
    benign_urls: 975,
    malicious_tweets: 13_875,
    benign_tweets: 3_895,
    users_true: 11_200,
    users_false: 148,
    users_both: 124,
};

/// Claims arranged to reproduce the published column totals: every URL is
/// claimed at least once, surplus claims cycle over URLs of the same class,
/// and users are assigned so the true/false/both sets have the given sizes.
pub fn table1_claims(t: &Table1) -> Vec<LabeledClaim> {
    let only_false = t.users_false - t.users_both;
    let true_users: Vec<String> = (0..t.users_true).map(|i| format!("u{i}")).collect();
    let false_users: Vec<String> = (0..t.users_both)
        .map(|i| format!("u{i}"))
        .chain((0..only_false).map(|i| format!("f{i}")))
        .collect();
    let mut out = Vec::with_capacity(t.tweets as usize);
    let mut push = |n: u64, urls: u64, prefix: &str, verdict: UrlVerdict, users: &[String]| {
        for i in 0..n {
            out.push(LabeledClaim {
                post_id: format!("{prefix}{i}"),
                user_id: users[(i % users.len() as u64) as usize].clone(),
                url: format!("http://{prefix}{}.example", i % urls),
                url_verdict: verdict,
                retweets: i % 7,
            });
        }
    };
    push(t.malicious_tweets, t.malicious_urls, "m", UrlVerdict::Malicious, &true_users);
    push(t.benign_tweets, t.benign_urls, "b", UrlVerdict::Benign, &false_users);
    out
}

// ---- annotation ----

pub fn bare_post(id: &str, text: &str) -> misinfo_core::ingest::Post {
    use chrono::TimeZone;
    misinfo_core::ingest::Post {
        id: id.into(),
        platform: misinfo_core::ingest::Platform::Reddit,
        author_id: "u".into(),
        created_at: chrono::Utc.with_ymd_and_hms(2020, 4, 1, 0, 0, 0).unwrap(),
        text: text.into(),
        language: None,
        has_media: false,
        urls: vec![],
        reactions: Default::default(),
        retweet_of: None,
        collected_at: None,
    }
}

/// Recorded criterion answers; a blank cell means the question was never asked.
pub fn recorded_answers(name: &str) -> Vec<(String, [Option<bool>; 3])> {
    let raw = std::fs::read_to_string(fixtures().join("annotate").join(name)).unwrap();
    raw.lines()
        .skip(1)
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            let cell = |s: &str| match s {
                "1" => Some(true),
                "0" => Some(false),
                _ => None,
            };
            (cells[0].to_string(), [cell(cells[1]), cell(cells[2]), cell(cells[3])])
        })
        .collect()
}

/// Replays recorded answers through a real annotation session.
pub struct ScriptedPrompter {
    pub answers: std::collections::HashMap<String, [Option<bool>; 3]>,
}

impl misinfo_core::annotate::Prompter for ScriptedPrompter {
    fn ask(
        &mut self,
        post: &misinfo_core::ingest::Post,
        criterion: misinfo_core::annotate::Criterion,
    ) -> misinfo_core::Result<misinfo_core::annotate::Reply> {
        use misinfo_core::annotate::{Criterion, Reply};
        let i = match criterion {
            Criterion::A => 0,
            Criterion::B => 1,
            Criterion::C => 2,
        };
        let a = self.answers[&post.id][i].unwrap_or_else(|| panic!("{} asked {criterion:?} after a failed criterion", post.id));
        Ok(if a { Reply::Yes } else { Reply::No })
    }
}

pub fn replay_session(
    name: &str,
    session: &Path,
) -> std::collections::BTreeMap<misinfo_core::annotate::Label, usize> {
    use misinfo_core::annotate::{annotation_session, label_counts};
    use misinfo_core::clock::ManualClock;
    let recorded = recorded_answers(name);
    let posts: Vec<_> = recorded.iter().map(|(id, _)| bare_post(id, &format!("zoom post {id}"))).collect();
    let mut prompter = ScriptedPrompter { answers: recorded.into_iter().collect() };
    let clock = ManualClock::new(chrono::DateTime::from_timestamp(1_590_000_000, 0).unwrap());
    let out = annotation_session(&posts, "coder-1", &mut prompter, session, &clock).unwrap();
    assert!(out.complete);
    label_counts(&out.labels)
}
