//! Groundtruth labeling: criterion-driven label derivation, resumable
//! annotation sessions, inter-annotator agreement, and the misinformation
//! taxonomy.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::OpenOptions;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::Clock;
use crate::error::{Error, Result};
use crate::ingest::Post;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    SecurityPrivacy,
    Misinformation,
    Irrelevant,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::SecurityPrivacy, Label::Misinformation, Label::Irrelevant];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::SecurityPrivacy => "security_privacy",
            Label::Misinformation => "misinformation",
            Label::Irrelevant => "irrelevant",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s.trim())
            .ok_or_else(|| Error::Validation(format!("unknown label {s:?}")))
    }
}

/// (a) about the product, (b) about its security or privacy, (c) backed by
/// evidence or verifiable against reputable sources.
pub fn derive_label(a: bool, b: bool, c: bool) -> Label {
    if !a || !b {
        Label::Irrelevant
    } else if !c {
        Label::Misinformation
    } else {
        Label::SecurityPrivacy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    A,
    B,
    C,
}

impl Criterion {
    pub fn question(self) -> &'static str {
        match self {
            Criterion::A => "(a) Is the post talking about Zoom?",
            Criterion::B => "(b) Is it about Zoom's security or privacy?",
            Criterion::C => "(c) Does it give verifiable evidence, or can its claims be verified against reputable sources?",
        }
    }
}

/// Criterion answers; later criteria are skipped (None) once one fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answers {
    pub a: bool,
    pub b: Option<bool>,
    pub c: Option<bool>,
}

impl Answers {
    pub fn label(&self) -> Label {
        derive_label(self.a, self.b.unwrap_or(false), self.c.unwrap_or(false))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundtruthLabel {
    pub post_id: String,
    pub label: Label,
    pub annotator_id: String,
    #[serde(default)]
    pub rationale: String,
    #[serde(default)]
    pub evidence_urls: Vec<String>,
    pub answers: Answers,
    pub decided_at: DateTime<Utc>,
}

pub enum Reply {
    Yes,
    No,
    /// Stop the session; progress so far is kept.
    Quit,
}

pub trait Prompter {
    fn ask(&mut self, post: &Post, criterion: Criterion) -> Result<Reply>;

    /// Free-text rationale and evidence links once the label is known.
    fn rationale(&mut self, _post: &Post, _label: Label) -> Result<(String, Vec<String>)> {
        Ok((String::new(), Vec::new()))
    }
}

/// Line-oriented terminal prompter: y/n/q answers.
pub struct TerminalPrompter<R, W> {
    input: R,
    output: W,
    pub ask_rationale: bool,
}

impl<R: BufRead, W: Write> TerminalPrompter<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self {
            input,
            output,
            ask_rationale: false,
        }
    }

    fn line(&mut self) -> Result<Option<String>> {
        let mut s = String::new();
        let n = self
            .input
            .read_line(&mut s)
            .map_err(|e| Error::Session(format!("reading answer: {e}")))?;
        Ok((n > 0).then(|| s.trim().to_string()))
    }

    fn say(&mut self, s: &str) -> Result<()> {
        writeln!(self.output, "{s}").map_err(|e| Error::Session(format!("writing prompt: {e}")))
    }
}

impl<R: BufRead, W: Write> Prompter for TerminalPrompter<R, W> {
    fn ask(&mut self, post: &Post, criterion: Criterion) -> Result<Reply> {
        if criterion == Criterion::A {
            self.say(&format!("\n[{}] {}\n{}", post.platform, post.id, post.text))?;
        }
        loop {
            self.say(&format!("{} [y/n/q]", criterion.question()))?;
            match self.line()?.as_deref().map(str::to_ascii_lowercase).as_deref() {
                None | Some("q") | Some("quit") => return Ok(Reply::Quit),
                Some("y") | Some("yes") => return Ok(Reply::Yes),
                Some("n") | Some("no") => return Ok(Reply::No),
                Some(_) => self.say("please answer y, n or q")?,
            }
        }
    }

    fn rationale(&mut self, _post: &Post, label: Label) -> Result<(String, Vec<String>)> {
        if !self.ask_rationale {
            return Ok((String::new(), Vec::new()));
        }
        self.say(&format!("label: {label}. Rationale (optional):"))?;
        let rationale = self.line()?.unwrap_or_default();
        self.say("Evidence URLs, space separated (optional):")?;
        let urls = self.line()?.unwrap_or_default().split_whitespace().map(str::to_string).collect();
        Ok((rationale, urls))
    }
}

/// Hash of the corpus a session labels: ids and texts in order.
pub fn corpus_hash(posts: &[Post]) -> String {
    let mut h = Sha256::new();
    for p in posts {
        h.update(p.id.as_bytes());
        h.update([0]);
        h.update(p.text.as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SessionHeader {
    session: u32,
    corpus_hash: String,
    annotator_id: String,
    started_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionOutcome {
    /// All labels in the session file, in corpus order.
    pub labels: Vec<GroundtruthLabel>,
    pub complete: bool,
}

fn read_session(path: &Path) -> Result<Option<(SessionHeader, Vec<GroundtruthLabel>)>> {
    if !path.exists() {
        return Ok(None);
    }
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = raw.lines().filter(|l| !l.trim().is_empty());
    let Some(first) = lines.next() else {
        return Ok(None);
    };
    let header: SessionHeader =
        serde_json::from_str(first).map_err(|e| Error::Session(format!("bad session header: {e}")))?;
    let mut labels = Vec::new();
    for (i, l) in lines.enumerate() {
        labels.push(
            serde_json::from_str(l)
                .map_err(|e| Error::Session(format!("{}: record {}: {e}", path.display(), i + 2)))?,
        );
    }
    Ok(Some((header, labels)))
}

/// Prompts through the criteria for each unlabeled post, appending each
/// decision to the session file as it is made. An existing session file is
/// resumed; its corpus hash and annotator must match.
pub fn annotation_session(
    posts: &[Post],
    annotator_id: &str,
    prompter: &mut dyn Prompter,
    session_path: &Path,
    clock: &dyn Clock,
) -> Result<SessionOutcome> {
    let hash = corpus_hash(posts);
    let mut labels = match read_session(session_path)? {
        Some((h, labels)) => {
            if h.corpus_hash != hash {
                return Err(Error::Session(format!(
                    "{} was started on a different corpus (hash {} vs {hash})",
                    session_path.display(),
                    h.corpus_hash
                )));
            }
            if h.annotator_id != annotator_id {
                return Err(Error::Session(format!(
                    "{} belongs to annotator {}",
                    session_path.display(),
                    h.annotator_id
                )));
            }
            labels
        }
        None => {
            let header = SessionHeader {
                session: 1,
                corpus_hash: hash,
                annotator_id: annotator_id.to_string(),
                started_at: clock.now(),
            };
            crate::jsonl::write_atomic(session_path, format!("{}\n", serde_json::to_string(&header)?).as_bytes())?;
            Vec::new()
        }
    };
    let done: BTreeSet<String> = labels.iter().map(|l| l.post_id.clone()).collect();
    let mut file = OpenOptions::new()
        .append(true)
        .open(session_path)
        .map_err(|e| Error::io(session_path, e))?;
    let mut complete = true;
    'posts: for post in posts.iter().filter(|p| !done.contains(&p.id)) {
        let mut answers = Answers { a: false, b: None, c: None };
        for criterion in [Criterion::A, Criterion::B, Criterion::C] {
            let yes = match prompter.ask(post, criterion)? {
                Reply::Quit => {
                    complete = false;
                    break 'posts;
                }
                Reply::Yes => true,
                Reply::No => false,
            };
            match criterion {
                Criterion::A => answers.a = yes,
                Criterion::B => answers.b = Some(yes),
                Criterion::C => answers.c = Some(yes),
            }
            if !yes {
                break;
            }
        }
        let label = answers.label();
        let (rationale, evidence_urls) = prompter.rationale(post, label)?;
        let rec = GroundtruthLabel {
            post_id: post.id.clone(),
            label,
            annotator_id: annotator_id.to_string(),
            rationale,
            evidence_urls,
            answers,
            decided_at: clock.now(),
        };
        let mut line = serde_json::to_string(&rec)?;
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(|e| Error::io(session_path, e))?;
        labels.push(rec);
    }
    let order: HashMap<&str, usize> = posts.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    labels.sort_by_key(|l| order.get(l.post_id.as_str()).copied().unwrap_or(usize::MAX));
    Ok(SessionOutcome { labels, complete })
}

/// Reads a label file: either a session file (header line first) or plain
/// label records.
pub fn load_labels(path: &Path) -> Result<Vec<GroundtruthLabel>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        if i == 0 && serde_json::from_str::<SessionHeader>(line).is_ok() {
            continue;
        }
        out.push(
            serde_json::from_str(line)
                .map_err(|e| Error::Validation(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn label_counts(labels: &[GroundtruthLabel]) -> BTreeMap<Label, usize> {
    let mut m: BTreeMap<Label, usize> = Label::ALL.iter().map(|&l| (l, 0)).collect();
    for l in labels {
        *m.get_mut(&l.label).expect("all labels present") += 1;
    }
    m
}

// ---------------------------------------------------------------------------
// agreement

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub post_id: String,
    pub labels: Vec<(String, Label)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub annotators: Vec<String>,
    pub items: usize,
    /// Mean pairwise Cohen's kappa.
    pub kappa: f64,
    pub pairwise_kappa: Vec<(String, String, f64)>,
    pub multi_coder_score: f64,
    pub disagreements: Vec<Disagreement>,
}

/// Agreement over the posts every annotator labeled, in the first
/// annotator's order.
pub fn agreement_report(sets: &[Vec<GroundtruthLabel>]) -> Result<AgreementReport> {
    if sets.len() < 2 {
        return Err(Error::InvalidArgument("agreement needs at least two annotators".into()));
    }
    let maps: Vec<HashMap<&str, &GroundtruthLabel>> =
        sets.iter().map(|s| s.iter().map(|l| (l.post_id.as_str(), l)).collect()).collect();
    let names: Vec<String> = sets
        .iter()
        .enumerate()
        .map(|(i, s)| s.first().map_or_else(|| format!("annotator{i}"), |l| l.annotator_id.clone()))
        .collect();
    let common: Vec<&str> = sets[0]
        .iter()
        .map(|l| l.post_id.as_str())
        .filter(|id| maps.iter().all(|m| m.contains_key(id)))
        .collect();
    if common.is_empty() {
        return Err(Error::Validation("annotators share no labeled posts".into()));
    }
    let columns: Vec<Vec<Label>> = maps.iter().map(|m| common.iter().map(|id| m[id].label).collect()).collect();
    let mut pairwise = Vec::new();
    for i in 0..columns.len() {
        for j in i + 1..columns.len() {
            pairwise.push((names[i].clone(), names[j].clone(), stats::cohen_kappa(&columns[i], &columns[j])?));
        }
    }
    let kappa = pairwise.iter().map(|p| p.2).sum::<f64>() / pairwise.len() as f64;
    let items: Vec<Vec<BTreeSet<Label>>> = (0..common.len())
        .map(|k| columns.iter().map(|c| BTreeSet::from([c[k]])).collect())
        .collect();
    let multi = stats::multi_coder_agreement(&items, Label::ALL.len())?;
    let disagreements = common
        .iter()
        .enumerate()
        .filter(|(k, _)| columns.iter().any(|c| c[*k] != columns[0][*k]))
        .map(|(k, id)| Disagreement {
            post_id: id.to_string(),
            labels: names.iter().cloned().zip(columns.iter().map(|c| c[k])).collect(),
        })
        .collect();
    Ok(AgreementReport {
        annotators: names,
        items: common.len(),
        kappa,
        pairwise_kappa: pairwise,
        multi_coder_score: multi,
        disagreements,
    })
}

// ---------------------------------------------------------------------------
// taxonomy

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leaf {
    pub id: String,
    pub origin: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyClass {
    pub id: String,
    pub group: String,
    pub leaves: Vec<Leaf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub version: u32,
    #[serde(rename = "class")]
    pub classes: Vec<TaxonomyClass>,
}

impl Taxonomy {
    pub fn from_toml(raw: &str) -> Result<Self> {
        let t: Taxonomy = toml::from_str(raw)?;
        let mut seen = BTreeSet::new();
        for id in t.classes.iter().map(|c| &c.id).chain(t.classes.iter().flat_map(|c| c.leaves.iter().map(|l| &l.id))) {
            if !seen.insert(id) {
                return Err(Error::Validation(format!("taxonomy id {id} appears twice")));
            }
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn bundled() -> &'static Taxonomy {
        static T: OnceLock<Taxonomy> = OnceLock::new();
        T.get_or_init(|| Taxonomy::from_toml(include_str!("../data/taxonomy.toml")).expect("bundled taxonomy"))
    }

    pub fn class_ids(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.id.as_str())
    }

    pub fn leaf_count(&self) -> usize {
        self.classes.iter().map(|c| c.leaves.len()).sum()
    }

    pub fn parent_of(&self, leaf: &str) -> Option<&str> {
        self.classes
            .iter()
            .find(|c| c.leaves.iter().any(|l| l.id == leaf))
            .map(|c| c.id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyAssignment {
    pub post_id: String,
    pub classes: BTreeSet<String>,
    #[serde(default)]
    pub subcategories: BTreeSet<String>,
    #[serde(default)]
    pub annotator_id: String,
}

impl TaxonomyAssignment {
    /// Classes and leaves exist, and each leaf's class is assigned.
    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<()> {
        for c in &self.classes {
            if !taxonomy.class_ids().any(|id| id == c) {
                return Err(Error::Validation(format!("post {}: unknown class {c}", self.post_id)));
            }
        }
        for leaf in &self.subcategories {
            match taxonomy.parent_of(leaf) {
                None => return Err(Error::Validation(format!("post {}: unknown subcategory {leaf}", self.post_id))),
                Some(p) if !self.classes.contains(p) => {
                    return Err(Error::Validation(format!(
                        "post {}: subcategory {leaf} needs class {p}",
                        self.post_id
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Posts per class, in taxonomy order; a post counts once for every class
/// it carries.
pub fn taxonomy_distribution(assignments: &[TaxonomyAssignment], taxonomy: &Taxonomy) -> Result<IndexMap<String, u64>> {
    let mut out: IndexMap<String, u64> = taxonomy.class_ids().map(|c| (c.to_string(), 0)).collect();
    for a in assignments {
        a.validate(taxonomy)?;
        for c in &a.classes {
            *out.get_mut(c).expect("validated") += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyAgreement {
    pub items: usize,
    pub possible_values: usize,
    pub multi_coder_score: f64,
    pub disagreements: Vec<String>,
}

/// Multi-coder score over subcategory sets of the posts every coder
/// assigned; `possible_values` defaults to the taxonomy's leaf count.
pub fn taxonomy_agreement(
    coders: &[Vec<TaxonomyAssignment>],
    taxonomy: &Taxonomy,
    possible_values: Option<usize>,
) -> Result<TaxonomyAgreement> {
    if coders.len() < 2 {
        return Err(Error::InvalidArgument("agreement needs at least two coders".into()));
    }
    let maps: Vec<HashMap<&str, &TaxonomyAssignment>> =
        coders.iter().map(|s| s.iter().map(|a| (a.post_id.as_str(), a)).collect()).collect();
    let common: Vec<&str> = coders[0]
        .iter()
        .map(|a| a.post_id.as_str())
        .filter(|id| maps.iter().all(|m| m.contains_key(id)))
        .collect();
    let items: Vec<Vec<BTreeSet<String>>> = common
        .iter()
        .map(|id| maps.iter().map(|m| m[id].subcategories.clone()).collect())
        .collect();
    let pv = possible_values.unwrap_or_else(|| taxonomy.leaf_count());
    let score = stats::multi_coder_agreement(&items, pv)?;
    let disagreements = common
        .iter()
        .zip(&items)
        .filter(|(_, sets)| sets.iter().any(|s| s != &sets[0]))
        .map(|(id, _)| id.to_string())
        .collect();
    Ok(TaxonomyAgreement {
        items: common.len(),
        possible_values: pv,
        multi_coder_score: score,
        disagreements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_table() {
        for bits in 0..8u8 {
            let (a, b, c) = (bits & 4 != 0, bits & 2 != 0, bits & 1 != 0);
            let expected = if a && b && c {
                Label::SecurityPrivacy
            } else if a && b {
                Label::Misinformation
            } else {
                Label::Irrelevant
            };
            assert_eq!(derive_label(a, b, c), expected, "{a} {b} {c}");
        }
    }

    #[test]
    fn bundled_taxonomy_shape() {
        let t = Taxonomy::bundled();
        assert_eq!(t.classes.len(), 7);
        assert_eq!(t.leaf_count(), 22);
        assert_eq!(t.parent_of("phishing"), Some("security"));
    }

    #[test]
    fn distribution_counts_every_class() {
        let t = Taxonomy::bundled();
        let empty = taxonomy_distribution(&[], t).unwrap();
        assert!(empty.values().all(|&v| v == 0));
        let a = TaxonomyAssignment {
            post_id: "p".into(),
            classes: ["security".to_string(), "privacy".to_string()].into(),
            subcategories: BTreeSet::new(),
            annotator_id: String::new(),
        };
        let d = taxonomy_distribution(&[a], t).unwrap();
        assert_eq!((d["security"], d["privacy"], d["sources"]), (1, 1, 0));
    }

    #[test]
    fn orphan_leaf_is_rejected() {
        let a = TaxonomyAssignment {
            post_id: "p".into(),
            classes: ["privacy".to_string()].into(),
            subcategories: ["phishing".to_string()].into(),
            annotator_id: String::new(),
        };
        assert!(a.validate(Taxonomy::bundled()).is_err());
    }
}
