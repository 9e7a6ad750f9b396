//! Text preprocessing, TF-IDF over unigrams and bigrams with top-k term
//! selection, and per-platform contextual features.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::ingest::{Account, Platform, Post};
use crate::lexicon;

pub const VOCABULARY_VERSION: u32 = 1;
pub const DEFAULT_K: usize = 100;

fn noise_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(?:https?://|www\.|t\.co/)\S*|[#@][\p{L}\p{N}_]+").expect("valid regex")
    })
}

/// Removes URLs, hashtags and mentions, leaving the surrounding text.
pub fn strip_noise(text: &str) -> String {
    noise_pattern().replace_all(text, " ").into_owned()
}

/// Lowercased alphanumeric tokens of length >= 2 that are not stopwords.
/// Emoji and punctuation act as separators and never survive.
pub fn preprocess(text: &str) -> Vec<String> {
    lexicon::words(&strip_noise(text))
        .into_iter()
        .filter(|t| t.chars().count() >= 2 && !lexicon::is_stopword(t))
        .collect()
}

/// Unigrams followed by adjacent-token bigrams (joined by a space).
pub fn ngrams(tokens: &[String], range: (usize, usize)) -> Vec<String> {
    let mut out = Vec::new();
    for n in range.0.max(1)..=range.1 {
        if tokens.len() < n {
            break;
        }
        for w in tokens.windows(n) {
            out.push(w.join(" "));
        }
    }
    out
}

pub fn smoothed_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub term: String,
    pub idf: f64,
}

#[derive(Deserialize)]
struct VocabularyRepr {
    version: u32,
    ngram_range: (usize, usize),
    entries: Vec<VocabEntry>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let mut v = Vocabulary::new(r.ngram_range, r.entries);
        v.version = r.version;
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr")]
pub struct Vocabulary {
    pub version: u32,
    pub ngram_range: (usize, usize),
    pub k: usize,
    pub entries: Vec<VocabEntry>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn new(ngram_range: (usize, usize), entries: Vec<VocabEntry>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.term.clone(), i))
            .collect();
        Self {
            version: VOCABULARY_VERSION,
            ngram_range,
            k: entries.len(),
            entries,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.term.as_str())
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.index.get(term).map(|&i| self.entries[i].idf)
    }

    /// SHA-256 over the term/idf pairs; models record it to detect mismatched
    /// vocabularies at load time.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update(e.term.as_bytes());
            h.update([0]);
            h.update(e.idf.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let v: Vocabulary = serde_json::from_str(raw)?;
        if v.version != VOCABULARY_VERSION {
            return Err(Error::Validation(format!(
                "vocabulary version {} is not supported (expected {VOCABULARY_VERSION})",
                v.version
            )));
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::jsonl::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw)
    }
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Fits smoothed idf over all n-grams, then keeps the `k` terms with the
/// highest mean L2-normalized TF-IDF across the corpus (ties by term).
pub fn fit_tfidf(corpus: &[Vec<String>], ngram_range: (usize, usize), k: usize) -> Vocabulary {
    let n_docs = corpus.len();
    let docs: Vec<BTreeMap<String, f64>> = corpus
        .iter()
        .map(|tokens| {
            let mut tf = BTreeMap::new();
            for g in ngrams(tokens, ngram_range) {
                *tf.entry(g).or_insert(0.0) += 1.0;
            }
            tf
        })
        .collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &docs {
        for t in d.keys() {
            *df.entry(t.as_str()).or_default() += 1;
        }
    }
    let idf: BTreeMap<&str, f64> = df
        .iter()
        .map(|(&t, &c)| (t, smoothed_idf(n_docs, c)))
        .collect();

    let mut mean: BTreeMap<&str, f64> = idf.keys().map(|&t| (t, 0.0)).collect();
    for d in &docs {
        let weights: Vec<f64> = d.iter().map(|(t, c)| c * idf[t.as_str()]).collect();
        let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        for ((t, _), w) in d.iter().zip(weights) {
            *mean.get_mut(t.as_str()).expect("term seen") += w / norm;
        }
    }
    let mut ranked: Vec<(&str, f64)> = mean.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if k > ranked.len() {
        log::warn!(
            "requested {k} terms but the corpus has only {}; keeping all",
            ranked.len()
        );
    }
    ranked.truncate(k);
    let entries = ranked
        .into_iter()
        .map(|(t, _)| VocabEntry {
            term: t.to_owned(),
            idf: idf[t],
        })
        .collect();
    Vocabulary::new(ngram_range, entries)
}

/// TF-IDF block over the selected terms, L2-normalized; all zeros when no
/// selected term occurs.
pub fn transform(vocab: &Vocabulary, tokens: &[String]) -> Vec<f64> {
    let mut v = vec![0.0; vocab.len()];
    for g in ngrams(tokens, vocab.ngram_range) {
        if let Some(&i) = vocab.index.get(&g) {
            v[i] += 1.0;
        }
    }
    for (x, e) in v.iter_mut().zip(&vocab.entries) {
        *x *= e.idf;
    }
    l2_normalize(&mut v);
    v
}

/// Raw-case word tokens with URLs, hashtags and mentions removed.
fn surface_words(text: &str) -> Vec<String> {
    strip_noise(text)
        .nfc()
        .collect::<String>()
        .split(|c: char| !c.is_alphanumeric() && c != '\'')
        .map(|w| w.trim_matches('\''))
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

pub fn is_all_caps(word: &str) -> bool {
    let letters: Vec<char> = word.chars().filter(|c| c.is_alphabetic()).collect();
    letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Text,
    Imputable,
}

/// Ordered contextual feature names for a platform. Imputable features are
/// followed by a `<name>_missing` flag.
pub fn schema(platform: Platform) -> Vec<String> {
    let mut names = Vec::new();
    for (name, src) in schema_fields(platform) {
        names.push(name.to_owned());
        if src == Source::Imputable {
            names.push(format!("{name}_missing"));
        }
    }
    names
}

fn schema_fields(platform: Platform) -> Vec<(&'static str, Source)> {
    use Source::*;
    let mut f = vec![
        ("word_count", Text),
        ("noun_count", Text),
        ("pronoun_count", Text),
        ("all_caps_count", Text),
        ("misspelled_count", Text),
        ("verified", Imputable),
        ("followers_count", Imputable),
    ];
    match platform {
        Platform::Instagram => f.push(("likes", Imputable)),
        Platform::Facebook => f.extend([
            ("likes", Imputable),
            ("comments", Imputable),
            ("shares", Imputable),
        ]),
        Platform::Reddit => f.extend([("likes", Imputable), ("comments", Imputable)]),
        Platform::Twitter => f.extend([
            ("statuses_count", Imputable),
            ("profile_description_length", Imputable),
            ("account_age_years", Imputable),
            ("listed_count", Imputable),
            ("has_profile_image", Imputable),
            ("has_photo", Text),
            ("has_url", Text),
        ]),
    }
    f
}

/// Named contextual features for one post. Values the data does not provide
/// are imputed as 0 and flagged through the companion `_missing` feature.
pub fn contextual_features(
    post: &Post,
    account: Option<&Account>,
    platform: Platform,
) -> IndexMap<String, f64> {
    let words = surface_words(&post.text);
    let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
    let alpha = |w: &&String| w.chars().all(char::is_alphabetic);

    let mut out = IndexMap::new();
    for (name, src) in schema_fields(platform) {
        let value: Option<f64> = match name {
            "word_count" => Some(words.len() as f64),
            "noun_count" => Some(
                lower
                    .iter()
                    .filter(alpha)
                    .filter(|w| lexicon::is_noun(w))
                    .count() as f64,
            ),
            "pronoun_count" => Some(
                lower
                    .iter()
                    .filter(|w| lexicon::pronouns().contains(w.as_str()))
                    .count() as f64,
            ),
            "all_caps_count" => Some(words.iter().filter(|w| is_all_caps(w)).count() as f64),
            "misspelled_count" => Some(
                lower
                    .iter()
                    .filter(alpha)
                    .filter(|w| w.chars().count() >= 2 && !lexicon::is_known_word(w))
                    .count() as f64,
            ),
            "verified" => account.map(|a| a.verified as u8 as f64),
            "followers_count" => account.map(|a| a.followers_count as f64),
            "likes" => post.reactions.likes.map(|v| v as f64),
            "comments" => post.reactions.comments.map(|v| v as f64),
            "shares" => post.reactions.shares.map(|v| v as f64),
            "statuses_count" => account.map(|a| a.statuses_count as f64),
            "profile_description_length" => {
                account.map(|a| a.profile_description.chars().count() as f64)
            }
            "account_age_years" => account.map(|a| a.account_age_years(post.created_at) as f64),
            "listed_count" => account.map(|a| a.listed_count as f64),
            "has_profile_image" => account.map(|a| a.has_profile_image as u8 as f64),
            "has_photo" => Some(post.has_media as u8 as f64),
            "has_url" => Some(!post.urls.is_empty() as u8 as f64),
            other => unreachable!("feature {other} has no extractor"),
        };
        out.insert(name.to_owned(), value.unwrap_or(0.0));
        if src == Source::Imputable {
            out.insert(format!("{name}_missing"), value.is_none() as u8 as f64);
        }
    }
    out
}

/// A fitted vocabulary plus the platform's contextual schema; produces the
/// full `[tfidf | contextual]` vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub platform: Platform,
    pub vocabulary: Vocabulary,
    pub contextual: bool,
}

impl Featurizer {
    pub fn fit(platform: Platform, posts: &[&Post], k: usize, contextual: bool) -> Self {
        let corpus: Vec<Vec<String>> = posts.iter().map(|p| preprocess(&p.text)).collect();
        Self {
            platform,
            vocabulary: fit_tfidf(&corpus, (1, 2), k),
            contextual,
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .vocabulary
            .terms()
            .map(|t| format!("tfidf:{t}"))
            .collect();
        if self.contextual {
            names.extend(schema(self.platform));
        }
        names
    }

    pub fn vectorize(&self, post: &Post, account: Option<&Account>) -> Vec<f64> {
        let mut v = transform(&self.vocabulary, &preprocess(&post.text));
        if self.contextual {
            v.extend(contextual_features(post, account, self.platform).into_values());
        }
        v
    }
}
