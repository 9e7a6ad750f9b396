//! Extraction of defanged URLs from post text, refanging to canonical form,
//! and grouping of claims by target URL.
//!
//! A defanged URL starts at a (possibly defanged) `http`/`https` scheme token
//! and runs through URL-legal characters and defang brackets. Rewriting is
//! driven by the rule table in `data/refang_rules.toml`.

use std::sync::OnceLock;

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Post;

const BUNDLED_RULES: &str = include_str!("../data/refang_rules.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefangRule {
    pub id: String,
    pub pattern: String,
    pub replacement: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefangTable {
    pub version: u32,
    #[serde(rename = "rule")]
    rules: Vec<RefangRule>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Refanged {
    pub text: String,
    /// Rule ids in order of first application.
    pub applied: Vec<String>,
}

impl RefangTable {
    pub fn from_toml(raw: &str) -> Result<Self> {
        let mut table: RefangTable = toml::from_str(raw)?;
        for rule in &table.rules {
            if rule.pattern.is_empty() || !rule.pattern.is_ascii() {
                return Err(Error::Validation(format!(
                    "refang rule '{}' needs a non-empty ASCII pattern",
                    rule.id
                )));
            }
        }
        // longest pattern first; stable for equal lengths
        table
            .rules
            .sort_by(|a, b| b.pattern.len().cmp(&a.pattern.len()));
        Ok(table)
    }

    pub fn bundled() -> &'static RefangTable {
        static TABLE: OnceLock<RefangTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            RefangTable::from_toml(BUNDLED_RULES).expect("bundled refang rules are valid")
        })
    }

    pub fn rules(&self) -> &[RefangRule] {
        &self.rules
    }

    pub fn rule(&self, id: &str) -> Option<&RefangRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// One left-to-right pass restricted to `allowed` rule ids (all if `None`).
    fn pass(&self, input: &str, allowed: Option<&[String]>, applied: &mut Vec<String>) -> String {
        let bytes = input.as_bytes();
        let mut out = String::with_capacity(input.len());
        let mut i = 0;
        'outer: while i < bytes.len() {
            if input.is_char_boundary(i) {
                for rule in &self.rules {
                    if allowed.is_some_and(|ids| !ids.contains(&rule.id)) {
                        continue;
                    }
                    let pat = rule.pattern.as_bytes();
                    if bytes.len() - i >= pat.len()
                        && bytes[i..i + pat.len()].eq_ignore_ascii_case(pat)
                    {
                        out.push_str(&rule.replacement);
                        if !applied.contains(&rule.id) {
                            applied.push(rule.id.clone());
                        }
                        i += pat.len();
                        continue 'outer;
                    }
                }
            }
            let ch = input[i..].chars().next().expect("in bounds");
            out.push(ch);
            i += ch.len_utf8();
        }
        out
    }

    fn apply(&self, input: &str, allowed: Option<&[String]>) -> Refanged {
        let mut applied = Vec::new();
        let mut text = input.to_owned();
        // Replacements never reintroduce a pattern without shrinking the input
        // or removing an 'x', so the fixpoint is reached in a few passes.
        loop {
            let next = self.pass(&text, allowed, &mut applied);
            if next == text {
                break;
            }
            text = next;
        }
        Refanged { text, applied }
    }

    /// Rewrites every defang token until no rule matches.
    pub fn refang(&self, input: &str) -> Refanged {
        self.apply(input, None)
    }

    /// Re-applies only the named rules; used to check a claim's provenance.
    pub fn replay(&self, input: &str, rule_ids: &[String]) -> String {
        self.apply(input, Some(rule_ids)).text
    }
}

pub fn refang(input: &str) -> Refanged {
    RefangTable::bundled().refang(input)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlClaim {
    pub post_id: String,
    pub raw_match: String,
    /// Byte offsets of `raw_match` in the post text.
    pub span: (usize, usize),
    pub canonical_url: String,
    pub patterns_applied: Vec<String>,
    pub host: String,
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub claims: Vec<UrlClaim>,
    pub diagnostics: Vec<String>,
}

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let scheme = r"h(?:xx|tt)ps?";
        let sep = r"(?:\[://\]|(?:\[:\]|:)(?:\[//\]|\[/\]\[/\]|\[/\]/|/\[/\]|//))";
        let defang = r"\[\.\]|\(\.\)|\[dot\]|\(dot\)|[ ]dot[ ]|\[:\]|\[//\]|\[/\]|\[at\]";
        let plain = r"[\p{L}\p{N}\-._~:/?#@!$&*+,;=%]";
        Regex::new(&format!(r"(?i)\b{scheme}{sep}(?:{defang}|{plain})+")).expect("valid regex")
    })
}

const TRAILING_PUNCT: &[char] = &['.', ',', ';', ':', '!', '?'];

/// Lowercases scheme and host, drops default ports, keeps path and query
/// verbatim. Returns `(canonical, host)`.
pub fn canonicalize(refanged: &str) -> std::result::Result<(String, String), String> {
    if refanged.chars().any(char::is_whitespace) {
        return Err(format!("whitespace in '{refanged}'"));
    }
    let (scheme, rest) = refanged
        .split_once("://")
        .ok_or_else(|| format!("no scheme separator in '{refanged}'"))?;
    let scheme = scheme.to_ascii_lowercase();
    if scheme != "http" && scheme != "https" {
        return Err(format!("unsupported scheme '{scheme}'"));
    }
    let authority_end = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let (authority, tail) = rest.split_at(authority_end);
    let (userinfo, hostport) = match authority.rsplit_once('@') {
        Some((u, h)) => (Some(u), h),
        None => (None, authority),
    };
    let (host, port) = match hostport.rsplit_once(':') {
        Some((h, p)) if !h.ends_with(']') || hostport.starts_with('[') => (h, Some(p)),
        _ => (hostport, None),
    };
    let host = host.to_lowercase();
    if host.is_empty() || host.trim_end_matches('.').split('.').any(str::is_empty) {
        return Err(format!("malformed host '{host}' in '{refanged}'"));
    }
    let port = match port {
        Some("") => None,
        Some(p) if (scheme == "http" && p == "80") || (scheme == "https" && p == "443") => None,
        other => other,
    };
    let mut canonical = format!("{scheme}://");
    if let Some(u) = userinfo {
        canonical.push_str(u);
        canonical.push('@');
    }
    canonical.push_str(&host);
    if let Some(p) = port {
        canonical.push(':');
        canonical.push_str(p);
    }
    canonical.push_str(tail);

    let parsed =
        url::Url::parse(&canonical).map_err(|e| format!("invalid URL '{canonical}': {e}"))?;
    if parsed.host_str().is_none_or(str::is_empty) {
        return Err(format!("no host in '{canonical}'"));
    }
    Ok((canonical, host))
}

/// Finds every maximal defanged URL in `text`. Plain URLs (no defang rule
/// fires) are not claims.
pub fn extract_from_text(post_id: &str, text: &str) -> Extraction {
    let table = RefangTable::bundled();
    let mut out = Extraction::default();
    for m in url_pattern().find_iter(text) {
        let mut raw = m.as_str();
        loop {
            let trimmed = raw.trim_end_matches(TRAILING_PUNCT).trim_end();
            if trimmed.len() == raw.len() {
                break;
            }
            raw = trimmed;
        }
        let start = m.start();
        let refanged = table.refang(raw);
        if refanged.applied.is_empty() {
            continue;
        }
        match canonicalize(&refanged.text) {
            Ok((canonical_url, host)) => out.claims.push(UrlClaim {
                post_id: post_id.to_owned(),
                raw_match: raw.to_owned(),
                span: (start, start + raw.len()),
                canonical_url,
                patterns_applied: refanged.applied,
                host,
            }),
            Err(reason) => out
                .diagnostics
                .push(format!("post {post_id}: dropped '{raw}': {reason}")),
        }
    }
    out
}

pub fn extract_claims(post: &Post) -> Extraction {
    extract_from_text(&post.id, &post.text)
}

/// Groups claims by canonical URL, keeping first-appearance order.
pub fn unique_urls(claims: &[UrlClaim]) -> IndexMap<String, Vec<String>> {
    let mut map: IndexMap<String, Vec<String>> = IndexMap::new();
    for c in claims {
        map.entry(c.canonical_url.clone())
            .or_default()
            .push(c.post_id.clone());
    }
    map
}
