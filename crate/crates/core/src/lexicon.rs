//! Bundled word lists and the shared word tokenizer.

use std::collections::HashSet;
use std::sync::OnceLock;

use unicode_normalization::UnicodeNormalization;

const STOPWORDS: &str = include_str!("../data/stopwords.txt");
const WORDLIST: &str = include_str!("../data/wordlist.txt");
const DOMAIN_TERMS: &str = include_str!("../data/domain_terms.txt");
const PRONOUNS: &str = include_str!("../data/pronouns.txt");
const NOUNS: &str = include_str!("../data/nouns.txt");

fn parse_list(raw: &str) -> impl Iterator<Item = &str> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

fn cached(
    cell: &'static OnceLock<HashSet<&'static str>>,
    sources: &[&'static str],
) -> &'static HashSet<&'static str> {
    cell.get_or_init(|| sources.iter().flat_map(|s| parse_list(s)).collect())
}

pub fn stopwords() -> &'static HashSet<&'static str> {
    static CELL: OnceLock<HashSet<&'static str>> = OnceLock::new();
    cached(&CELL, &[STOPWORDS])
}

pub fn dictionary() -> &'static HashSet<&'static str> {
    static CELL: OnceLock<HashSet<&'static str>> = OnceLock::new();
    cached(&CELL, &[WORDLIST, DOMAIN_TERMS])
}

pub fn pronouns() -> &'static HashSet<&'static str> {
    static CELL: OnceLock<HashSet<&'static str>> = OnceLock::new();
    cached(&CELL, &[PRONOUNS])
}

pub fn nouns() -> &'static HashSet<&'static str> {
    static CELL: OnceLock<HashSet<&'static str>> = OnceLock::new();
    cached(&CELL, &[NOUNS])
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

/// NFC-normalizes, lowercases and splits on anything that is not a letter or
/// digit.
pub fn words(text: &str) -> Vec<String> {
    let normalized: String = text.nfc().collect::<String>().to_lowercase();
    normalized
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Dictionary membership with light inflection stripping (plural, past tense,
/// gerund, adverb) so regular forms of listed words are accepted.
pub fn is_known_word(word: &str) -> bool {
    let dict = dictionary();
    if dict.contains(word) {
        return true;
    }
    const SUFFIXES: &[(&str, &str)] = &[
        ("ies", "y"),
        ("es", ""),
        ("s", ""),
        ("ied", "y"),
        ("ed", ""),
        ("ed", "e"),
        ("ing", ""),
        ("ing", "e"),
        ("ly", ""),
        ("er", ""),
        ("ers", ""),
        ("'s", ""),
    ];
    SUFFIXES.iter().any(|(suffix, repl)| {
        word.strip_suffix(suffix)
            .filter(|stem| stem.len() >= 2)
            .map(|stem| {
                let candidate = format!("{stem}{repl}");
                if dict.contains(candidate.as_str()) {
                    return true;
                }
                // doubled final consonant: "stopped" -> "stop"
                let bytes = stem.as_bytes();
                bytes.len() >= 3
                    && bytes[bytes.len() - 1] == bytes[bytes.len() - 2]
                    && dict.contains(&stem[..stem.len() - 1])
            })
            .unwrap_or(false)
    })
}

pub fn is_noun(word: &str) -> bool {
    let nouns = nouns();
    if nouns.contains(word) {
        return true;
    }
    if let Some(stem) = word.strip_suffix('s') {
        if nouns.contains(stem) {
            return true;
        }
    }
    const NOUN_SUFFIXES: &[&str] = &[
        "tion", "sion", "ment", "ness", "ity", "ism", "ist", "ance", "ence", "ship", "hood",
    ];
    word.len() > 5 && NOUN_SUFFIXES.iter().any(|s| word.ends_with(s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(
            words("Zoom's SECURITY-bug!"),
            vec!["zoom", "s", "security", "bug"]
        );
    }

    #[test]
    fn dictionary_accepts_inflections_and_domain_terms() {
        assert!(is_known_word("meetings"));
        assert!(is_known_word("users"));
        assert!(is_known_word("zoombombing"));
        assert!(is_known_word("phishing"));
        assert!(!is_known_word("recieve"));
    }

    #[test]
    fn now_is_not_a_stopword() {
        assert!(!is_stopword("now"));
        assert!(is_stopword("the"));
    }
}
