use std::collections::{BTreeMap, BTreeSet};

use misinfo_core::textfeat::{fit_tfidf, ngrams, preprocess, transform};
use proptest::prelude::*;

fn two_docs() -> Vec<Vec<String>> {
    vec![
        preprocess("Zoom security is a joke, uninstall zoom"),
        preprocess("Security and privacy settings explained"),
    ]
}

#[test]
fn idf_of_the_two_document_corpus() {
    let corpus = two_docs();
    let v = fit_tfidf(&corpus, (1, 2), 1000);
    assert!((v.idf("zoom").unwrap() - (1.5f64.ln() + 1.0)).abs() < 1e-9);
    assert!((v.idf("security").unwrap() - 1.0).abs() < 1e-9);

    // every retained term against a hand count of document frequency
    for term in v.terms() {
        let df = corpus
            .iter()
            .filter(|d| ngrams(d, (1, 2)).iter().any(|g| g == term))
            .count() as f64;
        let want = ((1.0 + 2.0) / (1.0 + df)).ln() + 1.0;
        assert!((v.idf(term).unwrap() - want).abs() < 1e-9, "{term}");
    }
}

#[test]
fn document_vectors_follow_tf_times_idf() {
    let corpus = two_docs();
    let v = fit_tfidf(&corpus, (1, 2), 1000);
    for doc in &corpus {
        let x = transform(&v, doc);
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for g in ngrams(doc, (1, 2)) {
            *tf.entry(g).or_default() += 1.0;
        }
        let raw: Vec<f64> = v.terms().map(|t| tf.get(t).copied().unwrap_or(0.0) * v.idf(t).unwrap()).collect();
        let norm = raw.iter().map(|w| w * w).sum::<f64>().sqrt();
        for (got, want) in x.iter().zip(&raw) {
            assert!((got - want / norm).abs() < 1e-9);
        }
    }
}

fn corpus_strategy() -> impl Strategy<Value = Vec<Vec<String>>> {
    let word = prop::sample::select(vec!["zoom", "security", "privacy", "meeting", "hack", "class", "password", "video"]);
    prop::collection::vec(prop::collection::vec(word.prop_map(str::to_string), 0..12), 1..15)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn nonzero_vectors_have_unit_norm(corpus in corpus_strategy(), k in 1usize..40) {
        let v = fit_tfidf(&corpus, (1, 2), k);
        prop_assert!(v.len() <= k);
        let distinct: BTreeSet<String> = corpus.iter().flat_map(|d| ngrams(d, (1, 2))).collect();
        prop_assert_eq!(v.len(), k.min(distinct.len()));
        for doc in &corpus {
            let x = transform(&v, doc);
            let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
            prop_assert!(x.iter().all(|&a| a >= 0.0));
        }
    }
}
