mod common;

use misinfo_core::annotate::{derive_label, Answers, Label};

#[test]
fn criteria_truth_table() {
    let mut seen = 0;
    for a in [false, true] {
        for b in [false, true] {
            for c in [false, true] {
                let want = match (a, b, c) {
                    (true, true, true) => Label::SecurityPrivacy,
                    (true, true, false) => Label::Misinformation,
                    _ => Label::Irrelevant,
                };
                assert_eq!(derive_label(a, b, c), want, "({a}, {b}, {c})");
                seen += 1;
            }
        }
    }
    assert_eq!(seen, 8);
}

#[test]
fn skipped_criteria_count_as_failed() {
    assert_eq!(Answers { a: false, b: None, c: None }.label(), Label::Irrelevant);
    assert_eq!(Answers { a: true, b: Some(false), c: None }.label(), Label::Irrelevant);
    assert_eq!(Answers { a: true, b: Some(true), c: Some(false) }.label(), Label::Misinformation);
}

#[test]
fn reddit_groundtruth_replay() {
    let dir = tempfile::tempdir().unwrap();
    let counts = common::replay_session("reddit_answers.csv", &dir.path().join("session.jsonl"));
    assert_eq!(counts[&Label::SecurityPrivacy], 1_045);
    assert_eq!(counts[&Label::Misinformation], 16);
    assert_eq!(counts[&Label::Irrelevant], 2_234);
}

#[test]
fn replayed_session_file_resumes_without_questions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.jsonl");
    let first = common::replay_session("reddit_answers.csv", &path);
    let labels = misinfo_core::annotate::load_labels(&path).unwrap();
    assert_eq!(labels.len(), 3_295);
    // a second pass over a finished session asks nothing and changes nothing
    let before = std::fs::read(&path).unwrap();
    assert_eq!(common::replay_session("reddit_answers.csv", &path), first);
    assert_eq!(std::fs::read(&path).unwrap(), before);
}
