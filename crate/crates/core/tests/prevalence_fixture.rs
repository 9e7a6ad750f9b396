mod common;

use common::{table1_claims, TABLE1};
use misinfo_core::prevalence::*;
use misinfo_core::reputation::{classify_url, BlocklistStatus, ReportSource, ReputationReport, ScanPolicy, UrlVerdict};
use proptest::prelude::*;

#[test]
fn table1_totals_reproduce_published_shares() {
    let claims = table1_claims(&TABLE1);
    let r = prevalence_report(&claims);
    assert_eq!(r.tweets, TABLE1.tweets);
    assert_eq!(r.unique_urls, TABLE1.unique_urls);
    assert_eq!(r.malicious_urls, TABLE1.malicious_urls);
    assert_eq!(r.benign_urls, TABLE1.benign_urls);
    assert_eq!(r.malicious_tweets, TABLE1.malicious_tweets);
    assert_eq!(r.benign_tweets, TABLE1.benign_tweets);
    assert_eq!(r.users_with_true_claims, TABLE1.users_true);
    assert_eq!(r.users_with_false_claims, TABLE1.users_false);
    assert_eq!(r.users_with_both, TABLE1.users_both);
    assert!(r.identities_hold());

    assert_eq!(pct0(r.benign_tweets, r.tweets), 22);
    assert_eq!(pct0(r.benign_urls, r.unique_urls), 9);
    assert_eq!(r.benign_tweet_pct, 21.9);
    assert_eq!(r.benign_url_pct, 9.2);
    let table = r.to_table();
    assert!(table.contains("975 (9%)"));
    assert!(table.contains("3895 (22%)") || table.contains("3,895 (22%)"), "{table}");
}

#[test]
fn published_user_union_is_flagged() {
    let r = prevalence_report(&table1_claims(&TABLE1));
    let d = r.discrepancies(&ReferenceCounts {
        unique_users: Some(11_472),
        users_with_true_claims: Some(11_200),
        users_with_false_claims: Some(148),
        users_with_both: Some(124),
    });
    assert!(d.iter().any(|m| m.starts_with("unique_users: reported 11472, computed 11224")), "{d:?}");
    assert!(d.iter().any(|m| m.contains("cannot form the reported union")));
}

fn claims_strategy() -> impl Strategy<Value = Vec<LabeledClaim>> {
    prop::collection::vec((0u8..20, 0u8..15, any::<bool>(), 0u64..300), 0..120).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (user, url, _, retweets))| LabeledClaim {
                post_id: i.to_string(),
                user_id: format!("u{user}"),
                url: format!("http://h{url}.example"),
                // a URL has one verdict everywhere
                url_verdict: if url % 3 == 0 { UrlVerdict::Benign } else { UrlVerdict::Malicious },
                retweets,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn column_identities_hold(claims in claims_strategy()) {
        let r = prevalence_report(&claims);
        prop_assert!(r.identities_hold());
        prop_assert_eq!(r.users_only_true + r.users_only_false + r.users_with_both, r.unique_users);
        let rates = false_claim_rates(&claims);
        prop_assert_eq!(rates.users.len() as u64, r.unique_users);
        prop_assert_eq!(rates.only_true, r.users_only_true);
        prop_assert_eq!(rates.only_false, r.users_only_false);
    }

    #[test]
    fn histograms_partition_their_population(claims in claims_strategy(), min in 1u64..6) {
        let rates = false_claim_rates(&claims);
        prop_assert_eq!(rates.histogram.population(), rates.users.len() as u64);
        let spread = retweet_spread(&claims);
        prop_assert_eq!(spread.histogram.population(), spread.per_url.len() as u64);
        let camp = campaign_urls(&claims, min);
        prop_assert_eq!(camp.tweet_histogram.population(), spread.per_url.len() as u64);
        prop_assert!(camp.urls.iter().all(|u| u.tweet_count >= min));
    }

    #[test]
    fn count_histogram_covers_any_value(values in prop::collection::vec(0u64..100_000, 1..50)) {
        let h = Histogram::counts(&values);
        prop_assert_eq!(h.population(), values.len() as u64);
        prop_assert!(*h.edges.last().unwrap() > *values.iter().max().unwrap() as f64);
    }

    #[test]
    fn classification_is_monotone_in_malicious_count(count in 0u32..70, extra in 0u32..10, threshold in 1u32..10, listed in any::<bool>()) {
        let policy = ScanPolicy { malicious_threshold: threshold, ..ScanPolicy::default() };
        let status = if listed { BlocklistStatus::ListedVerified } else { BlocklistStatus::NotListed };
        let report = |m: u32| ReputationReport {
            malicious_count: m,
            ..ReputationReport::unknown("http://x.example", chrono::DateTime::UNIX_EPOCH, ReportSource::Fixture, threshold)
        };
        let low = classify_url(&report(count), status, &policy);
        let high = classify_url(&report(count + extra), status, &policy);
        prop_assert!(!(low == UrlVerdict::Malicious && high == UrlVerdict::Benign));
    }
}
