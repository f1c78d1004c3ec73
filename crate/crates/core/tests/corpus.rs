use std::collections::{BTreeMap, BTreeSet};

use docent_core::corpus::{
    allocate_by_style, import_corpus_str, sample_artwork, ContentFlag, ContentPolicy, CorpusError, CorpusStore,
    CurationPlan, StyleDistribution,
};
use proptest::prelude::*;

/// Hare quota for one class as an exact fraction `num / den`.
fn quota(count: u64, total: u64, target: u64) -> (u128, u128) {
    (count as u128 * target as u128, total as u128)
}

fn within_hare_bound(plan: &CurationPlan, dist: &StyleDistribution) -> bool {
    dist.counts().iter().all(|(style, &c)| {
        let (num, den) = quota(c, dist.total(), plan.target_total);
        (plan.get(style) as u128 * den).abs_diff(num) < den
    })
}

#[test]
fn wikiart_reference_at_one_hundred() {
    let plan = allocate_by_style(&StyleDistribution::wikiart(), 100).unwrap();
    assert_eq!(plan.get("Modern Art"), 56);
    assert_eq!(plan.get("Western Post Renaissance Art"), 28);
    assert_eq!(plan.get("Contemporary Art"), 7);
    assert_eq!(plan.get("Western Renaissance Art"), 5);
    assert_eq!(plan.allocations.values().sum::<u64>(), 100);
    assert!(within_hare_bound(&plan, &StyleDistribution::wikiart()));
}

fn dist_strategy() -> impl Strategy<Value = BTreeMap<String, u64>> {
    prop::collection::btree_map("[A-Z][a-z]{0,6}", 0u64..1_000_000, 1..14)
        .prop_filter("positive total", |m| m.values().any(|v| *v > 0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn allocation_sums_and_stays_within_one_of_quota(counts in dist_strategy(), target in 1u64..2000) {
        let dist = StyleDistribution::new(counts).unwrap();
        let plan = allocate_by_style(&dist, target).unwrap();
        prop_assert_eq!(plan.allocations.values().sum::<u64>(), target);
        prop_assert!(within_hare_bound(&plan, &dist));
    }

    #[test]
    fn allocation_is_scale_invariant(counts in dist_strategy(), target in 1u64..500, k in 1u64..50) {
        let a = allocate_by_style(&StyleDistribution::new(counts.clone()).unwrap(), target).unwrap();
        let scaled = counts.into_iter().map(|(s, c)| (s, c * k)).collect();
        let b = allocate_by_style(&StyleDistribution::new(scaled).unwrap(), target).unwrap();
        prop_assert_eq!(a.allocations, b.allocations);
    }
}

#[test]
fn sampling_frequencies_are_uniform_within_a_stratum() {
    let store = CorpusStore::default_store();
    let plan = CurationPlan { allocations: BTreeMap::from([("Modern Art".to_owned(), 2)]), target_total: 2 };
    let eligible: Vec<String> =
        store.artworks().iter().filter(|a| a.category == "Modern Art").map(|a| a.id.clone()).collect();
    let runs = 4000;
    let mut freq: BTreeMap<String, u32> = BTreeMap::new();
    for seed in 0..runs {
        let picked = sample_artwork(&store, &plan, seed, &ContentPolicy::allow_all()).unwrap();
        let ids: BTreeSet<_> = picked.iter().map(|a| a.id.clone()).collect();
        assert_eq!(ids.len(), 2);
        for id in ids {
            *freq.entry(id).or_default() += 1;
        }
    }
    let expected = runs as f64 * 2.0 / eligible.len() as f64;
    for id in &eligible {
        let got = freq.get(id).copied().unwrap_or(0) as f64;
        assert!((got - expected).abs() < 0.15 * expected, "{id}: {got} vs {expected}");
    }
}

#[test]
fn school_policy_never_returns_flagged_art() {
    let store = CorpusStore::default_store();
    let plan = CurationPlan { allocations: store.category_counts(), target_total: store.len() as u64 };
    let err = sample_artwork(&store, &plan, 1, &ContentPolicy::school_default()).unwrap_err();
    assert!(matches!(err, CorpusError::InsufficientEligible { .. }));
    let plan = CurationPlan { allocations: BTreeMap::from([("Modern Art".to_owned(), 5)]), target_total: 5 };
    for seed in 0..50 {
        for a in sample_artwork(&store, &plan, seed, &ContentPolicy::school_default()).unwrap() {
            assert!(!a.content_flags.contains(&ContentFlag::Violent));
            assert!(!a.content_flags.contains(&ContentFlag::Sexual));
        }
    }
}

#[test]
fn import_hundred_records() {
    let mut src = String::new();
    for i in 0..100 {
        src.push_str(&format!(
            r#"{{"id":"w{i:03}","artwork_name":"Work {i}","artist_name":"Artist {}","style":"Style {}","category":"Cat {}","year":"{}"}}"#,
            i % 7,
            i % 5,
            i % 3,
            1800 + i
        ));
        src.push('\n');
    }
    let store = import_corpus_str(&src).unwrap();
    assert_eq!(store.len(), 100);
    assert_eq!(store.category_counts().values().sum::<u64>(), 100);
    assert_eq!(store.get("w042").unwrap().artwork_name, "Work 42");

    let broken = src.replacen(r#""artwork_name":"Work 3""#, r#""artwork_name":"""#, 1);
    match import_corpus_str(&broken) {
        Err(CorpusError::MalformedRecord { line, .. }) => assert_eq!(line, 4),
        other => panic!("unexpected {other:?}"),
    }
    let dup = format!("{src}{}", src.lines().next().unwrap());
    assert!(matches!(import_corpus_str(&dup), Err(CorpusError::DuplicateId(_))));
}
