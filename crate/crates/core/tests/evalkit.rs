use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use docent_core::evalkit::{
    agreement, compare, read_annotations, tally_stages, word_stats, AnnotatedTurn, EvalError, EvalReport, Flag, Side,
    Verbosity, LABELS,
};
use docent_core::framework::{MajorStage, StageId};
use docent_core::pipeline::{read_records, Role};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn annotations(name: &str) -> Vec<AnnotatedTurn> {
    read_annotations(File::open(fixture(name)).unwrap()).unwrap()
}

#[test]
fn reference_histograms() {
    let llava = tally_stages(&annotations("table9_llava.csv"));
    assert_eq!(llava.as_array(), [19, 24, 115, 21, 0, 1]);
    assert_eq!(llava.total, 180);
    let few = tally_stages(&annotations("table9_gpt4_fewshot.csv"));
    assert_eq!(few.as_array(), [14, 34, 42, 54, 31, 5]);
    assert_eq!(few.total, 180);
}

/// Mean words per gpt turn, computed straight from the JSON values.
fn oracle_mean(name: &str) -> f64 {
    let (mut turns, mut words) = (0usize, 0usize);
    for line in std::fs::read_to_string(fixture(name)).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for c in v["conversations"].as_array().unwrap() {
            if c["from"] == "gpt" {
                turns += 1;
                words += c["value"].as_str().unwrap().split_whitespace().count();
            }
        }
    }
    words as f64 / turns as f64
}

#[test]
fn reference_word_means() {
    for (name, expected) in
        [("words_gpt4_zeroshot.jsonl", 248.0), ("words_llava.jsonl", 21.0), ("words_gpt4_fewshot.jsonl", 52.0)]
    {
        let records = read_records(BufReader::new(File::open(fixture(name)).unwrap())).unwrap();
        let transcripts: Vec<_> = records.iter().map(|r| r.to_transcript()).collect();
        let stats = word_stats(&transcripts, Side::Teacher).unwrap();
        assert!((stats.mean_words_per_turn - expected).abs() <= 0.01, "{name}: {}", stats.mean_words_per_turn);
        assert!((stats.mean_words_per_turn - oracle_mean(name)).abs() < 1e-9);
    }
}

fn turn(id: usize, label: StageId) -> AnnotatedTurn {
    AnnotatedTurn {
        transcript_id: format!("t{}", id / 10),
        turn_index: id % 10,
        role: Role::Teacher,
        label,
        annotator: "a".into(),
    }
}

fn random_label(rng: &mut ChaCha8Rng) -> StageId {
    let flowish: Vec<StageId> = StageId::FLOW.iter().copied().chain(LABELS).collect();
    flowish[rng.random_range(0..flowish.len())]
}

#[test]
fn tally_matches_brute_force_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let turns: Vec<_> = (0..1000).map(|i| turn(i, random_label(&mut rng))).collect();
    let h = tally_stages(&turns);
    for (i, label) in LABELS.iter().enumerate() {
        let brute = turns.iter().filter(|t| t.label.major() == label.major()).count() as u64;
        assert_eq!(h.as_array()[i], brute);
    }
    assert_eq!(h.total, 1000);
}

proptest! {
    #[test]
    fn tally_is_permutation_invariant_and_additive(seed in any::<u64>(), n in 0usize..200, m in 0usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<_> = (0..n).map(|i| turn(i, random_label(&mut rng))).collect();
        let b: Vec<_> = (0..m).map(|i| turn(i + n, random_label(&mut rng))).collect();
        let mut shuffled = a.clone();
        shuffled.shuffle(&mut rng);
        prop_assert_eq!(tally_stages(&shuffled), tally_stages(&a));
        let joined: Vec<_> = a.iter().chain(&b).cloned().collect();
        let (ha, hb, hj) = (tally_stages(&a).as_array(), tally_stages(&b).as_array(), tally_stages(&joined).as_array());
        for i in 0..6 {
            prop_assert_eq!(hj[i], ha[i] + hb[i]);
        }
        prop_assert_eq!(hj.iter().sum::<u64>(), (n + m) as u64);
    }

    #[test]
    fn agreement_is_symmetric_and_bounded(seed in any::<u64>(), n in 1usize..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<_> = (0..n).map(|i| turn(i, random_label(&mut rng))).collect();
        let b: Vec<_> = (0..n).map(|i| turn(i, random_label(&mut rng))).collect();
        let ab = agreement(&a, &b).unwrap();
        prop_assert_eq!(ab, agreement(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(agreement(&a, &a).unwrap(), 1.0);
    }
}

#[test]
fn agreement_rejects_uneven_coverage() {
    let a = vec![turn(0, StageId::REACTION), turn(1, StageId::REACTION)];
    let b = vec![turn(0, StageId::REACTION)];
    assert!(matches!(agreement(&a, &b), Err(EvalError::CoverageMismatch(_))));
}

#[test]
fn comparison_flags_and_purity() {
    let llava = EvalReport::build(&annotations("table9_llava.csv"), &[]);
    let few = EvalReport::build(&annotations("table9_gpt4_fewshot.csv"), &[]);
    let reports = BTreeMap::from([("llava".to_owned(), llava), ("gpt4-few".to_owned(), few)]);
    let first = compare(&reports).unwrap();
    assert_eq!(first, compare(&reports).unwrap());
    assert_eq!(first.to_json(), compare(&reports).unwrap().to_json());
    let synth = StageId::major_only(MajorStage::Synthesis);
    assert!(first.flags.contains(&Flag::StageGap { model: "llava".into(), stage: synth }));
    assert!(first.flags.iter().any(|f| matches!(f,
        Flag::Dominance { model, stage, .. } if model == "llava" && *stage == StageId::major_only(MajorStage::PersonalInterpretation))));
    assert!(!first.flags.iter().any(|f| matches!(f, Flag::StageGap { model, .. } if model == "gpt4-few")));
    assert!(first.models.iter().all(|m| m.verbosity.is_none()));
    assert!(first.to_text_table().contains("llava"));
    let one = BTreeMap::from([("x".to_owned(), reports["llava"].clone())]);
    assert!(matches!(compare(&one), Err(EvalError::TooFewModels(1))));
}

#[test]
fn verbosity_follows_word_means() {
    let mut reports = BTreeMap::new();
    for (model, file) in [("zero", "words_gpt4_zeroshot.jsonl"), ("llava", "words_llava.jsonl")] {
        let records = read_records(BufReader::new(File::open(fixture(file)).unwrap())).unwrap();
        let transcripts: Vec<_> = records.iter().map(|r| r.to_transcript()).collect();
        reports.insert(model.to_owned(), EvalReport::build(&[], &transcripts));
    }
    let cmp = compare(&reports).unwrap();
    let v: BTreeMap<_, _> = cmp.models.iter().map(|m| (m.model.as_str(), m.verbosity)).collect();
    assert_eq!(v["zero"], Some(Verbosity::Encyclopedic));
    assert_eq!(v["llava"], Some(Verbosity::Conversational));
}
