use docent_core::framework::{
    classify_turn, load_framework_str, next_stage, sample_flow, FlowMode, FrameworkTable, Lexicon, MajorStage,
    Progress, Signal, StageId, StageItem,
};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent stage oracle: counts cue phrases by scanning a padded,
/// space-joined lowercase string instead of token windows.
fn oracle_label(text: &str, lexicon: &Lexicon) -> StageId {
    let mut flat = String::from(" ");
    let mut word = String::new();
    for ch in text.chars() {
        if matches!(ch, '\'' | '\u{2019}' | '\u{2018}') {
            continue;
        }
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
        } else if !word.is_empty() {
            flat.push_str(&word);
            flat.push(' ');
            word.clear();
        }
    }
    if !word.is_empty() {
        flat.push_str(&word);
        flat.push(' ');
    }
    let mut best = (MajorStage::CantDefine, 0usize);
    for stage in MajorStage::TEACHABLE {
        let mut hits = 0;
        for phrase in lexicon.phrases(stage) {
            let needle = format!(" {phrase} ");
            let mut from = 0;
            while let Some(pos) = flat[from..].find(&needle) {
                hits += 1;
                from += pos + 1;
            }
        }
        if hits > best.1 {
            best = (stage, hits);
        }
    }
    StageId::major_only(best.0)
}

const FILLER: [&str; 16] = [
    "the", "painting", "seems", "quite", "old", "and", "I", "guess", "maybe", "it", "has", "a", "tall", "house",
    "near", "river",
];

#[test]
fn classifier_matches_independent_oracle_on_random_utterances() {
    let lexicon = Lexicon::default_lexicon();
    let vocab: Vec<&str> = lexicon.vocabulary().collect();
    let filler: Vec<&str> = FILLER.into_iter().filter(|f| !vocab.contains(&f.to_lowercase().as_str())).collect();
    assert!(filler.len() > 8);
    let mut all_phrases = Vec::new();
    for stage in MajorStage::TEACHABLE {
        all_phrases.extend(lexicon.phrases(stage));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut non_trivial = 0;
    for _ in 0..200 {
        let mut words: Vec<String> = Vec::new();
        for _ in 0..rng.random_range(1..12) {
            if rng.random_bool(0.35) {
                let p = all_phrases.choose(&mut rng).unwrap();
                words.push(if rng.random_bool(0.3) { p.to_uppercase() } else { p.clone() });
            } else {
                words.push(filler.choose(&mut rng).unwrap().to_string());
            }
        }
        let mut utterance = words.join(if rng.random_bool(0.5) { " " } else { ", " });
        utterance.push(if rng.random_bool(0.5) { '?' } else { '.' });
        let label = classify_turn(&utterance, &lexicon).unwrap();
        assert_eq!(label, oracle_label(&utterance, &lexicon), "{utterance}");
        if label != StageId::CANT_DEFINE {
            non_trivial += 1;
        }
    }
    assert!(non_trivial > 100);
}

#[test]
fn no_cue_phrase_contains_another_stage_cue() {
    let lexicon = Lexicon::default_lexicon();
    for a in MajorStage::TEACHABLE {
        for b in MajorStage::TEACHABLE {
            if a == b {
                continue;
            }
            for pa in lexicon.phrases(a) {
                for pb in lexicon.phrases(b) {
                    assert!(
                        !format!(" {pb} ").contains(&format!(" {pa} ")),
                        "{} cue {pa:?} sits inside {} cue {pb:?}",
                        a.name(),
                        b.name()
                    );
                }
            }
        }
    }
}

#[test]
fn shipped_questioning_examples_classify_to_their_stage() {
    let lexicon = Lexicon::default_lexicon();
    let table = FrameworkTable::default_table();
    for item in table.iter() {
        assert_eq!(
            classify_turn(&item.questioning_example, &lexicon).unwrap(),
            item.slot.major_label(),
            "{}",
            item.questioning_example
        );
    }
}

#[test]
fn appendix_reaction_question_is_shipped() {
    let table = FrameworkTable::default_table();
    assert!(table
        .items(StageId::REACTION)
        .iter()
        .any(|i| i.questioning_example == "How does this work of art make you feel?"));
    assert_eq!(table.version(), "2");
    assert!(StageId::FLOW.iter().all(|s| !table.items(*s).is_empty()));
}

fn text_strategy() -> impl Strategy<Value = String> {
    prop_oneof!["[a-zA-Z ,.?!'\"]{1,40}", "\\PC{1,30}", Just("line one\nline \"two\"\t\\ end".to_owned()),]
        .prop_filter("non-blank", |s| !s.trim().is_empty())
}

fn table_strategy() -> impl Strategy<Value = FrameworkTable> {
    let item = |slot: StageId| {
        (text_strategy(), prop::option::of(text_strategy()), text_strategy(), prop::option::of(text_strategy()))
            .prop_map(move |(step, utt, q, fb)| StageItem {
                slot,
                step_explanation: step,
                utterance_example: utt.unwrap_or_default(),
                questioning_example: q,
                feedback_example: fb.unwrap_or_default(),
            })
    };
    let per_slot: Vec<_> = StageId::FLOW.iter().map(|s| prop::collection::vec(item(*s), 1..3)).collect();
    per_slot.prop_map(|groups| FrameworkTable::from_items(groups.into_iter().flatten()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn framework_file_round_trips(table in table_strategy()) {
        let first = table.to_jsonl();
        let parsed = load_framework_str(&first).unwrap();
        prop_assert_eq!(&parsed, &table);
        prop_assert_eq!(parsed.to_jsonl(), first);
    }

    #[test]
    fn flow_sampling_is_deterministic_and_complete(seed in any::<u64>()) {
        let table = FrameworkTable::default_table();
        let a = sample_flow(&table, seed);
        prop_assert_eq!(&a, &sample_flow(&table, seed));
        for (item, slot) in a.items().iter().zip(StageId::FLOW) {
            prop_assert_eq!(item.slot, slot);
            prop_assert!(table.items(slot).contains(item));
        }
    }

    #[test]
    fn transitions_respect_mode(start in 0usize..8, signals in prop::collection::vec((0u8..3, 0usize..8), 1..30)) {
        for mode in [FlowMode::Linear, FlowMode::Recursive] {
            let mut current = StageId::FLOW[start];
            for (kind, target) in &signals {
                let signal = match kind {
                    0 => Signal::Advance,
                    1 => Signal::Stay,
                    _ => Signal::Revisit(StageId::FLOW[*target]),
                };
                let before = current.flow_index().unwrap();
                match next_stage(current, mode, signal) {
                    Ok(Progress::Completed) => {
                        prop_assert_eq!(before, 7);
                        prop_assert_eq!(signal, Signal::Advance);
                        break;
                    }
                    Ok(Progress::Stage(next)) => {
                        let after = next.flow_index().unwrap();
                        match signal {
                            Signal::Advance => prop_assert_eq!(after, before + 1),
                            Signal::Stay => prop_assert_eq!(after, before),
                            Signal::Revisit(_) => {
                                prop_assert_eq!(mode, FlowMode::Recursive);
                                prop_assert!(after < before);
                            }
                        }
                        current = next;
                    }
                    Err(_) => prop_assert!(matches!(signal, Signal::Revisit(_))),
                }
            }
        }
    }
}
