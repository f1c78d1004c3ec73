use docent_core::corpus::CorpusStore;
use docent_core::framework::{sample_flow, FrameworkTable, StageId};
use docent_core::persona::{generate_personas, PersonaSource};
use docent_core::promptc::{compose_bundle, guideline_lines, render_prompt, TemplateDefaults, FINAL_LINE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Text between `"{title}: "` and the next blank line.
fn flow_section<'a>(prompt: &'a str, title: &str) -> Option<&'a str> {
    let start = prompt.find(&format!("\n{title}: "))? + title.len() + 3;
    let rest = &prompt[start..];
    Some(&rest[..rest.find("\n\n").unwrap_or(rest.len())])
}

#[test]
fn random_triples_render_faithfully() {
    let store = CorpusStore::default_store();
    let table = FrameworkTable::default_table();
    let personas = generate_personas(30, 4, PersonaSource::Template).unwrap();
    let defaults = TemplateDefaults::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for _ in 0..1000 {
        let flow = sample_flow(&table, rng.random());
        let persona = &personas[rng.random_range(0..personas.len())];
        let art = &store.artworks()[rng.random_range(0..store.len())];
        let p = render_prompt(&compose_bundle(&flow, persona, art, &defaults).unwrap());
        assert_eq!(guideline_lines(&p.text).len(), 17);
        for slot in StageId::FLOW {
            let body = flow_section(&p.text, &slot.title()).unwrap_or_else(|| panic!("{} missing", slot.title()));
            assert!(!body.trim().is_empty());
            assert!(body.contains(flow.get(slot).questioning_example.trim()));
        }
        assert!(!p.text.contains('{') && !p.text.contains('}'));
        assert!(p.text.ends_with(FINAL_LINE));
        assert!(p.text.contains(&format!("Artist Name: {}", art.artist_name)));
    }
}
