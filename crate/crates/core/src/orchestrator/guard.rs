use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::policy::DocentPolicy;
use crate::corpus::Artwork;
use crate::framework::{EmptyText, Lexicon, StageId};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnClass {
    OnTopicAnswer,
    FactualQuestion,
    LowMotivation,
    OffTopic,
}

/// What the classifier needs to know about the session.
#[derive(Debug, Clone, Copy)]
pub struct TurnContext<'a> {
    pub artwork: &'a Artwork,
    pub stage: StageId,
    pub last_docent_turn: &'a str,
    pub lexicon: &'a Lexicon,
}

fn contains_any(tokens: &[String], phrases: &[String]) -> bool {
    phrases.iter().any(|p| text::count_phrase(tokens, &text::tokens(p)) > 0)
}

/// Share of the student's content words that also occur in the session
/// context. Turns with no content words score 1.
pub fn topical_overlap(student: &str, ctx: &TurnContext<'_>, policy: &DocentPolicy) -> f64 {
    let cues = policy.cues();
    let stop: BTreeSet<&str> = cues.stopwords.iter().map(String::as_str).collect();
    let content: Vec<String> = text::tokens(student).into_iter().filter(|t| !stop.contains(t.as_str())).collect();
    if content.is_empty() {
        return 1.0;
    }
    let art = ctx.artwork;
    let mut context: BTreeSet<String> = BTreeSet::new();
    for field in [
        &art.artwork_name,
        &art.artwork_explanation,
        &art.artist_name,
        &art.artist_explanation,
        &art.category,
        &art.style,
        &art.year,
        &art.media,
    ] {
        context.extend(text::tokens(field));
    }
    for phrase in ctx.lexicon.phrases(ctx.stage.major()) {
        context.extend(text::tokens(&phrase));
    }
    context.extend(text::tokens(ctx.last_docent_turn));
    for word in &cues.art_vocabulary {
        context.extend(text::tokens(word));
    }
    let hits = content.iter().filter(|t| context.contains(*t)).count();
    hits as f64 / content.len() as f64
}

/// Precedence: factual question, low motivation, off topic, on-topic answer.
pub fn classify_student_turn(
    student: &str,
    ctx: &TurnContext<'_>,
    policy: &DocentPolicy,
) -> Result<TurnClass, EmptyText> {
    let toks = text::tokens(student);
    if toks.is_empty() {
        return Err(EmptyText);
    }
    let cues = policy.cues();
    if text::question_count(student) > 0 {
        let mut factual = cues.factual_terms.clone();
        factual.extend(text::tokens(&ctx.artwork.artist_name).into_iter().filter(|t| t.len() > 2));
        if contains_any(&toks, &factual) {
            return Ok(TurnClass::FactualQuestion);
        }
    }
    if contains_any(&toks, &cues.low_motivation) {
        return Ok(TurnClass::LowMotivation);
    }
    if topical_overlap(student, ctx, policy) < policy.offtopic_threshold() {
        return Ok(TurnClass::OffTopic);
    }
    Ok(TurnClass::OnTopicAnswer)
}

/// Keeps the first interrogative sentence and every declarative one.
pub fn enforce_single_question(reply: &str) -> String {
    let segs = text::segments(reply);
    if segs.iter().filter(|s| s.is_question()).count() <= 1 {
        return reply.to_owned();
    }
    let mut seen = false;
    let mut out = String::with_capacity(reply.len());
    for s in segs {
        if s.is_question() {
            if seen {
                continue;
            }
            seen = true;
        }
        out.push_str(s.raw);
    }
    out.trim_end().to_owned()
}

/// Declarative sentences only.
pub fn strip_questions(reply: &str) -> String {
    text::segments(reply)
        .into_iter()
        .filter(|s| s.is_sentence() && !s.is_question())
        .map(|s| s.raw)
        .collect::<String>()
        .trim()
        .to_owned()
}

/// First interrogative sentence, or the whole text when there is none.
pub fn first_question(text_in: &str) -> String {
    text::segments(text_in)
        .into_iter()
        .find(|s| s.is_question())
        .map(|s| s.raw.trim().to_owned())
        .unwrap_or_else(|| text_in.trim().to_owned())
}
