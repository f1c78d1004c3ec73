use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::guard::{
    classify_student_turn, enforce_single_question, first_question, strip_questions, TurnClass, TurnContext,
};
use super::policy::{ContinuingQuestionKind, DocentPolicy};
use crate::corpus::Artwork;
use crate::framework::{next_stage, FlowMode, FlowSelection, Lexicon, Progress, Signal, StageId};
use crate::pipeline::backend::GenerationBackend;
use crate::pipeline::transcript::{DialogueTranscript, Role, Turn};
use crate::promptc::TemplateDefaults;
use crate::text;

pub const ADVANCE_MARKER: &str = "[ADVANCE]";
pub const REVISIT_MARKER_PREFIX: &str = "[REVISIT:";

const FEEDBACK_PHRASES: [&str; 6] = [
    "That's a thoughtful answer.",
    "I like how carefully you looked.",
    "Great observation!",
    "Thank you for sharing that.",
    "That's an interesting way to see it.",
    "You noticed something important.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detour {
    FactualAnswer,
    MotivationBoost,
    SteerBack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub artwork: Artwork,
    pub policy: DocentPolicy,
    pub flow: FlowSelection,
    pub current_stage: StageId,
    /// `(transcript index of the docent turn that entered the stage, stage)`.
    pub stage_history: Vec<(usize, StageId)>,
    pub exchanges_used: usize,
    /// Set while the latest reply was a detour; cleared by the next on-topic answer.
    pub detour: Option<Detour>,
    pub per_stage_exchanges: BTreeMap<StageId, usize>,
    pub completed: bool,
    pub transcript: Vec<Turn>,
    /// Classification of every student turn, in order.
    pub classes: Vec<TurnClass>,
}

impl SessionState {
    pub fn transcript(&self) -> DialogueTranscript {
        DialogueTranscript::new(self.transcript.clone()).with_source("", &self.artwork.id)
    }

    pub fn last_docent_turn(&self) -> &str {
        self.transcript.iter().rev().find(|t| t.role == Role::Teacher).map_or("", |t| t.text.as_str())
    }

    fn last_student_turn(&self) -> Option<&str> {
        self.transcript.iter().rev().find(|t| t.role == Role::Student).map(|t| t.text.as_str())
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(
            self.flow.seed() ^ (self.exchanges_used as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        )
    }

    fn stage_question(&self, slot: StageId) -> String {
        first_question(&self.flow.get(slot).questioning_example)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SessionError {
    #[error("session is already completed")]
    SessionCompleted,
    #[error("student turn is empty")]
    EmptyText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocentReply {
    pub text: String,
    /// None for the opening turn.
    pub class: Option<TurnClass>,
    /// The backend failed and the reply was built from flow exemplars.
    pub fallback: bool,
}

fn lexicon() -> &'static Lexicon {
    static LEXICON: OnceLock<Lexicon> = OnceLock::new();
    LEXICON.get_or_init(Lexicon::default_lexicon)
}

fn defaults() -> &'static TemplateDefaults {
    static DEFAULTS: OnceLock<TemplateDefaults> = OnceLock::new();
    DEFAULTS.get_or_init(TemplateDefaults::default)
}

#[derive(Debug, Default, PartialEq, Eq)]
struct Markers {
    advance: bool,
    revisit: Option<StageId>,
}

/// Strips control markers and keeps only the first teacher turn when the
/// backend answered with a whole dialogue.
fn clean_backend_reply(raw: &str) -> (String, Markers) {
    let mut markers = Markers::default();
    let mut body = raw.replace(ADVANCE_MARKER, "");
    markers.advance = body.len() != raw.len();
    while let Some(start) = body.find(REVISIT_MARKER_PREFIX) {
        let Some(len) = body[start..].find(']') else { break };
        let slot = &body[start + REVISIT_MARKER_PREFIX.len()..start + len];
        if markers.revisit.is_none() {
            markers.revisit = slot.trim().parse().ok();
        }
        body.replace_range(start..=start + len, "");
    }
    let has_roles = body.lines().any(|l| {
        let l = l.trim_start().to_ascii_lowercase();
        l.starts_with("teacher:") || l.starts_with("student:")
    });
    if !has_roles {
        return (body.trim().to_owned(), markers);
    }
    let mut out = Vec::new();
    let mut inside = false;
    for line in body.lines() {
        let lower = line.trim_start().to_ascii_lowercase();
        if lower.starts_with("teacher:") {
            if inside {
                break;
            }
            inside = true;
            out.push(line.trim_start()["teacher:".len()..].trim().to_owned());
        } else if lower.starts_with("student:") {
            if inside {
                break;
            }
        } else if inside && !line.trim().is_empty() {
            out.push(line.trim().to_owned());
        }
    }
    (out.join(" ").trim().to_owned(), markers)
}

fn docent_prompt(state: &SessionState, task: &str) -> String {
    let d = defaults();
    let item = state.flow.get(state.current_stage);
    let art = &state.artwork;
    let mut p = String::new();
    p.push_str(d.teacher_persona());
    p.push_str("\n\nGuidelines for the Teacher\n");
    for (i, g) in d.guidelines().iter().enumerate() {
        p.push_str(&format!("{}. {}\n", i + 1, g));
    }
    p.push_str(&format!(
        "\nArtwork: {} by {} ({}, {}).\n{}\n",
        art.artwork_name, art.artist_name, art.year, art.style, art.artwork_explanation
    ));
    p.push_str(&format!("\nCurrent stage: {}\n", state.current_stage.title()));
    p.push_str(&format!("Stage guide: {}\n", item.step_explanation));
    p.push_str(&format!("Stage question: {}\n", item.questioning_example));
    p.push_str("\nConversation so far:\n");
    p.push_str(&state.transcript().to_text());
    p.push_str(&format!("\nTask: {task}\n"));
    p.push_str("Reply with the next teacher turn only, in one or two sentences, asking at most one question.");
    p.push_str(&format!(" Append {ADVANCE_MARKER} if the student's answer is complete enough to move on."));
    if state.policy.mode() == FlowMode::Recursive {
        p.push_str(&format!(
            " Append {REVISIT_MARKER_PREFIX}<stage>] (e.g. {REVISIT_MARKER_PREFIX}reaction]) to return to an earlier stage."
        ));
    }
    p
}

fn ask(backend: &dyn GenerationBackend, prompt: &str) -> Option<(String, Markers)> {
    match backend.complete(prompt) {
        Ok(raw) => {
            let (text, markers) = clean_backend_reply(&raw);
            (!text.is_empty()).then_some((text, markers))
        }
        Err(e) => {
            tracing::debug!(error = %e, "docent backend failed, using flow exemplars");
            None
        }
    }
}

fn join(parts: &[&str]) -> String {
    parts.iter().map(|p| p.trim()).filter(|p| !p.is_empty()).collect::<Vec<_>>().join(" ")
}

fn finish(policy: &DocentPolicy, reply: String) -> String {
    if policy.one_question_rule() {
        enforce_single_question(&reply)
    } else {
        reply
    }
}

/// Opens a session at the first flow slot with a single docent question.
pub fn start_session(
    session_id: impl Into<String>,
    artwork: Artwork,
    policy: DocentPolicy,
    flow: FlowSelection,
    backend: &dyn GenerationBackend,
) -> (SessionState, DocentReply) {
    let mut state = SessionState {
        session_id: session_id.into(),
        artwork,
        policy,
        flow,
        current_stage: StageId::REACTION,
        stage_history: vec![(0, StageId::REACTION)],
        exchanges_used: 0,
        detour: None,
        per_stage_exchanges: BTreeMap::new(),
        completed: false,
        transcript: Vec::new(),
        classes: Vec::new(),
    };
    let question = state.stage_question(StageId::REACTION);
    let prompt = docent_prompt(&state, "Greet the student and ask how the artwork makes them feel.");
    let (text, fallback) = match ask(backend, &prompt) {
        Some((text, _)) if text::question_count(&text) > 0 => (text, false),
        Some((text, _)) => (join(&[&text, &question]), false),
        None => (question, true),
    };
    let text = finish(&state.policy, text);
    state.transcript.push(Turn::new(Role::Teacher, text.clone()));
    (state, DocentReply { text, class: None, fallback })
}

fn factual_fallback(art: &Artwork) -> String {
    let mut s = format!("{} was made by {}", art.artwork_name, art.artist_name);
    if !art.year.trim().is_empty() {
        s.push_str(&format!(" in {}", art.year.trim()));
    }
    s.push('.');
    let bio = strip_questions(&art.artist_explanation);
    if let Some(first) = text::segments(&bio).into_iter().find(|seg| seg.is_sentence()) {
        s.push(' ');
        s.push_str(first.raw.trim());
    }
    s
}

fn motivation_fallback(state: &SessionState) -> String {
    let example = strip_questions(&state.flow.get(state.current_stage).utterance_example);
    if example.is_empty() {
        "That's okay, there are no wrong answers here. Try starting with the first thing that comes to mind.".to_owned()
    } else {
        format!("That's okay, there are no wrong answers here. For example, someone might say: \"{example}\"")
    }
}

fn steering<'a>(state: &'a SessionState, rng: &mut ChaCha8Rng) -> &'a str {
    let phrases: Vec<&str> = state.policy.steering_phrases().collect();
    phrases.choose(rng).copied().expect("policy has steering phrases")
}

/// Applies one student turn and returns the docent reply with the updated
/// state. The input state is left untouched.
pub fn handle_student_turn(
    state: &SessionState,
    student_text: &str,
    backend: &dyn GenerationBackend,
) -> Result<(DocentReply, SessionState), SessionError> {
    if state.completed {
        return Err(SessionError::SessionCompleted);
    }
    let ctx = TurnContext {
        artwork: &state.artwork,
        stage: state.current_stage,
        last_docent_turn: state.last_docent_turn(),
        lexicon: lexicon(),
    };
    let class = classify_student_turn(student_text, &ctx, &state.policy).map_err(|_| SessionError::EmptyText)?;
    let previous_answer = state.last_student_turn().map(text::normalize);

    let mut next = state.clone();
    let mut rng = state.rng();
    next.transcript.push(Turn::new(Role::Student, student_text.trim()));
    next.classes.push(class);
    next.exchanges_used += 1;

    let stage = state.current_stage;
    let question = state.stage_question(stage);
    let mut fallback = false;

    let reply = match class {
        TurnClass::FactualQuestion => {
            next.detour = Some(Detour::FactualAnswer);
            let prompt = docent_prompt(state, "Answer the student's factual question briefly and truthfully.");
            let answer = ask(backend, &prompt).map(|(t, _)| strip_questions(&t)).filter(|t| !t.is_empty());
            fallback = answer.is_none();
            let answer = answer.unwrap_or_else(|| factual_fallback(&state.artwork));
            let steer = steering(state, &mut rng);
            format!("{} {}{}", answer.trim(), steer, text::lower_first(&question))
        }
        TurnClass::OffTopic => {
            next.detour = Some(Detour::SteerBack);
            format!("{}{}", steering(state, &mut rng), text::lower_first(&question))
        }
        TurnClass::LowMotivation | TurnClass::OnTopicAnswer => {
            let used = next.per_stage_exchanges.entry(stage).or_default();
            *used += 1;
            let budget_exhausted = *used >= state.policy.budget(stage);

            let task = if class == TurnClass::LowMotivation {
                "The student lacks motivation. Encourage them and give a small hint without answering for them."
            } else {
                "Give warm, empathetic feedback on the student's answer."
            };
            let backend_reply = ask(backend, &docent_prompt(state, task));
            fallback = backend_reply.is_none();
            let markers = backend_reply.as_ref().map(|(_, m)| m);

            let answer_tokens = text::tokens(student_text);
            let repeat = previous_answer.as_deref() == Some(text::normalize(student_text).as_str());
            let worthy = class == TurnClass::OnTopicAnswer
                && answer_tokens.len() >= state.policy.min_advance_tokens()
                && !repeat;

            let idx = stage.flow_index().expect("sessions stay on flow slots");
            let remaining = state.policy.max_exchanges() - next.exchanges_used;
            let slots_left = StageId::FLOW.len() - idx;

            let mut signal = if worthy || budget_exhausted || markers.is_some_and(|m| m.advance) {
                Signal::Advance
            } else {
                Signal::Stay
            };
            if class == TurnClass::OnTopicAnswer && state.policy.mode() == FlowMode::Recursive {
                if let Some(target) = markers.and_then(|m| m.revisit) {
                    let fits = target.flow_index().is_some_and(|t| remaining >= StageId::FLOW.len() - t);
                    if fits && next_stage(stage, FlowMode::Recursive, Signal::Revisit(target)).is_ok() {
                        signal = Signal::Revisit(target);
                    }
                }
            }
            if signal == Signal::Stay && remaining < slots_left {
                signal = Signal::Advance;
            }
            let progress = next_stage(stage, state.policy.mode(), signal).expect("signal checked against mode");

            if class == TurnClass::LowMotivation {
                next.detour = Some(Detour::MotivationBoost);
            } else {
                next.detour = None;
            }
            let feedback = match &backend_reply {
                Some((t, _)) => strip_questions(t),
                None if class == TurnClass::LowMotivation => motivation_fallback(state),
                None => FEEDBACK_PHRASES.choose(&mut rng).copied().unwrap_or_default().to_owned(),
            };
            let feedback = if feedback.is_empty() {
                FEEDBACK_PHRASES.choose(&mut rng).copied().unwrap_or_default().to_owned()
            } else {
                feedback
            };
            let reply_index = next.transcript.len();
            match progress {
                Progress::Completed => {
                    next.completed = true;
                    join(&[
                        &feedback,
                        &format!("Thank you for looking so carefully at {} with me today.", state.artwork.artwork_name),
                    ])
                }
                Progress::Stage(target) if target != stage => {
                    next.current_stage = target;
                    next.stage_history.push((reply_index, target));
                    let lead = if matches!(signal, Signal::Revisit(_)) { "Let's go back for a moment." } else { "" };
                    join(&[&feedback, lead, &state.stage_question(target)])
                }
                Progress::Stage(_) => {
                    if let Some((t, _)) = backend_reply.as_ref().filter(|(t, _)| text::question_count(t) > 0) {
                        t.clone()
                    } else if class == TurnClass::LowMotivation {
                        join(&[&feedback, &question])
                    } else {
                        let kind = if repeat {
                            ContinuingQuestionKind::Rephrase
                        } else if rng.random_bool(0.5) {
                            ContinuingQuestionKind::Elaborate
                        } else {
                            ContinuingQuestionKind::Clarify
                        };
                        let q = kind.phrasings().choose(&mut rng).copied().unwrap_or("What else?");
                        join(&[&feedback, q])
                    }
                }
            }
        }
    };
    if !next.completed && next.exchanges_used >= state.policy.max_exchanges() {
        next.completed = true;
    }
    let text = finish(&state.policy, reply);
    next.transcript.push(Turn::new(Role::Teacher, text.clone()));
    Ok((DocentReply { text, class: Some(class), fallback }, next))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub artwork_id: String,
    /// Distinct stages in order of first visit.
    pub stages_visited: Vec<StageId>,
    pub per_stage_exchanges: BTreeMap<StageId, usize>,
    pub exchanges_used: usize,
    pub completed: bool,
    pub reached_synthesis: bool,
    pub transcript: DialogueTranscript,
}

pub fn close_session(state: &SessionState) -> SessionSummary {
    let mut visited = Vec::new();
    for (_, stage) in &state.stage_history {
        if !visited.contains(stage) {
            visited.push(*stage);
        }
    }
    SessionSummary {
        session_id: state.session_id.clone(),
        artwork_id: state.artwork.id.clone(),
        reached_synthesis: visited.iter().any(|s| s.major() == crate::framework::MajorStage::Synthesis),
        stages_visited: visited,
        per_stage_exchanges: state.per_stage_exchanges.clone(),
        exchanges_used: state.exchanges_used,
        completed: state.completed,
        transcript: state.transcript(),
    }
}

/// Whether every recorded stage change is a legal transition under the
/// session's flow mode.
pub fn history_is_consistent(state: &SessionState) -> bool {
    let mode = state.policy.mode();
    state.stage_history.first().map(|(_, s)| *s) == Some(StageId::REACTION)
        && state.stage_history.windows(2).all(|w| {
            let (from, to) = (w[0].1, w[1].1);
            next_stage(from, mode, Signal::Advance) == Ok(Progress::Stage(to))
                || next_stage(from, mode, Signal::Revisit(to)) == Ok(Progress::Stage(to))
        })
        && state.stage_history.last().map(|(_, s)| *s) == Some(state.current_stage)
}
