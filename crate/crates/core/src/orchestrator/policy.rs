use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::framework::{FlowMode, StageId};

pub const DEFAULT_STEERING_PHRASES: [&str; 3] = ["By the way, ", "To get back to the original theme, ", "Then, "];

/// Continuing-question families used to keep a student talking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuingQuestionKind {
    Rephrase,
    Prompt,
    Clarify,
    Elaborate,
}

impl ContinuingQuestionKind {
    pub const ALL: [ContinuingQuestionKind; 4] = [
        ContinuingQuestionKind::Rephrase,
        ContinuingQuestionKind::Prompt,
        ContinuingQuestionKind::Clarify,
        ContinuingQuestionKind::Elaborate,
    ];

    pub fn phrasings(self) -> &'static [&'static str] {
        match self {
            ContinuingQuestionKind::Rephrase => {
                &["Your answer wasn't clear. Can you rephrase it?", "Can you state your answer another way?"]
            }
            ContinuingQuestionKind::Prompt => &[
                "You're not answering my questions. Why don't you try again?",
                "You're on the right track. Can you keep going?",
                "Have you left anything out?",
            ],
            ContinuingQuestionKind::Clarify => &[
                "Can you tell me your answer more clearly?",
                "Can you explain yourself further?",
                "Can you help me understand your point better?",
            ],
            ContinuingQuestionKind::Elaborate => &["What can you add to that?", "Can you tell me more?", "What else?"],
        }
    }
}

/// Cue lists used to classify student turns. Phrases are matched on
/// normalized tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudentCues {
    /// Artist, artwork and era words that make a question factual.
    pub factual_terms: Vec<String>,
    pub low_motivation: Vec<String>,
    /// Always counted as on-topic context.
    pub art_vocabulary: Vec<String>,
    /// Ignored when measuring topical overlap.
    pub stopwords: Vec<String>,
}

fn owned(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| (*w).to_owned()).collect()
}

impl Default for StudentCues {
    fn default() -> Self {
        StudentCues {
            factual_terms: owned(&[
                "artist",
                "artists",
                "painter",
                "sculptor",
                "born",
                "died",
                "die",
                "death",
                "country",
                "nationality",
                "lived",
                "century",
                "era",
                "period",
                "year",
                "years",
                "painted",
                "created",
                "museum",
                "famous",
            ]),
            low_motivation: owned(&[
                "i dont know",
                "dont know",
                "just tell me",
                "cant think of anything",
                "cant think",
                "no idea",
                "not sure",
                "i dont care",
                "whatever",
                "boring",
                "no clue",
            ]),
            art_vocabulary: owned(&[
                "art",
                "artwork",
                "work",
                "painting",
                "picture",
                "image",
                "drawing",
                "sculpture",
                "piece",
                "artist",
                "painter",
                "color",
                "colors",
                "colour",
                "colours",
                "colorful",
                "bright",
                "dark",
                "light",
                "shadow",
                "shape",
                "shapes",
                "line",
                "lines",
                "texture",
                "brush",
                "brushstrokes",
                "stroke",
                "strokes",
                "paint",
                "canvas",
                "composition",
                "background",
                "foreground",
                "center",
                "space",
                "pattern",
                "sky",
                "water",
                "sea",
                "tree",
                "trees",
                "person",
                "people",
                "face",
                "figure",
                "figures",
                "woman",
                "man",
                "red",
                "blue",
                "yellow",
                "green",
                "black",
                "white",
                "orange",
                "purple",
                "gold",
                "feel",
                "feels",
                "feeling",
                "mood",
                "emotion",
                "happy",
                "sad",
                "calm",
                "peaceful",
                "angry",
                "scary",
                "lonely",
                "warm",
                "cold",
                "strange",
                "beautiful",
                "ugly",
                "interesting",
                "see",
                "notice",
                "look",
                "looks",
                "meaning",
                "mean",
                "story",
                "symbol",
                "style",
                "detail",
                "details",
                "moving",
                "movement",
                "quiet",
                "busy",
                "soft",
                "sharp",
                "round",
                "big",
                "small",
                "like",
                "love",
                "think",
                "reminds",
            ]),
            stopwords: owned(&[
                "a", "an", "the", "and", "or", "but", "so", "of", "to", "in", "on", "at", "for", "with", "is", "are",
                "was", "were", "be", "been", "it", "its", "this", "that", "these", "those", "i", "im", "me", "my",
                "you", "your", "we", "our", "they", "them", "he", "she", "his", "her", "do", "does", "did", "what",
                "whats", "which", "how", "why", "can", "could", "would", "will", "just", "very", "really", "there",
                "here", "about", "yes", "no", "ok", "okay", "um", "uh", "well", "maybe", "also", "some", "any", "have",
                "has", "had", "if", "as", "by", "from", "up", "out", "not", "dont", "all", "more", "too",
            ]),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("max_exchanges must be at least {min} so every flow slot is reachable, got {got}")]
    TooFewExchanges { min: usize, got: usize },
    #[error("stage budget for {0} must be at least 1")]
    ZeroBudget(StageId),
    #[error("stage budget names a non-flow slot: {0}")]
    NotAFlowSlot(StageId),
    #[error("at least one steering phrase is required")]
    NoSteeringPhrases,
    #[error("off-topic threshold must lie in [0, 1], got {0}")]
    BadThreshold(f64),
}

/// Tunable behaviour of a live docent session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy")]
pub struct DocentPolicy {
    mode: FlowMode,
    max_exchanges: usize,
    stage_budget: BTreeMap<StageId, usize>,
    one_question_rule: bool,
    steering_phrases: Vec<String>,
    offtopic_threshold: f64,
    min_advance_tokens: usize,
    cues: StudentCues,
}

pub fn default_stage_budget() -> BTreeMap<StageId, usize> {
    BTreeMap::from([
        (StageId::REACTION, 2),
        (StageId::PA_REPRESENTATION, 2),
        (StageId::PA_FORMAL_ANALYSIS, 2),
        (StageId::PA_FORMAL_CHARACTERIZATION, 2),
        (StageId::PERSONAL_INTERPRETATION, 4),
        (StageId::CONTEXTUAL_EXAMINATION, 3),
        (StageId::SYN_RESOLUTION, 2),
        (StageId::SYN_EVALUATION, 2),
    ])
}

/// Optional fields layered over a base policy. Budgets merge per slot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyOverrides {
    pub mode: Option<FlowMode>,
    pub max_exchanges: Option<usize>,
    pub stage_budget: Option<BTreeMap<StageId, usize>>,
    pub one_question_rule: Option<bool>,
    pub steering_phrases: Option<Vec<String>>,
    pub offtopic_threshold: Option<f64>,
    pub min_advance_tokens: Option<usize>,
    pub cues: Option<StudentCues>,
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawPolicy {
    mode: FlowMode,
    max_exchanges: usize,
    stage_budget: BTreeMap<StageId, usize>,
    one_question_rule: bool,
    steering_phrases: Vec<String>,
    offtopic_threshold: f64,
    min_advance_tokens: usize,
    cues: StudentCues,
}

impl Default for RawPolicy {
    fn default() -> Self {
        let p = DocentPolicy::default();
        RawPolicy {
            mode: p.mode,
            max_exchanges: p.max_exchanges,
            stage_budget: BTreeMap::new(),
            one_question_rule: p.one_question_rule,
            steering_phrases: p.steering_phrases,
            offtopic_threshold: p.offtopic_threshold,
            min_advance_tokens: p.min_advance_tokens,
            cues: p.cues,
        }
    }
}

impl TryFrom<RawPolicy> for DocentPolicy {
    type Error = PolicyError;

    fn try_from(raw: RawPolicy) -> Result<Self, PolicyError> {
        DocentPolicy::default().with_overrides(&PolicyOverrides {
            mode: Some(raw.mode),
            max_exchanges: Some(raw.max_exchanges),
            stage_budget: Some(raw.stage_budget),
            one_question_rule: Some(raw.one_question_rule),
            steering_phrases: Some(raw.steering_phrases),
            offtopic_threshold: Some(raw.offtopic_threshold),
            min_advance_tokens: Some(raw.min_advance_tokens),
            cues: Some(raw.cues),
        })
    }
}

impl Default for DocentPolicy {
    fn default() -> Self {
        DocentPolicy {
            mode: FlowMode::Linear,
            max_exchanges: 20,
            stage_budget: default_stage_budget(),
            one_question_rule: true,
            steering_phrases: owned(&DEFAULT_STEERING_PHRASES),
            offtopic_threshold: 0.15,
            min_advance_tokens: 4,
            cues: StudentCues::default(),
        }
    }
}

impl DocentPolicy {
    pub fn new(mode: FlowMode, max_exchanges: usize) -> Result<Self, PolicyError> {
        DocentPolicy::default().with_overrides(&PolicyOverrides {
            mode: Some(mode),
            max_exchanges: Some(max_exchanges),
            ..Default::default()
        })
    }

    pub fn with_overrides(&self, o: &PolicyOverrides) -> Result<Self, PolicyError> {
        let mut p = self.clone();
        if let Some(v) = o.mode {
            p.mode = v;
        }
        if let Some(v) = o.max_exchanges {
            p.max_exchanges = v;
        }
        if let Some(budget) = &o.stage_budget {
            for (slot, n) in budget {
                p.stage_budget.insert(*slot, *n);
            }
        }
        if let Some(v) = o.one_question_rule {
            p.one_question_rule = v;
        }
        if let Some(v) = &o.steering_phrases {
            p.steering_phrases = v.clone();
        }
        if let Some(v) = o.offtopic_threshold {
            p.offtopic_threshold = v;
        }
        if let Some(v) = o.min_advance_tokens {
            p.min_advance_tokens = v;
        }
        if let Some(v) = &o.cues {
            p.cues = v.clone();
        }
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<(), PolicyError> {
        let min = StageId::FLOW.len();
        if self.max_exchanges < min {
            return Err(PolicyError::TooFewExchanges { min, got: self.max_exchanges });
        }
        for (slot, n) in &self.stage_budget {
            if !slot.is_flow_slot() {
                return Err(PolicyError::NotAFlowSlot(*slot));
            }
            if *n == 0 {
                return Err(PolicyError::ZeroBudget(*slot));
            }
        }
        if self.steering_phrases.iter().all(|s| s.trim().is_empty()) {
            return Err(PolicyError::NoSteeringPhrases);
        }
        if !(0.0..=1.0).contains(&self.offtopic_threshold) {
            return Err(PolicyError::BadThreshold(self.offtopic_threshold));
        }
        Ok(())
    }

    pub fn mode(&self) -> FlowMode {
        self.mode
    }

    pub fn max_exchanges(&self) -> usize {
        self.max_exchanges
    }

    pub fn budget(&self, slot: StageId) -> usize {
        self.stage_budget.get(&slot).copied().unwrap_or(1)
    }

    pub fn stage_budget(&self) -> &BTreeMap<StageId, usize> {
        &self.stage_budget
    }

    pub fn one_question_rule(&self) -> bool {
        self.one_question_rule
    }

    pub fn steering_phrases(&self) -> impl Iterator<Item = &str> {
        self.steering_phrases.iter().map(String::as_str).filter(|s| !s.trim().is_empty())
    }

    pub fn offtopic_threshold(&self) -> f64 {
        self.offtopic_threshold
    }

    pub fn min_advance_tokens(&self) -> usize {
        self.min_advance_tokens
    }

    pub fn cues(&self) -> &StudentCues {
        &self.cues
    }
}
