//! Rule checks for generated transcripts.
//!
//! Hard errors: too many exchanges, broken alternation, empty turns.
//! Warnings: turns longer than the sentence budget and teacher turns asking
//! more than one question. Warnings never change the verdict.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::transcript::{DialogueTranscript, Role};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RuleId {
    MaxExchangesExceeded,
    AlternationViolated,
    EmptyTurn,
    SentenceBudget,
    MultipleQuestions,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub rule: RuleId,
    /// Offending turn, when the rule is about one turn.
    pub turn: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.verdict == Verdict::Valid
    }

    pub fn has_error(&self, rule: RuleId) -> bool {
        self.errors.iter().any(|f| f.rule == rule)
    }

    pub fn has_warning(&self, rule: RuleId) -> bool {
        self.warnings.iter().any(|f| f.rule == rule)
    }

    /// Distinct error rules, sorted.
    pub fn error_rules(&self) -> Vec<RuleId> {
        let mut rules: Vec<RuleId> = self.errors.iter().map(|f| f.rule).collect();
        rules.sort();
        rules.dedup();
        rules
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleConfig {
    pub max_exchanges: usize,
    pub max_sentences: usize,
    pub max_teacher_questions: usize,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig { max_exchanges: 20, max_sentences: 2, max_teacher_questions: 1 }
    }
}

pub fn validate_transcript(t: &DialogueTranscript, rules: &RuleConfig) -> ValidationReport {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();

    let exchanges = t.exchanges();
    if exchanges > rules.max_exchanges {
        errors.push(Finding {
            rule: RuleId::MaxExchangesExceeded,
            turn: None,
            message: format!("{exchanges} exchanges exceed the limit of {}", rules.max_exchanges),
        });
    }
    for (i, pair) in t.turns.windows(2).enumerate() {
        if pair[0].role == pair[1].role {
            errors.push(Finding {
                rule: RuleId::AlternationViolated,
                turn: Some(i + 1),
                message: format!("two consecutive {} turns", pair[1].role),
            });
        }
    }
    for (i, turn) in t.turns.iter().enumerate() {
        if turn.text.trim().is_empty() {
            errors.push(Finding { rule: RuleId::EmptyTurn, turn: Some(i), message: "empty turn".into() });
            continue;
        }
        let sentences = text::sentence_count(&turn.text);
        if sentences > rules.max_sentences {
            warnings.push(Finding {
                rule: RuleId::SentenceBudget,
                turn: Some(i),
                message: format!("{sentences} sentences (budget {})", rules.max_sentences),
            });
        }
        if turn.role == Role::Teacher {
            let questions = text::question_count(&turn.text);
            if questions > rules.max_teacher_questions {
                warnings.push(Finding {
                    rule: RuleId::MultipleQuestions,
                    turn: Some(i),
                    message: format!("{questions} questions in one teacher turn"),
                });
            }
        }
    }
    let verdict = if errors.is_empty() { Verdict::Valid } else { Verdict::Invalid };
    ValidationReport { verdict, errors, warnings }
}
