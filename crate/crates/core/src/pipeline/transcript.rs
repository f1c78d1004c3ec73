//! `student:` / `teacher:` transcript text format.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Student,
    Teacher,
}

impl Role {
    pub fn prefix(self) -> &'static str {
        match self {
            Role::Student => "student",
            Role::Teacher => "teacher",
        }
    }

    pub fn other(self) -> Role {
        match self {
            Role::Student => Role::Teacher,
            Role::Teacher => Role::Student,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

impl Turn {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Turn { role, text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DialogueTranscript {
    pub turns: Vec<Turn>,
    #[serde(default)]
    pub source_prompt_checksum: String,
    #[serde(default)]
    pub artwork_id: String,
}

impl DialogueTranscript {
    pub fn new(turns: Vec<Turn>) -> Self {
        DialogueTranscript { turns, ..Default::default() }
    }

    pub fn with_source(mut self, checksum: impl Into<String>, artwork_id: impl Into<String>) -> Self {
        self.source_prompt_checksum = checksum.into();
        self.artwork_id = artwork_id.into();
        self
    }

    /// Number of student turns; each opens one exchange.
    pub fn exchanges(&self) -> usize {
        self.turns.iter().filter(|t| t.role == Role::Student).count()
    }

    /// Index of the first turn that repeats the previous turn's role.
    pub fn alternation_break(&self) -> Option<usize> {
        self.turns.windows(2).position(|w| w[0].role == w[1].role).map(|i| i + 1)
    }

    /// Text form: one `role: text` line per turn, continuation lines as-is.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for turn in &self.turns {
            out.push_str(turn.role.prefix());
            out.push_str(": ");
            out.push_str(&turn.text);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TranscriptError {
    #[error("line {line} is outside any turn")]
    ParseError { line: usize },
    #[error("roles do not alternate at turn {0}")]
    AlternationViolated(usize),
    #[error("transcript has no turns")]
    EmptyTranscript,
}

fn role_line(line: &str) -> Option<(Role, &str)> {
    let trimmed = line.trim_start();
    for role in [Role::Student, Role::Teacher] {
        let prefix = role.prefix();
        let head = trimmed.get(..prefix.len());
        if head.is_some_and(|h| h.eq_ignore_ascii_case(prefix)) {
            if let Some(body) = trimmed[prefix.len()..].trim_start().strip_prefix(':') {
                return Some((role, body.trim()));
            }
        }
    }
    None
}

/// Parses completion text into turns.
///
/// Lines starting with `student:` or `teacher:` (any case, optional leading
/// whitespace) open a turn; other non-blank lines are folded into the open
/// turn. Blank lines are ignored.
pub fn parse_transcript(raw: &str) -> Result<DialogueTranscript, TranscriptError> {
    let mut turns: Vec<Turn> = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if let Some((role, body)) = role_line(line) {
            turns.push(Turn::new(role, body));
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match turns.last_mut() {
            Some(turn) => {
                if !turn.text.is_empty() {
                    turn.text.push('\n');
                }
                turn.text.push_str(trimmed);
            }
            None => return Err(TranscriptError::ParseError { line: idx + 1 }),
        }
    }
    if turns.is_empty() {
        return Err(TranscriptError::EmptyTranscript);
    }
    let transcript = DialogueTranscript::new(turns);
    if let Some(i) = transcript.alternation_break() {
        return Err(TranscriptError::AlternationViolated(i));
    }
    Ok(transcript)
}
