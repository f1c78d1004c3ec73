//! Instruction-tuning records in the LLaVA conversation schema:
//! `{"id", "image", "conversations": [{"from": "human"|"gpt", "value"}]}`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::transcript::{DialogueTranscript, Role, Turn};
use crate::corpus::Artwork;

pub const IMAGE_TOKEN: &str = "<image>\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Human,
    Gpt,
}

impl From<Role> for Speaker {
    fn from(role: Role) -> Self {
        match role {
            Role::Student => Speaker::Human,
            Role::Teacher => Speaker::Gpt,
        }
    }
}

impl From<Speaker> for Role {
    fn from(s: Speaker) -> Self {
        match s {
            Speaker::Human => Role::Student,
            Speaker::Gpt => Role::Teacher,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub from: Speaker,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructRecord {
    pub id: String,
    pub image: String,
    pub conversations: Vec<Conversation>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExportError {
    #[error("artwork {0:?} has no image path or URL")]
    MissingImageRef(String),
    #[error("transcript cannot be exported: {0}")]
    InvalidTranscript(String),
}

/// Student turns become `human`, teacher turns `gpt`; the first human value
/// is prefixed with the image token. A transcript opened by the teacher gets
/// a synthetic human turn that carries only the image token.
pub fn export_instruct(t: &DialogueTranscript, artwork: &Artwork, id: &str) -> Result<InstructRecord, ExportError> {
    let image = artwork
        .image
        .as_deref()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ExportError::MissingImageRef(artwork.id.clone()))?;
    if t.turns.is_empty() {
        return Err(ExportError::InvalidTranscript("no turns".into()));
    }
    if let Some(i) = t.alternation_break() {
        return Err(ExportError::InvalidTranscript(format!("roles do not alternate at turn {i}")));
    }
    if let Some(i) = t.turns.iter().position(|turn| turn.text.trim().is_empty()) {
        return Err(ExportError::InvalidTranscript(format!("turn {i} is empty")));
    }
    let mut conversations = Vec::with_capacity(t.turns.len() + 1);
    if t.turns[0].role == Role::Teacher {
        conversations.push(Conversation { from: Speaker::Human, value: IMAGE_TOKEN.to_owned() });
    }
    for turn in &t.turns {
        conversations.push(Conversation { from: turn.role.into(), value: turn.text.clone() });
    }
    if t.turns[0].role == Role::Student {
        conversations[0].value.insert_str(0, IMAGE_TOKEN);
    }
    Ok(InstructRecord { id: id.to_owned(), image: image.to_owned(), conversations })
}

impl InstructRecord {
    /// Schema problems, empty when the record is well-formed.
    pub fn schema_problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.id.trim().is_empty() {
            problems.push("empty id".to_owned());
        }
        if self.image.trim().is_empty() {
            problems.push("empty image".to_owned());
        }
        match self.conversations.first() {
            None => problems.push("no conversations".to_owned()),
            Some(first) => {
                if first.from != Speaker::Human {
                    problems.push("first conversation entry is not from human".to_owned());
                }
                if !first.value.starts_with(IMAGE_TOKEN) {
                    problems.push("first human value does not start with the image token".to_owned());
                }
            }
        }
        if let Some(i) = self.conversations.windows(2).position(|w| w[0].from == w[1].from) {
            problems.push(format!("speakers do not alternate at entry {}", i + 1));
        }
        problems
    }

    /// Recovers the dialogue, dropping the image token and any synthetic
    /// image-only opener.
    pub fn to_transcript(&self) -> DialogueTranscript {
        let mut turns = Vec::with_capacity(self.conversations.len());
        for (i, c) in self.conversations.iter().enumerate() {
            let value = if i == 0 { c.value.strip_prefix(IMAGE_TOKEN).unwrap_or(&c.value) } else { &c.value };
            if i == 0 && c.from == Speaker::Human && value.is_empty() {
                continue;
            }
            turns.push(Turn::new(c.from.into(), value));
        }
        DialogueTranscript::new(turns)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

#[derive(Debug, Error)]
pub enum RecordReadError {
    #[error("malformed record at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<InstructRecord>, RecordReadError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| RecordReadError::Malformed { line: idx + 1, reason: e.to_string() })?,
        );
    }
    Ok(out)
}

/// Writes one record per line, LF-terminated.
pub fn write_records<'a, W: Write>(
    mut w: W,
    records: impl IntoIterator<Item = &'a InstructRecord>,
) -> std::io::Result<()> {
    for r in records {
        w.write_all(r.to_json_line().as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
