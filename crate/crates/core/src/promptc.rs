//! Seven-component generation prompt: situation, guidelines, flows, personas,
//! artwork, output form and instruction.
//!
//! Both the component texts ([`TemplateDefaults`]) and the skeleton with its
//! `{placeholder}` slots ([`PromptTemplate`]) are data files, so guidelines
//! can be revised without a rebuild.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Artwork;
use crate::framework::{FlowSelection, StageId, StageItem};
use crate::persona::{render_persona, StudentPersona};

pub const DEFAULT_TEMPLATE_DEFAULTS: &str = include_str!("../data/template_defaults.txt");
pub const DEFAULT_PROMPT_TEMPLATE: &str = include_str!("../data/prompt_template.txt");

pub const GUIDELINE_COUNT: usize = 17;
pub const FINAL_LINE: &str = "Let's start a conversation.";

/// Headers of the seven components, in rendering order.
pub const COMPONENT_HEADERS: [&str; 7] = [
    "Information about the Situation:",
    "Guidelines for the Teacher",
    "Flows for the art appreciation education:",
    "Persona:",
    "Artwork for appreciation:",
    "Template (jsonl format):",
    "Instruction:",
];

const SECTIONS: [&str; 5] = ["situation", "guidelines", "teacher_persona", "output_form", "instruction"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("invalid template defaults: {0}")]
    InvalidDefaults(String),
    #[error("invalid prompt template: {0}")]
    InvalidTemplate(String),
}

/// Component texts other than the per-dialogue inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateDefaults {
    situation: String,
    guidelines: Vec<String>,
    teacher_persona: String,
    output_form: String,
    instruction: String,
}

fn parse_sections(text: &str) -> Result<BTreeMap<String, String>, PromptError> {
    let mut sections: BTreeMap<String, String> = BTreeMap::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(name) = trimmed.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            if !SECTIONS.contains(&name) {
                return Err(PromptError::InvalidDefaults(format!("unknown section [{name}]")));
            }
            if sections.contains_key(name) {
                return Err(PromptError::InvalidDefaults(format!("duplicate section [{name}]")));
            }
            sections.insert(name.to_owned(), String::new());
            current = Some(name.to_owned());
            continue;
        }
        match &current {
            Some(name) => {
                let body = sections.get_mut(name).expect("section exists");
                body.push_str(line);
                body.push('\n');
            }
            None if trimmed.is_empty() || trimmed.starts_with('#') => {}
            None => return Err(PromptError::InvalidDefaults(format!("text outside any section: {trimmed:?}"))),
        }
    }
    for body in sections.values_mut() {
        *body = body.trim().to_owned();
    }
    Ok(sections)
}

fn numbered_prefix(line: &str) -> Option<&str> {
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    line[digits..].strip_prefix(". ")
}

fn parse_guidelines(body: &str) -> Result<Vec<String>, PromptError> {
    let mut out: Vec<String> = Vec::new();
    for line in body.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = numbered_prefix(trimmed) {
            out.push(rest.trim().to_owned());
        } else if let Some(last) = out.last_mut() {
            last.push('\n');
            last.push_str(trimmed);
        } else {
            return Err(PromptError::InvalidDefaults("guidelines must start with a numbered entry".into()));
        }
    }
    if out.len() != GUIDELINE_COUNT {
        return Err(PromptError::InvalidDefaults(format!(
            "expected {GUIDELINE_COUNT} guidelines, found {}",
            out.len()
        )));
    }
    Ok(out)
}

impl TemplateDefaults {
    /// Parses a complete defaults file.
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let sections = parse_sections(text)?;
        let take = |name: &str| -> Result<String, PromptError> {
            let body =
                sections.get(name).ok_or_else(|| PromptError::InvalidDefaults(format!("missing section [{name}]")))?;
            if body.is_empty() {
                return Err(PromptError::InvalidDefaults(format!("section [{name}] is empty")));
            }
            Ok(body.clone())
        };
        Ok(TemplateDefaults {
            situation: take("situation")?,
            guidelines: parse_guidelines(&take("guidelines")?)?,
            teacher_persona: take("teacher_persona")?,
            output_form: take("output_form")?,
            instruction: take("instruction")?,
        })
    }

    /// Replaces only the sections present in `text`.
    pub fn with_overrides(&self, text: &str) -> Result<Self, PromptError> {
        let sections = parse_sections(text)?;
        let mut out = self.clone();
        for (name, body) in sections {
            if body.is_empty() {
                return Err(PromptError::InvalidDefaults(format!("section [{name}] is empty")));
            }
            match name.as_str() {
                "situation" => out.situation = body,
                "guidelines" => out.guidelines = parse_guidelines(&body)?,
                "teacher_persona" => out.teacher_persona = body,
                "output_form" => out.output_form = body,
                "instruction" => out.instruction = body,
                _ => unreachable!("section names are validated"),
            }
        }
        Ok(out)
    }

    pub fn guidelines(&self) -> &[String] {
        &self.guidelines
    }

    pub fn teacher_persona(&self) -> &str {
        &self.teacher_persona
    }

    pub fn situation(&self) -> &str {
        &self.situation
    }

    pub fn instruction(&self) -> &str {
        &self.instruction
    }
}

impl Default for TemplateDefaults {
    fn default() -> Self {
        TemplateDefaults::parse(DEFAULT_TEMPLATE_DEFAULTS).expect("shipped defaults are valid")
    }
}

/// Everything needed to render one generation prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptBundle {
    pub situation: String,
    pub guidelines: Vec<String>,
    pub flows: FlowSelection,
    pub teacher_persona: String,
    pub student_persona: StudentPersona,
    pub artwork: Artwork,
    pub output_form: String,
    pub instruction: String,
}

pub fn compose_bundle(
    flow: &FlowSelection,
    persona: &StudentPersona,
    artwork: &Artwork,
    defaults: &TemplateDefaults,
) -> Result<PromptBundle, PromptError> {
    if defaults.guidelines.len() != GUIDELINE_COUNT {
        return Err(PromptError::InvalidDefaults(format!(
            "expected {GUIDELINE_COUNT} guidelines, found {}",
            defaults.guidelines.len()
        )));
    }
    if defaults.guidelines.iter().any(|g| g.trim().is_empty()) {
        return Err(PromptError::InvalidDefaults("empty guideline".into()));
    }
    Ok(PromptBundle {
        situation: defaults.situation.clone(),
        guidelines: defaults.guidelines.clone(),
        flows: flow.clone(),
        teacher_persona: defaults.teacher_persona.clone(),
        student_persona: persona.clone(),
        artwork: artwork.clone(),
        output_form: defaults.output_form.clone(),
        instruction: defaults.instruction.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    /// Hex SHA-256 of `text`.
    pub checksum: String,
    pub seed: u64,
}

pub fn content_checksum(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Slot(String),
}

/// A skeleton with `{identifier}` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pieces: Vec<Piece>,
}

/// Every placeholder the renderer knows how to fill.
pub fn known_placeholders() -> Vec<String> {
    let mut names: Vec<String> = ["situation", "guidelines"].map(String::from).to_vec();
    names.extend(StageId::FLOW.iter().map(|s| s.placeholder()));
    names.extend(
        [
            "teacher_persona",
            "student_persona",
            "artwork_name",
            "artwork_explanation",
            "artist_name",
            "category",
            "date",
            "style",
            "media",
            "output_form",
            "instruction",
        ]
        .map(String::from),
    );
    names
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let known = known_placeholders();
        let mut pieces = Vec::new();
        let mut rest = text;
        while let Some(open) = rest.find('{') {
            let close = rest[open..]
                .find('}')
                .map(|c| open + c)
                .ok_or_else(|| PromptError::InvalidTemplate("unclosed '{'".into()))?;
            let name = &rest[open + 1..close];
            if !known.iter().any(|k| k == name) {
                return Err(PromptError::InvalidTemplate(format!("unknown placeholder {{{name}}}")));
            }
            if open > 0 {
                pieces.push(Piece::Literal(rest[..open].to_owned()));
            }
            pieces.push(Piece::Slot(name.to_owned()));
            rest = &rest[close + 1..];
        }
        if rest.contains('}') {
            return Err(PromptError::InvalidTemplate("stray '}'".into()));
        }
        if !rest.is_empty() {
            pieces.push(Piece::Literal(rest.to_owned()));
        }
        Ok(PromptTemplate { pieces })
    }

    /// Placeholder names in order of appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        self.pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(name) => Some(name.as_str()),
                Piece::Literal(_) => None,
            })
            .collect()
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::parse(DEFAULT_PROMPT_TEMPLATE).expect("shipped template is valid")
    }
}

fn sanitize(value: &str) -> String {
    value.trim().replace('{', "(").replace('}', ")")
}

/// Labeled rendering of one framework item.
pub fn render_stage_item(item: &StageItem) -> String {
    let mut out = format!("Step explanation: {}", sanitize(&item.step_explanation));
    for (label, value) in [
        ("Utterance example", &item.utterance_example),
        ("Questioning example", &item.questioning_example),
        ("Feedback example", &item.feedback_example),
    ] {
        if !value.trim().is_empty() {
            out.push_str(&format!("\n{label}: {}", sanitize(value)));
        }
    }
    out
}

fn slot_value(bundle: &PromptBundle, name: &str) -> String {
    if let Some(slot) = StageId::FLOW.iter().find(|s| s.placeholder() == name) {
        return render_stage_item(bundle.flows.get(*slot));
    }
    let art = &bundle.artwork;
    match name {
        "situation" => sanitize(&bundle.situation),
        "guidelines" => bundle
            .guidelines
            .iter()
            .enumerate()
            .map(|(i, g)| format!("{}. {}", i + 1, sanitize(g)))
            .collect::<Vec<_>>()
            .join("\n"),
        "teacher_persona" => sanitize(&bundle.teacher_persona),
        "student_persona" => render_persona(&bundle.student_persona),
        "artwork_name" => sanitize(&art.artwork_name),
        "artwork_explanation" => sanitize(&art.artwork_explanation),
        "artist_name" => sanitize(&art.artist_name),
        "category" => sanitize(&art.category),
        "date" => sanitize(&art.year),
        "style" => sanitize(&art.style),
        "media" => sanitize(&art.media),
        "output_form" => sanitize(&bundle.output_form),
        "instruction" => sanitize(&bundle.instruction),
        other => unreachable!("placeholder {other} was validated at parse time"),
    }
}

pub fn render_prompt_with(template: &PromptTemplate, bundle: &PromptBundle) -> RenderedPrompt {
    let mut text = String::new();
    for piece in &template.pieces {
        match piece {
            Piece::Literal(s) => text.push_str(s),
            Piece::Slot(name) => text.push_str(&slot_value(bundle, name)),
        }
    }
    let text = text.trim_end().to_owned();
    RenderedPrompt { checksum: content_checksum(&text), text, seed: bundle.flows.seed() }
}

pub fn render_prompt(bundle: &PromptBundle) -> RenderedPrompt {
    render_prompt_with(&PromptTemplate::default(), bundle)
}

/// Numbered guideline lines between the guidelines and flows headers.
pub fn guideline_lines(prompt: &str) -> Vec<&str> {
    let start = prompt.find(COMPONENT_HEADERS[1]).map(|i| i + COMPONENT_HEADERS[1].len());
    let end = prompt.find(COMPONENT_HEADERS[2]);
    match (start, end) {
        (Some(s), Some(e)) if s <= e => {
            prompt[s..e].lines().filter(|l| numbered_prefix(l.trim_start()).is_some()).collect()
        }
        _ => Vec::new(),
    }
}
