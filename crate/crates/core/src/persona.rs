//! Virtual student personas.
//!
//! Metadata (name, age, performance, engagement) is always drawn from the
//! seed. The narrative comes either from a fixed phrase bank or from a
//! generation backend.

use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::backend::{BackendError, GenerationBackend};

pub const MIN_AGE: u8 = 14;
pub const MAX_AGE: u8 = 16;

pub const ENGAGEMENT_DESCRIPTORS: [&str; 5] = ["curious", "reluctant", "distracted", "enthusiastic", "skeptical"];

const NAMES: [&str; 24] = [
    "Mina", "Jiho", "Sora", "Daniel", "Yuna", "Leo", "Hana", "Ethan", "Seojin", "Maya", "Noah", "Aria", "Minjun",
    "Chloe", "Kai", "Isla", "Ryan", "Nari", "Owen", "Lucia", "Tae", "Emma", "Jun", "Zoe",
];

/// Words a narrative must not contain: it describes a student, not the rubric.
pub const STAGE_LABEL_WORDS: [&str; 7] =
    ["reaction", "perceptual", "interpretation", "contextual", "synthesis", "resolution", "evaluation"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Performance {
    High,
    Middle,
    Low,
}

impl Performance {
    pub const ALL: [Performance; 3] = [Performance::High, Performance::Middle, Performance::Low];

    pub fn as_str(self) -> &'static str {
        match self {
            Performance::High => "high",
            Performance::Middle => "middle",
            Performance::Low => "low",
        }
    }
}

impl fmt::Display for Performance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Performance {
    type Err = PersonaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Performance::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| PersonaError::Invalid(format!("unknown performance level {s:?}")))
    }
}

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("age {0} is outside 14..=16")]
    AgeOutOfRange(u8),
    #[error("invalid persona: {0}")]
    Invalid(String),
    #[error("persona backend failure: {0}")]
    BackendFailure(#[from] BackendError),
    #[error("malformed persona record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMeta")]
pub struct PersonaMeta {
    name: String,
    age: u8,
    performance: Performance,
    engagement: String,
}

#[derive(Deserialize)]
struct RawMeta {
    name: String,
    age: u8,
    performance: Performance,
    engagement: String,
}

impl TryFrom<RawMeta> for PersonaMeta {
    type Error = PersonaError;

    fn try_from(raw: RawMeta) -> Result<Self, Self::Error> {
        PersonaMeta::new(raw.name, raw.age, raw.performance, raw.engagement)
    }
}

impl PersonaMeta {
    pub fn new(
        name: impl Into<String>,
        age: u8,
        performance: Performance,
        engagement: impl Into<String>,
    ) -> Result<Self, PersonaError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(PersonaError::Invalid("name is empty".into()));
        }
        if name.contains([',', '(', ')']) {
            return Err(PersonaError::Invalid(format!("name {name:?} contains reserved punctuation")));
        }
        if !(MIN_AGE..=MAX_AGE).contains(&age) {
            return Err(PersonaError::AgeOutOfRange(age));
        }
        Ok(PersonaMeta { name, age, performance, engagement: engagement.into() })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn age(&self) -> u8 {
        self.age
    }

    pub fn performance(&self) -> Performance {
        self.performance
    }

    pub fn engagement(&self) -> &str {
        &self.engagement
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentPersona {
    pub id: String,
    #[serde(flatten)]
    pub meta: PersonaMeta,
    pub narrative: String,
}

impl StudentPersona {
    pub fn new(id: impl Into<String>, meta: PersonaMeta, narrative: impl Into<String>) -> Result<Self, PersonaError> {
        let narrative = narrative.into();
        check_narrative(&narrative)?;
        Ok(StudentPersona { id: id.into(), meta, narrative })
    }
}

fn check_narrative(narrative: &str) -> Result<(), PersonaError> {
    if narrative.trim().is_empty() {
        return Err(PersonaError::Invalid("narrative is empty".into()));
    }
    let toks = crate::text::tokens(narrative);
    if let Some(word) = STAGE_LABEL_WORDS.iter().find(|w| toks.iter().any(|t| t == *w)) {
        return Err(PersonaError::Invalid(format!("narrative mentions stage label {word:?}")));
    }
    Ok(())
}

/// Where persona narratives come from.
pub enum PersonaSource<'a> {
    /// Offline phrase bank; fully deterministic.
    Template,
    /// Ask a generation backend to write the narrative.
    Backend(&'a dyn GenerationBackend),
}

fn draw_meta(count: usize, seed: u64) -> Vec<PersonaMeta> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // round-robin then shuffle, so every level appears once count >= 3
    let mut levels: Vec<Performance> = (0..count).map(|i| Performance::ALL[i % 3]).collect();
    levels.shuffle(&mut rng);
    let mut names: Vec<&str> = NAMES.to_vec();
    names.shuffle(&mut rng);
    levels
        .into_iter()
        .enumerate()
        .map(|(i, performance)| {
            let base = names[i % names.len()];
            let name = if i < names.len() { base.to_owned() } else { format!("{base} {}", i / names.len() + 1) };
            let age = rng.random_range(MIN_AGE..=MAX_AGE);
            let engagement = *ENGAGEMENT_DESCRIPTORS.choose(&mut rng).expect("non-empty");
            PersonaMeta::new(name, age, performance, engagement).expect("drawn metadata is valid")
        })
        .collect()
}

fn template_narrative(meta: &PersonaMeta, rng: &mut ChaCha8Rng) -> String {
    let skill = match meta.performance {
        Performance::High => [
            "often notices small details in pictures and enjoys explaining them",
            "reads about painters in free time and likes to compare different works",
        ],
        Performance::Middle => [
            "can describe what a picture shows but rarely says why it matters",
            "likes bright and colorful pictures and sometimes finds older works hard to follow",
        ],
        Performance::Low => [
            "finds it hard to put feelings about a picture into words",
            "has seldom visited a museum and gives very short answers about art",
        ],
    };
    let attitude = match meta.engagement.as_str() {
        "curious" => "asks many questions when something looks unusual",
        "reluctant" => "usually waits to be asked before speaking",
        "distracted" => "sometimes drifts to unrelated topics in the middle of a lesson",
        "enthusiastic" => "gets excited quickly and talks a lot once interested",
        "skeptical" => "doubts that old paintings have anything to do with everyday life",
        _ => "takes part in lessons in a personal way",
    };
    let hobby = *[
        "plays soccer after school",
        "draws cartoons in a notebook",
        "plays video games with friends",
        "takes photos with a phone",
        "plays the piano",
        "likes reading fantasy novels",
    ]
    .choose(rng)
    .expect("non-empty");
    format!(
        "{name} is a {age}-year-old student who {skill}. {name} {attitude} and {hobby}.",
        name = meta.name,
        age = meta.age,
        skill = skill[rng.random_range(0..skill.len())],
    )
}

fn backend_prompt(meta: &PersonaMeta) -> String {
    format!(
        "Write a short persona (two or three sentences) of a virtual middle school student for an art \
         appreciation lesson. Name: {}. Age: {}. Art appreciation performance level: {}. Engagement: {}. \
         Describe personality, interests and attitude toward art. Reply with the persona text only.",
        meta.name, meta.age, meta.performance, meta.engagement
    )
}

/// Produces `count` personas whose metadata is a pure function of `seed`.
pub fn generate_personas(
    count: usize,
    seed: u64,
    source: PersonaSource<'_>,
) -> Result<Vec<StudentPersona>, PersonaError> {
    let metas = draw_meta(count, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7e47);
    metas
        .into_iter()
        .enumerate()
        .map(|(i, meta)| {
            let narrative = match &source {
                PersonaSource::Template => template_narrative(&meta, &mut rng),
                PersonaSource::Backend(backend) => {
                    let reply = backend.complete(&backend_prompt(&meta))?;
                    let reply = reply.trim().replace(['{', '}'], "");
                    check_narrative(&reply).map_err(|e| BackendError::InvalidReply(e.to_string()))?;
                    reply
                }
            };
            StudentPersona::new(format!("p{:02}", i + 1), meta, narrative)
        })
        .collect()
}

/// Narrative followed by a parenthetical metadata summary:
/// `"<narrative> (<name>, age <age>, <level> performance, <engagement> engagement)"`.
pub fn render_persona(p: &StudentPersona) -> String {
    let narrative = p.narrative.trim().replace('{', "(").replace('}', ")");
    format!(
        "{narrative} ({}, age {}, {} performance, {} engagement)",
        p.meta.name, p.meta.age, p.meta.performance, p.meta.engagement
    )
}

/// Recovers `(name, age, performance)` from the summary written by
/// [`render_persona`].
pub fn parse_persona_summary(rendered: &str) -> Option<(String, u8, Performance)> {
    let body = rendered.trim_end().strip_suffix(')')?;
    let open = body.rfind(" (")?;
    let mut parts = body[open + 2..].split(", ");
    let name = parts.next()?.to_owned();
    let age = parts.next()?.strip_prefix("age ")?.parse().ok()?;
    let performance = parts.next()?.strip_suffix(" performance")?.parse().ok()?;
    parts.next()?.strip_suffix(" engagement")?;
    if parts.next().is_some() {
        return None;
    }
    Some((name, age, performance))
}

pub fn load_personas_reader<R: BufRead>(reader: R) -> Result<Vec<StudentPersona>, PersonaError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: StudentPersona = serde_json::from_str(&line)
            .map_err(|e| PersonaError::MalformedRecord { line: idx + 1, reason: e.to_string() })?;
        check_narrative(&p.narrative)
            .map_err(|e| PersonaError::MalformedRecord { line: idx + 1, reason: e.to_string() })?;
        out.push(p);
    }
    Ok(out)
}

pub fn load_personas(path: impl AsRef<Path>) -> Result<Vec<StudentPersona>, PersonaError> {
    let file = std::fs::File::open(path)?;
    load_personas_reader(std::io::BufReader::new(file))
}

pub fn personas_to_jsonl(personas: &[StudentPersona]) -> String {
    personas.iter().map(|p| serde_json::to_string(p).expect("persona serializes") + "\n").collect()
}
