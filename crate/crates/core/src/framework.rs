//! The appreciation framework: five critical stages expanded into eight
//! ordered flow slots, each carrying teaching exemplars.
//!
//! A [`FrameworkTable`] is loaded from JSONL (one [`StageItem`] per line) and
//! is immutable afterwards. [`sample_flow`] picks one item per slot for a
//! prompt, [`next_stage`] implements linear and recursive stage navigation,
//! and [`classify_turn`] labels an utterance with a major stage using a cue
//! phrase [`Lexicon`].

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text;

pub const DEFAULT_FRAMEWORK_JSONL: &str = include_str!("../data/framework.jsonl");
pub const DEFAULT_LEXICON_JSON: &str = include_str!("../data/lexicon.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MajorStage {
    Reaction,
    PerceptualAnalysis,
    PersonalInterpretation,
    ContextualExamination,
    Synthesis,
    /// Annotation-only label for utterances that fit no stage.
    CantDefine,
}

impl MajorStage {
    /// The five teachable stages, in order.
    pub const TEACHABLE: [MajorStage; 5] = [
        MajorStage::Reaction,
        MajorStage::PerceptualAnalysis,
        MajorStage::PersonalInterpretation,
        MajorStage::ContextualExamination,
        MajorStage::Synthesis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MajorStage::Reaction => "reaction",
            MajorStage::PerceptualAnalysis => "perceptual_analysis",
            MajorStage::PersonalInterpretation => "personal_interpretation",
            MajorStage::ContextualExamination => "contextual_examination",
            MajorStage::Synthesis => "synthesis",
            MajorStage::CantDefine => "cant_define",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            MajorStage::Reaction => "Reaction",
            MajorStage::PerceptualAnalysis => "Perceptual Analysis",
            MajorStage::PersonalInterpretation => "Personal Interpretation",
            MajorStage::ContextualExamination => "Contextual Examination",
            MajorStage::Synthesis => "Synthesis",
            MajorStage::CantDefine => "Can't define",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SubStage {
    Representation,
    FormalAnalysis,
    FormalCharacterization,
    Resolution,
    Evaluation,
}

impl SubStage {
    pub fn name(self) -> &'static str {
        match self {
            SubStage::Representation => "representation",
            SubStage::FormalAnalysis => "formal_analysis",
            SubStage::FormalCharacterization => "formal_characterization",
            SubStage::Resolution => "resolution",
            SubStage::Evaluation => "evaluation",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            SubStage::Representation => "Representation",
            SubStage::FormalAnalysis => "Formal Analysis",
            SubStage::FormalCharacterization => "Formal Characterization",
            SubStage::Resolution => "Resolution",
            SubStage::Evaluation => "Evaluation",
        }
    }

    fn allowed_under(self, major: MajorStage) -> bool {
        match major {
            MajorStage::PerceptualAnalysis => {
                matches!(self, SubStage::Representation | SubStage::FormalAnalysis | SubStage::FormalCharacterization)
            }
            MajorStage::Synthesis => matches!(self, SubStage::Resolution | SubStage::Evaluation),
            _ => false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StageError {
    #[error("sub-stage {sub:?} is not valid under {major:?}")]
    InvalidSub { major: MajorStage, sub: SubStage },
    #[error("unknown stage name {0:?}")]
    UnknownName(String),
}

/// A stage label: a major stage with an optional sub-stage.
///
/// The derived ordering follows flow order for the eight flow slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StageId {
    major: MajorStage,
    sub: Option<SubStage>,
}

impl StageId {
    pub const REACTION: StageId = StageId { major: MajorStage::Reaction, sub: None };
    pub const PA_REPRESENTATION: StageId =
        StageId { major: MajorStage::PerceptualAnalysis, sub: Some(SubStage::Representation) };
    pub const PA_FORMAL_ANALYSIS: StageId =
        StageId { major: MajorStage::PerceptualAnalysis, sub: Some(SubStage::FormalAnalysis) };
    pub const PA_FORMAL_CHARACTERIZATION: StageId =
        StageId { major: MajorStage::PerceptualAnalysis, sub: Some(SubStage::FormalCharacterization) };
    pub const PERSONAL_INTERPRETATION: StageId = StageId { major: MajorStage::PersonalInterpretation, sub: None };
    pub const CONTEXTUAL_EXAMINATION: StageId = StageId { major: MajorStage::ContextualExamination, sub: None };
    pub const SYN_RESOLUTION: StageId = StageId { major: MajorStage::Synthesis, sub: Some(SubStage::Resolution) };
    pub const SYN_EVALUATION: StageId = StageId { major: MajorStage::Synthesis, sub: Some(SubStage::Evaluation) };
    pub const CANT_DEFINE: StageId = StageId { major: MajorStage::CantDefine, sub: None };

    /// The eight flow slots in order.
    pub const FLOW: [StageId; 8] = [
        StageId::REACTION,
        StageId::PA_REPRESENTATION,
        StageId::PA_FORMAL_ANALYSIS,
        StageId::PA_FORMAL_CHARACTERIZATION,
        StageId::PERSONAL_INTERPRETATION,
        StageId::CONTEXTUAL_EXAMINATION,
        StageId::SYN_RESOLUTION,
        StageId::SYN_EVALUATION,
    ];

    pub fn new(major: MajorStage, sub: Option<SubStage>) -> Result<Self, StageError> {
        if let Some(sub) = sub {
            if !sub.allowed_under(major) {
                return Err(StageError::InvalidSub { major, sub });
            }
        }
        Ok(StageId { major, sub })
    }

    /// A major-only label.
    pub const fn major_only(major: MajorStage) -> Self {
        StageId { major, sub: None }
    }

    pub fn major(self) -> MajorStage {
        self.major
    }

    pub fn sub(self) -> Option<SubStage> {
        self.sub
    }

    /// Drops the sub-stage.
    pub fn major_label(self) -> StageId {
        StageId::major_only(self.major)
    }

    /// Position in the flow, or `None` for labels that are not flow slots
    /// (major-only PA/Synthesis labels and `CantDefine`).
    pub fn flow_index(self) -> Option<usize> {
        StageId::FLOW.iter().position(|s| *s == self)
    }

    pub fn is_flow_slot(self) -> bool {
        self.flow_index().is_some()
    }

    /// Canonical name, e.g. `"perceptual_analysis.formal_analysis"`.
    pub fn name(self) -> String {
        match self.sub {
            Some(sub) => format!("{}.{}", self.major.name(), sub.name()),
            None => self.major.name().to_owned(),
        }
    }

    /// Heading used in prompts, e.g. `"Perceptual Analysis_Formal Analysis"`.
    pub fn title(self) -> String {
        match self.sub {
            Some(sub) => format!("{}_{}", self.major.title(), sub.title()),
            None => self.major.title().to_owned(),
        }
    }

    /// Placeholder identifier used by the prompt template, e.g.
    /// `"perceptual_analysis_formal_analysis"`.
    pub fn placeholder(self) -> String {
        self.name().replace('.', "_")
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for StageId {
    type Err = StageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (major_name, sub_name) = match s.split_once('.') {
            Some((m, sub)) => (m, Some(sub)),
            None => (s, None),
        };
        let major = [
            MajorStage::Reaction,
            MajorStage::PerceptualAnalysis,
            MajorStage::PersonalInterpretation,
            MajorStage::ContextualExamination,
            MajorStage::Synthesis,
            MajorStage::CantDefine,
        ]
        .into_iter()
        .find(|m| m.name() == major_name)
        .ok_or_else(|| StageError::UnknownName(s.to_owned()))?;
        let sub = match sub_name {
            None => None,
            Some(name) => Some(
                [
                    SubStage::Representation,
                    SubStage::FormalAnalysis,
                    SubStage::FormalCharacterization,
                    SubStage::Resolution,
                    SubStage::Evaluation,
                ]
                .into_iter()
                .find(|sub| sub.name() == name)
                .ok_or_else(|| StageError::UnknownName(s.to_owned()))?,
            ),
        };
        StageId::new(major, sub)
    }
}

impl Serialize for StageId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for StageId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One row of the framework: exemplars for a single flow slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageItem {
    pub slot: StageId,
    pub step_explanation: String,
    #[serde(default)]
    pub utterance_example: String,
    pub questioning_example: String,
    #[serde(default)]
    pub feedback_example: String,
}

#[derive(Debug, Error)]
pub enum FrameworkError {
    #[error("flow slot {0} has no items")]
    MissingSlot(StageId),
    #[error("malformed framework record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// All exemplar items, grouped by flow slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameworkTable {
    items: BTreeMap<StageId, Vec<StageItem>>,
    version: String,
}

impl FrameworkTable {
    pub const VERSION: &'static str = "2";

    /// Builds a table, checking that every flow slot is populated.
    pub fn from_items(items: impl IntoIterator<Item = StageItem>) -> Result<Self, FrameworkError> {
        let mut map: BTreeMap<StageId, Vec<StageItem>> = BTreeMap::new();
        for item in items {
            map.entry(item.slot).or_default().push(item);
        }
        for slot in StageId::FLOW {
            if map.get(&slot).is_none_or(Vec::is_empty) {
                return Err(FrameworkError::MissingSlot(slot));
            }
        }
        Ok(FrameworkTable { items: map, version: Self::VERSION.to_owned() })
    }

    /// The table shipped with the crate.
    pub fn default_table() -> Self {
        load_framework_str(DEFAULT_FRAMEWORK_JSONL).expect("shipped framework is valid")
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn items(&self, slot: StageId) -> &[StageItem] {
        self.items.get(&slot).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = &StageItem> {
        self.items.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.items.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Canonical JSONL: slots in flow order, items in load order, compact JSON.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for item in self.iter() {
            out.push_str(&serde_json::to_string(item).expect("stage item serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }
}

fn parse_item(line: &str, line_no: usize) -> Result<StageItem, FrameworkError> {
    let item: StageItem = serde_json::from_str(line)
        .map_err(|e| FrameworkError::MalformedRecord { line: line_no, reason: e.to_string() })?;
    if !item.slot.is_flow_slot() {
        return Err(FrameworkError::MalformedRecord {
            line: line_no,
            reason: format!("{} is not a flow slot", item.slot),
        });
    }
    for (field, value) in
        [("step_explanation", &item.step_explanation), ("questioning_example", &item.questioning_example)]
    {
        if value.trim().is_empty() {
            return Err(FrameworkError::MalformedRecord { line: line_no, reason: format!("{field} is empty") });
        }
    }
    Ok(item)
}

pub fn load_framework_reader<R: BufRead>(reader: R) -> Result<FrameworkTable, FrameworkError> {
    let mut items = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(parse_item(&line, idx + 1)?);
    }
    FrameworkTable::from_items(items)
}

pub fn load_framework_str(source: &str) -> Result<FrameworkTable, FrameworkError> {
    load_framework_reader(source.as_bytes())
}

pub fn load_framework(path: impl AsRef<Path>) -> Result<FrameworkTable, FrameworkError> {
    let file = std::fs::File::open(path)?;
    load_framework_reader(std::io::BufReader::new(file))
}

/// One chosen item per flow slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSelection {
    items: Vec<StageItem>,
    seed: u64,
}

impl FlowSelection {
    /// `items` must hold exactly one item per flow slot, in flow order.
    pub fn new(items: Vec<StageItem>, seed: u64) -> Option<Self> {
        let ok =
            items.len() == StageId::FLOW.len() && items.iter().zip(StageId::FLOW).all(|(item, slot)| item.slot == slot);
        ok.then_some(FlowSelection { items, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn items(&self) -> &[StageItem] {
        &self.items
    }

    /// Panics if `slot` is not a flow slot.
    pub fn get(&self, slot: StageId) -> &StageItem {
        let idx = slot.flow_index().expect("flow slot");
        &self.items[idx]
    }
}

/// Picks one item uniformly from each slot, deterministically in `seed`.
pub fn sample_flow(table: &FrameworkTable, seed: u64) -> FlowSelection {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = StageId::FLOW
        .iter()
        .map(|slot| {
            let candidates = table.items(*slot);
            candidates[rng.random_range(0..candidates.len())].clone()
        })
        .collect();
    FlowSelection { items, seed }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    #[default]
    Linear,
    Recursive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Advance,
    Stay,
    Revisit(StageId),
}

/// Where a session stands after a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Stage(StageId),
    Completed,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid transition from {from}: {reason}")]
pub struct InvalidTransition {
    pub from: StageId,
    pub reason: String,
}

pub fn next_stage(current: StageId, mode: FlowMode, signal: Signal) -> Result<Progress, InvalidTransition> {
    let invalid = |reason: &str| InvalidTransition { from: current, reason: reason.to_owned() };
    let idx = current.flow_index().ok_or_else(|| invalid("not a flow slot"))?;
    match (mode, signal) {
        (_, Signal::Stay) => Ok(Progress::Stage(current)),
        (_, Signal::Advance) => Ok(StageId::FLOW.get(idx + 1).map_or(Progress::Completed, |s| Progress::Stage(*s))),
        (FlowMode::Linear, Signal::Revisit(_)) => Err(invalid("revisit is not allowed in linear mode")),
        (FlowMode::Recursive, Signal::Revisit(target)) => match target.flow_index() {
            Some(t) if t < idx => Ok(Progress::Stage(target)),
            Some(_) => Err(invalid("revisit target must precede the current slot")),
            None => Err(invalid("revisit target is not a flow slot")),
        },
    }
}

/// Cue phrases per teachable major stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    cues: Vec<(MajorStage, Vec<Vec<String>>)>,
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("stage {0} has no cue phrases")]
    EmptyStage(&'static str),
    #[error("lexicon key {0:?} is not a teachable major stage")]
    UnknownStage(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Lexicon {
    pub fn new(cues: BTreeMap<MajorStage, Vec<String>>) -> Result<Self, LexiconError> {
        let mut out = Vec::new();
        for stage in MajorStage::TEACHABLE {
            let phrases: Vec<Vec<String>> =
                cues.get(&stage).into_iter().flatten().map(|p| text::tokens(p)).filter(|t| !t.is_empty()).collect();
            if phrases.is_empty() {
                return Err(LexiconError::EmptyStage(stage.name()));
            }
            out.push((stage, phrases));
        }
        Ok(Lexicon { cues: out })
    }

    /// Parses `{"reaction": ["..."], ...}`.
    pub fn from_json(json: &str) -> Result<Self, LexiconError> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(json)?;
        let mut cues = BTreeMap::new();
        for (key, phrases) in raw {
            let stage =
                MajorStage::TEACHABLE.into_iter().find(|s| s.name() == key).ok_or(LexiconError::UnknownStage(key))?;
            cues.insert(stage, phrases);
        }
        Lexicon::new(cues)
    }

    pub fn default_lexicon() -> Self {
        Lexicon::from_json(DEFAULT_LEXICON_JSON).expect("shipped lexicon is valid")
    }

    /// Normalized cue phrases for `stage` (space-joined tokens).
    pub fn phrases(&self, stage: MajorStage) -> Vec<String> {
        self.cues
            .iter()
            .find(|(s, _)| *s == stage)
            .map(|(_, p)| p.iter().map(|t| t.join(" ")).collect())
            .unwrap_or_default()
    }

    /// Every cue token across all stages.
    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.cues.iter().flat_map(|(_, p)| p.iter().flatten().map(String::as_str))
    }

    /// Hit counts per stage, in flow order.
    pub fn hits(&self, text: &str) -> Vec<(MajorStage, usize)> {
        let toks = text::tokens(text);
        self.cues
            .iter()
            .map(|(stage, phrases)| (*stage, phrases.iter().map(|p| text::count_phrase(&toks, p)).sum()))
            .collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot classify empty text")]
pub struct EmptyText;

/// Labels `text` with the major stage whose cues hit most often.
///
/// Ties go to the earliest stage; no hits at all yields `CantDefine`.
pub fn classify_turn(text: &str, lexicon: &Lexicon) -> Result<StageId, EmptyText> {
    if text.trim().is_empty() {
        return Err(EmptyText);
    }
    let mut best: Option<(MajorStage, usize)> = None;
    for (stage, count) in lexicon.hits(text) {
        if count > 0 && best.is_none_or(|(_, c)| count > c) {
            best = Some((stage, count));
        }
    }
    Ok(StageId::major_only(best.map_or(MajorStage::CantDefine, |(s, _)| s)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(slot: StageId, q: &str) -> StageItem {
        StageItem {
            slot,
            step_explanation: format!("explain {slot}"),
            utterance_example: String::new(),
            questioning_example: q.to_owned(),
            feedback_example: String::new(),
        }
    }

    fn singleton_table() -> FrameworkTable {
        FrameworkTable::from_items(StageId::FLOW.iter().map(|s| item(*s, "q?"))).unwrap()
    }

    #[test]
    fn sub_stage_validity() {
        assert!(StageId::new(MajorStage::Reaction, Some(SubStage::Representation)).is_err());
        assert!(StageId::new(MajorStage::Synthesis, Some(SubStage::FormalAnalysis)).is_err());
        assert!(StageId::new(MajorStage::PerceptualAnalysis, Some(SubStage::FormalAnalysis)).is_ok());
        assert!(StageId::new(MajorStage::PerceptualAnalysis, None).is_ok());
    }

    #[test]
    fn flow_order_is_total_and_derived_ord_agrees() {
        let mut sorted = StageId::FLOW;
        sorted.sort();
        assert_eq!(sorted, StageId::FLOW);
        for (i, s) in StageId::FLOW.iter().enumerate() {
            assert_eq!(s.flow_index(), Some(i));
            assert_eq!(s.name().parse::<StageId>().unwrap(), *s);
        }
        assert_eq!(StageId::CANT_DEFINE.flow_index(), None);
        assert_eq!(StageId::major_only(MajorStage::Synthesis).flow_index(), None);
    }

    #[test]
    fn default_table_matches_shipped_exemplars() {
        let table = FrameworkTable::default_table();
        assert_eq!(table.version(), "2");
        for slot in StageId::FLOW {
            assert!(!table.items(slot).is_empty(), "{slot}");
        }
        assert_eq!(
            table.items(StageId::REACTION)[0].step_explanation,
            "Initial, general, global, intuitive, evaluative response."
        );
        assert_eq!(table.to_jsonl(), DEFAULT_FRAMEWORK_JSONL);
    }

    #[test]
    fn missing_slot_is_reported() {
        let src: String =
            DEFAULT_FRAMEWORK_JSONL.lines().filter(|l| !l.contains("\"reaction\"")).map(|l| format!("{l}\n")).collect();
        match load_framework_str(&src) {
            Err(FrameworkError::MissingSlot(s)) => assert_eq!(s, StageId::REACTION),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_records_report_their_line() {
        let mut lines: Vec<&str> = DEFAULT_FRAMEWORK_JSONL.lines().collect();
        lines[2] = r#"{"slot":"reaction","step_explanation":"","questioning_example":"q"}"#;
        match load_framework_str(&lines.join("\n")) {
            Err(FrameworkError::MalformedRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        lines[2] = r#"{"slot":"synthesis","step_explanation":"x","questioning_example":"q"}"#;
        assert!(matches!(load_framework_str(&lines.join("\n")), Err(FrameworkError::MalformedRecord { line: 3, .. })));
        lines[2] = "not json";
        assert!(matches!(load_framework_str(&lines.join("\n")), Err(FrameworkError::MalformedRecord { line: 3, .. })));
    }

    #[test]
    fn singleton_sampling_is_forced() {
        let table = singleton_table();
        for seed in [0, 1, u64::MAX] {
            let flow = sample_flow(&table, seed);
            assert_eq!(flow.items().len(), 8);
            for slot in StageId::FLOW {
                assert_eq!(flow.get(slot), &table.items(slot)[0]);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let mut items: Vec<StageItem> = StageId::FLOW.iter().map(|s| item(*s, "q?")).collect();
        items.push(item(StageId::REACTION, "other?"));
        let table = FrameworkTable::from_items(items).unwrap();
        assert_eq!(sample_flow(&table, 42), sample_flow(&table, 42));
    }

    #[test]
    fn sampling_frequencies_are_uniform() {
        let mut items: Vec<StageItem> = StageId::FLOW.iter().map(|s| item(*s, "q0")).collect();
        items.push(item(StageId::CONTEXTUAL_EXAMINATION, "q1"));
        items.push(item(StageId::CONTEXTUAL_EXAMINATION, "q2"));
        let table = FrameworkTable::from_items(items).unwrap();
        let mut tally = BTreeMap::<String, usize>::new();
        for seed in 0..3000 {
            let flow = sample_flow(&table, seed);
            *tally.entry(flow.get(StageId::CONTEXTUAL_EXAMINATION).questioning_example.clone()).or_default() += 1;
        }
        assert_eq!(tally.len(), 3);
        for (q, n) in tally {
            let freq = n as f64 / 3000.0;
            assert!((freq - 1.0 / 3.0).abs() <= 0.05, "{q}: {freq}");
        }
    }

    #[test]
    fn transitions() {
        use FlowMode::*;
        assert_eq!(
            next_stage(StageId::REACTION, Linear, Signal::Advance),
            Ok(Progress::Stage(StageId::PA_REPRESENTATION))
        );
        assert_eq!(next_stage(StageId::SYN_EVALUATION, Linear, Signal::Advance), Ok(Progress::Completed));
        assert_eq!(
            next_stage(StageId::CONTEXTUAL_EXAMINATION, Recursive, Signal::Revisit(StageId::PERSONAL_INTERPRETATION)),
            Ok(Progress::Stage(StageId::PERSONAL_INTERPRETATION))
        );
        assert_eq!(next_stage(StageId::REACTION, Linear, Signal::Stay), Ok(Progress::Stage(StageId::REACTION)));
        assert!(next_stage(StageId::CONTEXTUAL_EXAMINATION, Linear, Signal::Revisit(StageId::REACTION)).is_err());
        assert!(next_stage(StageId::REACTION, Recursive, Signal::Revisit(StageId::REACTION)).is_err());
        assert!(next_stage(StageId::REACTION, Recursive, Signal::Revisit(StageId::SYN_EVALUATION)).is_err());
        assert!(next_stage(StageId::CANT_DEFINE, Linear, Signal::Advance).is_err());
    }

    #[test]
    fn classify_reaction_question() {
        let lex = Lexicon::default_lexicon();
        assert_eq!(classify_turn("How does this work of art make you feel?", &lex), Ok(StageId::REACTION));
        assert_eq!(classify_turn("   ", &lex), Err(EmptyText));
        assert_eq!(classify_turn("", &lex), Err(EmptyText));
        assert_eq!(classify_turn("Hello there, friend.", &lex), Ok(StageId::CANT_DEFINE));
    }

    #[test]
    fn classify_ties_go_to_earliest_stage() {
        let lex = Lexicon::default_lexicon();
        // one reaction cue, one synthesis cue
        assert_eq!(classify_turn("Your first impression, overall", &lex), Ok(StageId::REACTION));
    }

    #[test]
    fn shipped_questioning_examples_classify_to_their_stage() {
        let lex = Lexicon::default_lexicon();
        for item in FrameworkTable::default_table().iter() {
            assert_eq!(
                classify_turn(&item.questioning_example, &lex).unwrap(),
                item.slot.major_label(),
                "{}",
                item.questioning_example
            );
        }
    }

    #[test]
    fn lexicon_rejects_empty_stage() {
        assert!(matches!(Lexicon::from_json(r#"{"reaction": ["feel"]}"#), Err(LexiconError::EmptyStage(_))));
        assert!(matches!(Lexicon::from_json(r#"{"cant_define": ["x"]}"#), Err(LexiconError::UnknownStage(_))));
    }
}
