//! Evaluation: stage histograms over annotated docent questions, per-turn
//! word statistics, percent agreement between annotators and side-by-side
//! model comparison.
//!
//! Annotation files are CSV with the header
//! `transcript_id,turn_index,role,label,annotator`. Labels may name a flow
//! slot (`perceptual_analysis.formal_analysis`) or a major stage; both count
//! toward the major stage. `cant_define` marks a turn that fits no stage.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::framework::{classify_turn, Lexicon, MajorStage, StageId};
use crate::pipeline::transcript::{DialogueTranscript, Role};
use crate::text;

/// The six histogram labels in report order.
pub const LABELS: [StageId; 6] = [
    StageId::major_only(MajorStage::Reaction),
    StageId::major_only(MajorStage::PerceptualAnalysis),
    StageId::major_only(MajorStage::PersonalInterpretation),
    StageId::major_only(MajorStage::ContextualExamination),
    StageId::major_only(MajorStage::Synthesis),
    StageId::CANT_DEFINE,
];

pub const VERBOSE_MEAN_WORDS: f64 = 100.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("malformed annotation at line {line}: {reason}")]
    MalformedAnnotation { line: usize, reason: String },
    #[error("no turns selected")]
    NoTurns,
    #[error("annotation sets do not cover the same turns: {0}")]
    CoverageMismatch(String),
    #[error("at least two models are needed, got {0}")]
    TooFewModels(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedTurn {
    pub transcript_id: String,
    pub turn_index: usize,
    pub role: Role,
    /// Always a major stage or `cant_define`.
    pub label: StageId,
    pub annotator: String,
}

#[derive(Debug, Deserialize)]
struct AnnotationRow {
    transcript_id: String,
    turn_index: usize,
    role: String,
    label: String,
    annotator: String,
}

pub fn read_annotations<R: Read>(reader: R) -> Result<Vec<AnnotatedTurn>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<AnnotationRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| EvalError::MalformedAnnotation { line, reason: e.to_string() })?;
        let bad = |reason: String| EvalError::MalformedAnnotation { line, reason };
        if !row.role.eq_ignore_ascii_case("teacher") {
            return Err(bad(format!("only teacher turns are annotated, got role {:?}", row.role)));
        }
        let label: StageId = row.label.parse().map_err(|e| bad(format!("{e}")))?;
        if row.transcript_id.is_empty() {
            return Err(bad("empty transcript_id".into()));
        }
        out.push(AnnotatedTurn {
            transcript_id: row.transcript_id,
            turn_index: row.turn_index,
            role: Role::Teacher,
            label: label.major_label(),
            annotator: row.annotator,
        });
    }
    Ok(out)
}

pub fn write_annotations<W: Write>(writer: W, annotations: &[AnnotatedTurn]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["transcript_id", "turn_index", "role", "label", "annotator"])?;
    for a in annotations {
        w.write_record([
            a.transcript_id.as_str(),
            &a.turn_index.to_string(),
            a.role.prefix(),
            &a.label.name(),
            a.annotator.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Label counts; every one of the six labels is present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageHistogram {
    pub counts: BTreeMap<StageId, u64>,
    pub total: u64,
}

impl StageHistogram {
    pub fn get(&self, label: StageId) -> u64 {
        self.counts.get(&label.major_label()).copied().unwrap_or(0)
    }

    /// Counts in [`LABELS`] order.
    pub fn as_array(&self) -> [u64; 6] {
        LABELS.map(|l| self.get(l))
    }
}

pub fn tally_stages(annotations: &[AnnotatedTurn]) -> StageHistogram {
    let mut counts: BTreeMap<StageId, u64> = LABELS.iter().map(|l| (*l, 0)).collect();
    for a in annotations {
        *counts.entry(a.label.major_label()).or_default() += 1;
    }
    StageHistogram { counts, total: annotations.len() as u64 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Teacher,
    Student,
    Both,
}

impl Side {
    fn selects(self, role: Role) -> bool {
        match self {
            Side::Both => true,
            Side::Teacher => role == Role::Teacher,
            Side::Student => role == Role::Student,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordStats {
    pub mean_words_per_turn: f64,
    pub turns_counted: usize,
    pub total_words: usize,
}

/// Mean whitespace-delimited words per selected turn.
pub fn word_stats(transcripts: &[DialogueTranscript], side: Side) -> Result<WordStats, EvalError> {
    let (turns, words) = transcripts
        .iter()
        .flat_map(|t| &t.turns)
        .filter(|t| side.selects(t.role))
        .fold((0usize, 0usize), |(n, w), t| (n + 1, w + text::word_count(&t.text)));
    if turns == 0 {
        return Err(EvalError::NoTurns);
    }
    Ok(WordStats { mean_words_per_turn: words as f64 / turns as f64, turns_counted: turns, total_words: words })
}

/// Fraction of turns on which two annotation sets agree.
pub fn agreement(a: &[AnnotatedTurn], b: &[AnnotatedTurn]) -> Result<f64, EvalError> {
    fn index(set: &[AnnotatedTurn], name: &str) -> Result<BTreeMap<(String, usize), StageId>, EvalError> {
        let mut map = BTreeMap::new();
        for x in set {
            if map.insert((x.transcript_id.clone(), x.turn_index), x.label.major_label()).is_some() {
                return Err(EvalError::CoverageMismatch(format!(
                    "{name} labels {}#{} twice",
                    x.transcript_id, x.turn_index
                )));
            }
        }
        Ok(map)
    }
    let ia = index(a, "first set")?;
    let ib = index(b, "second set")?;
    if ia.is_empty() && ib.is_empty() {
        return Err(EvalError::CoverageMismatch("both sets are empty".into()));
    }
    let ka: BTreeSet<_> = ia.keys().collect();
    let kb: BTreeSet<_> = ib.keys().collect();
    if ka != kb {
        let only_a = ka.difference(&kb).count();
        let only_b = kb.difference(&ka).count();
        return Err(EvalError::CoverageMismatch(format!(
            "{only_a} turns only in the first set, {only_b} only in the second"
        )));
    }
    let same = ia.iter().filter(|(k, v)| ib[*k] == **v).count();
    Ok(same as f64 / ia.len() as f64)
}

/// Labels every teacher turn with the stage classifier.
pub fn auto_annotate(transcripts: &[(String, DialogueTranscript)], lexicon: &Lexicon) -> Vec<AnnotatedTurn> {
    let mut out = Vec::new();
    for (id, t) in transcripts {
        for (i, turn) in t.turns.iter().enumerate() {
            if turn.role != Role::Teacher {
                continue;
            }
            let label = classify_turn(&turn.text, lexicon).unwrap_or(StageId::CANT_DEFINE);
            out.push(AnnotatedTurn {
                transcript_id: id.clone(),
                turn_index: i,
                role: Role::Teacher,
                label: label.major_label(),
                annotator: "auto".to_owned(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub stage_histogram: StageHistogram,
    pub total: u64,
    pub mean_words_per_turn: f64,
    pub turns_counted: usize,
    /// Interrogative sentences across the counted teacher turns.
    pub question_count: usize,
}

impl EvalReport {
    /// Word statistics cover teacher turns; an empty transcript list leaves
    /// them at zero.
    pub fn build(annotations: &[AnnotatedTurn], transcripts: &[DialogueTranscript]) -> EvalReport {
        let stage_histogram = tally_stages(annotations);
        let words = word_stats(transcripts, Side::Teacher).ok();
        let question_count = transcripts
            .iter()
            .flat_map(|t| &t.turns)
            .filter(|t| t.role == Role::Teacher)
            .map(|t| text::question_count(&t.text))
            .sum();
        EvalReport {
            total: stage_histogram.total,
            stage_histogram,
            mean_words_per_turn: words.map_or(0.0, |w| w.mean_words_per_turn),
            turns_counted: words.map_or(0, |w| w.turns_counted),
            question_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flag {
    StageGap { model: String, stage: StageId },
    Dominance { model: String, stage: StageId, share: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verbosity {
    Conversational,
    Encyclopedic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelColumn {
    pub model: String,
    pub report: EvalReport,
    /// None when no turns were counted.
    pub verbosity: Option<Verbosity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub models: Vec<ModelColumn>,
    pub flags: Vec<Flag>,
}

pub fn compare(reports: &BTreeMap<String, EvalReport>) -> Result<ComparisonReport, EvalError> {
    if reports.len() < 2 {
        return Err(EvalError::TooFewModels(reports.len()));
    }
    let mut models = Vec::new();
    let mut flags = Vec::new();
    for (name, report) in reports {
        let h = &report.stage_histogram;
        for stage in &LABELS[..5] {
            if h.get(*stage) == 0 {
                flags.push(Flag::StageGap { model: name.clone(), stage: *stage });
            }
        }
        if h.total > 0 {
            for stage in LABELS {
                let share = h.get(stage) as f64 / h.total as f64;
                if share > 0.5 {
                    flags.push(Flag::Dominance { model: name.clone(), stage, share });
                }
            }
        }
        let verbosity = (report.turns_counted > 0).then_some(if report.mean_words_per_turn > VERBOSE_MEAN_WORDS {
            Verbosity::Encyclopedic
        } else {
            Verbosity::Conversational
        });
        models.push(ModelColumn { model: name.clone(), report: report.clone(), verbosity });
    }
    Ok(ComparisonReport { models, flags })
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text side-by-side table followed by the flags.
    pub fn to_text_table(&self) -> String {
        let width = self.models.iter().map(|m| m.model.len()).max().unwrap_or(0).max(10);
        let mut out = String::new();
        let _ = write!(out, "{:<26}", "label");
        for m in &self.models {
            let _ = write!(out, " {:>width$}", m.model);
        }
        out.push('\n');
        let mut row = |label: &str, cells: Vec<String>| {
            let _ = write!(out, "{label:<26}");
            for c in cells {
                let _ = write!(out, " {c:>width$}");
            }
            out.push('\n');
        };
        for stage in LABELS {
            row(&stage.name(), self.models.iter().map(|m| m.report.stage_histogram.get(stage).to_string()).collect());
        }
        row("total", self.models.iter().map(|m| m.report.total.to_string()).collect());
        row(
            "mean_words_per_turn",
            self.models.iter().map(|m| format!("{:.2}", m.report.mean_words_per_turn)).collect(),
        );
        row(
            "verbosity",
            self.models
                .iter()
                .map(|m| match m.verbosity {
                    Some(Verbosity::Encyclopedic) => "encyclopedic".to_owned(),
                    Some(Verbosity::Conversational) => "conversational".to_owned(),
                    None => "-".to_owned(),
                })
                .collect(),
        );
        for f in &self.flags {
            match f {
                Flag::StageGap { model, stage } => {
                    let _ = writeln!(out, "flag: {model} never reaches {}", stage.name());
                }
                Flag::Dominance { model, stage, share } => {
                    let _ = writeln!(out, "flag: {model} dominated by {} ({:.1}%)", stage.name(), share * 100.0);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::transcript::{parse_transcript, Turn};

    fn ann(id: &str, i: usize, label: &str) -> AnnotatedTurn {
        AnnotatedTurn {
            transcript_id: id.into(),
            turn_index: i,
            role: Role::Teacher,
            label: label.parse::<StageId>().unwrap().major_label(),
            annotator: "x".into(),
        }
    }

    #[test]
    fn csv_round_trip_and_slot_labels() {
        let src = "transcript_id,turn_index,role,label,annotator\n\
                   t1,1,teacher,perceptual_analysis.formal_analysis,a\n\
                   t1,3,teacher,cant_define,a\n";
        let rows = read_annotations(src.as_bytes()).unwrap();
        assert_eq!(rows[0].label, StageId::major_only(MajorStage::PerceptualAnalysis));
        let mut buf = Vec::new();
        write_annotations(&mut buf, &rows).unwrap();
        assert_eq!(read_annotations(buf.as_slice()).unwrap(), rows);
        let bad = "transcript_id,turn_index,role,label,annotator\nt1,1,student,reaction,a\n";
        assert!(matches!(read_annotations(bad.as_bytes()), Err(EvalError::MalformedAnnotation { line: 2, .. })));
    }

    #[test]
    fn empty_tally() {
        let h = tally_stages(&[]);
        assert_eq!(h.as_array(), [0; 6]);
        assert_eq!(h.total, 0);
    }

    #[test]
    fn word_stats_hand_example() {
        let t = DialogueTranscript::new(vec![Turn::new(Role::Student, "a b c"), Turn::new(Role::Teacher, "d e")]);
        assert_eq!(word_stats(std::slice::from_ref(&t), Side::Both).unwrap().mean_words_per_turn, 2.5);
        assert_eq!(word_stats(&[t], Side::Teacher).unwrap().mean_words_per_turn, 2.0);
        assert!(matches!(word_stats(&[], Side::Both), Err(EvalError::NoTurns)));
    }

    #[test]
    fn agreement_cases() {
        let a: Vec<_> = (0..180).map(|i| ann("t", i, "reaction")).collect();
        let mut b = a.clone();
        for x in b.iter_mut().take(18) {
            x.label = StageId::CANT_DEFINE;
        }
        assert_eq!(agreement(&a, &a).unwrap(), 1.0);
        assert!((agreement(&a, &b).unwrap() - 0.9).abs() < 1e-12);
        assert!(matches!(agreement(&a[..1], &[ann("u", 0, "reaction")]), Err(EvalError::CoverageMismatch(_))));
    }

    #[test]
    fn compare_flags() {
        let mk = |counts: [u64; 6], mean: f64| {
            let mut anns = Vec::new();
            for (label, n) in LABELS.iter().zip(counts) {
                for _ in 0..n {
                    anns.push(ann("t", anns.len(), &label.name()));
                }
            }
            let mut r = EvalReport::build(&anns, &[]);
            r.mean_words_per_turn = mean;
            r.turns_counted = 180;
            r
        };
        let reports = BTreeMap::from([
            ("llava".to_owned(), mk([19, 24, 115, 21, 0, 1], 21.0)),
            ("gpt4".to_owned(), mk([14, 34, 42, 54, 31, 5], 248.0)),
        ]);
        let c = compare(&reports).unwrap();
        assert!(c.flags.contains(&Flag::StageGap { model: "llava".into(), stage: LABELS[4] }));
        assert!(c.flags.iter().any(|f| matches!(f, Flag::Dominance { model, stage, share }
            if model == "llava" && *stage == LABELS[2] && (share - 115.0 / 180.0).abs() < 1e-12)));
        assert_eq!(c.models[0].verbosity, Some(Verbosity::Encyclopedic));
        assert_eq!(c.to_json(), compare(&reports).unwrap().to_json());
        assert!(c.to_text_table().contains("personal_interpretation"));
        assert!(matches!(compare(&BTreeMap::new()), Err(EvalError::TooFewModels(0))));
    }

    #[test]
    fn auto_annotation_of_exemplar_questions() {
        let t = parse_transcript(
            "teacher: How does this work of art make you feel?\nstudent: ok\n\
             teacher: What mood is presented? How are we meant to feel in the presence of this piece?",
        )
        .unwrap();
        let input = vec![("t1".to_owned(), t)];
        let a = auto_annotate(&input, &Lexicon::default_lexicon());
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].label, LABELS[0]);
        assert_eq!(a[1].label, LABELS[3]);
        assert_eq!(a, auto_annotate(&input, &Lexicon::default_lexicon()));
        assert!(auto_annotate(&[("e".into(), DialogueTranscript::default())], &Lexicon::default_lexicon()).is_empty());
    }
}
