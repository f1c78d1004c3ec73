//! Python bindings. Structured results cross the boundary as plain dicts
//! and lists decoded from JSON.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs::File;
use std::io::BufReader;

use docent_core::corpus::{allocate_by_style as allocate, CorpusStore, StyleDistribution};
use docent_core::evalkit::{read_annotations, tally_stages as tally, word_stats as words, Side, LABELS};
use docent_core::framework::{classify_turn as classify, sample_flow, FlowMode, FrameworkTable, Lexicon};
use docent_core::orchestrator::{close_session, handle_student_turn, start_session, DocentPolicy, SessionState};
use docent_core::persona::{generate_personas as personas, PersonaSource, StudentPersona};
use docent_core::pipeline::{
    parse_transcript as parse, read_records, run_batch as batch, validate_transcript as validate, BatchConfig,
    BatchInputs, DialogueTranscript, MockBackend, RuleConfig,
};
use docent_core::promptc::{compose_bundle, render_prompt as render, TemplateDefaults};
use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn value_error(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_error)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn template_personas() -> PyResult<Vec<StudentPersona>> {
    personas(20, 0, PersonaSource::Template).map_err(value_error)
}

/// Largest-remainder allocation; `counts=None` uses the WikiArt reference.
#[pyfunction]
#[pyo3(signature = (total, counts=None))]
fn allocate_by_style(total: u64, counts: Option<BTreeMap<String, u64>>) -> PyResult<BTreeMap<String, u64>> {
    let dist = match counts {
        Some(c) => StyleDistribution::new(c).map_err(value_error)?,
        None => StyleDistribution::wikiart(),
    };
    Ok(allocate(&dist, total).map_err(value_error)?.allocations)
}

#[pyfunction]
fn artworks(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &CorpusStore::default_store().artworks())
}

/// Stage label (`"reaction"`, `"perceptual_analysis"`, ...) for one utterance.
#[pyfunction]
fn classify_turn(text: &str) -> PyResult<String> {
    Ok(classify(text, &Lexicon::default_lexicon()).map_err(|_| value_error("text is empty"))?.name())
}

#[pyfunction]
#[pyo3(signature = (count, seed=0))]
fn generate_personas(py: Python<'_>, count: usize, seed: u64) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &personas(count, seed, PersonaSource::Template).map_err(value_error)?)
}

/// Generation prompt for one artwork, template persona (`p01`..`p20`) and flow seed.
#[pyfunction]
fn render_prompt(artwork_id: &str, persona_id: &str, seed: u64) -> PyResult<String> {
    let store = CorpusStore::default_store();
    let art = store.get(artwork_id).ok_or_else(|| PyKeyError::new_err(artwork_id.to_owned()))?;
    let set = template_personas()?;
    let persona = set.iter().find(|p| p.id == persona_id).ok_or_else(|| PyKeyError::new_err(persona_id.to_owned()))?;
    let flow = sample_flow(&FrameworkTable::default_table(), seed);
    let bundle = compose_bundle(&flow, persona, art, &TemplateDefaults::default()).map_err(value_error)?;
    Ok(render(&bundle).text)
}

/// `[(role, text), ...]` from `student:` / `teacher:` text.
#[pyfunction]
fn parse_transcript(text: &str) -> PyResult<Vec<(String, String)>> {
    let t = parse(text).map_err(value_error)?;
    Ok(t.turns.into_iter().map(|turn| (turn.role.to_string(), turn.text)).collect())
}

#[pyfunction]
#[pyo3(signature = (text, max_exchanges=20))]
fn validate_transcript<'py>(py: Python<'py>, text: &str, max_exchanges: usize) -> PyResult<Bound<'py, PyAny>> {
    let t = parse(text).map_err(value_error)?;
    let report = validate(&t, &RuleConfig { max_exchanges, ..RuleConfig::default() });
    to_py(py, &report)
}

/// Generates `n` dialogues with the offline backend into `out` (JSONL).
#[pyfunction]
#[pyo3(signature = (n, seed, out, workers=1, fill_to_n=false))]
fn run_batch(
    py: Python<'_>,
    n: usize,
    seed: u64,
    out: std::path::PathBuf,
    workers: usize,
    fill_to_n: bool,
) -> PyResult<Bound<'_, PyAny>> {
    let inputs = BatchInputs::with_defaults(CorpusStore::default_store(), template_personas()?);
    let mut config = BatchConfig::new(n, seed);
    config.workers = workers;
    config.fill_to_n = fill_to_n;
    let summary = py.detach(|| batch(&config, &inputs, &MockBackend::synthesizing(), &out)).map_err(value_error)?;
    to_py(py, &summary)
}

/// Label counts of an annotation CSV.
#[pyfunction]
fn tally_stages(path: std::path::PathBuf) -> PyResult<BTreeMap<String, u64>> {
    let file = File::open(&path).map_err(value_error)?;
    let h = tally(&read_annotations(file).map_err(value_error)?);
    Ok(LABELS.iter().map(|l| (l.name(), h.get(*l))).collect())
}

/// Mean words per turn over InstructRecord JSONL files.
#[pyfunction]
#[pyo3(signature = (paths, side="teacher"))]
fn word_stats<'py>(py: Python<'py>, paths: Vec<std::path::PathBuf>, side: &str) -> PyResult<Bound<'py, PyAny>> {
    let side = match side {
        "teacher" => Side::Teacher,
        "student" => Side::Student,
        "both" => Side::Both,
        other => return Err(value_error(format!("unknown side {other:?}"))),
    };
    let mut all: Vec<DialogueTranscript> = Vec::new();
    for p in &paths {
        let records = read_records(BufReader::new(File::open(p).map_err(value_error)?)).map_err(value_error)?;
        all.extend(records.iter().map(|r| r.to_transcript()));
    }
    to_py(py, &words(&all, side).map_err(value_error)?)
}

/// A live docent session on the shipped corpus, driven by framework exemplars.
#[pyclass(module = "docent")]
struct Session {
    state: SessionState,
    backend: MockBackend,
    #[pyo3(get)]
    opening: String,
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (artwork_id, seed=0, mode="linear", max_exchanges=20))]
    fn new(artwork_id: &str, seed: u64, mode: &str, max_exchanges: usize) -> PyResult<Self> {
        let art = CorpusStore::default_store()
            .get(artwork_id)
            .cloned()
            .ok_or_else(|| PyKeyError::new_err(artwork_id.to_owned()))?;
        let mode = match mode {
            "linear" => FlowMode::Linear,
            "recursive" => FlowMode::Recursive,
            other => return Err(value_error(format!("unknown mode {other:?}"))),
        };
        let policy = DocentPolicy::new(mode, max_exchanges).map_err(value_error)?;
        let backend = MockBackend::silent();
        let flow = sample_flow(&FrameworkTable::default_table(), seed);
        let (state, reply) = start_session(format!("py-{seed}"), art, policy, flow, &backend);
        Ok(Session { state, backend, opening: reply.text })
    }

    /// Sends one student turn and returns the docent's reply.
    fn reply(&mut self, text: &str) -> PyResult<String> {
        let (reply, next) = handle_student_turn(&self.state, text, &self.backend).map_err(value_error)?;
        self.state = next;
        Ok(reply.text)
    }

    #[getter]
    fn current_stage(&self) -> String {
        self.state.current_stage.name()
    }

    #[getter]
    fn exchanges_used(&self) -> usize {
        self.state.exchanges_used
    }

    #[getter]
    fn completed(&self) -> bool {
        self.state.completed
    }

    fn transcript(&self) -> String {
        self.state.transcript().to_text()
    }

    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &close_session(&self.state))
    }
}

#[pymodule]
fn docent(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(allocate_by_style, m)?)?;
    m.add_function(wrap_pyfunction!(artworks, m)?)?;
    m.add_function(wrap_pyfunction!(classify_turn, m)?)?;
    m.add_function(wrap_pyfunction!(generate_personas, m)?)?;
    m.add_function(wrap_pyfunction!(parse_transcript, m)?)?;
    m.add_function(wrap_pyfunction!(render_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(run_batch, m)?)?;
    m.add_function(wrap_pyfunction!(tally_stages, m)?)?;
    m.add_function(wrap_pyfunction!(validate_transcript, m)?)?;
    m.add_function(wrap_pyfunction!(word_stats, m)?)?;
    Ok(())
}
