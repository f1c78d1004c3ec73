//! Batch dataset generation.
//!
//! Every job derives its own seed from `(master_seed, index)`, so the output
//! depends only on the inputs and never on worker scheduling. Results pass
//! through a single writer that emits records in job-index order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::backend::{BackendError, GenerationBackend};
use super::export::{export_instruct, InstructRecord};
use super::transcript::parse_transcript;
use super::validate::{validate_transcript, RuleConfig};
use crate::corpus::CorpusStore;
use crate::framework::{sample_flow, FrameworkTable};
use crate::persona::StudentPersona;
use crate::promptc::{
    compose_bundle, render_prompt_with, PromptError, PromptTemplate, RenderedPrompt, TemplateDefaults,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(30) }
    }
}

impl RetryPolicy {
    pub fn no_delay() -> Self {
        RetryPolicy { base_delay: Duration::ZERO, max_delay: Duration::ZERO, ..Default::default() }
    }

    fn delay(&self, attempt: u32, hint: Option<Duration>) -> Duration {
        let backoff = self.base_delay.saturating_mul(1 << attempt.min(16));
        hint.unwrap_or(backoff).min(self.max_delay)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Attempts beyond the first.
    pub retries: u32,
}

/// Sends the prompt and returns the backend text untouched. Rate-limit
/// replies are retried with exponential backoff.
pub fn generate_dialogue(
    prompt: &RenderedPrompt,
    backend: &dyn GenerationBackend,
    retry: &RetryPolicy,
) -> Result<Completion, BackendError> {
    let mut attempt = 0;
    loop {
        tracing::debug!(checksum = %prompt.checksum, backend = backend.name(), attempt, "generation request");
        match backend.complete(&prompt.text) {
            Ok(text) => {
                tracing::debug!(checksum = %prompt.checksum, bytes = text.len(), "generation response");
                return Ok(Completion { text, retries: attempt });
            }
            Err(BackendError::RateLimited { retry_after }) if attempt + 1 < retry.max_attempts => {
                let wait = retry.delay(attempt, retry_after);
                tracing::warn!(checksum = %prompt.checksum, ?wait, "rate limited, retrying");
                std::thread::sleep(wait);
                attempt += 1;
            }
            Err(e) => {
                tracing::warn!(checksum = %prompt.checksum, error = %e, "generation failed");
                return Err(e);
            }
        }
    }
}

/// Everything a batch samples from.
#[derive(Debug, Clone)]
pub struct BatchInputs {
    pub framework: FrameworkTable,
    pub store: CorpusStore,
    pub personas: Vec<StudentPersona>,
    pub defaults: TemplateDefaults,
    pub template: PromptTemplate,
}

impl BatchInputs {
    /// Shipped framework, prompt defaults and template.
    pub fn with_defaults(store: CorpusStore, personas: Vec<StudentPersona>) -> Self {
        BatchInputs {
            framework: FrameworkTable::default_table(),
            store,
            personas,
            defaults: TemplateDefaults::default(),
            template: PromptTemplate::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub n: usize,
    pub master_seed: u64,
    pub workers: usize,
    pub rules: RuleConfig,
    pub retry: RetryPolicy,
    /// Keep launching jobs until `n` valid records exist (capped at 4n attempts).
    pub fill_to_n: bool,
}

impl BatchConfig {
    pub fn new(n: usize, master_seed: u64) -> Self {
        BatchConfig {
            n,
            master_seed,
            workers: 1,
            rules: RuleConfig::default(),
            retry: RetryPolicy::default(),
            fill_to_n: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("batch inputs are empty: {0}")]
    EmptyInputs(&'static str),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub attempted: usize,
    pub valid: usize,
    pub invalid: usize,
    /// Per rule (or parse failure kind), how many transcripts broke it.
    pub invalid_by_rule: BTreeMap<String, usize>,
    pub backend_failures: usize,
    /// Total retry attempts across all jobs.
    pub retried: usize,
    pub output: PathBuf,
}

/// Stable seed for job `index`.
pub fn job_seed(master_seed: u64, index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(b"docent-job");
    h.update(master_seed.to_le_bytes());
    h.update((index as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobPlan {
    pub index: usize,
    pub seed: u64,
    pub artwork_id: String,
    pub persona_id: String,
    pub prompt: RenderedPrompt,
}

/// The sampled inputs and rendered prompt for job `index`.
pub fn plan_job(inputs: &BatchInputs, master_seed: u64, index: usize) -> Result<JobPlan, BatchError> {
    if inputs.personas.is_empty() {
        return Err(BatchError::EmptyInputs("no personas"));
    }
    if inputs.store.is_empty() {
        return Err(BatchError::EmptyInputs("no artworks"));
    }
    let seed = job_seed(master_seed, index);
    let flow = sample_flow(&inputs.framework, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let persona = &inputs.personas[rng.random_range(0..inputs.personas.len())];
    let artwork = &inputs.store.artworks()[rng.random_range(0..inputs.store.len())];
    let bundle = compose_bundle(&flow, persona, artwork, &inputs.defaults)?;
    Ok(JobPlan {
        index,
        seed,
        artwork_id: artwork.id.clone(),
        persona_id: persona.id.clone(),
        prompt: render_prompt_with(&inputs.template, &bundle),
    })
}

#[derive(Debug)]
enum JobOutcome {
    Exported(InstructRecord),
    Rejected(Vec<String>),
    BackendFailed,
}

fn run_job(
    inputs: &BatchInputs,
    config: &BatchConfig,
    backend: &dyn GenerationBackend,
    index: usize,
) -> Result<(JobOutcome, u32), BatchError> {
    let plan = plan_job(inputs, config.master_seed, index)?;
    let completion = match generate_dialogue(&plan.prompt, backend, &config.retry) {
        Ok(c) => c,
        Err(_) => return Ok((JobOutcome::BackendFailed, 0)),
    };
    let outcome = match parse_transcript(&completion.text) {
        Err(e) => {
            let kind = match e {
                super::transcript::TranscriptError::ParseError { .. } => "ParseError",
                super::transcript::TranscriptError::AlternationViolated(_) => "AlternationViolated",
                super::transcript::TranscriptError::EmptyTranscript => "EmptyTranscript",
            };
            JobOutcome::Rejected(vec![kind.to_owned()])
        }
        Ok(t) => {
            let t = t.with_source(&plan.prompt.checksum, &plan.artwork_id);
            let report = validate_transcript(&t, &config.rules);
            if !report.is_valid() {
                JobOutcome::Rejected(report.error_rules().iter().map(|r| r.to_string()).collect())
            } else {
                let artwork = inputs.store.get(&plan.artwork_id).expect("planned artwork exists");
                let id = format!("{}-{:05}", config.master_seed, index);
                match export_instruct(&t, artwork, &id) {
                    Ok(record) => JobOutcome::Exported(record),
                    Err(e) => JobOutcome::Rejected(vec![match e {
                        super::export::ExportError::MissingImageRef(_) => "MissingImageRef".to_owned(),
                        super::export::ExportError::InvalidTranscript(_) => "InvalidTranscript".to_owned(),
                    }]),
                }
            }
        }
    };
    Ok((outcome, completion.retries))
}

struct Tally<W: Write> {
    out: W,
    pending: BTreeMap<usize, (JobOutcome, u32)>,
    next: usize,
    summary: BatchSummary,
}

impl<W: Write> Tally<W> {
    fn accept(&mut self, index: usize, result: (JobOutcome, u32)) -> std::io::Result<()> {
        self.pending.insert(index, result);
        while let Some((outcome, retries)) = self.pending.remove(&self.next) {
            self.next += 1;
            let s = &mut self.summary;
            s.attempted += 1;
            s.retried += retries as usize;
            match outcome {
                JobOutcome::Exported(record) => {
                    s.valid += 1;
                    self.out.write_all(record.to_json_line().as_bytes())?;
                    self.out.write_all(b"\n")?;
                }
                JobOutcome::Rejected(rules) => {
                    s.invalid += 1;
                    for rule in rules {
                        *s.invalid_by_rule.entry(rule).or_default() += 1;
                    }
                }
                JobOutcome::BackendFailed => s.backend_failures += 1,
            }
        }
        Ok(())
    }
}

fn run_range<W: Write>(
    range: std::ops::Range<usize>,
    workers: usize,
    inputs: &BatchInputs,
    config: &BatchConfig,
    backend: &dyn GenerationBackend,
    tally: &mut Tally<W>,
) -> Result<(), BatchError> {
    let next = AtomicUsize::new(range.start);
    let end = range.end;
    std::thread::scope(|scope| -> Result<(), BatchError> {
        let (tx, rx) = mpsc::channel::<(usize, Result<(JobOutcome, u32), BatchError>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= end {
                    break;
                }
                if tx.send((index, run_job(inputs, config, backend, index))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (index, result) in rx {
            tally.accept(index, result?)?;
        }
        Ok(())
    })
}

/// Generates, validates and exports `config.n` dialogues into `out` (JSONL).
pub fn run_batch(
    config: &BatchConfig,
    inputs: &BatchInputs,
    backend: &dyn GenerationBackend,
    out: &Path,
) -> Result<BatchSummary, BatchError> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let file = BufWriter::new(File::create(out)?);
    let workers = config.workers.max(1).min(backend.max_concurrency().unwrap_or(usize::MAX).max(1));
    let mut tally = Tally {
        out: file,
        pending: BTreeMap::new(),
        next: 0,
        summary: BatchSummary {
            attempted: 0,
            valid: 0,
            invalid: 0,
            invalid_by_rule: BTreeMap::new(),
            backend_failures: 0,
            retried: 0,
            output: out.to_path_buf(),
        },
    };
    tracing::info!(n = config.n, seed = config.master_seed, workers, "starting batch");
    let cap = config.n.saturating_mul(4);
    let mut range = 0..config.n;
    loop {
        run_range(range.clone(), workers, inputs, config, backend, &mut tally)?;
        let missing = config.n.saturating_sub(tally.summary.valid);
        if !config.fill_to_n || missing == 0 || range.end >= cap {
            break;
        }
        range = range.end..(range.end + missing).min(cap);
    }
    tally.out.flush()?;
    tracing::info!(valid = tally.summary.valid, attempted = tally.summary.attempted, "batch finished");
    Ok(tally.summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn job_seeds_are_stable_and_distinct() {
        assert_eq!(job_seed(1, 0), job_seed(1, 0));
        assert_ne!(job_seed(1, 0), job_seed(1, 1));
        assert_ne!(job_seed(1, 0), job_seed(2, 0));
    }

    #[test]
    fn backoff_honours_hint_and_cap() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay(0, None), Duration::from_millis(500));
        assert_eq!(p.delay(2, None), Duration::from_millis(2000));
        assert_eq!(p.delay(1, Some(Duration::from_secs(3))), Duration::from_secs(3));
        assert_eq!(p.delay(20, None), Duration::from_secs(30));
    }
}
