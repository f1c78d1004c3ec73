//! The `docent` command line.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use docent_core::corpus::{
    allocate_by_style, sample_artwork, ContentPolicy, CorpusError, CurationPlan, StyleDistribution,
};
use docent_core::evalkit::{
    agreement, compare, read_annotations, tally_stages, word_stats, EvalError, EvalReport, Side, LABELS,
};
use docent_core::framework::{sample_flow, FrameworkTable};
use docent_core::persona::{generate_personas, personas_to_jsonl, PersonaError, PersonaSource};
use docent_core::pipeline::{
    export_instruct, parse_transcript, read_records, run_batch, validate_transcript, BatchConfig, BatchError,
    BatchInputs, DialogueTranscript, GenerationBackend, RuleConfig,
};
use docent_core::promptc::{compose_bundle, render_prompt_with, PromptError, PromptTemplate, TemplateDefaults};
use serde_json::json;

use crate::config::{BackendConfig, GatewayConfig};
use crate::state::{build_backends, load_persona_set, load_store, AppState};

#[derive(Debug, Parser)]
#[command(name = "docent", version, about = "Art-appreciation docent toolkit")]
pub struct Cli {
    /// Gateway TOML config (backend, artifacts dir, port).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Import, plan and sample the artwork corpus.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Generate virtual student personas.
    #[command(subcommand)]
    Personas(PersonasCmd),
    /// Render generation prompts.
    #[command(subcommand)]
    Prompt(PromptCmd),
    /// Generate, validate and export dialogue datasets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Tally and compare annotated transcripts.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
}

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    /// Validate a corpus JSONL file and print per-category counts.
    Import { file: PathBuf },
    /// Allocate `total` artworks across styles in proportion to a reference.
    Plan {
        /// Style-count JSON object, or `wikiart` for the shipped reference.
        #[arg(long, default_value = "wikiart")]
        reference: String,
        #[arg(long)]
        total: u64,
    },
    /// Draw artworks following a plan; prints JSONL.
    Sample {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Content::School)]
        content: Content,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Content {
    School,
    All,
}

#[derive(Debug, Subcommand)]
pub enum PersonasCmd {
    Gen {
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = PersonaBackend::Template)]
        backend: PersonaBackend,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PersonaBackend {
    Template,
    Llm,
}

#[derive(Debug, Subcommand)]
pub enum PromptCmd {
    Render {
        #[arg(long)]
        artwork: String,
        #[arg(long)]
        persona: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        personas: Option<PathBuf>,
        /// Template-defaults file overriding the shipped sections.
        #[arg(long)]
        defaults: Option<PathBuf>,
        #[arg(long)]
        template: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = DatasetBackend::Mock)]
        backend: DatasetBackend,
        /// Mock script JSONL (checksum, completion).
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        /// Keep generating until `n` records are valid.
        #[arg(long)]
        fill: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        personas: Option<PathBuf>,
    },
    /// Check InstructRecord JSONL or a text transcript.
    Validate {
        file: PathBuf,
        #[arg(long, default_value_t = 20)]
        max_exchanges: usize,
    },
    /// Convert text transcripts to InstructRecord JSONL.
    Export {
        transcripts: Vec<PathBuf>,
        #[arg(long)]
        artwork: String,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DatasetBackend {
    Mock,
    Remote,
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Stage histogram of an annotation CSV.
    Tally {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Mean words per turn over JSONL records or text transcripts.
    Words {
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = SideArg::Teacher)]
        side: SideArg,
    },
    /// Side-by-side report; each model is `NAME=ANNOTATIONS.csv[,TRANSCRIPTS]`.
    Compare {
        #[arg(long = "model", required = true)]
        models: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    /// Percent agreement between two annotation files.
    Agree { a: PathBuf, b: PathBuf },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SideArg {
    Teacher,
    Student,
    Both,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Side {
        match s {
            SideArg::Teacher => Side::Teacher,
            SideArg::Student => Side::Student,
            SideArg::Both => Side::Both,
        }
    }
}

/// A failure that already carries its machine-readable code.
#[derive(Debug)]
pub struct Failure {
    pub code: &'static str,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

/// Machine-readable code for an error chain.
pub fn error_code(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.code;
        }
        if cause.is::<CorpusError>() {
            return "CorpusError";
        }
        if cause.is::<PersonaError>() {
            return "PersonaError";
        }
        if cause.is::<PromptError>() {
            return "PromptError";
        }
        if cause.is::<BatchError>() {
            return "DatasetError";
        }
        if cause.is::<EvalError>() {
            return "EvalError";
        }
        if cause.is::<std::io::Error>() {
            return "IoError";
        }
    }
    "Error"
}

/// The single JSON line printed on failure.
pub fn error_line(err: &anyhow::Error) -> String {
    json!({ "error": error_code(err), "message": format!("{err:#}") }).to_string()
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<GatewayConfig> {
    path.map_or_else(|| Ok(GatewayConfig::default()), GatewayConfig::load)
}

fn remote_backend(config: &GatewayConfig) -> anyhow::Result<Arc<dyn GenerationBackend>> {
    if !matches!(config.backend, BackendConfig::Remote(_)) {
        bail!(Failure { code: "NoRemoteBackend", message: "no remote backend configured; pass --config".into() });
    }
    Ok(build_backends(&config.backend)?.1)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Corpus(cmd) => corpus(cmd),
        Command::Personas(PersonasCmd::Gen { count, seed, backend, out }) => {
            let personas = match backend {
                PersonaBackend::Template => generate_personas(count, seed, PersonaSource::Template)?,
                PersonaBackend::Llm => {
                    let b = remote_backend(&config)?;
                    generate_personas(count, seed, PersonaSource::Backend(b.as_ref()))?
                }
            };
            emit(out.as_deref(), &personas_to_jsonl(&personas))
        }
        Command::Prompt(PromptCmd::Render { artwork, persona, seed, corpus, personas, defaults, template }) => {
            let store = load_store(corpus.as_deref())?;
            let art = store.get(&artwork).ok_or_else(|| unknown_artwork(&artwork))?;
            let set = load_persona_set(personas.as_deref())?;
            let student = set
                .iter()
                .find(|p| p.id == persona)
                .ok_or_else(|| Failure { code: "UnknownPersona", message: format!("no persona {persona:?}") })?;
            let defaults = match defaults {
                Some(p) => TemplateDefaults::default().with_overrides(&read(&p)?)?,
                None => TemplateDefaults::default(),
            };
            let template = match template {
                Some(p) => PromptTemplate::parse(&read(&p)?)?,
                None => PromptTemplate::default(),
            };
            let flow = sample_flow(&FrameworkTable::default_table(), seed);
            let bundle = compose_bundle(&flow, student, art, &defaults)?;
            emit(None, &render_prompt_with(&template, &bundle).text)
        }
        Command::Dataset(cmd) => dataset(cmd, &config),
        Command::Eval(cmd) => eval(cmd),
        Command::Serve { port } => {
            let mut config = config;
            if let Some(p) = port {
                config.port = p;
            }
            serve(config)
        }
    }
}

fn unknown_artwork(id: &str) -> Failure {
    Failure { code: "UnknownArtwork", message: format!("no artwork {id:?}") }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn corpus(cmd: CorpusCmd) -> anyhow::Result<()> {
    match cmd {
        CorpusCmd::Import { file } => {
            let store = load_store(Some(&file))?;
            let body = json!({ "artworks": store.len(), "categories": store.category_counts() });
            emit(None, &serde_json::to_string_pretty(&body)?)
        }
        CorpusCmd::Plan { reference, total } => {
            let dist = if reference == "wikiart" {
                StyleDistribution::wikiart()
            } else {
                StyleDistribution::from_json(&read(Path::new(&reference))?)?
            };
            let plan = allocate_by_style(&dist, total)?;
            emit(None, &serde_json::to_string_pretty(&plan)?)
        }
        CorpusCmd::Sample { plan, seed, corpus, content } => {
            let plan: CurationPlan = serde_json::from_str(&read(&plan)?).context("parsing plan")?;
            let store = load_store(corpus.as_deref())?;
            let policy = match content {
                Content::School => ContentPolicy::school_default(),
                Content::All => ContentPolicy::allow_all(),
            };
            let picked = sample_artwork(&store, &plan, seed, &policy)?;
            let mut out = String::new();
            for a in &picked {
                out.push_str(&serde_json::to_string(a)?);
                out.push('\n');
            }
            emit(None, &out)
        }
    }
}

fn load_transcripts(path: &Path) -> anyhow::Result<Vec<(String, DialogueTranscript)>> {
    let text = read(path)?;
    if text.trim_start().starts_with('{') {
        let records = read_records(text.as_bytes()).with_context(|| format!("reading {}", path.display()))?;
        Ok(records.into_iter().map(|r| (r.id.clone(), r.to_transcript())).collect())
    } else {
        let t = parse_transcript(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(vec![(path.display().to_string(), t)])
    }
}

fn dataset(cmd: DatasetCmd, config: &GatewayConfig) -> anyhow::Result<()> {
    match cmd {
        DatasetCmd::Gen { n, seed, backend, script, workers, fill, out, corpus, personas } => {
            let backend: Arc<dyn GenerationBackend> = match backend {
                DatasetBackend::Mock => build_backends(&BackendConfig::Mock { script })?.1,
                DatasetBackend::Remote => remote_backend(config)?,
            };
            let inputs =
                BatchInputs::with_defaults(load_store(corpus.as_deref())?, load_persona_set(personas.as_deref())?);
            let mut cfg = BatchConfig::new(n, seed);
            cfg.workers = workers;
            cfg.fill_to_n = fill;
            let summary = run_batch(&cfg, &inputs, backend.as_ref(), &out)?;
            emit(None, &serde_json::to_string(&summary)?)
        }
        DatasetCmd::Validate { file, max_exchanges } => {
            let rules = RuleConfig { max_exchanges, ..RuleConfig::default() };
            let text = read(&file)?;
            let mut failures = Vec::new();
            let mut warnings = 0;
            let mut count = 0;
            if text.trim_start().starts_with('{') {
                for record in read_records(text.as_bytes())? {
                    count += 1;
                    let mut problems = record.schema_problems();
                    let report = validate_transcript(&record.to_transcript(), &rules);
                    warnings += report.warnings.len();
                    problems.extend(report.errors.iter().map(|f| f.message.clone()));
                    if !problems.is_empty() {
                        failures.push(json!({ "id": record.id, "problems": problems }));
                    }
                }
            } else {
                count = 1;
                match parse_transcript(&text) {
                    Ok(t) => {
                        let report = validate_transcript(&t, &rules);
                        warnings += report.warnings.len();
                        if !report.is_valid() {
                            let problems: Vec<_> = report.errors.iter().map(|f| f.message.clone()).collect();
                            failures.push(json!({ "id": file.display().to_string(), "problems": problems }));
                        }
                    }
                    Err(e) => failures.push(json!({ "id": file.display().to_string(), "problems": [e.to_string()] })),
                }
            }
            let invalid = failures.len();
            let body = json!({
                "records": count,
                "valid": count - invalid,
                "invalid": invalid,
                "warnings": warnings,
                "failures": failures,
            });
            emit(None, &serde_json::to_string(&body)?)?;
            if invalid > 0 {
                bail!(Failure { code: "InvalidRecords", message: format!("{invalid} of {count} records are invalid") });
            }
            Ok(())
        }
        DatasetCmd::Export { transcripts, artwork, corpus, out } => {
            let store = load_store(corpus.as_deref())?;
            let art = store.get(&artwork).ok_or_else(|| unknown_artwork(&artwork))?;
            let mut lines = String::new();
            for path in &transcripts {
                let t = parse_transcript(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
                let id = path.file_stem().map_or_else(|| "transcript".into(), |s| s.to_string_lossy().into_owned());
                let record = export_instruct(&t, art, &id)
                    .map_err(|e| Failure { code: "ExportError", message: e.to_string() })?;
                lines.push_str(&record.to_json_line());
                lines.push('\n');
            }
            emit(out.as_deref(), &lines)
        }
    }
}

fn eval(cmd: EvalCmd) -> anyhow::Result<()> {
    match cmd {
        EvalCmd::Tally { file, json } => {
            let h = tally_stages(&read_annotations(
                File::open(&file).with_context(|| format!("opening {}", file.display()))?,
            )?);
            if json {
                return emit(None, &serde_json::to_string_pretty(&h)?);
            }
            let mut out = String::new();
            for label in LABELS {
                out.push_str(&format!("{:<26} {}\n", label.title(), h.get(label)));
            }
            out.push_str(&format!("{:<26} {}\n", "Total", h.total));
            emit(None, &out)
        }
        EvalCmd::Words { files, side } => {
            let mut all = Vec::new();
            for f in &files {
                all.extend(load_transcripts(f)?.into_iter().map(|(_, t)| t));
            }
            let stats = word_stats(&all, side.into())?;
            emit(None, &serde_json::to_string(&stats)?)
        }
        EvalCmd::Compare { models, json } => {
            let mut reports = BTreeMap::new();
            for spec in &models {
                let (name, files) = spec.split_once('=').ok_or_else(|| Failure {
                    code: "InvalidArgument",
                    message: format!("expected NAME=FILE, got {spec:?}"),
                })?;
                let (csv, transcripts) = files.split_once(',').map_or((files, None), |(a, b)| (a, Some(b)));
                let annotations =
                    read_annotations(BufReader::new(File::open(csv).with_context(|| format!("opening {csv}"))?))?;
                let ts = match transcripts {
                    Some(p) => load_transcripts(Path::new(p))?.into_iter().map(|(_, t)| t).collect(),
                    None => Vec::new(),
                };
                reports.insert(name.to_owned(), EvalReport::build(&annotations, &ts));
            }
            let report = compare(&reports)?;
            emit(None, &if json { report.to_json() } else { report.to_text_table() })
        }
        EvalCmd::Agree { a, b } => {
            let load = |p: &Path| -> anyhow::Result<_> {
                Ok(read_annotations(File::open(p).with_context(|| format!("opening {}", p.display()))?)?)
            };
            let share = agreement(&load(&a)?, &load(&b)?)?;
            emit(None, &json!({ "agreement": share }).to_string())
        }
    }
}

fn serve(config: GatewayConfig) -> anyhow::Result<()> {
    let addr = format!("{}:{}", config.host, config.port);
    let state = Arc::new(AppState::new(config)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        tracing::info!(%addr, "docent gateway listening");
        crate::api::serve(state, listener).await?;
        Ok(())
    })
}
