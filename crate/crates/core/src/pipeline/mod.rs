//! Batch dialogue generation, transcript parsing, rule validation and
//! instruction-tuning export.

pub mod backend;
pub mod batch;
pub mod export;
pub mod transcript;
pub mod validate;

pub use backend::{BackendError, GenerationBackend, MockBackend, RemoteBackend, RemoteConfig};
pub use batch::{
    generate_dialogue, job_seed, plan_job, run_batch, BatchConfig, BatchError, BatchInputs, BatchSummary, Completion,
    JobPlan, RetryPolicy,
};
pub use export::{export_instruct, read_records, write_records, ExportError, InstructRecord, IMAGE_TOKEN};
pub use transcript::{parse_transcript, DialogueTranscript, Role, TranscriptError, Turn};
pub use validate::{validate_transcript, RuleConfig, RuleId, ValidationReport, Verdict};
