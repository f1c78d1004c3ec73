//! Shared service state: corpus, backends, live sessions and dataset jobs.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use anyhow::Context;
use docent_core::corpus::{import_corpus, CorpusStore};
use docent_core::framework::FrameworkTable;
use docent_core::orchestrator::{FileStore, SessionState, SessionStore};
use docent_core::persona::{generate_personas, load_personas, PersonaSource, StudentPersona};
use docent_core::pipeline::{BatchInputs, GenerationBackend, MockBackend, RemoteBackend};
use serde_json::Value;
use tokio::sync::Semaphore;

use crate::config::{BackendConfig, GatewayConfig};
use crate::jobs::DatasetJob;

pub type SharedBackend = Arc<dyn GenerationBackend>;

/// A live session plus the replies already sent, keyed by client message id.
pub struct SessionSlot {
    pub state: SessionState,
    pub replies: HashMap<String, Value>,
}

pub struct AppState {
    pub config: GatewayConfig,
    pub framework: FrameworkTable,
    pub inputs: Arc<BatchInputs>,
    pub session_backend: SharedBackend,
    pub dataset_backend: SharedBackend,
    pub sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<SessionSlot>>>>,
    pub store: Arc<dyn SessionStore>,
    pub jobs: Mutex<HashMap<String, DatasetJob>>,
    pub job_pool: Arc<Semaphore>,
}

/// Backends for live sessions and for dataset jobs. The mock session
/// backend is silent so sessions run on the framework exemplars.
pub fn build_backends(config: &BackendConfig) -> anyhow::Result<(SharedBackend, SharedBackend)> {
    Ok(match config {
        BackendConfig::Mock { script } => {
            let dataset = match script {
                Some(path) => MockBackend::from_script_file(path)
                    .with_context(|| format!("loading mock script {}", path.display()))?
                    .with_fallback(|p| Some(docent_core::pipeline::backend::synthesize_dialogue(p))),
                None => MockBackend::synthesizing(),
            };
            (Arc::new(MockBackend::silent()), Arc::new(dataset))
        }
        BackendConfig::Remote(remote) => {
            let backend: SharedBackend = Arc::new(RemoteBackend::from_env(remote.clone())?);
            (backend.clone(), backend)
        }
    })
}

pub fn load_store(path: Option<&std::path::Path>) -> anyhow::Result<CorpusStore> {
    match path {
        Some(p) => import_corpus(p).with_context(|| format!("importing {}", p.display())),
        None => Ok(CorpusStore::default_store()),
    }
}

pub fn load_persona_set(path: Option<&std::path::Path>) -> anyhow::Result<Vec<StudentPersona>> {
    match path {
        Some(p) => load_personas(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(generate_personas(20, 0, PersonaSource::Template)?),
    }
}

impl AppState {
    pub fn new(config: GatewayConfig) -> anyhow::Result<Self> {
        let (session_backend, dataset_backend) = build_backends(&config.backend)?;
        let store = load_store(config.corpus.as_deref())?;
        let personas = load_persona_set(config.personas.as_deref())?;
        AppState::with_parts(config, store, personas, session_backend, dataset_backend)
    }

    pub fn with_parts(
        config: GatewayConfig,
        store: CorpusStore,
        personas: Vec<StudentPersona>,
        session_backend: SharedBackend,
        dataset_backend: SharedBackend,
    ) -> anyhow::Result<Self> {
        std::fs::create_dir_all(config.artifacts_dir.join("jobs"))
            .with_context(|| format!("creating {}", config.artifacts_dir.display()))?;
        let sessions_dir = config.artifacts_dir.join("sessions");
        let session_store =
            FileStore::new(&sessions_dir).with_context(|| format!("opening {}", sessions_dir.display()))?;
        Ok(AppState {
            framework: FrameworkTable::default_table(),
            inputs: Arc::new(BatchInputs::with_defaults(store, personas)),
            session_backend,
            dataset_backend,
            sessions: Mutex::new(HashMap::new()),
            store: Arc::new(session_store),
            jobs: Mutex::new(HashMap::new()),
            job_pool: Arc::new(Semaphore::new(config.job_workers)),
            config,
        })
    }

    pub fn corpus(&self) -> &CorpusStore {
        &self.inputs.store
    }

    pub(crate) fn cached_slot(&self, id: &str) -> Option<Arc<tokio::sync::Mutex<SessionSlot>>> {
        self.sessions.lock().expect("session map lock").get(id).cloned()
    }

    /// Inserts a slot unless another request got there first.
    pub(crate) fn insert_slot(&self, state: SessionState) -> Arc<tokio::sync::Mutex<SessionSlot>> {
        let mut map = self.sessions.lock().expect("session map lock");
        map.entry(state.session_id.clone())
            .or_insert_with(|| Arc::new(tokio::sync::Mutex::new(SessionSlot { state, replies: HashMap::new() })))
            .clone()
    }
}
