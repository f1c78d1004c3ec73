//! Session persistence: one JSON document per session.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use thiserror::Error;

use super::session::SessionState;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid session id {0:?}")]
    InvalidId(String),
    #[error("corrupt session document {path}: {source}")]
    Corrupt { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub trait SessionStore: Send + Sync {
    fn load(&self, id: &str) -> Result<Option<SessionState>, StoreError>;
    fn save(&self, state: &SessionState) -> Result<(), StoreError>;
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    sessions: Mutex<HashMap<String, SessionState>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        MemoryStore::default()
    }
}

impl SessionStore for MemoryStore {
    fn load(&self, id: &str) -> Result<Option<SessionState>, StoreError> {
        Ok(self.sessions.lock().expect("store lock").get(id).cloned())
    }

    fn save(&self, state: &SessionState) -> Result<(), StoreError> {
        self.sessions.lock().expect("store lock").insert(state.session_id.clone(), state.clone());
        Ok(())
    }
}

/// Stores `<dir>/<id>.json`, replaced atomically on every save.
#[derive(Debug, Clone)]
pub struct FileStore {
    dir: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl FileStore {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(FileStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> Result<PathBuf, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::InvalidId(id.to_owned()));
        }
        Ok(self.dir.join(format!("{id}.json")))
    }
}

impl SessionStore for FileStore {
    fn load(&self, id: &str) -> Result<Option<SessionState>, StoreError> {
        let path = self.path(id)?;
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        serde_json::from_slice(&bytes).map(Some).map_err(|source| StoreError::Corrupt { path, source })
    }

    fn save(&self, state: &SessionState) -> Result<(), StoreError> {
        let path = self.path(&state.session_id)?;
        let tmp = self.dir.join(format!(".{}.json.tmp", state.session_id));
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&serde_json::to_vec_pretty(state).expect("session serializes"))?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusStore;
    use crate::framework::{sample_flow, FrameworkTable};
    use crate::orchestrator::{handle_student_turn, start_session, DocentPolicy};
    use crate::pipeline::backend::MockBackend;

    #[test]
    fn file_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::new(dir.path()).unwrap();
        let art = CorpusStore::default_store().artworks()[3].clone();
        let flow = sample_flow(&FrameworkTable::default_table(), 1);
        let backend = MockBackend::silent();
        let (s, _) = start_session("abc-1", art, DocentPolicy::default(), flow, &backend);
        let (_, s) = handle_student_turn(&s, "I notice the bright colors everywhere.", &backend).unwrap();
        store.save(&s).unwrap();
        assert_eq!(store.load("abc-1").unwrap(), Some(s));
        assert!(store.load("missing").unwrap().is_none());
        assert!(matches!(store.load("../etc"), Err(StoreError::InvalidId(_))));
    }
}
