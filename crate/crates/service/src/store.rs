//! One JSON document per trial under a data directory. Writes go to a temporary
//! file that is renamed over the old one, so a crash leaves either version.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use uuid::Uuid;

use crate::error::ServiceError;
use crate::record::TrialRecord;

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    locks: Mutex<HashMap<Uuid, Arc<tokio::sync::Mutex<()>>>>,
}

impl Store {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Store {
            dir,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn parse_id(id: &str) -> Result<Uuid, ServiceError> {
        Uuid::parse_str(id).map_err(|_| ServiceError::NotFound(id.to_string()))
    }

    fn path(&self, id: Uuid) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Writer lock for one trial; requests on different trials do not contend.
    pub fn lock(&self, id: Uuid) -> Arc<tokio::sync::Mutex<()>> {
        self.locks.lock().expect("lock table poisoned").entry(id).or_default().clone()
    }

    pub fn load(&self, id: Uuid) -> Result<TrialRecord, ServiceError> {
        let text = match fs::read_to_string(self.path(id)) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ServiceError::NotFound(id.to_string())),
            Err(e) => return Err(e.into()),
        };
        let record: TrialRecord =
            serde_json::from_str(&text).map_err(|e| ServiceError::Corrupt(format!("{id}: {e}")))?;
        if record.replay()? != record.state {
            return Err(ServiceError::Corrupt(format!("{id}: audit log does not replay to the stored state")));
        }
        Ok(record)
    }

    pub fn save(&self, record: &TrialRecord) -> Result<(), ServiceError> {
        let path = self.path(record.trial_id);
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(record).map_err(|e| ServiceError::Corrupt(e.to_string()))?;
        fs::write(&tmp, text)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn exists(&self, id: Uuid) -> bool {
        self.path(id).exists()
    }
}
