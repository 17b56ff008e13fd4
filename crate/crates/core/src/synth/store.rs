//! On-disk artifact store: one JSON file per problem plus `index.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::validate::JudgeArtifact;

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexStatus {
    Candidate,
    Validated,
    Rejected,
    NotNeeded,
    ManualReview,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub status: IndexStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempts_used: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("artifact store io at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("artifact store json at {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

pub struct ArtifactStore {
    dir: PathBuf,
    index: Mutex<BTreeMap<String, IndexEntry>>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// File-name-safe form of a problem id.
fn file_stem(problem_id: &str) -> String {
    let safe: String = problem_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    // keep distinct ids distinct after sanitizing
    if safe == problem_id {
        safe
    } else {
        let h = problem_id.bytes().fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3));
        format!("{safe}-{h:016x}")
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    io::Write::write_all(&mut tmp, bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| StoreError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

impl ArtifactStore {
    /// Opens (creating if needed) a store directory and loads its index.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let index_path = dir.join(INDEX_FILE);
        let index = match fs::read(&index_path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|source| StoreError::Json { path: index_path, source })?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(StoreError::Io { path: index_path, source: e }),
        };
        Ok(Self { dir, index: Mutex::new(index) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn record(&self, problem_id: &str, entry: IndexEntry) -> Result<(), StoreError> {
        let mut index = self.index.lock().unwrap_or_else(|e| e.into_inner());
        index.insert(problem_id.to_string(), entry);
        let bytes = serde_json::to_vec_pretty(&*index).expect("index serializes");
        write_atomic(&self.dir.join(INDEX_FILE), &bytes)
    }

    pub fn put(&self, artifact: &JudgeArtifact) -> Result<(), StoreError> {
        let file = format!("{}.json", file_stem(&artifact.problem_id));
        let bytes = serde_json::to_vec_pretty(artifact).expect("artifact serializes");
        write_atomic(&self.dir.join(&file), &bytes)?;
        let status = match artifact.status {
            super::ArtifactStatus::Candidate => IndexStatus::Candidate,
            super::ArtifactStatus::Validated => IndexStatus::Validated,
            super::ArtifactStatus::Rejected => IndexStatus::Rejected,
        };
        self.record(
            &artifact.problem_id,
            IndexEntry {
                status,
                file: Some(file),
                attempts_used: Some(artifact.attempts_used),
                confidence: Some(artifact.classification.confidence),
                note: None,
            },
        )
    }

    /// Records a problem that produced no artifact.
    pub fn note(&self, problem_id: &str, status: IndexStatus, confidence: Option<f64>, note: Option<String>) -> Result<(), StoreError> {
        self.record(problem_id, IndexEntry { status, file: None, attempts_used: None, confidence, note })
    }

    pub fn index(&self) -> BTreeMap<String, IndexEntry> {
        self.index.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn get(&self, problem_id: &str) -> Result<Option<JudgeArtifact>, StoreError> {
        let Some(file) = self.index().get(problem_id).and_then(|e| e.file.clone()) else {
            return Ok(None);
        };
        let path = self.dir.join(file);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        serde_json::from_slice(&bytes).map(Some).map_err(|source| StoreError::Json { path, source })
    }

    /// Every stored artifact, in problem-id order.
    pub fn artifacts(&self) -> Result<Vec<JudgeArtifact>, StoreError> {
        let ids: Vec<String> = self.index().into_iter().filter(|(_, e)| e.file.is_some()).map(|(k, _)| k).collect();
        ids.iter().filter_map(|id| self.get(id).transpose()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_are_safe_and_distinct() {
        assert_eq!(file_stem("abc-1"), "abc-1");
        let a = file_stem("a/b");
        let b = file_stem("a?b");
        assert_ne!(a, b);
        assert!(!a.contains('/'));
    }
}
