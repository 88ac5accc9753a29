use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{cosine, EmbeddingVector, RetrievalError};
use crate::domain::ErrorLabel;
use crate::scalar::EmbeddingScalar;

/// Store guarded for many readers and a single writer.
pub type SharedStore<T> = RwLock<VectorStore<T>>;

/// Content hash of a `(task_text, final_code)` pair, used as record id.
pub fn content_id(task_text: &str, final_code: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update((task_text.len() as u64).to_le_bytes());
    hasher.update(task_text.as_bytes());
    hasher.update(final_code.as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    format!("rr-{hex}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: EmbeddingScalar"))]
pub struct RepairRecord<T: EmbeddingScalar> {
    pub record_id: String,
    pub task_text: String,
    pub final_code: String,
    pub embedding: EmbeddingVector<T>,
    pub label: ErrorLabel,
    pub model_id: String,
    pub created_at: DateTime<Utc>,
}

impl<T: EmbeddingScalar> RepairRecord<T> {
    pub fn new(
        task_text: impl Into<String>,
        final_code: impl Into<String>,
        embedding: EmbeddingVector<T>,
        label: ErrorLabel,
        model_id: impl Into<String>,
    ) -> Self {
        let task_text = task_text.into();
        let final_code = final_code.into();
        Self {
            record_id: content_id(&task_text, &final_code),
            task_text,
            final_code,
            embedding,
            label,
            model_id: model_id.into(),
            created_at: Utc::now(),
        }
    }

    fn content_key(&self) -> String {
        content_id(&self.task_text, &self.final_code)
    }
}

/// A retrieval hit.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRecord<T: EmbeddingScalar> {
    pub record: RepairRecord<T>,
    pub score: T,
}

/// Result of replaying a store file.
#[derive(Debug)]
pub struct LoadedStore<T: EmbeddingScalar> {
    pub store: VectorStore<T>,
    pub warnings: Vec<String>,
}

#[derive(Debug)]
pub struct VectorStore<T: EmbeddingScalar> {
    dimension: Option<usize>,
    records: Vec<RepairRecord<T>>,
    by_content: HashMap<String, usize>,
    by_id: HashMap<String, usize>,
    path: Option<PathBuf>,
    /// Byte length of the file prefix holding valid records.
    valid_len: u64,
    pending_newline: bool,
}

impl<T: EmbeddingScalar> VectorStore<T> {
    /// Store without a backing file.
    pub fn in_memory(dimension: Option<usize>) -> Self {
        Self {
            dimension,
            records: Vec::new(),
            by_content: HashMap::new(),
            by_id: HashMap::new(),
            path: None,
            valid_len: 0,
            pending_newline: false,
        }
    }

    /// Replays the JSONL file at `path` (a missing file is an empty store).
    /// A corrupt final line is treated as a torn write: it is dropped, a
    /// warning is returned, and the next append truncates it away. Corrupt
    /// earlier lines are a hard error.
    pub fn load(path: impl AsRef<Path>) -> Result<LoadedStore<T>, RetrievalError> {
        let path = path.as_ref();
        let mut store = Self::in_memory(None);
        store.path = Some(path.to_path_buf());
        let mut warnings = Vec::new();

        let bytes = match fs::read(path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Ok(LoadedStore { store, warnings });
            }
            Err(e) => return Err(e.into()),
        };

        let corrupt = |line: usize, reason: String| RetrievalError::CorruptStore {
            path: path.display().to_string(),
            line,
            reason,
        };

        let mut lines = Vec::new();
        let mut start = 0usize;
        while start < bytes.len() {
            let end = bytes[start..]
                .iter()
                .position(|b| *b == b'\n')
                .map(|p| start + p + 1)
                .unwrap_or(bytes.len());
            lines.push((start, end));
            start = end;
        }
        let last_content = lines
            .iter()
            .rposition(|(s, e)| !bytes[*s..*e].iter().all(u8::is_ascii_whitespace));

        for (index, (s, e)) in lines.iter().copied().enumerate() {
            let raw = &bytes[s..e];
            if raw.iter().all(u8::is_ascii_whitespace) {
                store.valid_len = e as u64;
                continue;
            }
            let parsed = std::str::from_utf8(raw)
                .map_err(|e| e.to_string())
                .and_then(|text| serde_json::from_str::<RepairRecord<T>>(text).map_err(|e| e.to_string()));
            match parsed {
                Ok(record) => {
                    store
                        .admit(record)
                        .map_err(|e| corrupt(index + 1, e.to_string()))?;
                    store.valid_len = e as u64;
                    store.pending_newline = raw.last() != Some(&b'\n');
                }
                Err(reason) if Some(index) == last_content => {
                    let warning = format!(
                        "{}: dropped torn trailing line {} ({reason})",
                        path.display(),
                        index + 1
                    );
                    log::warn!("{warning}");
                    warnings.push(warning);
                    break;
                }
                Err(reason) => return Err(corrupt(index + 1, reason)),
            }
        }
        Ok(LoadedStore { store, warnings })
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[RepairRecord<T>] {
        &self.records
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, record_id: &str) -> Option<&RepairRecord<T>> {
        self.by_id.get(record_id).map(|i| &self.records[*i])
    }

    fn check_dimension(&self, found: usize) -> Result<(), RetrievalError> {
        match self.dimension {
            Some(expected) if expected != found => {
                Err(RetrievalError::DimensionMismatch { expected, found })
            }
            _ => Ok(()),
        }
    }

    /// Validates and indexes a record without persisting it. Returns the
    /// id of an existing record with identical content, if any.
    fn admit(&mut self, record: RepairRecord<T>) -> Result<Option<String>, RetrievalError> {
        if !record.label.is_all_clean() {
            return Err(RetrievalError::NotClean);
        }
        self.check_dimension(record.embedding.dimension())?;
        let key = record.content_key();
        if let Some(existing) = self.by_content.get(&key) {
            return Ok(Some(self.records[*existing].record_id.clone()));
        }
        if self.by_id.contains_key(&record.record_id) {
            return Err(RetrievalError::DuplicateId(record.record_id));
        }
        self.dimension = Some(record.embedding.dimension());
        let index = self.records.len();
        self.by_content.insert(key, index);
        self.by_id.insert(record.record_id.clone(), index);
        self.records.push(record);
        Ok(None)
    }

    /// Appends a clean record and persists it before returning its id.
    /// Re-inserting an existing `(task_text, final_code)` pair is a no-op
    /// that returns the stored id.
    pub fn store_repair(&mut self, record: RepairRecord<T>) -> Result<String, RetrievalError> {
        if !record.label.is_all_clean() {
            return Err(RetrievalError::NotClean);
        }
        self.check_dimension(record.embedding.dimension())?;
        if let Some(existing) = self.by_content.get(&record.content_key()) {
            return Ok(self.records[*existing].record_id.clone());
        }
        if self.by_id.contains_key(&record.record_id) {
            return Err(RetrievalError::DuplicateId(record.record_id));
        }
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&record)
                .map_err(|e| RetrievalError::PersistenceFailure(e.into()))?;
            self.append_line(&path.clone(), &line)?;
        }
        let id = record.record_id.clone();
        self.admit(record)?;
        Ok(id)
    }

    fn append_line(&mut self, path: &Path, line: &str) -> Result<(), RetrievalError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if file.metadata()?.len() > self.valid_len {
            file.set_len(self.valid_len)?;
        }
        let mut buf = String::with_capacity(line.len() + 2);
        if self.pending_newline {
            buf.push('\n');
        }
        buf.push_str(line);
        buf.push('\n');
        file.write_all(buf.as_bytes())?;
        file.sync_data()?;
        self.valid_len += buf.len() as u64;
        self.pending_newline = false;
        Ok(())
    }

    /// The `k` highest-scoring records, best first; equal scores keep
    /// insertion order.
    pub fn top_k(
        &self,
        query: &EmbeddingVector<T>,
        k: usize,
    ) -> Result<Vec<ScoredRecord<T>>, RetrievalError> {
        if let Some(expected) = self.dimension {
            if expected != query.dimension() {
                return Err(RetrievalError::DimensionMismatch {
                    expected,
                    found: query.dimension(),
                });
            }
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        // Min-heap of the best k seen so far; the root is the weakest hit.
        let mut heap: BinaryHeap<Hit<T>> = BinaryHeap::with_capacity(k + 1);
        for (index, record) in self.records.iter().enumerate() {
            let hit = Hit {
                score: cosine(query, &record.embedding)?,
                index,
            };
            if heap.len() < k {
                heap.push(hit);
            } else if heap.peek().is_some_and(|weakest| hit < *weakest) {
                heap.pop();
                heap.push(hit);
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|hit| ScoredRecord {
                record: self.records[hit.index].clone(),
                score: hit.score,
            })
            .collect())
    }
}

/// Orders hits so that "smaller" means "ranks earlier": higher score, then
/// lower insertion index.
struct Hit<T> {
    score: T,
    index: usize,
}

impl<T: EmbeddingScalar> Ord for Hit<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .partial_cmp(&self.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| self.index.cmp(&other.index))
    }
}

impl<T: EmbeddingScalar> PartialOrd for Hit<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: EmbeddingScalar> PartialEq for Hit<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: EmbeddingScalar> Eq for Hit<T> {}
