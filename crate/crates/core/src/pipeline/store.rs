//! Record persistence, the completion cache, and run manifests.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{zero_shot_key, PipelineError, TranslationRecord};
use crate::llm::ModelParams;
use crate::prompting::PromptMode;

/// Canonical single-line JSON for a record.
pub fn canonical_line(record: &TranslationRecord) -> String {
    serde_json::to_string(record).expect("record serializes")
}

/// Reads a record file, validating each record. A final line without a
/// trailing newline is treated as an interrupted write and ignored when it
/// does not parse.
pub fn load_records(path: &Path) -> Result<Vec<TranslationRecord>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let last_partial = !complete && i + 1 == lines.len();
        let rec: TranslationRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(_) if last_partial => break,
            Err(e) => {
                return Err(PipelineError::CorruptRecord {
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        };
        rec.validate()
            .map_err(|message| PipelineError::CorruptRecord {
                line: i + 1,
                message,
            })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[TranslationRecord]) -> Result<(), PipelineError> {
    let mut w = RecordWriter::create(path)?;
    for r in records {
        w.append(r)?;
    }
    w.finish()
}

/// Appends canonical lines, flushing after each record so that an
/// interrupted run leaves a readable prefix.
pub struct RecordWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl RecordWriter {
    pub fn create(path: &Path) -> Result<Self, PipelineError> {
        let file = File::create(path).map_err(|e| PipelineError::io(path, e))?;
        Ok(RecordWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, record: &TranslationRecord) -> Result<(), PipelineError> {
        let line = canonical_line(record);
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .and_then(|_| self.out.flush())
            .map_err(|e| PipelineError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), PipelineError> {
        self.out
            .flush()
            .and_then(|_| self.out.get_ref().sync_all())
            .map_err(|e| PipelineError::io(&self.path, e))
    }
}

/// Path of the in-progress file written next to `path`.
pub fn partial_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".partial");
    PathBuf::from(p)
}

/// Writes records for `path` through its partial file, seeding `cache` with
/// whatever an earlier (possibly interrupted) run left in either file. The
/// final file is renamed into place only after every record is written.
pub struct ResumableOutput {
    path: PathBuf,
    partial: PathBuf,
    writer: RecordWriter,
}

impl ResumableOutput {
    pub fn open(path: &Path, cache: &RecordCache) -> Result<Self, PipelineError> {
        let partial = partial_path(path);
        for p in [path, partial.as_path()] {
            if p.exists() {
                for rec in load_records(p)? {
                    cache.insert(rec);
                }
            }
        }
        let writer = RecordWriter::create(&partial)?;
        Ok(ResumableOutput {
            path: path.to_path_buf(),
            partial,
            writer,
        })
    }

    pub fn append(&mut self, record: &TranslationRecord) -> Result<(), PipelineError> {
        self.writer.append(record)
    }

    pub fn commit(self) -> Result<(), PipelineError> {
        self.writer.finish()?;
        fs::rename(&self.partial, &self.path).map_err(|e| PipelineError::io(&self.path, e))
    }
}

/// Successful records keyed by cache key. Style records also register their
/// draft under the matching zero-shot key, so a later style run can reuse
/// zero-shot output and vice versa.
#[derive(Debug, Default)]
pub struct RecordCache {
    map: Mutex<HashMap<String, TranslationRecord>>,
}

impl RecordCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = TranslationRecord>) -> Self {
        let c = Self::new();
        for r in records {
            c.insert(r);
        }
        c
    }

    pub fn get(&self, key: &str) -> Option<TranslationRecord> {
        self.map.lock().unwrap().get(key).cloned()
    }

    /// Records that carry an error are not cached.
    pub fn insert(&self, record: TranslationRecord) {
        if record.error.is_some() || record.hypothesis.is_none() {
            return;
        }
        let mut map = self.map.lock().unwrap();
        if let (PromptMode::Style(_), Some(draft)) = (record.mode, &record.draft) {
            let key = zero_shot_key(
                record.test_id,
                &record.source,
                &record.template_hash,
                &record.params,
                &record.backend_id,
            );
            map.entry(key.clone()).or_insert_with(|| {
                TranslationRecord::zero_shot_from_draft(&record, draft.clone(), key)
            });
        }
        map.insert(record.cache_key.clone(), record);
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Provenance written next to every run's records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub created_unix: u64,
    pub config_hash: Option<String>,
    pub corpus_hashes: BTreeMap<String, String>,
    pub template_hash: String,
    pub backend_id: String,
    pub params: ModelParams,
    pub retriever: Option<String>,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub items: usize,
    pub errors: usize,
    pub tool_version: String,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, json + "\n").map_err(|e| PipelineError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::CorruptRecord {
            line: 0,
            message: e.to_string(),
        })
    }
}

/// SHA-256 of arbitrary bytes as lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
