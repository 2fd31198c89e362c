//! Timestamped run directories and the result rows written into them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use stylemt::llm::ModelParams;
use stylemt::pipeline::RunManifest;

use crate::{CliError, Outcome};

pub const RESULTS_FILE: &str = "results.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug)]
pub struct RunDir {
    pub path: PathBuf,
    command: String,
    created_unix: u64,
    outputs: Vec<String>,
}

impl RunDir {
    /// Creates `<parent>/<command>-<UTC timestamp>`, adding a counter when
    /// that name is taken.
    pub fn create(parent: &Path, command: &str) -> Result<Self, CliError> {
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        let mut n = 0;
        loop {
            let name = match n {
                0 => format!("{command}-{stamp}"),
                _ => format!("{command}-{stamp}-{n}"),
            };
            let path = parent.join(name);
            match fs::create_dir(&path) {
                Ok(()) => return Ok(Self::at(path, command)),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => n += 1,
                Err(e) => return Err(CliError::io(&path, e)),
            }
        }
    }

    pub fn resume(path: &Path, command: &str) -> Result<Self, CliError> {
        if !path.is_dir() {
            return Err(CliError::Config(format!(
                "run directory {} does not exist",
                path.display()
            )));
        }
        Ok(Self::at(path.to_path_buf(), command))
    }

    pub fn open(resume: Option<&Path>, parent: &Path, command: &str) -> Result<Self, CliError> {
        match resume {
            Some(p) => Self::resume(p, command),
            None => Self::create(parent, command),
        }
    }

    fn at(path: PathBuf, command: &str) -> Self {
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        RunDir {
            path,
            command: command.to_string(),
            created_unix,
            outputs: Vec::new(),
        }
    }

    /// Path of an output file, recorded for the manifest.
    pub fn output(&mut self, name: &str) -> PathBuf {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        self.path.join(name)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.output(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn write_results(&mut self, rows: &[ResultRow]) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(rows).expect("rows serialize");
        self.write_text(RESULTS_FILE, &(json + "\n")).map(|_| ())
    }

    pub fn write_manifest(&self, info: ManifestInfo, outcome: Outcome) -> Result<(), CliError> {
        let mut outputs = self.outputs.clone();
        outputs.sort();
        let m = RunManifest {
            command: self.command.clone(),
            created_unix: self.created_unix,
            config_hash: info.config_hash,
            corpus_hashes: info.corpus_hashes,
            template_hash: info.template_hash,
            backend_id: info.backend_id,
            params: info.params,
            retriever: info.retriever,
            seed: info.seed,
            outputs,
            items: outcome.items,
            errors: outcome.errors,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        };
        let path = self.path.join(MANIFEST_FILE);
        m.write(&path).map_err(CliError::from)
    }
}

/// Manifest fields known to the command.
#[derive(Debug, Clone, Default)]
pub struct ManifestInfo {
    pub config_hash: Option<String>,
    pub corpus_hashes: BTreeMap<String, String>,
    pub template_hash: String,
    pub backend_id: String,
    pub params: ModelParams,
    pub retriever: Option<String>,
    pub seed: Option<u64>,
}

/// Scores of one records file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub direction: String,
    /// Model name.
    pub system: String,
    pub domain: String,
    pub mode: String,
    /// 0 for zero-shot.
    pub k: usize,
    pub tier: Option<u8>,
    pub retriever: Option<String>,
    pub records: String,
    pub items: usize,
    pub errors: usize,
    /// Items whose prompt carried at least one demonstration.
    pub with_demos: usize,
    /// Corpus BLEU over the items that succeeded; absent without references.
    pub bleu: Option<f64>,
    /// Trigram match rate against the item's own top-5 demonstrations.
    pub match_rate: Option<f64>,
}

pub fn read_results(dir: &Path) -> Result<Vec<ResultRow>, CliError> {
    let path = dir.join(RESULTS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(&path, e))
}
