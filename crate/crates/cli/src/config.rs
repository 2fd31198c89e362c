//! TOML run configuration. Relative paths resolve against the directory of
//! the config file.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stylemt::llm::{ModelParams, RetryPolicy, API_KEY_ENV, DEFAULT_ENDPOINT, DEFAULT_TEMPERATURE};
use stylemt::pipeline::{sha256_hex, MAX_K, MIN_K};
use stylemt::prompting::LanguagePair;

use crate::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Direction {
    #[default]
    #[serde(rename = "de-en")]
    #[value(name = "de-en")]
    DeEn,
    #[serde(rename = "en-de")]
    #[value(name = "en-de")]
    EnDe,
}

impl Direction {
    pub fn langs(self) -> LanguagePair {
        match self {
            Direction::DeEn => LanguagePair::de_en(),
            Direction::EnDe => LanguagePair::en_de(),
        }
    }

    /// Language codes (source, target).
    pub fn codes(self) -> (&'static str, &'static str) {
        match self {
            Direction::DeEn => ("de", "en"),
            Direction::EnDe => ("en", "de"),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (s, t) = self.codes();
        write!(f, "{s}-{t}")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    #[default]
    ZeroShot,
    FewShot,
    Style,
}

impl ModeName {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeName::ZeroShot => "zero-shot",
            ModeName::FewShot => "few-shot",
            ModeName::Style => "style",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RetrieverKind {
    #[default]
    Bm25,
    Dense,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Returns the test source.
    #[default]
    Echo,
    /// Returns the target side of the best demonstration.
    Copy,
    /// Replays recorded completions.
    Playback,
    /// OpenAI-compatible chat completion endpoint.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Playback fixture file.
    pub fixtures: Option<PathBuf>,
    pub retry: RetryPolicy,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Echo,
            model: ModelParams::default().model,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: None,
            endpoint: DEFAULT_ENDPOINT.into(),
            api_key_env: API_KEY_ENV.into(),
            fixtures: None,
            retry: RetryPolicy::default(),
        }
    }
}

impl BackendConfig {
    pub fn params(&self) -> ModelParams {
        ModelParams {
            model: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }
}

/// Files for one language of one domain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SideConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Monolingual corpus for style samples; the train side when unset.
    pub mono: Option<PathBuf>,
    /// Dense embeddings of `train` and `test` sentences (JSONL).
    pub train_emb: Option<PathBuf>,
    pub test_emb: Option<PathBuf>,
    /// Parses of the `test` sentences.
    pub dep: Option<PathBuf>,
    pub constituency: Option<PathBuf>,
}

impl SideConfig {
    fn paths_mut(&mut self) -> [&mut Option<PathBuf>; 8] {
        [
            &mut self.train,
            &mut self.dev,
            &mut self.test,
            &mut self.mono,
            &mut self.train_emb,
            &mut self.test_emb,
            &mut self.dep,
            &mut self.constituency,
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub de: SideConfig,
    pub en: SideConfig,
    /// Cleaning prompt config; a built-in preset is used for known domains.
    pub cleaning: Option<PathBuf>,
}

impl DomainConfig {
    pub fn side(&self, code: &str) -> &SideConfig {
        if code == "de" {
            &self.de
        } else {
            &self.en
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub direction: Direction,
    pub mode: ModeName,
    pub k: usize,
    pub retriever: RetrieverKind,
    pub tier: Option<u8>,
    pub template: Option<PathBuf>,
    pub out: PathBuf,
    pub workers: usize,
    /// Translate only this many test items.
    pub limit: Option<usize>,
    /// With `limit`, draws the items at random from this seed instead of
    /// taking the first ones.
    pub seed: Option<u64>,
    /// Directory of index files written by `index`.
    pub index_dir: Option<PathBuf>,
    pub backend: BackendConfig,
    pub domains: BTreeMap<String, DomainConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            direction: Direction::DeEn,
            mode: ModeName::ZeroShot,
            k: 5,
            retriever: RetrieverKind::Bm25,
            tier: None,
            template: None,
            out: PathBuf::from("runs"),
            workers: 4,
            limit: None,
            seed: None,
            index_dir: None,
            backend: BackendConfig::default(),
            domains: BTreeMap::new(),
        }
    }
}

/// A parsed config together with the hash of its file.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub hash: Option<String>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
        let bytes = fs::read(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| config_err(format!("{}: not UTF-8", path.display())))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(LoadedConfig {
            config,
            hash: Some(sha256_hex(&bytes)),
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut() {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut self.template);
        fix(&mut self.index_dir);
        fix(&mut self.backend.fixtures);
        if self.out.is_relative() {
            self.out = base.join(&self.out);
        }
        for d in self.domains.values_mut() {
            fix(&mut d.cleaning);
            for p in d.de.paths_mut().into_iter().chain(d.en.paths_mut()) {
                fix(p);
            }
        }
    }

    /// Checks values and that every configured path exists.
    pub fn validate(&self) -> Result<(), CliError> {
        if !(MIN_K..=MAX_K).contains(&self.k) {
            return Err(config_err(format!(
                "k must be in {MIN_K}..={MAX_K}, got {}",
                self.k
            )));
        }
        if let Some(t) = self.tier {
            if t > 3 {
                return Err(config_err(format!("tier must be in 0..=3, got {t}")));
            }
        }
        if self.workers == 0 {
            return Err(config_err("workers must be at least 1"));
        }
        if self.limit == Some(0) {
            return Err(config_err("limit must be at least 1"));
        }
        self.backend.params().validate().map_err(config_err)?;
        if self.backend.kind == BackendKind::Playback && self.backend.fixtures.is_none() {
            return Err(config_err("playback backend needs backend.fixtures"));
        }
        if self.mode == ModeName::Style && self.retriever == RetrieverKind::Dense {
            return Err(config_err(
                "the dense retriever is keyed by test id and cannot serve style retrieval",
            ));
        }
        if self.domains.is_empty() {
            return Err(config_err("no domains configured"));
        }
        let mut paths: Vec<&PathBuf> = Vec::new();
        paths.extend(self.template.iter());
        paths.extend(self.backend.fixtures.iter());
        for d in self.domains.values() {
            paths.extend(d.cleaning.iter());
            for side in [&d.de, &d.en] {
                paths.extend(
                    [
                        &side.train,
                        &side.dev,
                        &side.test,
                        &side.mono,
                        &side.train_emb,
                        &side.test_emb,
                        &side.dep,
                        &side.constituency,
                    ]
                    .into_iter()
                    .flatten(),
                );
            }
        }
        if let Some(p) = paths.into_iter().find(|p| !p.exists()) {
            return Err(config_err(format!("path does not exist: {}", p.display())));
        }
        Ok(())
    }

    /// Checks that every domain has the files a command needs.
    pub fn require(&self, what: &[Need]) -> Result<(), CliError> {
        let (src, tgt) = self.direction.codes();
        for (name, d) in &self.domains {
            for need in what {
                let (code, path, field) = match need {
                    Need::TrainSrc => (src, &d.side(src).train, "train"),
                    Need::TrainTgt => (tgt, &d.side(tgt).train, "train"),
                    Need::TestSrc => (src, &d.side(src).test, "test"),
                    Need::TestTgt => (tgt, &d.side(tgt).test, "test"),
                    Need::DevSrc => (src, &d.side(src).dev, "dev"),
                    Need::DevTgt => (tgt, &d.side(tgt).dev, "dev"),
                    Need::TrainEmb => (src, &d.side(src).train_emb, "train_emb"),
                    Need::TestEmb => (src, &d.side(src).test_emb, "test_emb"),
                };
                if path.is_none() {
                    return Err(config_err(format!(
                        "domains.{name}.{code}.{field} is required"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Need {
    TrainSrc,
    TrainTgt,
    TestSrc,
    TestTgt,
    DevSrc,
    DevTgt,
    TrainEmb,
    TestEmb,
}
