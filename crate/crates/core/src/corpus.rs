//! Plain-text corpora: one sentence per line, parallel corpora as two
//! line-aligned files.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    /// Blank or non-UTF-8 line; the number is 1-based.
    #[error("format error at line {0}")]
    Format(usize),
    #[error("parallel files are not aligned: {0} source lines vs {1} target lines")]
    Alignment(usize, usize),
}

/// Corpus domain. The three named domains are the ones the experiments run on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    Law,
    Medical,
    Koran,
    Other(String),
}

impl Domain {
    pub fn as_str(&self) -> &str {
        match self {
            Domain::Law => "law",
            Domain::Medical => "medical",
            Domain::Koran => "koran",
            Domain::Other(name) => name,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "law" => Domain::Law,
            "medical" | "med" => Domain::Medical,
            "koran" => Domain::Koran,
            other => Domain::Other(other.to_string()),
        })
    }
}

impl Serialize for Domain {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(s.parse().unwrap_or_else(|never| match never {}))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    /// 0-based line number in the originating file.
    pub id: usize,
    pub text: String,
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub domain: Domain,
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    /// Builds a corpus from in-memory lines, applying the same validation as
    /// [`load_monolingual`].
    pub fn from_lines<I, S>(lines: I, domain: Domain) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut sentences = Vec::new();
        for (id, line) in lines.into_iter().enumerate() {
            let line = line.as_ref();
            if line.trim().is_empty() || line.contains(['\n', '\r']) {
                return Err(CorpusError::Format(id + 1));
            }
            sentences.push(Sentence {
                id,
                text: line.to_string(),
                domain: domain.clone(),
            });
        }
        Ok(Corpus { domain, sentences })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Sentence> {
        self.sentences.get(id)
    }

    /// SHA-256 over the sentence texts, newline-joined. Used to key index
    /// caches and run manifests.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for s in &self.sentences {
            hasher.update(s.text.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    pub fn write(&self, path: &Path) -> Result<(), CorpusError> {
        let io_err = |source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
        for s in &self.sentences {
            writeln!(out, "{}", s.text).map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelPair {
    pub src: Sentence,
    pub tgt: Sentence,
}

impl ParallelPair {
    pub fn id(&self) -> usize {
        self.src.id
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub domain: Domain,
    pub pairs: Vec<ParallelPair>,
}

impl ParallelCorpus {
    pub fn from_corpora(src: Corpus, tgt: Corpus) -> Result<Self, CorpusError> {
        if src.len() != tgt.len() {
            return Err(CorpusError::Alignment(src.len(), tgt.len()));
        }
        let domain = src.domain.clone();
        let pairs = src
            .sentences
            .into_iter()
            .zip(tgt.sentences)
            .map(|(src, tgt)| ParallelPair { src, tgt })
            .collect();
        Ok(ParallelCorpus { domain, pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&ParallelPair> {
        self.pairs.get(id)
    }

    /// Exchanges the source and target sides (e.g. DE→EN becomes EN→DE).
    pub fn swapped(&self) -> Self {
        ParallelCorpus {
            domain: self.domain.clone(),
            pairs: self
                .pairs
                .iter()
                .map(|p| ParallelPair {
                    src: p.tgt.clone(),
                    tgt: p.src.clone(),
                })
                .collect(),
        }
    }

    pub fn source_side(&self) -> Corpus {
        Corpus {
            domain: self.domain.clone(),
            sentences: self.pairs.iter().map(|p| p.src.clone()).collect(),
        }
    }

    pub fn target_side(&self) -> Corpus {
        Corpus {
            domain: self.domain.clone(),
            sentences: self.pairs.iter().map(|p| p.tgt.clone()).collect(),
        }
    }
}

/// Reads a UTF-8, LF-terminated, one-sentence-per-line file.
///
/// A trailing newline at end of file does not create an extra sentence. A
/// `\r` before the newline is tolerated and stripped.
pub fn load_monolingual(path: &Path, domain: Domain) -> Result<Corpus, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.is_empty() {
        return Ok(Corpus {
            domain,
            sentences: Vec::new(),
        });
    }
    let body = bytes.strip_suffix(b"\n").unwrap_or(&bytes);
    let mut lines = Vec::new();
    for (i, raw) in body.split(|&b| b == b'\n').enumerate() {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line = std::str::from_utf8(raw).map_err(|_| CorpusError::Format(i + 1))?;
        lines.push(line);
    }
    Corpus::from_lines(lines, domain)
}

pub fn load_parallel(
    src_path: &Path,
    tgt_path: &Path,
    domain: Domain,
) -> Result<ParallelCorpus, CorpusError> {
    let src = load_monolingual(src_path, domain.clone())?;
    let tgt = load_monolingual(tgt_path, domain)?;
    ParallelCorpus::from_corpora(src, tgt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    /// Split every Unicode punctuation character (general category P*) into
    /// its own token.
    pub split_punct: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            split_punct: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
    pub source_id: Option<usize>,
}

impl TokenSeq {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TokenSeq {
            tokens: tokens.into_iter().map(Into::into).collect(),
            source_id: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

static PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\p{P}").unwrap());

pub fn tokenize(text: &str, config: &TokenizerConfig) -> TokenSeq {
    let text = if config.lowercase {
        text.to_lowercase()
    } else {
        text.to_string()
    };
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        if !config.split_punct {
            tokens.push(word.to_string());
            continue;
        }
        let mut last = 0;
        for m in PUNCT.find_iter(word) {
            if m.start() > last {
                tokens.push(word[last..m.start()].to_string());
            }
            tokens.push(m.as_str().to_string());
            last = m.end();
        }
        if last < word.len() {
            tokens.push(word[last..].to_string());
        }
    }
    TokenSeq {
        tokens,
        source_id: None,
    }
}

pub fn tokenize_sentence(sentence: &Sentence, config: &TokenizerConfig) -> TokenSeq {
    let mut seq = tokenize(&sentence.text, config);
    seq.source_id = Some(sentence.id);
    seq
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sentence_count: usize,
    /// Whitespace-separated words per sentence, independent of the tokenizer.
    pub mean_words_per_sentence: f64,
}

pub fn stats(corpus: &Corpus) -> CorpusStats {
    let count = corpus.sentences.len();
    if count == 0 {
        return CorpusStats {
            sentence_count: 0,
            mean_words_per_sentence: 0.0,
        };
    }
    let words: usize = corpus
        .sentences
        .iter()
        .map(|s| s.text.split_whitespace().count())
        .sum();
    CorpusStats {
        sentence_count: count,
        mean_words_per_sentence: words as f64 / count as f64,
    }
}
