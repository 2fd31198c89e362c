//! Offline backends. Each is a pure function of the wire messages.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{prompt_hash, Backend, CompletionResult, LlmError, ModelParams};
use crate::prompting::{LanguagePair, PromptTemplate, WireMessage};

fn done(text: String, backend_id: String) -> Result<CompletionResult, LlmError> {
    Ok(CompletionResult {
        text,
        latency_ms: 0,
        backend_id,
        attempt_count: 1,
    })
}

fn source_of(
    tpl: &PromptTemplate,
    langs: &LanguagePair,
    messages: &[WireMessage],
) -> Result<String, LlmError> {
    let user = messages
        .iter()
        .rev()
        .find(|m| m.role == "user")
        .ok_or(LlmError::NoUserMessage)?;
    Ok(tpl
        .extract_source(langs, &user.content)
        .unwrap_or_else(|| user.content.clone()))
}

/// Returns the test source sentence unchanged.
#[derive(Debug, Clone)]
pub struct EchoSource {
    pub template: PromptTemplate,
    pub langs: LanguagePair,
}

impl Backend for EchoSource {
    fn id(&self) -> String {
        "mock:echo-source".into()
    }

    fn complete(
        &self,
        messages: &[WireMessage],
        _: &ModelParams,
    ) -> Result<CompletionResult, LlmError> {
        done(source_of(&self.template, &self.langs, messages)?, self.id())
    }
}

/// Returns the target side of the highest-ranked demonstration (or the first
/// style sample); echoes the source when the prompt has no demonstrations.
#[derive(Debug, Clone)]
pub struct CopyBestDemo {
    pub template: PromptTemplate,
    pub langs: LanguagePair,
}

impl Backend for CopyBestDemo {
    fn id(&self) -> String {
        "mock:copy-best-demo".into()
    }

    fn complete(
        &self,
        messages: &[WireMessage],
        _: &ModelParams,
    ) -> Result<CompletionResult, LlmError> {
        let best = messages
            .iter()
            .find(|m| m.role == "assistant")
            .and_then(|m| {
                self.template
                    .parse_demo_block(&self.langs, &m.content)
                    .or_else(|| self.template.parse_style_block(&self.langs, &m.content))
            })
            .and_then(|demos| demos.into_iter().next());
        match best {
            Some(demo) => done(demo.target, self.id()),
            None => done(source_of(&self.template, &self.langs, messages)?, self.id()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub prompt_hash: String,
    pub text: String,
}

/// Reads `{"prompt_hash": str, "text": str}` lines.
pub fn load_fixtures(path: &Path) -> io::Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut table = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: FixtureEntry = serde_json::from_str(line).map_err(|err| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {err}", i + 1))
        })?;
        table.insert(e.prompt_hash, e.text);
    }
    Ok(table)
}

/// Replays recorded completions keyed by [`prompt_hash`].
#[derive(Debug, Clone, Default)]
pub struct Playback {
    pub fixtures: BTreeMap<String, String>,
}

impl Playback {
    pub fn new(fixtures: BTreeMap<String, String>) -> Self {
        Playback { fixtures }
    }

    pub fn record(&mut self, messages: &[WireMessage], text: impl Into<String>) {
        self.fixtures.insert(prompt_hash(messages), text.into());
    }
}

impl Backend for Playback {
    fn id(&self) -> String {
        "mock:playback".into()
    }

    fn complete(
        &self,
        messages: &[WireMessage],
        _: &ModelParams,
    ) -> Result<CompletionResult, LlmError> {
        let hash = prompt_hash(messages);
        match self.fixtures.get(&hash) {
            Some(text) => done(text.clone(), self.id()),
            None => Err(LlmError::FixtureMiss(hash)),
        }
    }
}
