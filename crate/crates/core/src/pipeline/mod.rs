//! End-to-end translation in the three prompting modes, with a resumable
//! record store and LLM-assisted test-set cleaning.

mod clean;
mod retriever;
mod store;

use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, ParallelCorpus, ParallelPair, Sentence};
use crate::exec::for_each_ordered;
use crate::llm::{Backend, LlmError, ModelParams};
use crate::prompting::{
    build_few_shot, build_style, build_zero_shot, render_wire, LanguagePair, PromptError,
    PromptMode, PromptTemplate, TemplateError, WireMessage,
};
use crate::retrieval::RetrievalError;

pub use clean::{
    clean_testset, parse_verdict, CleaningConfig, CleaningOutcome, CleaningVerdict, Verdict,
    DEFAULT_EXEMPLARS,
};
pub use retriever::{Bm25Retriever, DenseRetriever, Retriever, TierRetriever};
pub use store::{
    canonical_line, load_records, partial_path, sha256_hex, write_records, RecordCache,
    RecordWriter, ResumableOutput, RunManifest,
};

/// Inclusive bounds on demonstrations per prompt.
pub const MIN_K: usize = 1;
pub const MAX_K: usize = 50;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("k must be in {MIN_K}..={MAX_K}, got {0}")]
    InvalidK(usize),
    #[error("tier must be in 0..=3, got {0}")]
    InvalidTier(u8),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("record file line {line}: {message}")]
    CorruptRecord { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Cleaning(String),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFlag {
    /// Few-shot retrieval found nothing; the item was translated zero-shot.
    ZeroShotFallback,
    /// Style retrieval on the draft found nothing; the draft is final.
    EmptyStyleRetrieval,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub kind: String,
    pub message: String,
}

/// Outcome of translating one test item. Serialization is canonical: field
/// order is fixed and timing data is left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub test_id: usize,
    pub source: String,
    pub mode: PromptMode,
    /// Demonstration ids in rank order.
    pub demo_ids: Vec<usize>,
    /// Content hash of the corpus the demonstration ids index into.
    pub demo_corpus: Option<String>,
    pub retriever: Option<String>,
    pub draft: Option<String>,
    pub hypothesis: Option<String>,
    pub error: Option<RecordError>,
    pub flags: Vec<RecordFlag>,
    pub params: ModelParams,
    pub backend_id: String,
    pub template_hash: String,
    pub cache_key: String,
    #[serde(skip)]
    pub latency_ms: u64,
}

impl TranslationRecord {
    /// Checks the structural invariants of a record.
    pub fn validate(&self) -> Result<(), String> {
        match self.mode {
            PromptMode::ZeroShot => {
                if !self.demo_ids.is_empty() || self.draft.is_some() {
                    return Err("zero-shot record with demonstrations or draft".into());
                }
            }
            PromptMode::FewShot(k) => {
                if self.demo_ids.len() > k || self.draft.is_some() {
                    return Err(format!(
                        "few-shot record with {} demos for k={k}",
                        self.demo_ids.len()
                    ));
                }
            }
            PromptMode::Style(k) => {
                if self.demo_ids.len() > k {
                    return Err(format!(
                        "style record with {} demos for k={k}",
                        self.demo_ids.len()
                    ));
                }
                if self.error.is_none() && self.draft.is_none() {
                    return Err("style record without draft".into());
                }
            }
        }
        if self.error.is_none() && self.hypothesis.is_none() {
            return Err("record has neither hypothesis nor error".into());
        }
        Ok(())
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    fn zero_shot_from_draft(style: &TranslationRecord, draft: String, cache_key: String) -> Self {
        TranslationRecord {
            test_id: style.test_id,
            source: style.source.clone(),
            mode: PromptMode::ZeroShot,
            demo_ids: Vec::new(),
            demo_corpus: None,
            retriever: None,
            draft: None,
            hypothesis: Some(draft),
            error: None,
            flags: Vec::new(),
            params: style.params.clone(),
            backend_id: style.backend_id.clone(),
            template_hash: style.template_hash.clone(),
            cache_key,
            latency_ms: 0,
        }
    }
}

#[derive(Serialize)]
struct KeyParts<'a> {
    test_id: usize,
    source: &'a str,
    mode: PromptMode,
    demo_ids: &'a [usize],
    template_hash: &'a str,
    params: &'a ModelParams,
    backend_id: &'a str,
}

fn cache_key(parts: &KeyParts<'_>) -> String {
    sha256_hex(&serde_json::to_vec(parts).expect("key serializes"))
}

pub(crate) fn zero_shot_key(
    test_id: usize,
    source: &str,
    template_hash: &str,
    params: &ModelParams,
    backend_id: &str,
) -> String {
    cache_key(&KeyParts {
        test_id,
        source,
        mode: PromptMode::ZeroShot,
        demo_ids: &[],
        template_hash,
        params,
        backend_id,
    })
}

/// What to put in front of the test sentence.
#[derive(Clone, Copy)]
pub enum ModeSpec<'a> {
    ZeroShot,
    /// Demonstrations retrieved with the test source over the source side of
    /// `pairs`.
    FewShot {
        retriever: &'a dyn Retriever,
        pairs: &'a ParallelCorpus,
        k: usize,
    },
    /// Target-language samples retrieved with the zero-shot draft over the
    /// monolingual `target` corpus.
    Style {
        retriever: &'a dyn Retriever,
        target: &'a Corpus,
        k: usize,
    },
}

impl ModeSpec<'_> {
    pub fn mode(&self) -> PromptMode {
        match *self {
            ModeSpec::ZeroShot => PromptMode::ZeroShot,
            ModeSpec::FewShot { k, .. } => PromptMode::FewShot(k),
            ModeSpec::Style { k, .. } => PromptMode::Style(k),
        }
    }

    fn validate(&self) -> Result<(), PipelineError> {
        match *self {
            ModeSpec::ZeroShot => Ok(()),
            ModeSpec::FewShot { k, .. } | ModeSpec::Style { k, .. } => {
                if (MIN_K..=MAX_K).contains(&k) {
                    Ok(())
                } else {
                    Err(PipelineError::InvalidK(k))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub items: usize,
    pub errors: usize,
    /// Some item failed with an error that makes the backend unusable.
    pub fatal: bool,
}

/// One backend, template and parameter set applied to test items.
pub struct Pipeline<'a> {
    backend: &'a dyn Backend,
    params: ModelParams,
    template: PromptTemplate,
    langs: LanguagePair,
    workers: usize,
    cache: RecordCache,
    template_hash: String,
    backend_id: String,
    calls: AtomicUsize,
}

enum Step {
    Done(Option<String>),
    Failed(RecordError),
}

fn record_error(kind: &str, e: impl std::fmt::Display) -> RecordError {
    RecordError {
        kind: kind.into(),
        message: e.to_string(),
    }
}

impl<'a> Pipeline<'a> {
    pub fn new(
        backend: &'a dyn Backend,
        params: ModelParams,
        template: PromptTemplate,
        langs: LanguagePair,
    ) -> Result<Self, PipelineError> {
        template.validate()?;
        params.validate().map_err(PipelineError::InvalidParams)?;
        Ok(Pipeline {
            backend_id: backend.id(),
            backend,
            params,
            template_hash: template.hash(),
            template,
            langs,
            workers: 1,
            cache: RecordCache::new(),
            calls: AtomicUsize::new(0),
        })
    }

    /// Concurrent in-flight items (at least 1).
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn with_cache(mut self, cache: RecordCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn cache(&self) -> &RecordCache {
        &self.cache
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    pub fn langs(&self) -> &LanguagePair {
        &self.langs
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn template_hash(&self) -> &str {
        &self.template_hash
    }

    /// Backend requests issued so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub(crate) fn complete(&self, wire: &[WireMessage]) -> Result<(String, u64), LlmError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let r = self.backend.complete(wire, &self.params)?;
        Ok((r.text.trim().to_string(), r.latency_ms))
    }

    fn key(&self, test_id: usize, source: &str, mode: PromptMode, demo_ids: &[usize]) -> String {
        cache_key(&KeyParts {
            test_id,
            source,
            mode,
            demo_ids,
            template_hash: &self.template_hash,
            params: &self.params,
            backend_id: &self.backend_id,
        })
    }

    fn blank(&self, s: &Sentence, mode: PromptMode) -> TranslationRecord {
        TranslationRecord {
            test_id: s.id,
            source: s.text.clone(),
            mode,
            demo_ids: Vec::new(),
            demo_corpus: None,
            retriever: None,
            draft: None,
            hypothesis: None,
            error: None,
            flags: Vec::new(),
            params: self.params.clone(),
            backend_id: self.backend_id.clone(),
            template_hash: self.template_hash.clone(),
            cache_key: String::new(),
            latency_ms: 0,
        }
    }

    /// Cache lookup, else one backend call for `wire`.
    fn cached_call(&self, key: &str, wire: &[WireMessage], latency: &mut u64) -> Step {
        if let Some(hit) = self.cache.get(key) {
            return Step::Done(hit.hypothesis);
        }
        match self.complete(wire) {
            Ok((text, ms)) => {
                *latency += ms;
                Step::Done(Some(text))
            }
            Err(e) => Step::Failed(record_error(e.kind(), &e)),
        }
    }

    /// Zero-shot translation of `s`, reusing a cached result when present.
    fn zero_shot_text(&self, s: &Sentence, latency: &mut u64) -> Step {
        let key = self.key(s.id, &s.text, PromptMode::ZeroShot, &[]);
        match build_zero_shot(s, &self.langs, &self.template) {
            Ok(p) => self.cached_call(&key, &render_wire(&p), latency),
            Err(e) => Step::Failed(record_error("prompt", e)),
        }
    }

    fn finish(&self, mut rec: TranslationRecord, step: Step) -> TranslationRecord {
        rec.cache_key = self.key(rec.test_id, &rec.source, rec.mode, &rec.demo_ids);
        match step {
            Step::Done(h) => rec.hypothesis = h,
            Step::Failed(e) => rec.error = Some(e),
        }
        rec
    }

    fn translate_one(
        &self,
        s: &Sentence,
        spec: &ModeSpec<'_>,
        demo_corpus: &Option<String>,
    ) -> TranslationRecord {
        let mut latency = 0;
        let mut rec = self.blank(s, spec.mode());
        rec.demo_corpus = demo_corpus.clone();
        let step = match *spec {
            ModeSpec::ZeroShot => self.zero_shot_text(s, &mut latency),
            ModeSpec::FewShot {
                retriever,
                pairs,
                k,
            } => {
                rec.retriever = Some(retriever.id());
                self.few_shot_step(s, retriever, pairs, k, &mut rec, &mut latency)
            }
            ModeSpec::Style {
                retriever,
                target,
                k,
            } => {
                rec.retriever = Some(retriever.id());
                self.style_step(s, retriever, target, k, &mut rec, &mut latency)
            }
        };
        let mut rec = self.finish(rec, step);
        rec.latency_ms = latency;
        rec
    }

    fn few_shot_step(
        &self,
        s: &Sentence,
        retriever: &dyn Retriever,
        pairs: &ParallelCorpus,
        k: usize,
        rec: &mut TranslationRecord,
        latency: &mut u64,
    ) -> Step {
        let hits = match retriever.retrieve(s.id, &s.text, k) {
            Ok(h) => h,
            Err(e) => return Step::Failed(record_error("retrieval", e)),
        };
        if hits.is_empty() {
            rec.flags.push(RecordFlag::ZeroShotFallback);
            return self.zero_shot_text(s, latency);
        }
        let demos: Option<Vec<ParallelPair>> =
            hits.iter().map(|h| pairs.get(h.doc_id).cloned()).collect();
        let Some(demos) = demos else {
            return Step::Failed(record_error(
                "retrieval",
                "hit outside the demonstration corpus",
            ));
        };
        rec.demo_ids = demos.iter().map(ParallelPair::id).collect();
        let key = self.key(s.id, &s.text, rec.mode, &rec.demo_ids);
        match build_few_shot(s, &demos, &self.langs, &self.template) {
            Ok(p) => self.cached_call(&key, &render_wire(&p), latency),
            Err(e) => Step::Failed(record_error("prompt", e)),
        }
    }

    fn style_step(
        &self,
        s: &Sentence,
        retriever: &dyn Retriever,
        target: &Corpus,
        k: usize,
        rec: &mut TranslationRecord,
        latency: &mut u64,
    ) -> Step {
        let draft = match self.zero_shot_text(s, latency) {
            Step::Done(Some(d)) => d,
            Step::Done(None) => return Step::Failed(record_error("draft", "empty draft")),
            Step::Failed(e) => return Step::Failed(e),
        };
        rec.draft = Some(draft.clone());
        let hits = match retriever.retrieve(s.id, &draft, k) {
            Ok(h) => h,
            Err(e) => return Step::Failed(record_error("retrieval", e)),
        };
        if hits.is_empty() {
            rec.flags.push(RecordFlag::EmptyStyleRetrieval);
            return Step::Done(Some(draft));
        }
        let samples: Option<Vec<Sentence>> =
            hits.iter().map(|h| target.get(h.doc_id).cloned()).collect();
        let Some(samples) = samples else {
            return Step::Failed(record_error("retrieval", "hit outside the target corpus"));
        };
        rec.demo_ids = samples.iter().map(|x| x.id).collect();
        let key = self.key(s.id, &s.text, rec.mode, &rec.demo_ids);
        match build_style(s, &samples, &self.langs, &self.template, Some(&draft)) {
            Ok(p) => self.cached_call(&key, &render_wire(&p), latency),
            Err(e) => Step::Failed(record_error("prompt", e)),
        }
    }

    /// Translates `test` in order, handing each record to `sink` as soon as
    /// it and all earlier records are done. After a fatal backend error the
    /// remaining items are recorded as aborted without further requests.
    pub fn run_into(
        &self,
        test: &[Sentence],
        spec: ModeSpec<'_>,
        mut sink: impl FnMut(TranslationRecord) -> Result<(), PipelineError>,
    ) -> Result<RunSummary, PipelineError> {
        spec.validate()?;
        let demo_corpus = match spec {
            ModeSpec::ZeroShot => None,
            ModeSpec::FewShot { pairs, .. } => Some(pairs.source_side().content_hash()),
            ModeSpec::Style { target, .. } => Some(target.content_hash()),
        };
        let abort = AtomicBool::new(false);
        let mut summary = RunSummary::default();
        let mut sink_err = None;
        for_each_ordered(
            test,
            self.workers,
            |_, s| {
                if abort.load(Ordering::Relaxed) {
                    let mut rec = self.blank(s, spec.mode());
                    rec.cache_key = self.key(s.id, &s.text, rec.mode, &[]);
                    rec.error = Some(record_error(
                        "aborted",
                        "skipped after a fatal backend error",
                    ));
                    return rec;
                }
                let rec = self.translate_one(s, &spec, &demo_corpus);
                if rec
                    .error
                    .as_ref()
                    .is_some_and(|e| FATAL_KINDS.contains(&e.kind.as_str()))
                {
                    abort.store(true, Ordering::Relaxed);
                }
                rec
            },
            |_, rec| {
                summary.items += 1;
                if let Some(e) = &rec.error {
                    summary.errors += 1;
                    summary.fatal |= FATAL_KINDS.contains(&e.kind.as_str()) || e.kind == "aborted";
                }
                if sink_err.is_none() {
                    self.cache.insert(rec.clone());
                    if let Err(e) = sink(rec) {
                        sink_err = Some(e);
                    }
                }
            },
        );
        match sink_err {
            Some(e) => Err(e),
            None => Ok(summary),
        }
    }

    pub fn run(
        &self,
        test: &[Sentence],
        spec: ModeSpec<'_>,
    ) -> Result<Vec<TranslationRecord>, PipelineError> {
        let mut out = Vec::with_capacity(test.len());
        self.run_into(test, spec, |r| {
            out.push(r);
            Ok(())
        })?;
        Ok(out)
    }

    pub fn translate_zero_shot(&self, test: &[Sentence]) -> Vec<TranslationRecord> {
        self.run(test, ModeSpec::ZeroShot)
            .expect("zero-shot runs cannot fail validation")
    }

    pub fn translate_few_shot(
        &self,
        test: &[Sentence],
        retriever: &dyn Retriever,
        pairs: &ParallelCorpus,
        k: usize,
    ) -> Result<Vec<TranslationRecord>, PipelineError> {
        self.run(
            test,
            ModeSpec::FewShot {
                retriever,
                pairs,
                k,
            },
        )
    }

    pub fn translate_style(
        &self,
        test: &[Sentence],
        retriever: &dyn Retriever,
        target: &Corpus,
        k: usize,
    ) -> Result<Vec<TranslationRecord>, PipelineError> {
        self.run(
            test,
            ModeSpec::Style {
                retriever,
                target,
                k,
            },
        )
    }

    /// Prompts the first request of each item would send, without calling
    /// the backend. Style items show their draft request, since the second
    /// prompt depends on the draft.
    pub fn dry_run(
        &self,
        test: &[Sentence],
        spec: ModeSpec<'_>,
    ) -> Result<Vec<(usize, DryRunPrompt)>, PipelineError> {
        spec.validate()?;
        let zero = |s: &Sentence| {
            build_zero_shot(s, &self.langs, &self.template)
                .map(|p| render_wire(&p))
                .map_err(|e: PromptError| e.to_string())
        };
        Ok(test
            .iter()
            .map(|s| {
                let wire = match spec {
                    ModeSpec::ZeroShot | ModeSpec::Style { .. } => zero(s),
                    ModeSpec::FewShot {
                        retriever,
                        pairs,
                        k,
                    } => match retriever.retrieve(s.id, &s.text, k) {
                        Err(e) => Err(e.to_string()),
                        Ok(hits) if hits.is_empty() => zero(s),
                        Ok(hits) => hits
                            .iter()
                            .map(|h| {
                                pairs
                                    .get(h.doc_id)
                                    .cloned()
                                    .ok_or_else(|| "hit outside corpus".to_string())
                            })
                            .collect::<Result<Vec<_>, _>>()
                            .and_then(|demos| {
                                build_few_shot(s, &demos, &self.langs, &self.template)
                                    .map(|p| render_wire(&p))
                                    .map_err(|e| e.to_string())
                            }),
                    },
                };
                (s.id, wire)
            })
            .collect())
    }
}

/// Messages an item would send first, or why it cannot be built.
pub type DryRunPrompt = Result<Vec<WireMessage>, String>;

/// Error kinds after which a backend will keep failing.
pub const FATAL_KINDS: [&str; 3] = ["auth", "rate_limited", "missing_api_key"];

#[cfg(test)]
mod tests;
