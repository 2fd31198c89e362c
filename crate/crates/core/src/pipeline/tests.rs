use std::sync::atomic::{AtomicUsize, Ordering};

use super::*;
use crate::corpus::{tokenize, Domain, TokenizerConfig};
use crate::llm::{CompletionResult, CopyBestDemo, EchoSource};
use crate::retrieval::{build_index, Bm25Params, InvertedIndex};

fn corpus(lines: &[&str]) -> Corpus {
    Corpus::from_lines(lines.iter().copied(), Domain::Law).unwrap()
}

fn training() -> ParallelCorpus {
    ParallelCorpus::from_corpora(
        corpus(&[
            "Der Rat erlässt die Verordnung.",
            "Die Kommission prüft den Antrag.",
            "Der Antrag wird abgelehnt.",
            "Die Mitgliedstaaten teilen der Kommission die Maßnahmen mit.",
            "Diese Verordnung tritt am Tag nach ihrer Veröffentlichung in Kraft.",
            "Die Kommission erlässt Durchführungsbestimmungen.",
        ]),
        corpus(&[
            "The Council shall adopt the regulation.",
            "The Commission shall examine the application.",
            "The application shall be rejected.",
            "Member States shall inform the Commission of the measures.",
            "This Regulation shall enter into force on the day following its publication.",
            "The Commission shall adopt implementing rules.",
        ]),
    )
    .unwrap()
}

fn src_index(pairs: &ParallelCorpus) -> InvertedIndex {
    build_index(
        &pairs.source_side(),
        &TokenizerConfig::default(),
        Bm25Params::default(),
    )
    .unwrap()
}

fn tgt_index(c: &Corpus) -> InvertedIndex {
    build_index(c, &TokenizerConfig::default(), Bm25Params::default()).unwrap()
}

fn echo() -> EchoSource {
    EchoSource {
        template: PromptTemplate::default(),
        langs: LanguagePair::de_en(),
    }
}

fn copy() -> CopyBestDemo {
    CopyBestDemo {
        template: PromptTemplate::default(),
        langs: LanguagePair::de_en(),
    }
}

fn pipeline(b: &dyn Backend) -> Pipeline<'_> {
    Pipeline::new(
        b,
        ModelParams::default(),
        PromptTemplate::default(),
        LanguagePair::de_en(),
    )
    .unwrap()
}

/// Backend driven by a closure over the rendered messages.
struct Scripted<F> {
    f: F,
    calls: AtomicUsize,
}

impl<F> Scripted<F> {
    fn new(f: F) -> Self {
        Scripted {
            f,
            calls: AtomicUsize::new(0),
        }
    }
}

impl<F> Backend for Scripted<F>
where
    F: Fn(&[WireMessage]) -> Result<String, LlmError> + Send + Sync,
{
    fn id(&self) -> String {
        "test:scripted".into()
    }

    fn complete(&self, m: &[WireMessage], _: &ModelParams) -> Result<CompletionResult, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(m).map(|text| CompletionResult {
            text,
            latency_ms: 1,
            backend_id: self.id(),
            attempt_count: 1,
        })
    }
}

#[test]
fn zero_shot_echo_and_warm_cache() {
    let test = corpus(&["Hallo Welt", "Guten Tag", "Danke"]);
    let b = echo();
    let p = pipeline(&b);
    let recs = p.translate_zero_shot(&test.sentences);
    assert_eq!(recs.len(), 3);
    for (r, s) in recs.iter().zip(&test.sentences) {
        assert_eq!(r.hypothesis.as_deref(), Some(s.text.as_str()));
        assert!(r.demo_ids.is_empty() && r.draft.is_none());
        r.validate().unwrap();
    }
    assert_eq!(p.calls(), 3);
    let warm = pipeline(&b).with_cache(RecordCache::from_records(recs.clone()));
    assert_eq!(warm.translate_zero_shot(&test.sentences), recs);
    assert_eq!(warm.calls(), 0);
    assert!(p.translate_zero_shot(&[]).is_empty());
}

#[test]
fn few_shot_copies_identical_training_pair() {
    let train = training();
    let idx = src_index(&train);
    let r = Bm25Retriever { index: &idx };
    let test = corpus(&["Die Kommission prüft den Antrag."]);
    let b = copy();
    let recs = pipeline(&b)
        .translate_few_shot(&test.sentences, &r, &train, 3)
        .unwrap();
    assert_eq!(
        recs[0].hypothesis.as_deref(),
        Some("The Commission shall examine the application.")
    );
    assert_eq!(recs[0].demo_ids[0], 1);
    assert_eq!(recs[0].mode, PromptMode::FewShot(3));
}

#[test]
fn few_shot_demo_ids_follow_rank() {
    let train = training();
    let idx = src_index(&train);
    let r = Bm25Retriever { index: &idx };
    let test = corpus(&[
        "Die Kommission erlässt die Verordnung.",
        "Der Antrag der Kommission.",
    ]);
    let b = echo();
    let recs = pipeline(&b)
        .translate_few_shot(&test.sentences, &r, &train, 5)
        .unwrap();
    for (rec, s) in recs.iter().zip(&test.sentences) {
        assert!(!rec.demo_ids.is_empty() && rec.demo_ids.len() <= 5);
        let hits = r.retrieve(s.id, &s.text, 5).unwrap();
        let ids: Vec<usize> = hits.iter().map(|h| h.doc_id).collect();
        assert_eq!(rec.demo_ids, ids);
        assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
        assert_eq!(rec.demo_corpus, Some(train.source_side().content_hash()));
    }
}

#[test]
fn few_shot_falls_back_without_hits() {
    let train = training();
    let idx = src_index(&train);
    let r = Bm25Retriever { index: &idx };
    let test = corpus(&["Zebra Quokka"]);
    let b = echo();
    let recs = pipeline(&b)
        .translate_few_shot(&test.sentences, &r, &train, 2)
        .unwrap();
    assert_eq!(recs[0].flags, vec![RecordFlag::ZeroShotFallback]);
    assert!(recs[0].demo_ids.is_empty());
    assert_eq!(recs[0].hypothesis.as_deref(), Some("Zebra Quokka"));
}

#[test]
fn k_bounds() {
    let train = training();
    let idx = src_index(&train);
    let r = Bm25Retriever { index: &idx };
    let b = echo();
    let p = pipeline(&b);
    assert!(matches!(
        p.translate_few_shot(&[], &r, &train, 0),
        Err(PipelineError::InvalidK(0))
    ));
    assert!(matches!(
        p.translate_few_shot(&[], &r, &train, 51),
        Err(PipelineError::InvalidK(51))
    ));
    assert!(p.translate_few_shot(&[], &r, &train, 50).is_ok());
}

#[test]
fn style_two_passes() {
    let target = training().target_side();
    let idx = tgt_index(&target);
    let r = Bm25Retriever { index: &idx };
    // the echo draft is the source itself, so retrieval runs on source tokens
    let test = corpus(&["The Commission shall examine"]);
    let b = echo();
    let p = pipeline(&b);
    let recs = p.translate_style(&test.sentences, &r, &target, 3).unwrap();
    let rec = &recs[0];
    assert_eq!(rec.draft.as_deref(), Some("The Commission shall examine"));
    let hits = r.retrieve(0, rec.draft.as_ref().unwrap(), 3).unwrap();
    assert_eq!(
        rec.demo_ids,
        hits.iter().map(|h| h.doc_id).collect::<Vec<_>>()
    );
    assert_eq!(rec.demo_corpus, Some(target.content_hash()));
    assert_eq!(p.calls(), 2);
    rec.validate().unwrap();

    let c = copy();
    let recs = pipeline(&c)
        .translate_style(&test.sentences, &r, &target, 3)
        .unwrap();
    assert_eq!(
        recs[0].hypothesis.as_deref(),
        Some(target.get(hits[0].doc_id).unwrap().text.as_str())
    );
}

#[test]
fn style_reuses_zero_shot_drafts() {
    let target = training().target_side();
    let idx = tgt_index(&target);
    let r = Bm25Retriever { index: &idx };
    let test = corpus(&["The Council shall adopt", "the application"]);
    let b = echo();
    let p = pipeline(&b);
    p.translate_zero_shot(&test.sentences);
    assert_eq!(p.calls(), 2);
    p.translate_style(&test.sentences, &r, &target, 2).unwrap();
    assert_eq!(p.calls(), 4);

    // style records alone seed the zero-shot cache
    let style = pipeline(&b)
        .translate_style(&test.sentences, &r, &target, 2)
        .unwrap();
    let p2 = pipeline(&b).with_cache(RecordCache::from_records(style));
    p2.translate_zero_shot(&test.sentences);
    assert_eq!(p2.calls(), 0);
}

#[test]
fn style_empty_retrieval_keeps_draft() {
    let target = training().target_side();
    let idx = tgt_index(&target);
    let r = Bm25Retriever { index: &idx };
    let test = corpus(&["Quokka"]);
    let b = echo();
    let p = pipeline(&b);
    let recs = p.translate_style(&test.sentences, &r, &target, 2).unwrap();
    assert_eq!(recs[0].flags, vec![RecordFlag::EmptyStyleRetrieval]);
    assert_eq!(recs[0].hypothesis, recs[0].draft);
    assert_eq!(p.calls(), 1);
}

#[test]
fn item_errors_do_not_stop_the_run() {
    let b = Scripted::new(|m: &[WireMessage]| {
        if m.last().unwrap().content.contains("bad") {
            Err(LlmError::Http {
                status: 400,
                body: "no".into(),
            })
        } else {
            Ok("fine".into())
        }
    });
    let test = corpus(&["good", "bad", "good again"]);
    let p = pipeline(&b);
    let mut recs = Vec::new();
    let summary = p
        .run_into(&test.sentences, ModeSpec::ZeroShot, |r| {
            recs.push(r);
            Ok(())
        })
        .unwrap();
    assert_eq!(summary.items, 3);
    assert_eq!(summary.errors, 1);
    assert!(!summary.fatal);
    assert_eq!(recs[1].error.as_ref().unwrap().kind, "http");
    assert!(recs[1].hypothesis.is_none());
    assert_eq!(recs[2].hypothesis.as_deref(), Some("fine"));
    // failed records are retried on the next run
    let again = pipeline(&b).with_cache(RecordCache::from_records(recs));
    again.translate_zero_shot(&test.sentences);
    assert_eq!(again.calls(), 1);
}

#[test]
fn fatal_errors_abort_remaining_items() {
    let b = Scripted::new(|_: &[WireMessage]| {
        Err(LlmError::Auth {
            status: 401,
            attempts: 1,
        })
    });
    let test = corpus(&["a", "b", "c"]);
    let p = pipeline(&b);
    let mut recs = Vec::new();
    let summary = p
        .run_into(&test.sentences, ModeSpec::ZeroShot, |r| {
            recs.push(r);
            Ok(())
        })
        .unwrap();
    assert!(summary.fatal);
    assert_eq!(summary.errors, 3);
    assert_eq!(b.calls.load(Ordering::SeqCst), 1);
    assert_eq!(recs[2].error.as_ref().unwrap().kind, "aborted");
}

#[test]
fn latency_is_not_serialized() {
    let b = Scripted::new(|_: &[WireMessage]| Ok("x".into()));
    let test = corpus(&["a"]);
    let recs = pipeline(&b).translate_zero_shot(&test.sentences);
    assert_eq!(recs[0].latency_ms, 1);
    let line = canonical_line(&recs[0]);
    assert!(!line.contains("latency"));
    let back: TranslationRecord = serde_json::from_str(&line).unwrap();
    assert_eq!(back.latency_ms, 0);
}

#[test]
fn record_files_round_trip_and_reject_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let b = echo();
    let test = corpus(&["eins", "zwei"]);
    let recs = pipeline(&b).translate_zero_shot(&test.sentences);
    write_records(&path, &recs).unwrap();
    assert_eq!(load_records(&path).unwrap(), recs);

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, format!("{text}{{\"test_id\": 3")).unwrap();
    assert_eq!(
        load_records(&path).unwrap().len(),
        2,
        "partial trailing line is ignored"
    );

    std::fs::write(&path, format!("garbage\n{text}")).unwrap();
    assert!(matches!(
        load_records(&path),
        Err(PipelineError::CorruptRecord { line: 1, .. })
    ));

    let mut bad = recs[0].clone();
    bad.draft = Some("x".into());
    std::fs::write(&path, canonical_line(&bad) + "\n").unwrap();
    assert!(matches!(
        load_records(&path),
        Err(PipelineError::CorruptRecord { line: 1, .. })
    ));
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let train = training();
    let idx = src_index(&train);
    let r = Bm25Retriever { index: &idx };
    let test = corpus(&[
        "Der Rat erlässt",
        "Die Kommission prüft",
        "Der Antrag",
        "Die Mitgliedstaaten",
        "Diese Verordnung",
    ]);
    let spec = ModeSpec::FewShot {
        retriever: &r,
        pairs: &train,
        k: 2,
    };
    let b = echo();

    let full = dir.path().join("full.jsonl");
    let p = pipeline(&b);
    let mut out = ResumableOutput::open(&full, p.cache()).unwrap();
    p.run_into(&test.sentences, spec, |rec| out.append(&rec))
        .unwrap();
    out.commit().unwrap();

    // interrupted after two items: only the partial file exists
    let resumed = dir.path().join("resumed.jsonl");
    let p = pipeline(&b);
    let mut out = ResumableOutput::open(&resumed, p.cache()).unwrap();
    p.run_into(&test.sentences[..2], spec, |rec| out.append(&rec))
        .unwrap();
    drop(out);
    assert!(!resumed.exists());
    assert!(partial_path(&resumed).exists());

    let p = pipeline(&b);
    let mut out = ResumableOutput::open(&resumed, p.cache()).unwrap();
    p.run_into(&test.sentences, spec, |rec| out.append(&rec))
        .unwrap();
    out.commit().unwrap();
    assert_eq!(p.calls(), 3);
    assert_eq!(
        std::fs::read(&full).unwrap(),
        std::fs::read(&resumed).unwrap()
    );
    assert!(!partial_path(&resumed).exists());
}

#[test]
fn workers_do_not_change_output() {
    let target = training().target_side();
    let idx = tgt_index(&target);
    let r = Bm25Retriever { index: &idx };
    let lines: Vec<String> = (0..30)
        .map(|i| format!("the Commission {i} shall adopt"))
        .collect();
    let test = Corpus::from_lines(lines.iter().map(String::as_str), Domain::Law).unwrap();
    let b = copy();
    let one = pipeline(&b)
        .translate_style(&test.sentences, &r, &target, 4)
        .unwrap();
    let many = pipeline(&b)
        .with_workers(8)
        .translate_style(&test.sentences, &r, &target, 4)
        .unwrap();
    assert_eq!(one, many);
}

#[test]
fn dry_run_matches_sent_prompts() {
    let train = training();
    let idx = src_index(&train);
    let r = Bm25Retriever { index: &idx };
    let test = corpus(&["Die Kommission prüft den Antrag."]);
    let sent = std::sync::Mutex::new(Vec::new());
    let b = Scripted::new(|m: &[WireMessage]| {
        sent.lock().unwrap().push(m.to_vec());
        Ok("x".into())
    });
    let p = pipeline(&b);
    let spec = ModeSpec::FewShot {
        retriever: &r,
        pairs: &train,
        k: 2,
    };
    let plan = p.dry_run(&test.sentences, spec).unwrap();
    assert_eq!(b.calls.load(Ordering::SeqCst), 0);
    p.run(&test.sentences, spec).unwrap();
    assert_eq!(plan[0].1.as_ref().unwrap(), &sent.lock().unwrap()[0]);
}

#[test]
fn tokenized_draft_is_the_style_query() {
    let target = training().target_side();
    let idx = tgt_index(&target);
    let draft_of = |m: &[WireMessage]| -> String {
        let user = &m.last().unwrap().content;
        format!("The application of {user}")
    };
    let b = Scripted::new(move |m: &[WireMessage]| Ok(draft_of(m)));
    let r = Bm25Retriever { index: &idx };
    let test = corpus(&["x1", "x2"]);
    let recs = pipeline(&b)
        .translate_style(&test.sentences, &r, &target, 2)
        .unwrap();
    for rec in &recs {
        let q = tokenize(rec.draft.as_ref().unwrap(), &TokenizerConfig::default());
        let ids: Vec<usize> = crate::retrieval::retrieve(&idx, &q, 2)
            .iter()
            .map(|h| h.doc_id)
            .collect();
        assert_eq!(rec.demo_ids, ids);
    }
}

mod cleaning {
    use super::*;

    fn dev(n: usize, low: &[usize]) -> ParallelCorpus {
        let src: Vec<String> = (0..n).map(|i| format!("quelle {i} satz")).collect();
        let tgt: Vec<String> = (0..n)
            .map(|i| {
                if low.contains(&i) {
                    format!("unrelated words number {i} here")
                } else {
                    format!("quelle {i} satz")
                }
            })
            .collect();
        ParallelCorpus::from_corpora(
            Corpus::from_lines(src.iter().map(String::as_str), Domain::Law).unwrap(),
            Corpus::from_lines(tgt.iter().map(String::as_str), Domain::Law).unwrap(),
        )
        .unwrap()
    }

    /// Echoes the source for translation requests and answers filter prompts
    /// with `verdict`.
    fn backend(verdict: Result<&'static str, ()>) -> impl Backend {
        let echo = echo();
        Scripted::new(move |m: &[WireMessage]| {
            if m[0].content.contains("[Criteria]") {
                verdict.map(str::to_string).map_err(|_| LlmError::Server {
                    status: 503,
                    attempts: 6,
                })
            } else {
                echo.complete(m, &ModelParams::default()).map(|r| r.text)
            }
        })
    }

    #[test]
    fn selects_the_twenty_worst_dev_pairs() {
        let low: Vec<usize> = (0..25).filter(|i| i % 5 != 2).collect();
        assert_eq!(low.len(), 20);
        let d = dev(25, &low);
        let b = backend(Ok("Yes"));
        let out =
            clean_testset(&pipeline(&b), &d, &dev(4, &[]), &CleaningConfig::default()).unwrap();
        let mut ex = out.exemplar_ids.clone();
        ex.sort_unstable();
        assert_eq!(ex, low);
        assert_eq!(out.kept.len(), 4);
        assert!(out.system_prompt.contains("unrelated words number 0 here"));
        assert!(!out.system_prompt.contains("[English]: quelle 2 satz"));
    }

    #[test]
    fn no_verdicts_drop_everything() {
        let b = backend(Ok("No"));
        let test = dev(6, &[]);
        let out = clean_testset(
            &pipeline(&b),
            &dev(25, &[]),
            &test,
            &CleaningConfig::default(),
        )
        .unwrap();
        assert!(out.kept.is_empty());
        assert_eq!(out.verdicts.len(), 6);
        assert!(out
            .verdicts
            .iter()
            .all(|v| v.verdict == Verdict::Drop && !v.flagged));
    }

    #[test]
    fn backend_errors_keep_pairs() {
        let b = backend(Err(()));
        let test = dev(5, &[]);
        let out = clean_testset(
            &pipeline(&b),
            &dev(25, &[]),
            &test,
            &CleaningConfig::default(),
        )
        .unwrap();
        assert_eq!(out.kept, test.pairs);
        assert!(out.verdicts.iter().all(|v| v.flagged && v.error.is_some()));
    }

    #[test]
    fn failed_dev_pass_keeps_everything_without_verdict_requests() {
        let b = Scripted::new(|_: &[WireMessage]| {
            Err(LlmError::Server {
                status: 500,
                attempts: 6,
            })
        });
        let test = dev(3, &[]);
        let out = clean_testset(
            &pipeline(&b),
            &dev(25, &[]),
            &test,
            &CleaningConfig::default(),
        )
        .unwrap();
        assert_eq!(out.kept, test.pairs);
        assert!(out.exemplar_ids.is_empty());
        assert!(out
            .verdicts
            .iter()
            .all(|v| v.flagged && v.verdict == Verdict::Keep));
        assert_eq!(b.calls.load(Ordering::SeqCst), 25);
    }

    #[test]
    fn ties_break_by_id() {
        // every dev pair scores the same, so the lowest ids win
        let d = dev(30, &[]);
        let b = backend(Ok("Yes"));
        let out =
            clean_testset(&pipeline(&b), &d, &dev(1, &[]), &CleaningConfig::default()).unwrap();
        assert_eq!(out.exemplar_ids, (0..20).collect::<Vec<_>>());
    }
}
