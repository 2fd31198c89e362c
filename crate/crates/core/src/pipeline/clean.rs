//! Test-set cleaning: the dev pairs a zero-shot run translates worst become
//! negative exemplars in a filter prompt, and the backend then votes on each
//! test pair.

use serde::{Deserialize, Serialize};

use super::{ModeSpec, Pipeline, PipelineError, TranslationRecord};
use crate::corpus::{tokenize, ParallelCorpus, ParallelPair, TokenizerConfig};
use crate::exec::map_ordered;
use crate::metrics::{bleu_sentence, BleuConfig};
use crate::prompting::{LanguagePair, WireMessage};

pub const DEFAULT_EXEMPLARS: usize = 20;

/// Filter prompt pieces. Placeholders: `{source_lang}` and `{target_lang}`
/// everywhere, `{source}`/`{target}` in `exemplar` and `query`, and
/// `{criteria}` in `exemplar`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    pub exemplar_count: usize,
    pub intro: String,
    pub exemplar: String,
    pub exemplar_separator: String,
    pub question: String,
    pub query: String,
    /// Criteria text per exemplar, in exemplar order (worst first).
    pub criteria: Vec<String>,
    /// Used for exemplars beyond the end of `criteria`.
    pub default_criterion: String,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig {
            exemplar_count: DEFAULT_EXEMPLARS,
            intro: "You are a human evaluator who judges the quality of parallel data for \
                    {source_lang}-{target_lang} translation. Below are some examples of \
                    low-quality parallel data along with the criteria for filtering them out."
                .into(),
            exemplar: "[{source_lang}]: {source}\n\n[{target_lang}]: {target}\n\n[Criteria]: {criteria}".into(),
            exemplar_separator: "\n\n".into(),
            question: "Given the criteria above, is following sentence pair a good translation? \
                       Output Yes if it is a good translation, output No if it is a bad translation."
                .into(),
            query: "[{source_lang}]: {source}\n[{target_lang}]: {target}".into(),
            criteria: Vec::new(),
            default_criterion: "The {target_lang} side does not faithfully translate the {source_lang} side.".into(),
        }
    }
}

fn fill(template: &str, langs: &LanguagePair, vars: &[(&str, &str)]) -> String {
    let mut out = template
        .replace("{source_lang}", &langs.source)
        .replace("{target_lang}", &langs.target);
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

impl CleaningConfig {
    /// System message holding the exemplar block.
    pub fn system_prompt(&self, exemplars: &[ParallelPair], langs: &LanguagePair) -> String {
        let blocks: Vec<String> = exemplars
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let criteria = self.criteria.get(i).unwrap_or(&self.default_criterion);
                let criteria = fill(criteria, langs, &[]);
                fill(
                    &self.exemplar,
                    langs,
                    &[
                        ("source", &p.src.text),
                        ("target", &p.tgt.text),
                        ("criteria", &criteria),
                    ],
                )
            })
            .collect();
        format!(
            "{}\n\n{}\n\n{}",
            fill(&self.intro, langs, &[]),
            blocks.join(&self.exemplar_separator),
            fill(&self.question, langs, &[])
        )
    }

    pub fn messages(
        &self,
        system: &str,
        pair: &ParallelPair,
        langs: &LanguagePair,
    ) -> Vec<WireMessage> {
        vec![
            WireMessage {
                role: "system".into(),
                content: system.to_string(),
            },
            WireMessage {
                role: "user".into(),
                content: fill(
                    &self.query,
                    langs,
                    &[("source", &pair.src.text), ("target", &pair.tgt.text)],
                ),
            },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Keep,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningVerdict {
    pub pair_id: usize,
    pub verdict: Verdict,
    pub raw_reply: String,
    /// The reply was not a clear yes/no, or the request failed.
    pub flagged: bool,
    pub error: Option<String>,
}

/// Drop only on a leading "no"; a leading "yes" keeps the pair, anything
/// else keeps it and raises the flag.
pub fn parse_verdict(reply: &str) -> (Verdict, bool) {
    let word: String = reply
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .take_while(|c| c.is_alphabetic())
        .collect::<String>()
        .to_lowercase();
    match word.as_str() {
        "yes" => (Verdict::Keep, false),
        "no" => (Verdict::Drop, false),
        _ => (Verdict::Keep, true),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleaningOutcome {
    /// Dev pair ids used as exemplars, worst first.
    pub exemplar_ids: Vec<usize>,
    /// Sentence BLEU per successfully translated dev pair, in dev order.
    pub dev_scores: Vec<(usize, f64)>,
    pub dev_records: Vec<TranslationRecord>,
    pub system_prompt: String,
    pub verdicts: Vec<CleaningVerdict>,
    pub kept: Vec<ParallelPair>,
}

pub fn clean_testset(
    pipeline: &Pipeline<'_>,
    dev: &ParallelCorpus,
    test: &ParallelCorpus,
    cfg: &CleaningConfig,
) -> Result<CleaningOutcome, PipelineError> {
    if cfg.exemplar_count == 0 {
        return Err(PipelineError::Cleaning(
            "exemplar_count must be at least 1".into(),
        ));
    }
    let dev_src = dev.source_side();
    let dev_records = pipeline.run(&dev_src.sentences, ModeSpec::ZeroShot)?;

    let tok = TokenizerConfig::default();
    let bleu = BleuConfig::sentence();
    let dev_scores: Vec<(usize, f64)> = dev_records
        .iter()
        .filter_map(|r| {
            let hyp = r.hypothesis.as_ref()?;
            let reference = &dev.get(r.test_id)?.tgt.text;
            Some((
                r.test_id,
                bleu_sentence(&tokenize(hyp, &tok), &tokenize(reference, &tok), &bleu),
            ))
        })
        .collect();
    if dev_scores.is_empty() {
        // nothing to build exemplars from: keep every pair, ask nothing
        let verdicts = test
            .pairs
            .iter()
            .map(|p| CleaningVerdict {
                pair_id: p.id(),
                verdict: Verdict::Keep,
                raw_reply: String::new(),
                flagged: true,
                error: Some("no dev item was translated".into()),
            })
            .collect();
        return Ok(CleaningOutcome {
            exemplar_ids: Vec::new(),
            dev_scores,
            dev_records,
            system_prompt: String::new(),
            verdicts,
            kept: test.pairs.clone(),
        });
    }
    let mut ranked = dev_scores.clone();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let exemplar_ids: Vec<usize> = ranked
        .iter()
        .take(cfg.exemplar_count)
        .map(|(id, _)| *id)
        .collect();
    let exemplars: Vec<ParallelPair> = exemplar_ids
        .iter()
        .filter_map(|&id| dev.get(id).cloned())
        .collect();

    let langs = pipeline.langs().clone();
    let system = cfg.system_prompt(&exemplars, &langs);
    let verdicts: Vec<CleaningVerdict> = map_ordered(&test.pairs, pipeline.workers, |_, pair| {
        match pipeline.complete(&cfg.messages(&system, pair, &langs)) {
            Ok((reply, _)) => {
                let (verdict, flagged) = parse_verdict(&reply);
                CleaningVerdict {
                    pair_id: pair.id(),
                    verdict,
                    raw_reply: reply,
                    flagged,
                    error: None,
                }
            }
            Err(e) => CleaningVerdict {
                pair_id: pair.id(),
                verdict: Verdict::Keep,
                raw_reply: String::new(),
                flagged: true,
                error: Some(e.to_string()),
            },
        }
    });
    let kept = test
        .pairs
        .iter()
        .zip(&verdicts)
        .filter(|(_, v)| v.verdict == Verdict::Keep)
        .map(|(p, _)| p.clone())
        .collect();
    Ok(CleaningOutcome {
        exemplar_ids,
        dev_scores,
        dev_records,
        system_prompt: system,
        verdicts,
        kept,
    })
}
