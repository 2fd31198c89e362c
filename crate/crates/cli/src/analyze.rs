//! Style analysis of record files: n-gram match rate against retrieved
//! demonstrations, and tree edit distance between parses of the outputs and
//! parses of the references.
//!
//! Output parses sit next to the records as `<stem>.conllu` (dependency)
//! and `<stem>.tree` (bracketed constituency), one tree per successful
//! record in record order. Reference parses come from the `dep` and
//! `constituency` files of the target side in the config, one tree per test
//! line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stylemt::corpus::{tokenize, TokenSeq, TokenizerConfig};
use stylemt::metrics::{avg_ngram_match, NgramCounting};
use stylemt::pipeline::{load_records, TranslationRecord};
use stylemt::prompting::PromptMode;
use stylemt::styletree::{
    avg_ted, prune_leaf_level, read_bracketed_file, read_conllu_file, DepLabel, LabeledTree,
    UnitCosts,
};

use crate::config::ModeName;
use crate::data::{load_domains, DomainData};
use crate::experiment::demo_text;
use crate::rundir::{ManifestInfo, RunDir};
use crate::{CliError, Common, Outcome};

pub const DEFAULT_TOP: usize = 5;
pub const ANALYSIS_FILE: &str = "style_analysis.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StyleRow {
    pub domain: String,
    pub label: String,
    /// Successful records.
    pub items: usize,
    pub match_rate: Option<f64>,
    pub dep_ted: Option<f64>,
    pub dep_ted_norm: Option<f64>,
    pub const_ted: Option<f64>,
    pub const_ted_norm: Option<f64>,
}

/// Splits `<domain>.<label>.jsonl`.
pub fn split_name(path: &Path) -> Option<(String, String)> {
    let name = path.file_name()?.to_str()?.strip_suffix(".jsonl")?;
    let (domain, label) = name.split_once('.')?;
    (!domain.is_empty() && !label.is_empty()).then(|| (domain.to_string(), label.to_string()))
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn mode_name(m: PromptMode) -> ModeName {
    match m {
        PromptMode::ZeroShot => ModeName::ZeroShot,
        PromptMode::FewShot(_) => ModeName::FewShot,
        PromptMode::Style(_) => ModeName::Style,
    }
}

/// Content hash of the corpus that demonstration ids of `mode` index into.
fn expected_demo_corpus(data: &DomainData, mode: ModeName) -> Option<String> {
    match mode {
        ModeName::FewShot => data.train.as_ref().map(|t| t.source_side().content_hash()),
        ModeName::Style => data.mono.as_ref().map(|m| m.content_hash()),
        ModeName::ZeroShot => None,
    }
}

fn match_rate(
    data: &DomainData,
    ok: &[&TranslationRecord],
    demos: &BTreeMap<usize, &TranslationRecord>,
    top: usize,
    n: usize,
) -> Result<Option<f64>, CliError> {
    let tok = TokenizerConfig::default();
    let mut items: Vec<(TokenSeq, Vec<TokenSeq>)> = Vec::new();
    for rec in ok {
        let Some(src) = demos.get(&rec.test_id) else {
            continue;
        };
        let mode = mode_name(src.mode);
        if src.demo_ids.is_empty() {
            continue;
        }
        if src.demo_corpus != expected_demo_corpus(data, mode) {
            return Err(CliError::Input(format!(
                "demonstration ids for item {} index a corpus other than the configured one",
                rec.test_id
            )));
        }
        let texts: Option<Vec<TokenSeq>> = src
            .demo_ids
            .iter()
            .take(top)
            .map(|&id| demo_text(data, mode, id).map(|t| tokenize(t, &tok)))
            .collect();
        let texts = texts.ok_or_else(|| {
            CliError::Input(format!(
                "item {}: demonstration id out of range",
                rec.test_id
            ))
        })?;
        let hyp = rec.hypothesis.as_deref().unwrap_or_default();
        items.push((tokenize(hyp, &tok), texts));
    }
    Ok((!items.is_empty()).then(|| avg_ngram_match(&items, n, NgramCounting::Type)))
}

/// Mean and length-normalized mean TED of output parses against the
/// reference parses of the same test items.
fn ted_against(
    ok: &[&TranslationRecord],
    hyp_trees: Vec<LabeledTree>,
    ref_trees: &[LabeledTree],
    what: &str,
) -> Result<(f64, f64), CliError> {
    if hyp_trees.len() != ok.len() {
        return Err(CliError::Input(format!(
            "{what}: {} parses for {} successful records",
            hyp_trees.len(),
            ok.len()
        )));
    }
    let refs: Option<Vec<LabeledTree>> = ok
        .iter()
        .map(|r| ref_trees.get(r.test_id).cloned())
        .collect();
    let refs = refs.ok_or_else(|| {
        CliError::Input(format!(
            "{what}: reference parses do not cover every test item"
        ))
    })?;
    Ok(avg_ted(&refs, &hyp_trees, &UnitCosts)?)
}

/// Where demonstration ids come from and how matches are counted.
#[derive(Debug, Clone, Copy)]
pub struct MatchOptions<'a> {
    /// Label of a sibling record file holding the demonstration ids.
    pub demos_from: Option<&'a str>,
    pub top: usize,
    pub n: usize,
}

/// Reference parses of one domain's test items.
#[derive(Debug, Clone, Copy, Default)]
pub struct RefParses<'a> {
    pub dep: Option<&'a [LabeledTree]>,
    pub constituency: Option<&'a [LabeledTree]>,
}

pub fn analyze_file(
    data: &DomainData,
    path: &Path,
    label: &str,
    opts: MatchOptions<'_>,
    refs: RefParses<'_>,
) -> Result<StyleRow, CliError> {
    let MatchOptions { demos_from, top, n } = opts;
    let records = load_records(path)?;
    let ok: Vec<&TranslationRecord> = records
        .iter()
        .filter(|r| r.is_ok() && r.hypothesis.is_some())
        .collect();
    let demo_records = match demos_from {
        Some(l) => load_records(&path.with_file_name(format!("{}.{l}.jsonl", data.name)))?,
        None => Vec::new(),
    };
    let demos: BTreeMap<usize, &TranslationRecord> = match demos_from {
        Some(_) => demo_records.iter().map(|r| (r.test_id, r)).collect(),
        None => records.iter().map(|r| (r.test_id, r)).collect(),
    };
    let mut row = StyleRow {
        domain: data.name.clone(),
        label: label.to_string(),
        items: ok.len(),
        match_rate: match_rate(data, &ok, &demos, top, n)?,
        dep_ted: None,
        dep_ted_norm: None,
        const_ted: None,
        const_ted_norm: None,
    };
    let dep_file = sibling(path, "conllu");
    if let (Some(refs), true) = (refs.dep, dep_file.exists()) {
        let hyps = read_conllu_file(&dep_file, DepLabel::Deprel)?;
        let (m, norm) = ted_against(&ok, hyps, refs, &dep_file.display().to_string())?;
        row.dep_ted = Some(m);
        row.dep_ted_norm = Some(norm);
    }
    let const_file = sibling(path, "tree");
    if let (Some(refs), true) = (refs.constituency, const_file.exists()) {
        let hyps: Vec<LabeledTree> = read_bracketed_file(&const_file)?
            .iter()
            .map(prune_leaf_level)
            .collect();
        let (m, norm) = ted_against(&ok, hyps, refs, &const_file.display().to_string())?;
        row.const_ted = Some(m);
        row.const_ted_norm = Some(norm);
    }
    Ok(row)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

pub fn render_csv(rows: &[StyleRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "domain",
        "label",
        "items",
        "match_rate",
        "dep_ted",
        "dep_ted_norm",
        "const_ted",
        "const_ted_norm",
    ])
    .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.domain.clone(),
            r.label.clone(),
            r.items.to_string(),
            opt(r.match_rate),
            opt(r.dep_ted),
            opt(r.dep_ted_norm),
            opt(r.const_ted),
            opt(r.const_ted_norm),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is UTF-8")
}

pub fn cmd_analyze_style(
    common: &Common,
    records: &[PathBuf],
    demos_from: Option<&str>,
    top: usize,
    n: usize,
) -> Result<Outcome, CliError> {
    if top == 0 || n == 0 {
        return Err(CliError::Config("--top and --n must be at least 1".into()));
    }
    let loaded = common.load()?;
    let cfg = &loaded.config;
    let mut named = Vec::new();
    for p in records {
        let (domain, label) = split_name(p).ok_or_else(|| {
            CliError::Config(format!("{}: expected <domain>.<label>.jsonl", p.display()))
        })?;
        if !cfg.domains.contains_key(&domain) {
            return Err(CliError::Config(format!(
                "{}: domain {domain} is not configured",
                p.display()
            )));
        }
        if !p.exists() {
            return Err(CliError::Config(format!("{} does not exist", p.display())));
        }
        named.push((p, domain, label));
    }
    let domains: BTreeMap<String, DomainData> = load_domains(cfg)?
        .into_iter()
        .map(|d| (d.name.clone(), d))
        .collect();
    let (_, tc) = cfg.direction.codes();
    let mut ref_dep: BTreeMap<String, Vec<LabeledTree>> = BTreeMap::new();
    let mut ref_const: BTreeMap<String, Vec<LabeledTree>> = BTreeMap::new();
    for (name, d) in &cfg.domains {
        let side = d.side(tc);
        if let Some(p) = &side.dep {
            ref_dep.insert(name.clone(), read_conllu_file(p, DepLabel::Deprel)?);
        }
        if let Some(p) = &side.constituency {
            ref_const.insert(
                name.clone(),
                read_bracketed_file(p)?
                    .iter()
                    .map(prune_leaf_level)
                    .collect(),
            );
        }
    }

    let mut rows = Vec::new();
    for (path, domain, label) in &named {
        rows.push(analyze_file(
            &domains[domain],
            path,
            label,
            MatchOptions { demos_from, top, n },
            RefParses {
                dep: ref_dep.get(domain).map(Vec::as_slice),
                constituency: ref_const.get(domain).map(Vec::as_slice),
            },
        )?);
    }
    rows.sort_by(|a, b| (&a.domain, &a.label).cmp(&(&b.domain, &b.label)));
    let mut run = RunDir::open(common.resume.as_deref(), &cfg.out, "analyze-style")?;
    let path = run.write_text(ANALYSIS_FILE, &render_csv(&rows))?;
    let info = ManifestInfo {
        config_hash: loaded.hash.clone(),
        corpus_hashes: domains.values().flat_map(|d| d.hashes.clone()).collect(),
        params: cfg.backend.params(),
        seed: cfg.seed,
        ..Default::default()
    };
    let items = rows.iter().map(|r| r.items).sum();
    run.write_manifest(
        info,
        Outcome {
            items,
            ..Default::default()
        },
    )?;
    println!("{}", path.display());
    Ok(Outcome {
        items,
        ..Default::default()
    })
}
