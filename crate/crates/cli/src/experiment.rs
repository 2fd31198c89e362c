//! Translation jobs and the commands built from them: index, translate,
//! sweep and tier ablation.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use stylemt::corpus::{tokenize, Corpus, TokenSeq, TokenizerConfig};
use stylemt::llm::{Backend, EchoSource};
use stylemt::metrics::{
    avg_ngram_match, bleu_corpus, render_tier_table, sweep_csv, BleuConfig, NgramCounting,
    SweepPoint, TierBlock,
};
use stylemt::pipeline::{
    Bm25Retriever, DenseRetriever, ModeSpec, Pipeline, ResumableOutput, Retriever, RunSummary,
    TierRetriever, TranslationRecord, MAX_K, MIN_K,
};
use stylemt::prompting::{LanguagePair, PromptTemplate};
use stylemt::retrieval::{
    build_index, load_index, save_index, Bm25Params, InvertedIndex, TIER_COUNT,
};

use crate::backend::make_backend;
use crate::config::{LoadedConfig, ModeName, Need, RetrieverKind, RunConfig};
use crate::data::{load_domains, DomainData};
use crate::rundir::{ManifestInfo, ResultRow, RunDir};
use crate::{CliError, Common, Outcome};

/// Demonstrations compared per item when scoring match rates.
pub const MATCH_TOP: usize = 5;
pub const MATCH_ORDER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Job {
    pub mode: ModeName,
    pub k: usize,
    pub tier: Option<u8>,
}

impl Job {
    pub fn zero_shot() -> Self {
        Job {
            mode: ModeName::ZeroShot,
            k: 0,
            tier: None,
        }
    }

    /// File label, e.g. `few-shot-k5-tier1`.
    pub fn tag(&self, retriever: RetrieverKind) -> String {
        let mut t = self.mode.as_str().to_string();
        if self.mode != ModeName::ZeroShot {
            t.push_str(&format!("-k{}", self.k));
            if retriever == RetrieverKind::Dense {
                t.push_str("-dense");
            }
            if let Some(tier) = self.tier {
                t.push_str(&format!("-tier{tier}"));
            }
        }
        t
    }
}

/// A validated config with its template and backend.
pub struct Session {
    pub loaded: LoadedConfig,
    pub template: PromptTemplate,
    pub langs: LanguagePair,
    pub backend: Box<dyn Backend>,
    pub domains: Vec<DomainData>,
    pub dry_run: bool,
}

impl Session {
    /// Everything that can fail before the first request fails here.
    pub fn prepare(common: &Common, needs: &[Need]) -> Result<Self, CliError> {
        let loaded = common.load()?;
        let cfg = &loaded.config;
        cfg.require(needs)?;
        let template = match &cfg.template {
            Some(p) => PromptTemplate::from_path(p)?,
            None => PromptTemplate::default(),
        };
        let langs = cfg.direction.langs();
        let backend: Box<dyn Backend> = if common.dry_run {
            Box::new(EchoSource {
                template: template.clone(),
                langs: langs.clone(),
            })
        } else {
            make_backend(&cfg.backend, &template, &langs)?
        };
        let domains = load_domains(cfg)?;
        Ok(Session {
            loaded,
            template,
            langs,
            backend,
            domains,
            dry_run: common.dry_run,
        })
    }

    pub fn cfg(&self) -> &RunConfig {
        &self.loaded.config
    }

    pub fn pipeline(&self) -> Result<Pipeline<'_>, CliError> {
        let cfg = self.cfg();
        Ok(Pipeline::new(
            &*self.backend,
            cfg.backend.params(),
            self.template.clone(),
            self.langs.clone(),
        )?
        .with_workers(cfg.workers))
    }

    pub fn manifest_info(&self) -> ManifestInfo {
        let cfg = self.cfg();
        ManifestInfo {
            config_hash: self.loaded.hash.clone(),
            corpus_hashes: self.domains.iter().flat_map(|d| d.hashes.clone()).collect(),
            template_hash: self.template.hash(),
            backend_id: self.backend.id(),
            params: cfg.backend.params(),
            retriever: Some(format!("{:?}", cfg.retriever).to_lowercase()),
            seed: cfg.seed,
        }
    }
}

/// BM25 indexes of one domain, built on first use.
#[derive(Default)]
pub struct Indexes {
    pub train_src: Option<InvertedIndex>,
    pub mono: Option<InvertedIndex>,
}

pub fn index_file(domain: &str, code: &str, split: &str) -> String {
    format!("{domain}.{code}.{split}.bm25")
}

/// Loads a saved index when its corpus hash matches, else builds one.
fn bm25_for(corpus: &Corpus, cached: Option<PathBuf>) -> Result<InvertedIndex, CliError> {
    if let Some(path) = cached.filter(|p| p.exists()) {
        let (idx, hash) = load_index(&path)?;
        if hash == corpus.content_hash() {
            return Ok(idx);
        }
        eprintln!(
            "warning: {} was built from a different corpus; rebuilding",
            path.display()
        );
    }
    Ok(build_index(
        corpus,
        &TokenizerConfig::default(),
        Bm25Params::default(),
    )?)
}

impl Indexes {
    pub fn ensure(
        &mut self,
        cfg: &RunConfig,
        data: &DomainData,
        mode: ModeName,
    ) -> Result<(), CliError> {
        let (sc, tc) = cfg.direction.codes();
        let cached = |code: &str, split: &str| {
            cfg.index_dir
                .as_ref()
                .map(|d| d.join(index_file(&data.name, code, split)))
        };
        match mode {
            ModeName::FewShot
                if cfg.retriever == RetrieverKind::Bm25 && self.train_src.is_none() =>
            {
                let train = data.train.as_ref().ok_or_else(|| {
                    CliError::Config(format!("domain {} has no training pairs", data.name))
                })?;
                self.train_src = Some(bm25_for(&train.source_side(), cached(sc, "train"))?);
            }
            ModeName::Style if self.mono.is_none() => {
                let mono = data.mono.as_ref().ok_or_else(|| {
                    CliError::Config(format!("domain {} has no target corpus", data.name))
                })?;
                self.mono = Some(bm25_for(mono, cached(tc, "mono"))?);
            }
            _ => {}
        }
        Ok(())
    }
}

fn retriever<'a>(
    cfg: &RunConfig,
    data: &'a DomainData,
    idx: &'a Indexes,
    job: &Job,
) -> Result<Option<Box<dyn Retriever + 'a>>, CliError> {
    let base: Box<dyn Retriever + 'a> = match job.mode {
        ModeName::ZeroShot => return Ok(None),
        ModeName::FewShot => match cfg.retriever {
            RetrieverKind::Bm25 => Box::new(Bm25Retriever {
                index: idx.train_src.as_ref().expect("index built"),
            }),
            RetrieverKind::Dense => match (&data.train_emb, &data.test_emb) {
                (Some(docs), Some(queries)) => Box::new(DenseRetriever { docs, queries }),
                _ => {
                    return Err(CliError::Config(format!(
                        "domain {} needs train_emb and test_emb for the dense retriever",
                        data.name
                    )))
                }
            },
        },
        ModeName::Style => Box::new(Bm25Retriever {
            index: idx.mono.as_ref().expect("index built"),
        }),
    };
    Ok(Some(match job.tier {
        Some(t) => Box::new(TierRetriever::new(base, t)?),
        None => base,
    }))
}

fn spec<'a>(
    job: &Job,
    data: &'a DomainData,
    r: Option<&'a dyn Retriever>,
) -> Result<ModeSpec<'a>, CliError> {
    let missing = |what: &str| CliError::Config(format!("domain {} has no {what}", data.name));
    Ok(match (job.mode, r) {
        (ModeName::ZeroShot, _) => ModeSpec::ZeroShot,
        (ModeName::FewShot, Some(retriever)) => ModeSpec::FewShot {
            retriever,
            pairs: data
                .train
                .as_ref()
                .ok_or_else(|| missing("training pairs"))?,
            k: job.k,
        },
        (ModeName::Style, Some(retriever)) => ModeSpec::Style {
            retriever,
            target: data.mono.as_ref().ok_or_else(|| missing("target corpus"))?,
            k: job.k,
        },
        _ => unreachable!("retriever exists for every mode with demonstrations"),
    })
}

/// Target-language text of a demonstration id for records of `mode`.
pub fn demo_text(data: &DomainData, mode: ModeName, id: usize) -> Option<&str> {
    match mode {
        ModeName::FewShot => data.train.as_ref()?.get(id).map(|p| p.tgt.text.as_str()),
        ModeName::Style => data.mono.as_ref()?.get(id).map(|s| s.text.as_str()),
        ModeName::ZeroShot => None,
    }
}

/// Corpus BLEU of the successful records against the test references.
pub fn records_bleu(
    data: &DomainData,
    recs: &[TranslationRecord],
) -> Result<Option<f64>, CliError> {
    if data.refs.is_none() {
        return Ok(None);
    }
    let tok = TokenizerConfig::default();
    let (hyps, refs): (Vec<TokenSeq>, Vec<TokenSeq>) = recs
        .iter()
        .filter_map(|r| {
            let hyp = r.hypothesis.as_ref().filter(|_| r.is_ok())?;
            let reference = data.reference(r.test_id)?;
            Some((tokenize(hyp, &tok), tokenize(reference, &tok)))
        })
        .unzip();
    if hyps.is_empty() {
        return Ok(None);
    }
    Ok(Some(bleu_corpus(&hyps, &refs, &BleuConfig::default())?))
}

/// Mean trigram match rate of successful records against their own top
/// demonstrations.
fn records_match_rate(
    data: &DomainData,
    mode: ModeName,
    recs: &[TranslationRecord],
) -> Option<f64> {
    let tok = TokenizerConfig::default();
    let items: Vec<(TokenSeq, Vec<TokenSeq>)> = recs
        .iter()
        .filter_map(|r| {
            let hyp = r.hypothesis.as_ref().filter(|_| r.is_ok())?;
            let demos: Vec<TokenSeq> = r
                .demo_ids
                .iter()
                .take(MATCH_TOP)
                .filter_map(|&id| demo_text(data, mode, id))
                .map(|t| tokenize(t, &tok))
                .collect();
            (!demos.is_empty()).then(|| (tokenize(hyp, &tok), demos))
        })
        .collect();
    (!items.is_empty()).then(|| avg_ngram_match(&items, MATCH_ORDER, NgramCounting::Type))
}

pub struct JobResult {
    pub row: ResultRow,
    pub summary: RunSummary,
}

fn run_job(
    session: &Session,
    pipeline: &Pipeline<'_>,
    data: &DomainData,
    idx: &mut Indexes,
    job: Job,
    run: &mut RunDir,
) -> Result<JobResult, CliError> {
    let cfg = session.cfg();
    idx.ensure(cfg, data, job.mode)?;
    let r = retriever(cfg, data, idx, &job)?;
    let spec = spec(&job, data, r.as_deref())?;
    let name = format!("{}.{}.jsonl", data.name, job.tag(cfg.retriever));
    let path = run.output(&name);
    let mut out = ResumableOutput::open(&path, pipeline.cache())?;
    let mut recs = Vec::with_capacity(data.test.len());
    let summary = pipeline.run_into(&data.test, spec, |rec| {
        out.append(&rec)?;
        recs.push(rec);
        Ok(())
    })?;
    out.commit()?;
    let row = ResultRow {
        direction: cfg.direction.to_string(),
        system: cfg.backend.model.clone(),
        domain: data.name.clone(),
        mode: job.mode.as_str().to_string(),
        k: job.k,
        tier: job.tier,
        retriever: r.as_ref().map(|r| r.id()),
        records: name,
        items: summary.items,
        errors: summary.errors,
        with_demos: recs.iter().filter(|r| !r.demo_ids.is_empty()).count(),
        bleu: records_bleu(data, &recs)?,
        match_rate: records_match_rate(data, job.mode, &recs),
    };
    eprintln!(
        "{} {}: {} items, {} errors{}",
        data.name,
        job.tag(cfg.retriever),
        summary.items,
        summary.errors,
        row.bleu
            .map(|b| format!(", BLEU {b:.2}"))
            .unwrap_or_default()
    );
    Ok(JobResult { row, summary })
}

/// Prints, one JSON line per item, the first request each job would send.
fn dry_run(session: &Session, jobs: &[Job]) -> Result<Outcome, CliError> {
    let cfg = session.cfg();
    let pipeline = session.pipeline()?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut outcome = Outcome::default();
    for data in &session.domains {
        let mut idx = Indexes::default();
        for job in jobs {
            idx.ensure(cfg, data, job.mode)?;
            let r = retriever(cfg, data, &idx, job)?;
            let spec = spec(job, data, r.as_deref())?;
            for (test_id, wire) in pipeline.dry_run(&data.test, spec)? {
                outcome.items += 1;
                let line = match wire {
                    Ok(messages) => serde_json::json!({
                        "domain": data.name,
                        "job": job.tag(cfg.retriever),
                        "test_id": test_id,
                        "messages": messages,
                    }),
                    Err(e) => {
                        outcome.errors += 1;
                        serde_json::json!({
                            "domain": data.name,
                            "job": job.tag(cfg.retriever),
                            "test_id": test_id,
                            "error": e,
                        })
                    }
                };
                writeln!(out, "{line}").map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
            }
        }
    }
    Ok(outcome)
}

fn check_ks(ks: &[usize]) -> Result<(), CliError> {
    if ks.is_empty() {
        return Err(CliError::Config("no k values given".into()));
    }
    match ks.iter().find(|k| !(MIN_K..=MAX_K).contains(k)) {
        Some(k) => Err(CliError::Config(format!(
            "k must be in {MIN_K}..={MAX_K}, got {k}"
        ))),
        None => Ok(()),
    }
}

fn needs_for(modes: &[ModeName], cfg_retriever: RetrieverKind) -> Vec<Need> {
    let mut needs = vec![Need::TestSrc];
    if modes.contains(&ModeName::FewShot) {
        needs.extend([Need::TrainSrc, Need::TrainTgt]);
        if cfg_retriever == RetrieverKind::Dense {
            needs.extend([Need::TrainEmb, Need::TestEmb]);
        }
    }
    needs
}

/// Runs `jobs` over every domain, stopping after a fatal backend error.
fn run_jobs(
    session: &Session,
    jobs: &[Job],
    run: &mut RunDir,
) -> Result<(Vec<JobResult>, Outcome), CliError> {
    let mut results = Vec::new();
    let mut outcome = Outcome::default();
    'domains: for data in &session.domains {
        let pipeline = session.pipeline()?;
        let mut idx = Indexes::default();
        for &job in jobs {
            let res = run_job(session, &pipeline, data, &mut idx, job, run)?;
            outcome.add(Outcome {
                items: res.summary.items,
                errors: res.summary.errors,
                fatal: res.summary.fatal,
            });
            results.push(res);
            let rows: Vec<ResultRow> = results.iter().map(|r| r.row.clone()).collect();
            run.write_results(&rows)?;
            if outcome.fatal {
                eprintln!("stopping: the backend reported a fatal error");
                break 'domains;
            }
        }
    }
    Ok((results, outcome))
}

pub fn cmd_translate(common: &Common) -> Result<Outcome, CliError> {
    let probe = common.load()?.config;
    let session = Session::prepare(common, &needs_for(&[probe.mode], probe.retriever))?;
    let cfg = session.cfg();
    let job = Job {
        mode: cfg.mode,
        k: if cfg.mode == ModeName::ZeroShot {
            0
        } else {
            cfg.k
        },
        tier: if cfg.mode == ModeName::ZeroShot {
            None
        } else {
            cfg.tier
        },
    };
    if session.dry_run {
        return dry_run(&session, &[job]);
    }
    let mut run = RunDir::open(common.resume.as_deref(), &cfg.out, "translate")?;
    let (_, outcome) = run_jobs(&session, &[job], &mut run)?;
    run.write_manifest(session.manifest_info(), outcome)?;
    println!("{}", run.path.display());
    Ok(outcome)
}

pub fn sweep_jobs(ks: &[usize], modes: &[ModeName], tier: Option<u8>) -> Vec<Job> {
    let mut jobs = vec![Job::zero_shot()];
    for &mode in modes.iter().filter(|m| **m != ModeName::ZeroShot) {
        jobs.extend(ks.iter().map(|&k| Job { mode, k, tier }));
    }
    jobs
}

pub fn sweep_points(rows: &[ResultRow]) -> Vec<SweepPoint> {
    rows.iter()
        .filter(|r| r.tier.is_none())
        .filter_map(|r| {
            Some(SweepPoint {
                mode: r.mode.clone(),
                domain: r.domain.clone(),
                k: r.k,
                bleu: r.bleu?,
            })
        })
        .collect()
}

pub fn cmd_sweep(common: &Common, ks: &[usize], modes: &[ModeName]) -> Result<Outcome, CliError> {
    check_ks(ks)?;
    let probe = common.load()?.config;
    let session = Session::prepare(common, &needs_for(modes, probe.retriever))?;
    let jobs = sweep_jobs(ks, modes, session.cfg().tier);
    if session.dry_run {
        return dry_run(&session, &jobs);
    }
    let mut run = RunDir::open(common.resume.as_deref(), &session.cfg().out, "sweep")?;
    let (results, outcome) = run_jobs(&session, &jobs, &mut run)?;
    let rows: Vec<ResultRow> = results.into_iter().map(|r| r.row).collect();
    run.write_text("sweep.csv", &sweep_csv(&sweep_points(&rows)))?;
    run.write_manifest(session.manifest_info(), outcome)?;
    println!("{}", run.path.display());
    Ok(outcome)
}

pub fn tier_jobs(ks: &[usize], modes: &[ModeName]) -> Vec<Job> {
    let mut jobs = Vec::new();
    for &mode in modes.iter().filter(|m| **m != ModeName::ZeroShot) {
        for tier in 0..TIER_COUNT as u8 {
            jobs.extend(ks.iter().map(|&k| Job {
                mode,
                k,
                tier: Some(tier),
            }));
        }
    }
    jobs
}

/// One block per mode; each cell is the BLEU averaged over domains. Jobs in
/// which no item received a demonstration leave their cell empty.
pub fn tier_blocks(rows: &[ResultRow], modes: &[String]) -> Vec<TierBlock> {
    modes
        .iter()
        .map(|mode| {
            let mut acc: Vec<BTreeMap<usize, (f64, usize)>> = vec![BTreeMap::new(); TIER_COUNT];
            for row in rows {
                let (Some(t), Some(b)) = (row.tier, row.bleu) else {
                    continue;
                };
                if &row.mode != mode || row.with_demos == 0 {
                    continue;
                }
                let e = acc[usize::from(t)].entry(row.k).or_insert((0.0, 0));
                e.0 += b;
                e.1 += 1;
            }
            TierBlock {
                mode: mode.clone(),
                cells: acc
                    .into_iter()
                    .map(|m| m.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect())
                    .collect(),
            }
        })
        .collect()
}

pub fn cmd_ablate_tiers(
    common: &Common,
    ks: &[usize],
    modes: &[ModeName],
) -> Result<Outcome, CliError> {
    check_ks(ks)?;
    let probe = common.load()?.config;
    let session = Session::prepare(common, &needs_for(modes, probe.retriever))?;
    let jobs = tier_jobs(ks, modes);
    if session.dry_run {
        return dry_run(&session, &jobs);
    }
    let mut run = RunDir::open(common.resume.as_deref(), &session.cfg().out, "ablate-tiers")?;
    let (results, outcome) = run_jobs(&session, &jobs, &mut run)?;
    let rows: Vec<ResultRow> = results.into_iter().map(|r| r.row).collect();
    let names: Vec<String> = modes
        .iter()
        .filter(|m| **m != ModeName::ZeroShot)
        .map(|m| m.as_str().to_string())
        .collect();
    let table = render_tier_table(&tier_blocks(&rows, &names), ks)?;
    run.write_text("tiers.md", &table)?;
    run.write_manifest(session.manifest_info(), outcome)?;
    println!("{}", run.path.display());
    Ok(outcome)
}

pub fn cmd_index(common: &Common) -> Result<Outcome, CliError> {
    let loaded = common.load()?;
    let cfg = &loaded.config;
    let domains = load_domains(cfg)?;
    let mut run = RunDir::open(common.resume.as_deref(), &cfg.out, "index")?;
    let dir = run.path.join("index");
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let (sc, tc) = cfg.direction.codes();
    let tok = TokenizerConfig::default();
    let mut hashes = BTreeMap::new();
    for data in &domains {
        let mut corpora: Vec<(String, Corpus)> = Vec::new();
        if let Some(train) = &data.train {
            corpora.push((index_file(&data.name, sc, "train"), train.source_side()));
        }
        if let Some(mono) = &data.mono {
            corpora.push((index_file(&data.name, tc, "mono"), mono.clone()));
        }
        for (name, corpus) in corpora {
            let idx = build_index(&corpus, &tok, Bm25Params::default())?;
            let path = run.output(&format!("index/{name}"));
            save_index(&idx, &corpus.content_hash(), &path)?;
            eprintln!("{}: {} documents", path.display(), idx.doc_count());
        }
        hashes.extend(data.hashes.clone());
    }
    let info = ManifestInfo {
        config_hash: loaded.hash.clone(),
        corpus_hashes: hashes,
        template_hash: String::new(),
        backend_id: String::new(),
        params: cfg.backend.params(),
        retriever: Some("bm25".into()),
        seed: cfg.seed,
    };
    run.write_manifest(info, Outcome::default())?;
    println!("{}", dir.display());
    Ok(Outcome::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn job_tags() {
        assert_eq!(Job::zero_shot().tag(RetrieverKind::Dense), "zero-shot");
        let j = Job {
            mode: ModeName::FewShot,
            k: 5,
            tier: Some(1),
        };
        assert_eq!(j.tag(RetrieverKind::Bm25), "few-shot-k5-tier1");
        assert_eq!(j.tag(RetrieverKind::Dense), "few-shot-k5-dense-tier1");
    }

    #[test]
    fn job_lists() {
        let s = sweep_jobs(&[1, 5], &[ModeName::FewShot, ModeName::Style], None);
        assert_eq!(s.len(), 5);
        assert_eq!(s[0], Job::zero_shot());
        let t = tier_jobs(&[1, 5, 10], &[ModeName::FewShot, ModeName::Style]);
        assert_eq!(t.len(), 2 * 4 * 3);
        assert!(check_ks(&[0]).is_err() && check_ks(&[51]).is_err() && check_ks(&[]).is_err());
        check_ks(&[1, 50]).unwrap();
    }

    fn row(mode: &str, tier: u8, k: usize, bleu: f64, with_demos: usize) -> ResultRow {
        ResultRow {
            direction: "de-en".into(),
            system: "m".into(),
            domain: "law".into(),
            mode: mode.into(),
            k,
            tier: Some(tier),
            retriever: None,
            records: String::new(),
            items: 1,
            errors: 0,
            with_demos,
            bleu: Some(bleu),
            match_rate: None,
        }
    }

    #[test]
    fn tier_cells_skip_jobs_without_demos() {
        let rows = vec![
            row("few-shot", 0, 1, 40.0, 3),
            row("few-shot", 1, 1, 30.0, 0),
            row("style", 0, 1, 20.0, 3),
        ];
        let blocks = tier_blocks(&rows, &["few-shot".into(), "style".into()]);
        assert_eq!(blocks[0].cells[0][&1], 40.0);
        assert!(blocks[0].cells[1].is_empty());
        assert_eq!(blocks[0].avg_cell(1).unwrap(), "-");
        assert_eq!(blocks[1].cells[0][&1], 20.0);
    }
}
