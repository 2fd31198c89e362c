use std::fs;
use std::path::Path;

use stylemt::corpus::{ParallelCorpus, ParallelPair, Sentence};
use stylemt::pipeline::{clean_testset, write_records, CleaningConfig, ModeSpec, FATAL_KINDS};

use crate::config::Need;
use crate::experiment::Session;
use crate::rundir::RunDir;
use crate::{CliError, Common, Outcome};

const LAW: &str = include_str!("../presets/cleaning/law.toml");
const MEDICAL: &str = include_str!("../presets/cleaning/medical.toml");
const KORAN: &str = include_str!("../presets/cleaning/koran.toml");

/// Built-in filter criteria for the named domains.
pub fn preset(domain: &str) -> Option<CleaningConfig> {
    let text = match domain {
        "law" => LAW,
        "medical" => MEDICAL,
        "koran" => KORAN,
        _ => return None,
    };
    Some(toml::from_str(text).expect("built-in preset parses"))
}

fn load_cleaning(path: Option<&Path>, domain: &str) -> Result<CleaningConfig, CliError> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
        None => Ok(preset(domain).unwrap_or_default()),
    }
}

/// Test pairs of the selected items, keeping their ids.
fn test_pairs(
    test: &[Sentence],
    refs: &stylemt::corpus::Corpus,
    domain: stylemt::corpus::Domain,
) -> ParallelCorpus {
    ParallelCorpus {
        domain,
        pairs: test
            .iter()
            .filter_map(|s| {
                Some(ParallelPair {
                    src: s.clone(),
                    tgt: refs.get(s.id)?.clone(),
                })
            })
            .collect(),
    }
}

fn lines<'a>(items: impl Iterator<Item = &'a str>) -> String {
    items.map(|l| format!("{l}\n")).collect()
}

pub fn cmd_clean(common: &Common, exemplars: Option<usize>) -> Result<Outcome, CliError> {
    let session = Session::prepare(
        common,
        &[Need::DevSrc, Need::DevTgt, Need::TestSrc, Need::TestTgt],
    )?;
    let cfg = session.cfg();
    let mut configs = Vec::new();
    for data in &session.domains {
        let mut c = load_cleaning(cfg.domains[&data.name].cleaning.as_deref(), &data.name)?;
        if let Some(n) = exemplars {
            if n == 0 {
                return Err(CliError::Config("exemplars must be at least 1".into()));
            }
            c.exemplar_count = n;
        }
        configs.push(c);
    }
    let pipeline = session.pipeline()?;
    if session.dry_run {
        let mut outcome = Outcome::default();
        for data in &session.domains {
            let dev = data.dev.as_ref().expect("required above").source_side();
            for (test_id, wire) in pipeline.dry_run(&dev.sentences, ModeSpec::ZeroShot)? {
                outcome.items += 1;
                let line = match wire {
                    Ok(m) => {
                        serde_json::json!({"domain": data.name, "job": "dev-zero-shot", "test_id": test_id, "messages": m})
                    }
                    Err(e) => {
                        serde_json::json!({"domain": data.name, "job": "dev-zero-shot", "test_id": test_id, "error": e})
                    }
                };
                println!("{line}");
            }
        }
        return Ok(outcome);
    }

    let (sc, tc) = cfg.direction.codes();
    let mut run = RunDir::open(common.resume.as_deref(), &cfg.out, "clean")?;
    let mut outcome = Outcome::default();
    for (data, ccfg) in session.domains.iter().zip(&configs) {
        let dev = data.dev.as_ref().expect("required above");
        // The dev pass runs first so that a dead backend stops the command
        // before any verdict is requested; clean_testset then hits the cache.
        let dev_records = pipeline.run(&dev.source_side().sentences, ModeSpec::ZeroShot)?;
        write_records(
            &run.output(&format!("{}.dev.zero-shot.jsonl", data.name)),
            &dev_records,
        )?;
        let dev_errors = dev_records.iter().filter(|r| !r.is_ok()).count();
        let fatal = dev_records.iter().any(|r| {
            r.error
                .as_ref()
                .is_some_and(|e| FATAL_KINDS.contains(&e.kind.as_str()) || e.kind == "aborted")
        });
        outcome.add(Outcome {
            items: dev_records.len(),
            errors: dev_errors,
            fatal,
        });
        if fatal {
            eprintln!("stopping: the backend reported a fatal error");
            break;
        }
        let refs = data.refs.as_ref().expect("required above");
        let test = test_pairs(&data.test, refs, dev.domain.clone());
        let result = clean_testset(&pipeline, dev, &test, ccfg)?;
        run.write_text(
            &format!("{}.filter_prompt.txt", data.name),
            &(result.system_prompt.clone() + "\n"),
        )?;
        let verdicts: String = result
            .verdicts
            .iter()
            .map(|v| serde_json::to_string(v).expect("verdict serializes") + "\n")
            .collect();
        run.write_text(&format!("{}.verdicts.jsonl", data.name), &verdicts)?;
        run.write_text(
            &format!("{}.test.clean.{sc}", data.name),
            &lines(result.kept.iter().map(|p| p.src.text.as_str())),
        )?;
        run.write_text(
            &format!("{}.test.clean.{tc}", data.name),
            &lines(result.kept.iter().map(|p| p.tgt.text.as_str())),
        )?;
        let failed = result.verdicts.iter().filter(|v| v.error.is_some()).count();
        outcome.add(Outcome {
            items: result.verdicts.len(),
            errors: failed,
            fatal: false,
        });
        eprintln!(
            "{}: kept {} of {} test pairs ({} flagged)",
            data.name,
            result.kept.len(),
            test.len(),
            result.verdicts.iter().filter(|v| v.flagged).count()
        );
    }
    run.write_manifest(session.manifest_info(), outcome)?;
    println!("{}", run.path.display());
    Ok(outcome)
}
