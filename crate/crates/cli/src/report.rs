//! Tables and plot data from the `results.json` of finished runs. Output
//! depends only on those files and the order they are given in; for rows
//! describing the same configuration, the later run wins.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use stylemt::metrics::{
    gap_closure_summary, render_method_table, render_mode_grid, render_tier_table, sweep_csv,
    DomainScores, GridRow, MetricReport, SweepPoint,
};

use crate::experiment::{tier_blocks, MATCH_ORDER};
use crate::rundir::{read_results, ResultRow};
use crate::{CliError, Outcome};

type RowKey = (String, String, String, String, usize, Option<u8>);

fn key(r: &ResultRow) -> RowKey {
    (
        r.direction.clone(),
        r.system.clone(),
        r.mode.clone(),
        r.domain.clone(),
        r.k,
        r.tier,
    )
}

/// Rows of all runs, deduplicated by configuration.
pub fn merge(runs: &[Vec<ResultRow>]) -> Vec<ResultRow> {
    let mut map: BTreeMap<RowKey, ResultRow> = BTreeMap::new();
    for row in runs.iter().flatten() {
        map.insert(key(row), row.clone());
    }
    map.into_values().collect()
}

fn mode_rank(mode: &str) -> u8 {
    match mode {
        "zero-shot" => 0,
        "style" => 1,
        "few-shot" => 2,
        _ => 3,
    }
}

fn method(mode: &str, k: usize) -> String {
    if k == 0 {
        mode.to_string()
    } else {
        format!("{mode} k={k}")
    }
}

/// (direction, mode, k) → system → per-domain scores, untiered rows only.
fn grouped(
    rows: &[ResultRow],
) -> BTreeMap<(String, u8, String, usize), BTreeMap<String, MetricReport>> {
    let mut out: BTreeMap<_, BTreeMap<String, MetricReport>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.tier.is_none()) {
        let Some(bleu) = r.bleu else { continue };
        let mut scores = DomainScores {
            bleu,
            ..Default::default()
        };
        if let Some(m) = r.match_rate {
            scores.ngram_match.insert(MATCH_ORDER, m);
        }
        out.entry((r.direction.clone(), mode_rank(&r.mode), r.mode.clone(), r.k))
            .or_default()
            .entry(r.system.clone())
            .or_default()
            .insert(r.domain.clone(), scores);
    }
    out
}

pub fn render_report(rows: &[ResultRow]) -> Result<String, CliError> {
    let mut out = String::new();
    let groups = grouped(rows);
    let domains: BTreeSet<&str> = rows.iter().map(|r| r.domain.as_str()).collect();
    let systems: BTreeSet<&str> = rows.iter().map(|r| r.system.as_str()).collect();
    let domains: Vec<&str> = domains.into_iter().collect();
    let systems: Vec<&str> = systems.into_iter().collect();

    if !groups.is_empty() {
        out.push_str("## Methods\n\n");
        let mut table_rows = Vec::new();
        for ((dir, _, mode, k), by_system) in &groups {
            for (system, report) in by_system {
                let name = if systems.len() > 1 {
                    format!("{dir} {} ({system})", method(mode, *k))
                } else {
                    format!("{dir} {}", method(mode, *k))
                };
                table_rows.push((name, report.clone()));
            }
        }
        out.push_str(&render_method_table(&table_rows, &[]));

        out.push_str("\n## BLEU by direction, domain and system\n\n");
        let grid: Vec<GridRow> = groups
            .iter()
            .map(|((dir, _, mode, k), by_system)| GridRow {
                direction: dir.clone(),
                method: method(mode, *k),
                systems: by_system.clone(),
            })
            .collect();
        out.push_str(&render_mode_grid(&grid, &domains, &systems));

        let matches: Vec<String> = groups
            .iter()
            .flat_map(|((dir, _, mode, k), by_system)| {
                by_system.iter().filter_map(move |(system, r)| {
                    r.avg_ngram_match(MATCH_ORDER)
                        .map(|m| format!("| {dir} | {system} | {} | {m:.4} |", method(mode, *k)))
                })
            })
            .collect();
        if !matches.is_empty() {
            out.push_str(&format!(
                "\n## {MATCH_ORDER}-gram match rate against demonstrations\n\n"
            ));
            out.push_str("| Direction | System | Method | Match rate |\n|---|---|---|---|\n");
            for m in matches {
                out.push_str(&m);
                out.push('\n');
            }
        }

        let mut gap = String::new();
        for ((dir, rank, _, k), by_system) in &groups {
            if *rank != 1 {
                continue;
            }
            let zero = groups.iter().find(|((d, r, _, _), _)| d == dir && *r == 0);
            let few = groups.get(&(dir.clone(), 2, "few-shot".into(), *k));
            let (Some((_, zero)), Some(few)) = (zero, few) else {
                continue;
            };
            for (system, style) in by_system {
                let (Some(z), Some(f)) = (zero.get(system), few.get(system)) else {
                    continue;
                };
                let common: Vec<&String> = style
                    .domains
                    .keys()
                    .filter(|d| z.domains.contains_key(*d) && f.domains.contains_key(*d))
                    .collect();
                if common.is_empty() {
                    continue;
                }
                let avg = |r: &MetricReport| {
                    common.iter().map(|d| r.domains[*d].bleu).sum::<f64>() / common.len() as f64
                };
                let line = match gap_closure_summary(avg(z), avg(style), avg(f)) {
                    Ok(s) => s,
                    Err(e) => format!("closure undefined: {e}"),
                };
                let _ = writeln!(gap, "- {dir} {system} k={k}: {line}");
            }
        }
        if !gap.is_empty() {
            out.push_str("\n## Gap closure\n\n");
            out.push_str(&gap);
        }
    }

    let mut tier_groups: BTreeMap<(String, String), Vec<ResultRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.tier.is_some()) {
        tier_groups
            .entry((r.direction.clone(), r.system.clone()))
            .or_default()
            .push(r.clone());
    }
    for ((dir, system), trows) in &tier_groups {
        let modes: BTreeSet<(u8, String)> = trows
            .iter()
            .map(|r| (mode_rank(&r.mode), r.mode.clone()))
            .collect();
        let modes: Vec<String> = modes.into_iter().rev().map(|(_, m)| m).collect();
        let ks: BTreeSet<usize> = trows.iter().map(|r| r.k).collect();
        let ks: Vec<usize> = ks.into_iter().collect();
        let _ = writeln!(out, "\n## Retrieval tiers ({dir}, {system})\n");
        out.push_str(&render_tier_table(&tier_blocks(trows, &modes), &ks)?);
    }
    Ok(out)
}

/// Sweep points labelled `<direction>:<mode>`.
pub fn report_sweep(rows: &[ResultRow]) -> String {
    let points: Vec<SweepPoint> = rows
        .iter()
        .filter(|r| r.tier.is_none())
        .filter_map(|r| {
            Some(SweepPoint {
                mode: format!("{}:{}", r.direction, r.mode),
                domain: r.domain.clone(),
                k: r.k,
                bleu: r.bleu?,
            })
        })
        .collect();
    sweep_csv(&points)
}

pub fn cmd_report(runs: &[PathBuf], out: Option<&Path>) -> Result<Outcome, CliError> {
    let mut all = Vec::new();
    for dir in runs {
        if !dir.is_dir() {
            return Err(CliError::Config(format!(
                "{} is not a run directory",
                dir.display()
            )));
        }
        all.push(read_results(dir)?);
    }
    let rows = merge(&all);
    let md = render_report(&rows)?;
    match out {
        None => print!("{md}"),
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            let write = |name: &str, text: &str| {
                let p = dir.join(name);
                fs::write(&p, text).map_err(|e| CliError::io(&p, e))
            };
            write("report.md", &md)?;
            write("sweep.csv", &report_sweep(&rows))?;
            write(
                "results.json",
                &(serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n"),
            )?;
            println!("{}", dir.join("report.md").display());
        }
    }
    Ok(Outcome {
        items: rows.len(),
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(dir: &str, mode: &str, domain: &str, k: usize, bleu: f64) -> ResultRow {
        ResultRow {
            direction: dir.into(),
            system: "gpt".into(),
            domain: domain.into(),
            mode: mode.into(),
            k,
            tier: None,
            retriever: None,
            records: String::new(),
            items: 10,
            errors: 0,
            with_demos: if k == 0 { 0 } else { 10 },
            bleu: Some(bleu),
            match_rate: None,
        }
    }

    #[test]
    fn grid_orders_modes_and_reports_gap() {
        let rows = merge(&[vec![
            row("de-en", "few-shot", "law", 5, 50.0),
            row("de-en", "zero-shot", "law", 0, 30.0),
            row("de-en", "style", "law", 5, 44.0),
        ]]);
        let md = render_report(&rows).unwrap();
        let zero = md.find("| de-en | zero-shot |").unwrap();
        let style = md.find("| de-en | style k=5 |").unwrap();
        let few = md.find("| de-en | few-shot k=5 |").unwrap();
        assert!(zero < style && style < few);
        assert!(md.contains("44.0(+14.0)"));
        assert!(md.contains("closes about 70% of the gap"));
    }

    #[test]
    fn later_runs_win_and_output_is_stable() {
        let a = vec![row("de-en", "zero-shot", "law", 0, 30.0)];
        let b = vec![row("de-en", "zero-shot", "law", 0, 31.0)];
        let rows = merge(&[a, b]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].bleu, Some(31.0));
        assert_eq!(render_report(&rows).unwrap(), render_report(&rows).unwrap());
        assert_eq!(
            report_sweep(&rows),
            "mode,domain,k,bleu\nde-en:zero-shot,law,0,31.0000\n"
        );
    }
}
