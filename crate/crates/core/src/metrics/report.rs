//! Result aggregation and table rendering. Every renderer is a pure function
//! of its input, so re-rendering the same numbers is byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{format_percent, gap_closure, tier_delta, MetricsError};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainScores {
    pub bleu: f64,
    /// Match rate keyed by n-gram order.
    #[serde(default)]
    pub ngram_match: BTreeMap<usize, f64>,
    /// Scores imported from external scorers, keyed by scorer name.
    #[serde(default)]
    pub external: BTreeMap<String, f64>,
}

/// Per-domain scores for one system/mode with derived averages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub domains: BTreeMap<String, DomainScores>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl MetricReport {
    pub fn insert(&mut self, domain: impl Into<String>, scores: DomainScores) {
        self.domains.insert(domain.into(), scores);
    }

    pub fn avg_bleu(&self) -> Option<f64> {
        mean(self.domains.values().map(|d| d.bleu))
    }

    /// Mean over the domains that have a match rate for order `n`.
    pub fn avg_ngram_match(&self, n: usize) -> Option<f64> {
        mean(
            self.domains
                .values()
                .filter_map(|d| d.ngram_match.get(&n).copied()),
        )
    }

    pub fn avg_external(&self, scorer: &str) -> Option<f64> {
        mean(
            self.domains
                .values()
                .filter_map(|d| d.external.get(scorer).copied()),
        )
    }

    /// All averages in one struct, for JSON output.
    pub fn averages(&self) -> DomainScores {
        let orders: Vec<usize> = {
            let mut o: Vec<usize> = self
                .domains
                .values()
                .flat_map(|d| d.ngram_match.keys().copied())
                .collect();
            o.sort_unstable();
            o.dedup();
            o
        };
        let scorers: Vec<String> = {
            let mut s: Vec<String> = self
                .domains
                .values()
                .flat_map(|d| d.external.keys().cloned())
                .collect();
            s.sort();
            s.dedup();
            s
        };
        DomainScores {
            bleu: self.avg_bleu().unwrap_or(0.0),
            ngram_match: orders
                .into_iter()
                .filter_map(|n| self.avg_ngram_match(n).map(|v| (n, v)))
                .collect(),
            external: scorers
                .into_iter()
                .filter_map(|s| self.avg_external(&s).map(|v| (s, v)))
                .collect(),
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"))
}

fn md_row(out: &mut String, cells: &[String]) {
    let _ = writeln!(out, "| {} |", cells.join(" | "));
}

fn md_rule(out: &mut String, n: usize) {
    let _ = writeln!(out, "|{}", "---|".repeat(n));
}

/// Method / BLEU / one column per external scorer, averaged over domains.
pub fn render_method_table(rows: &[(String, MetricReport)], scorers: &[&str]) -> String {
    let mut out = String::new();
    let mut head = vec!["Method".to_string(), "BLEU".to_string()];
    head.extend(scorers.iter().map(|s| s.to_uppercase()));
    md_row(&mut out, &head);
    md_rule(&mut out, head.len());
    for (method, report) in rows {
        let mut cells = vec![method.clone(), cell(report.avg_bleu())];
        cells.extend(scorers.iter().map(|s| cell(report.avg_external(s))));
        md_row(&mut out, &cells);
    }
    out
}

/// One row of the direction × method × domain × system BLEU grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub direction: String,
    pub method: String,
    /// Keyed by system name, then domain.
    pub systems: BTreeMap<String, MetricReport>,
}

/// Direction/method rows, a (domain × system) column group per domain, and an
/// average group. Average cells of non-baseline rows carry their gain over the
/// first row of the same direction, e.g. `42.2(+9.0)`.
pub fn render_mode_grid(rows: &[GridRow], domains: &[&str], systems: &[&str]) -> String {
    let mut out = String::new();
    let mut head = vec!["Direction".to_string(), "Method".to_string()];
    for d in domains.iter().copied().chain(["Average"]) {
        for s in systems {
            head.push(format!("{d} {s}"));
        }
    }
    md_row(&mut out, &head);
    md_rule(&mut out, head.len());
    let mut baseline: BTreeMap<&str, &GridRow> = BTreeMap::new();
    for row in rows {
        let base = *baseline.entry(row.direction.as_str()).or_insert(row);
        let mut cells = vec![row.direction.clone(), row.method.clone()];
        for d in domains {
            for s in systems {
                cells.push(cell(
                    row.systems
                        .get(*s)
                        .and_then(|r| r.domains.get(*d))
                        .map(|x| x.bleu),
                ));
            }
        }
        for s in systems {
            let avg = row.systems.get(*s).and_then(MetricReport::avg_bleu);
            let base_avg = base.systems.get(*s).and_then(MetricReport::avg_bleu);
            let mut c = cell(avg);
            if !std::ptr::eq(base, row) {
                if let (Some(a), Some(b)) = (avg, base_avg) {
                    let _ = write!(c, "({:+.1})", a - b);
                }
            }
            cells.push(c);
        }
        md_row(&mut out, &cells);
    }
    out
}

/// Scores of one prompt mode across demonstration-quality tiers; `cells[t]`
/// maps k to BLEU. An empty map marks a tier with no demonstrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierBlock {
    pub mode: String,
    pub cells: Vec<BTreeMap<usize, f64>>,
}

impl TierBlock {
    /// Mean over the k values present for tier `t`.
    pub fn tier_avg(&self, t: usize) -> Option<f64> {
        self.cells.get(t).and_then(|c| mean(c.values().copied()))
    }

    /// Percent change of tier `t` against tier 0.
    pub fn delta(&self, t: usize) -> Result<Option<f64>, MetricsError> {
        match (self.tier_avg(0), self.tier_avg(t)) {
            (Some(a), Some(b)) => tier_delta(a, b).map(Some),
            _ => Ok(None),
        }
    }

    /// Average cell, with the signed delta for tiers after the first:
    /// `38.4 (-14%)`. A zero tier-0 average gives `(n/a)`.
    pub fn avg_cell(&self, t: usize) -> Result<String, MetricsError> {
        let Some(avg) = self.tier_avg(t) else {
            return Ok("-".into());
        };
        let mut c = format!("{avg:.1}");
        if t > 0 {
            match self.delta(t) {
                Ok(Some(d)) => {
                    let _ = write!(c, " ({})", format_percent(d));
                }
                Ok(None) => {}
                Err(MetricsError::DivisionByZero) => c.push_str(" (n/a)"),
                Err(e) => return Err(e),
            }
        }
        Ok(c)
    }
}

/// Tier rows, and per mode a k-shot column group closed by an average column.
pub fn render_tier_table(blocks: &[TierBlock], ks: &[usize]) -> Result<String, MetricsError> {
    let mut out = String::new();
    let mut head = vec!["Tier".to_string()];
    for b in blocks {
        for k in ks {
            head.push(format!("{} {k}-shot", b.mode));
        }
        head.push(format!("{} Avg", b.mode));
    }
    md_row(&mut out, &head);
    md_rule(&mut out, head.len());
    let tiers = blocks.iter().map(|b| b.cells.len()).max().unwrap_or(0);
    for t in 0..tiers {
        let mut cells = vec![format!("Tier {t}")];
        for b in blocks {
            for k in ks {
                cells.push(cell(b.cells.get(t).and_then(|c| c.get(k)).copied()));
            }
            cells.push(b.avg_cell(t)?);
        }
        md_row(&mut out, &cells);
    }
    Ok(out)
}

/// One point of the k-shot sweep curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mode: String,
    pub domain: String,
    pub k: usize,
    pub bleu: f64,
}

/// `mode,domain,k,bleu` CSV, rows sorted by mode, domain, k.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut sorted: Vec<&SweepPoint> = points.iter().collect();
    sorted.sort_by(|a, b| (&a.mode, &a.domain, a.k).cmp(&(&b.mode, &b.domain, b.k)));
    let mut out = String::from("mode,domain,k,bleu\n");
    for p in sorted {
        let _ = writeln!(out, "{},{},{},{:.4}", p.mode, p.domain, p.k, p.bleu);
    }
    out
}

/// One line stating the share of the zero-shot → few-shot gap that style
/// prompting recovers, rounded to the nearest 10%.
pub fn gap_closure_summary(zero: f64, style: f64, few: f64) -> Result<String, MetricsError> {
    let g = gap_closure(zero, style, few)?;
    let approx = (g * 10.0).round() as i64 * 10;
    Ok(format!(
        "style prompting closes about {approx}% of the gap between zero-shot ({zero:.1}) and few-shot ({few:.1}) BLEU (closure {g:.3})"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(pairs: &[(&str, f64)]) -> MetricReport {
        let mut r = MetricReport::default();
        for (d, b) in pairs {
            r.insert(
                *d,
                DomainScores {
                    bleu: *b,
                    ..Default::default()
                },
            );
        }
        r
    }

    #[test]
    fn averages_use_present_entries() {
        let mut r = report(&[("law", 37.2), ("medical", 44.5), ("koran", 17.9)]);
        r.domains.get_mut("law").unwrap().ngram_match.insert(3, 0.5);
        r.domains
            .get_mut("koran")
            .unwrap()
            .ngram_match
            .insert(3, 0.3);
        assert!((r.avg_bleu().unwrap() - 33.2).abs() < 1e-9);
        assert!((r.avg_ngram_match(3).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(r.avg_ngram_match(4), None);
        assert_eq!(r.avg_external("comet"), None);
        let avg = r.averages();
        assert_eq!(avg.ngram_match.len(), 1);
        assert_eq!(MetricReport::default().avg_bleu(), None);
    }

    #[test]
    fn method_table_layout() {
        let mut r = report(&[("law", 47.6)]);
        r.domains
            .get_mut("law")
            .unwrap()
            .external
            .insert("comet".into(), 84.6);
        let t = render_method_table(&[("GPT 5-shot".into(), r)], &["comet"]);
        assert_eq!(
            t,
            "| Method | BLEU | COMET |\n|---|---|---|\n| GPT 5-shot | 47.6 | 84.6 |\n"
        );
    }

    #[test]
    fn mode_grid_gain_annotations() {
        let sys = |r: MetricReport| BTreeMap::from([("gpt".to_string(), r)]);
        let rows = vec![
            GridRow {
                direction: "de-en".into(),
                method: "Zero-shot".into(),
                systems: sys(report(&[("law", 37.2), ("medical", 44.5), ("koran", 17.9)])),
            },
            GridRow {
                direction: "de-en".into(),
                method: "Style".into(),
                systems: sys(report(&[("law", 48.9), ("medical", 57.8), ("koran", 19.8)])),
            },
        ];
        let t = render_mode_grid(&rows, &["law", "medical", "koran"], &["gpt"]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(
            lines[0],
            "| Direction | Method | law gpt | medical gpt | koran gpt | Average gpt |"
        );
        assert_eq!(
            lines[2],
            "| de-en | Zero-shot | 37.2 | 44.5 | 17.9 | 33.2 |"
        );
        assert_eq!(
            lines[3],
            "| de-en | Style | 48.9 | 57.8 | 19.8 | 42.2(+9.0) |"
        );
    }

    fn flat(values: &[f64], ks: &[usize]) -> Vec<BTreeMap<usize, f64>> {
        values
            .iter()
            .map(|&v| ks.iter().map(|&k| (k, v)).collect())
            .collect()
    }

    #[test]
    fn tier_table_cells() {
        let ks = [1, 5, 10];
        let few = TierBlock {
            mode: "Few-shot".into(),
            cells: flat(&[44.9, 38.4, 37.8, 37.8], &ks),
        };
        assert_eq!(few.avg_cell(0).unwrap(), "44.9");
        assert_eq!(few.avg_cell(1).unwrap(), "38.4 (-14%)");
        assert_eq!(few.avg_cell(2).unwrap(), "37.8 (-16%)");
        let style = TierBlock {
            mode: "Style".into(),
            cells: flat(&[41.2, 35.7], &ks),
        };
        assert_eq!(style.avg_cell(1).unwrap(), "35.7 (-13%)");
        assert_eq!(style.avg_cell(3).unwrap(), "-");

        let t = render_tier_table(&[few, style], &ks).unwrap();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(
            lines[3],
            "| Tier 1 | 38.4 | 38.4 | 38.4 | 38.4 (-14%) | 35.7 | 35.7 | 35.7 | 35.7 (-13%) |"
        );
        assert_eq!(
            lines[5],
            "| Tier 3 | 37.8 | 37.8 | 37.8 | 37.8 (-16%) | - | - | - | - |"
        );
    }

    #[test]
    fn identical_tiers_print_zero() {
        let b = TierBlock {
            mode: "x".into(),
            cells: flat(&[30.0, 30.0], &[1]),
        };
        assert_eq!(b.avg_cell(1).unwrap(), "30.0 (0%)");
        let zero = TierBlock {
            mode: "x".into(),
            cells: vec![BTreeMap::from([(1, 0.0)]), BTreeMap::from([(1, 2.0)])],
        };
        assert_eq!(zero.avg_cell(1).unwrap(), "2.0 (n/a)");
    }

    #[test]
    fn sweep_csv_sorted() {
        let pts = vec![
            SweepPoint {
                mode: "style".into(),
                domain: "law".into(),
                k: 10,
                bleu: 1.0,
            },
            SweepPoint {
                mode: "style".into(),
                domain: "law".into(),
                k: 2,
                bleu: 2.5,
            },
        ];
        assert_eq!(
            sweep_csv(&pts),
            "mode,domain,k,bleu\nstyle,law,2,2.5000\nstyle,law,10,1.0000\n"
        );
    }

    #[test]
    fn closure_summary_rounds_to_tens() {
        let s = gap_closure_summary(20.0, 27.0, 30.0).unwrap();
        assert!(s.contains("about 70%"), "{s}");
        assert!(gap_closure_summary(33.2, 42.2, 47.9)
            .unwrap()
            .contains("about 60%"));
        assert!(gap_closure_summary(1.0, 1.0, 1.0).is_err());
    }
}
