use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::corpus::TokenSeq;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    None,
    /// Adds one to matched and total counts for n ≥ 2.
    AddOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct BleuConfig {
    pub max_n: usize,
    pub smoothing: Smoothing,
    pub case_sensitive: bool,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_n: 4,
            smoothing: Smoothing::None,
            case_sensitive: false,
        }
    }
}

impl BleuConfig {
    pub fn sentence() -> Self {
        BleuConfig {
            smoothing: Smoothing::AddOne,
            ..Default::default()
        }
    }
}

/// Sufficient statistics for BLEU: clipped matches and candidate n-gram
/// totals per order, plus hypothesis and reference lengths.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BleuStats {
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    fn new(max_n: usize) -> Self {
        BleuStats {
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            hyp_len: 0,
            ref_len: 0,
        }
    }

    fn add(&mut self, other: &BleuStats) {
        for (a, b) in self.matches.iter_mut().zip(&other.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// BLEU on the 0–100 scale.
    pub fn score(&self, smoothing: Smoothing) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for (n, (&m, &t)) in self.matches.iter().zip(&self.totals).enumerate() {
            let (m, t) = match smoothing {
                Smoothing::AddOne if n > 0 => (m + 1, t + 1),
                _ => (m, t),
            };
            if m == 0 || t == 0 {
                return 0.0;
            }
            log_sum += (m as f64 / t as f64).ln();
        }
        let bp = if self.hyp_len >= self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        };
        100.0 * bp * (log_sum / self.matches.len() as f64).exp()
    }
}

fn normalized<'a>(seq: &'a TokenSeq, case_sensitive: bool) -> Vec<std::borrow::Cow<'a, str>> {
    seq.tokens
        .iter()
        .map(|t| {
            if case_sensitive {
                std::borrow::Cow::Borrowed(t.as_str())
            } else {
                std::borrow::Cow::Owned(t.to_lowercase())
            }
        })
        .collect()
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts
                .entry(w.iter().map(AsRef::as_ref).collect())
                .or_default() += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and candidate total for one sentence pair.
pub fn modified_precision(hyp: &TokenSeq, reference: &TokenSeq, n: usize) -> (u64, u64) {
    let h = ngram_counts(&hyp.tokens, n);
    let r = ngram_counts(&reference.tokens, n);
    let total = h.values().sum();
    let matched = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, total)
}

pub fn sentence_stats(hyp: &TokenSeq, reference: &TokenSeq, cfg: &BleuConfig) -> BleuStats {
    let h = normalized(hyp, cfg.case_sensitive);
    let r = normalized(reference, cfg.case_sensitive);
    let mut stats = BleuStats::new(cfg.max_n);
    stats.hyp_len = h.len() as u64;
    stats.ref_len = r.len() as u64;
    for n in 1..=cfg.max_n {
        let hc = ngram_counts(&h, n);
        let rc = ngram_counts(&r, n);
        stats.totals[n - 1] = hc.values().sum();
        stats.matches[n - 1] = hc
            .iter()
            .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
            .sum();
    }
    stats
}

pub fn bleu_corpus(
    hyps: &[TokenSeq],
    refs: &[TokenSeq],
    cfg: &BleuConfig,
) -> Result<f64, MetricsError> {
    if hyps.len() != refs.len() {
        return Err(MetricsError::LengthMismatch(hyps.len(), refs.len()));
    }
    if hyps.is_empty() {
        return Err(MetricsError::Empty);
    }
    if cfg.max_n == 0 {
        return Err(MetricsError::InvalidOrder);
    }
    let mut total = BleuStats::new(cfg.max_n);
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&sentence_stats(h, r, cfg));
    }
    Ok(total.score(cfg.smoothing))
}

pub fn bleu_sentence(hyp: &TokenSeq, reference: &TokenSeq, cfg: &BleuConfig) -> f64 {
    sentence_stats(hyp, reference, cfg).score(cfg.smoothing)
}
