//! Evaluation: corpus BLEU, n-gram match rates against retrieved
//! demonstrations, report arithmetic, and a file bridge to external neural
//! scorers.

mod bleu;
mod bridge;
mod ngram;
pub mod report;

use thiserror::Error;

pub use bleu::{
    bleu_corpus, bleu_sentence, modified_precision, sentence_stats, BleuConfig, BleuStats,
    Smoothing,
};
pub use bridge::{export_for_scoring, import_scores, ScoreRow, ScoringRow};
pub use ngram::{avg_ngram_match, ngram_match_rate, NgramCounting};
pub use report::{
    gap_closure_summary, render_method_table, render_mode_grid, render_tier_table, sweep_csv,
    DomainScores, GridRow, MetricReport, SweepPoint, TierBlock,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} hypotheses vs {1} references")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("max n-gram order must be at least 1")]
    InvalidOrder,
    #[error("division by zero")]
    DivisionByZero,
    #[error("score ids do not match exported ids: {0}")]
    IdMismatch(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Share of the zero-shot → few-shot gap recovered by style prompting:
/// `(style − zero) / (few − zero)`.
pub fn gap_closure(zero: f64, style: f64, few: f64) -> Result<f64, MetricsError> {
    let gap = few - zero;
    if gap == 0.0 {
        return Err(MetricsError::DivisionByZero);
    }
    Ok((style - zero) / gap)
}

/// Relative change of a tier's score against tier 0, in percent.
pub fn tier_delta(tier0_avg: f64, tier_avg: f64) -> Result<f64, MetricsError> {
    if tier0_avg == 0.0 {
        return Err(MetricsError::DivisionByZero);
    }
    Ok(100.0 * (tier_avg - tier0_avg) / tier0_avg)
}

/// Integer percentage with explicit sign, rounded half away from zero:
/// `-14.48` → `"-14%"`, `8.9` → `"+9%"`, `0` → `"0%"`.
pub fn format_percent(pct: f64) -> String {
    let r = pct.round() as i64;
    match r {
        0 => "0%".to_string(),
        r if r > 0 => format!("+{r}%"),
        r => format!("{r}%"),
    }
}
