use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenSeq;

/// How a translation's n-grams are counted when computing match rates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NgramCounting {
    /// Distinct n-grams.
    #[default]
    Type,
    /// Every occurrence.
    Token,
}

fn ngrams(seq: &TokenSeq, n: usize) -> impl Iterator<Item = &[String]> {
    let windows = if n == 0 || seq.tokens.len() < n {
        [].windows(1)
    } else {
        seq.tokens.windows(n)
    };
    windows
}

/// Fraction of the translation's n-grams that occur anywhere in the
/// retrieved sentences. Zero when the translation has no n-gram of length `n`.
pub fn ngram_match_rate(
    translation: &TokenSeq,
    retrieved: &[TokenSeq],
    n: usize,
    counting: NgramCounting,
) -> f64 {
    let pool: HashSet<&[String]> = retrieved.iter().flat_map(|r| ngrams(r, n)).collect();
    let (hit, total) = match counting {
        NgramCounting::Type => {
            let own: HashSet<&[String]> = ngrams(translation, n).collect();
            (own.iter().filter(|g| pool.contains(*g)).count(), own.len())
        }
        NgramCounting::Token => {
            let all: Vec<&[String]> = ngrams(translation, n).collect();
            (all.iter().filter(|g| pool.contains(*g)).count(), all.len())
        }
    };
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Mean match rate over `(translation, retrieved demonstrations)` items.
pub fn avg_ngram_match(
    items: &[(TokenSeq, Vec<TokenSeq>)],
    n: usize,
    counting: NgramCounting,
) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    items
        .iter()
        .map(|(t, r)| ngram_match_rate(t, r, n, counting))
        .sum::<f64>()
        / items.len() as f64
}
