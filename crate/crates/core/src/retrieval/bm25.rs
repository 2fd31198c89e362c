use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ranked, RetrievalError, RetrievalHit};
use crate::corpus::{tokenize_sentence, Corpus, TokenSeq, TokenizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    /// Term-frequency saturation.
    pub k1: f64,
    /// Length normalization.
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, RetrievalError> {
        let p = Bm25Params { k1, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.k1 > 0.0 && (0.0..=1.0).contains(&self.b) {
            Ok(())
        } else {
            Err(RetrievalError::InvalidParams {
                k1: self.k1,
                b: self.b,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc_id: usize,
    pub tf: u32,
}

/// Inverted index over tokenized documents. Document ids are positions in the
/// indexed corpus, which coincide with sentence ids.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    /// Postings per term, each list sorted by doc id.
    pub postings: BTreeMap<String, Vec<Posting>>,
    pub doc_lengths: Vec<usize>,
    pub avg_doc_length: f64,
    pub params: Bm25Params,
    pub tokenizer: TokenizerConfig,
}

impl InvertedIndex {
    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    /// Builds from already tokenized documents; `docs[i]` becomes doc id `i`.
    pub fn from_token_seqs(
        docs: &[TokenSeq],
        params: Bm25Params,
        tokenizer: TokenizerConfig,
    ) -> Result<Self, RetrievalError> {
        params.validate()?;
        if docs.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        for (doc_id, doc) in docs.iter().enumerate() {
            doc_lengths.push(doc.len());
            let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
            for t in &doc.tokens {
                *counts.entry(t.as_str()).or_default() += 1;
            }
            for (term, tf) in counts {
                postings
                    .entry(term.to_string())
                    .or_default()
                    .push(Posting { doc_id, tf });
            }
        }
        let total: usize = doc_lengths.iter().sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;
        Ok(InvertedIndex {
            postings,
            doc_lengths,
            avg_doc_length,
            params,
            tokenizer,
        })
    }

    pub fn idf(&self, term: &str) -> f64 {
        let df = self.postings.get(term).map_or(0, Vec::len);
        idf(self.doc_count(), df)
    }

    fn term_weight(&self, idf: f64, tf: u32, doc_len: usize) -> f64 {
        term_weight(idf, tf, doc_len, self.avg_doc_length, self.params)
    }
}

fn idf(n: usize, df: usize) -> f64 {
    let n = n as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

fn term_weight(idf: f64, tf: u32, doc_len: usize, avg_len: f64, p: Bm25Params) -> f64 {
    let tf = tf as f64;
    let norm = if avg_len > 0.0 {
        doc_len as f64 / avg_len
    } else {
        0.0
    };
    idf * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * norm))
}

pub fn build_index(
    corpus: &Corpus,
    tokenizer: &TokenizerConfig,
    params: Bm25Params,
) -> Result<InvertedIndex, RetrievalError> {
    let docs: Vec<TokenSeq> = corpus
        .sentences
        .iter()
        .map(|s| tokenize_sentence(s, tokenizer))
        .collect();
    InvertedIndex::from_token_seqs(&docs, params, *tokenizer)
}

/// BM25 score of one document. Repeated query terms contribute once per
/// occurrence, in query order.
pub fn bm25_score(
    index: &InvertedIndex,
    query: &TokenSeq,
    doc_id: usize,
) -> Result<f64, RetrievalError> {
    let doc_len = *index
        .doc_lengths
        .get(doc_id)
        .ok_or(RetrievalError::UnknownDoc(doc_id))?;
    let mut score = 0.0;
    for term in &query.tokens {
        let Some(list) = index.postings.get(term) else {
            continue;
        };
        if let Ok(pos) = list.binary_search_by_key(&doc_id, |p| p.doc_id) {
            score += index.term_weight(idf(index.doc_count(), list.len()), list[pos].tf, doc_len);
        }
    }
    Ok(score)
}

/// Top-`k` documents with positive score, ordered by descending score and
/// then ascending doc id.
pub fn retrieve(index: &InvertedIndex, query: &TokenSeq, k: usize) -> Vec<RetrievalHit> {
    if k == 0 {
        return Vec::new();
    }
    let n = index.doc_count();
    let mut acc = vec![0.0f64; n];
    let mut touched = Vec::new();
    for term in &query.tokens {
        let Some(list) = index.postings.get(term) else {
            continue;
        };
        let w = idf(n, list.len());
        for p in list {
            if acc[p.doc_id] == 0.0 {
                touched.push(p.doc_id);
            }
            acc[p.doc_id] += index.term_weight(w, p.tf, index.doc_lengths[p.doc_id]);
        }
    }
    let scored = touched.into_iter().map(|d| (d, acc[d])).collect();
    ranked(scored, k)
}
