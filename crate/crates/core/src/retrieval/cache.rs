//! Versioned binary index cache, keyed by the indexed corpus' content hash.
//!
//! Layout (little-endian): magic `SMTBM25\0`, format version `u32`, 32-byte
//! corpus hash, `k1: f64`, `b: f64`, tokenizer flags `u8`, doc count `u64`,
//! one `u32` length per doc, term count `u64`, then per term a `u32` byte
//! length, the UTF-8 bytes, a `u32` posting count and `(u32 doc, u32 tf)`
//! pairs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{Bm25Params, InvertedIndex, Posting, RetrievalError};
use crate::corpus::TokenizerConfig;

const MAGIC: &[u8; 8] = b"SMTBM25\0";
pub const INDEX_FORMAT_VERSION: u32 = 1;

fn cache_err(path: &Path, message: impl Into<String>) -> RetrievalError {
    RetrievalError::Cache {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn save_index(
    index: &InvertedIndex,
    corpus_hash: &str,
    path: &Path,
) -> Result<(), RetrievalError> {
    let hash = hex::decode(corpus_hash)
        .ok()
        .filter(|h| h.len() == 32)
        .ok_or_else(|| cache_err(path, "corpus hash must be 64 hex digits"))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(INDEX_FORMAT_VERSION)?;
    w.write_all(&hash)?;
    w.write_f64::<LE>(index.params.k1)?;
    w.write_f64::<LE>(index.params.b)?;
    let flags = u8::from(index.tokenizer.lowercase) | (u8::from(index.tokenizer.split_punct) << 1);
    w.write_u8(flags)?;
    w.write_u64::<LE>(index.doc_lengths.len() as u64)?;
    for &len in &index.doc_lengths {
        w.write_u32::<LE>(len as u32)?;
    }
    w.write_u64::<LE>(index.postings.len() as u64)?;
    for (term, list) in &index.postings {
        w.write_u32::<LE>(term.len() as u32)?;
        w.write_all(term.as_bytes())?;
        w.write_u32::<LE>(list.len() as u32)?;
        for p in list {
            w.write_u32::<LE>(p.doc_id as u32)?;
            w.write_u32::<LE>(p.tf)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a cache file, returning the index and the corpus hash it was built
/// from.
pub fn load_index(path: &Path) -> Result<(InvertedIndex, String), RetrievalError> {
    let mut r = BufReader::new(File::open(path)?);
    let truncated = |_| cache_err(path, "truncated file");
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(cache_err(path, "not an index cache"));
    }
    let version = r.read_u32::<LE>().map_err(truncated)?;
    if version != INDEX_FORMAT_VERSION {
        return Err(cache_err(
            path,
            format!("unsupported format version {version}"),
        ));
    }
    let mut hash = [0u8; 32];
    r.read_exact(&mut hash).map_err(truncated)?;
    let params = Bm25Params {
        k1: r.read_f64::<LE>().map_err(truncated)?,
        b: r.read_f64::<LE>().map_err(truncated)?,
    };
    let flags = r.read_u8().map_err(truncated)?;
    let tokenizer = TokenizerConfig {
        lowercase: flags & 1 != 0,
        split_punct: flags & 2 != 0,
    };
    let n_docs = r.read_u64::<LE>().map_err(truncated)? as usize;
    let mut doc_lengths = Vec::with_capacity(n_docs.min(1 << 24));
    for _ in 0..n_docs {
        doc_lengths.push(r.read_u32::<LE>().map_err(truncated)? as usize);
    }
    let n_terms = r.read_u64::<LE>().map_err(truncated)?;
    let mut postings = BTreeMap::new();
    for _ in 0..n_terms {
        let len = r.read_u32::<LE>().map_err(truncated)? as usize;
        let mut bytes = vec![0u8; len];
        r.read_exact(&mut bytes).map_err(truncated)?;
        let term = String::from_utf8(bytes).map_err(|_| cache_err(path, "term is not UTF-8"))?;
        let count = r.read_u32::<LE>().map_err(truncated)? as usize;
        let mut list = Vec::with_capacity(count.min(n_docs));
        for _ in 0..count {
            let doc_id = r.read_u32::<LE>().map_err(truncated)? as usize;
            let tf = r.read_u32::<LE>().map_err(truncated)?;
            if doc_id >= n_docs {
                return Err(cache_err(path, format!("posting references doc {doc_id}")));
            }
            list.push(Posting { doc_id, tf });
        }
        postings.insert(term, list);
    }
    if n_docs == 0 {
        return Err(RetrievalError::EmptyCorpus);
    }
    let avg_doc_length = doc_lengths.iter().sum::<usize>() as f64 / n_docs as f64;
    let index = InvertedIndex {
        postings,
        doc_lengths,
        avg_doc_length,
        params,
        tokenizer,
    };
    Ok((index, hex::encode(hash)))
}
