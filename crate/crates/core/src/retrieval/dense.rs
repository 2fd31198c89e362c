use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{ranked, RetrievalError, RetrievalHit};

/// Precomputed sentence embeddings, unit-normalized on insertion.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: BTreeMap<usize, Vec<f64>>,
}

#[derive(Deserialize)]
struct EmbeddingLine {
    id: usize,
    vec: Vec<f64>,
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|x| x / norm).collect())
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: usize, vec: &[f64]) -> Result<(), RetrievalError> {
        if vec.len() != self.dim {
            return Err(RetrievalError::DimMismatch {
                expected: self.dim,
                got: vec.len(),
            });
        }
        if self.vectors.contains_key(&id) {
            return Err(RetrievalError::DuplicateId(id));
        }
        let unit = normalized(vec).ok_or(RetrievalError::ZeroVector(id))?;
        self.vectors.insert(id, unit);
        Ok(())
    }

    pub fn get(&self, id: usize) -> Option<&[f64]> {
        self.vectors.get(&id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Reads a JSONL embedding file: one `{"id": int, "vec": [float, ...]}` per
/// line. The dimension is fixed by the first line.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, RetrievalError> {
    let text = fs::read_to_string(path)?;
    let mut table: Option<EmbeddingTable> = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: EmbeddingLine =
            serde_json::from_str(line).map_err(|e| RetrievalError::EmbeddingFormat {
                line: i + 1,
                message: e.to_string(),
            })?;
        let t = table.get_or_insert_with(|| EmbeddingTable::new(row.vec.len()));
        t.insert(row.id, &row.vec)?;
    }
    Ok(table.unwrap_or_default())
}

/// Top-`k` documents by cosine similarity, ties broken by ascending doc id.
pub fn dense_retrieve(
    table: &EmbeddingTable,
    query: &[f64],
    k: usize,
) -> Result<Vec<RetrievalHit>, RetrievalError> {
    if query.len() != table.dim {
        return Err(RetrievalError::DimMismatch {
            expected: table.dim,
            got: query.len(),
        });
    }
    let q = normalized(query).unwrap_or_else(|| query.to_vec());
    let scored = table
        .vectors
        .iter()
        .map(|(&id, v)| (id, v.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>()))
        .collect();
    Ok(ranked(scored, k))
}
