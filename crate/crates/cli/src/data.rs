//! Corpora of one domain, oriented by the configured direction.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stylemt::corpus::{load_monolingual, load_parallel, Corpus, Domain, ParallelCorpus, Sentence};
use stylemt::retrieval::{load_embeddings, EmbeddingTable};

use crate::config::{DomainConfig, RunConfig};
use crate::CliError;

#[derive(Debug, Clone)]
pub struct DomainData {
    pub name: String,
    /// Training pairs, source side first.
    pub train: Option<ParallelCorpus>,
    /// Target-language corpus searched for style samples.
    pub mono: Option<Corpus>,
    pub dev: Option<ParallelCorpus>,
    /// Test sources, after sub-sampling. Ids are line numbers of the full
    /// test file.
    pub test: Vec<Sentence>,
    /// Full target side of the test set.
    pub refs: Option<Corpus>,
    pub train_emb: Option<EmbeddingTable>,
    pub test_emb: Option<EmbeddingTable>,
    /// Content hash of every loaded corpus, keyed `<domain>.<lang>.<split>`.
    pub hashes: BTreeMap<String, String>,
}

impl DomainData {
    pub fn load(name: &str, d: &DomainConfig, cfg: &RunConfig) -> Result<Self, CliError> {
        let domain: Domain = name.parse().unwrap_or_else(|never| match never {});
        let (sc, tc) = cfg.direction.codes();
        let (s, t) = (d.side(sc), d.side(tc));
        let mut hashes = BTreeMap::new();
        let mut note = |split: &str, code: &str, c: &Corpus| {
            hashes.insert(format!("{name}.{code}.{split}"), c.content_hash());
        };

        let pair = |a: &Option<std::path::PathBuf>,
                    b: &Option<std::path::PathBuf>|
         -> Result<_, CliError> {
            match (a, b) {
                (Some(a), Some(b)) => Ok(Some(load_parallel(a, b, domain.clone())?)),
                _ => Ok(None),
            }
        };
        let mono_file = |p: &Option<std::path::PathBuf>| -> Result<_, CliError> {
            p.as_deref()
                .map(|p| load_monolingual(p, domain.clone()))
                .transpose()
                .map_err(CliError::from)
        };

        let train = pair(&s.train, &t.train)?;
        let dev = pair(&s.dev, &t.dev)?;
        let mono = match mono_file(&t.mono)? {
            Some(m) => Some(m),
            None => match &train {
                Some(tr) => Some(tr.target_side()),
                None => mono_file(&t.train)?,
            },
        };
        let test_src = mono_file(&s.test)?;
        let refs = mono_file(&t.test)?;
        if let (Some(src), Some(r)) = (&test_src, &refs) {
            if src.len() != r.len() {
                return Err(CliError::Corpus(stylemt::corpus::CorpusError::Alignment(
                    src.len(),
                    r.len(),
                )));
            }
        }
        if let Some(tr) = &train {
            note("train", sc, &tr.source_side());
            note("train", tc, &tr.target_side());
        }
        if let Some(m) = &mono {
            note("mono", tc, m);
        }
        if let Some(dv) = &dev {
            note("dev", sc, &dv.source_side());
            note("dev", tc, &dv.target_side());
        }
        if let Some(c) = &test_src {
            note("test", sc, c);
        }
        if let Some(c) = &refs {
            note("test", tc, c);
        }
        let emb = |p: &Option<std::path::PathBuf>| -> Result<Option<EmbeddingTable>, CliError> {
            p.as_deref()
                .map(load_embeddings)
                .transpose()
                .map_err(CliError::from)
        };
        let test = match test_src {
            Some(c) => subsample(c.sentences, cfg.limit, cfg.seed),
            None => Vec::new(),
        };
        Ok(DomainData {
            name: name.to_string(),
            train,
            mono,
            dev,
            test,
            refs,
            train_emb: emb(&s.train_emb)?,
            test_emb: emb(&s.test_emb)?,
            hashes,
        })
    }

    pub fn reference(&self, test_id: usize) -> Option<&str> {
        self.refs.as_ref()?.get(test_id).map(|s| s.text.as_str())
    }
}

/// All configured domains, in name order.
pub fn load_domains(cfg: &RunConfig) -> Result<Vec<DomainData>, CliError> {
    cfg.domains
        .iter()
        .map(|(n, d)| DomainData::load(n, d, cfg))
        .collect()
}

/// Keeps the first `limit` items, or with a seed a uniform sample of
/// `limit` items in their original order.
pub fn subsample(items: Vec<Sentence>, limit: Option<usize>, seed: Option<u64>) -> Vec<Sentence> {
    let Some(limit) = limit.filter(|&l| l < items.len()) else {
        return items;
    };
    match seed {
        None => items.into_iter().take(limit).collect(),
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = rand::seq::index::sample(&mut rng, items.len(), limit).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| items[i].clone()).collect()
        }
    }
}

pub fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}
