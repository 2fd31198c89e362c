use super::PipelineError;
use crate::corpus::tokenize;
use crate::retrieval::{
    dense_retrieve, partition_tiers, retrieve, EmbeddingTable, InvertedIndex, RetrievalError,
    RetrievalHit, TIER_COUNT, TIER_POOL,
};

/// Source of ranked demonstration ids for one test item.
pub trait Retriever: Send + Sync {
    fn id(&self) -> String;

    /// Up to `k` hits for `query`, best first. `test_id` lets retrievers with
    /// precomputed query representations look them up.
    fn retrieve(
        &self,
        test_id: usize,
        query: &str,
        k: usize,
    ) -> Result<Vec<RetrievalHit>, RetrievalError>;
}

/// BM25 over an inverted index; queries use the index's tokenizer.
pub struct Bm25Retriever<'a> {
    pub index: &'a InvertedIndex,
}

impl Retriever for Bm25Retriever<'_> {
    fn id(&self) -> String {
        format!(
            "bm25(k1={},b={})",
            self.index.params.k1, self.index.params.b
        )
    }

    fn retrieve(
        &self,
        _: usize,
        query: &str,
        k: usize,
    ) -> Result<Vec<RetrievalHit>, RetrievalError> {
        Ok(retrieve(
            self.index,
            &tokenize(query, &self.index.tokenizer),
            k,
        ))
    }
}

/// Cosine retrieval with query embeddings precomputed per test id. The query
/// text is ignored, so this only serves retrieval keyed on the test source.
pub struct DenseRetriever<'a> {
    pub docs: &'a EmbeddingTable,
    pub queries: &'a EmbeddingTable,
}

impl Retriever for DenseRetriever<'_> {
    fn id(&self) -> String {
        format!("dense(dim={})", self.docs.dim)
    }

    fn retrieve(
        &self,
        test_id: usize,
        _: &str,
        k: usize,
    ) -> Result<Vec<RetrievalHit>, RetrievalError> {
        let q = self
            .queries
            .get(test_id)
            .ok_or(RetrievalError::UnknownDoc(test_id))?;
        dense_retrieve(self.docs, q, k)
    }
}

/// Restricts another retriever to one 25-hit band of its top 100.
pub struct TierRetriever<R> {
    pub inner: R,
    pub tier: u8,
}

impl<R: Retriever> TierRetriever<R> {
    pub fn new(inner: R, tier: u8) -> Result<Self, PipelineError> {
        if usize::from(tier) >= TIER_COUNT {
            return Err(PipelineError::InvalidTier(tier));
        }
        Ok(TierRetriever { inner, tier })
    }
}

impl<R: Retriever> Retriever for TierRetriever<R> {
    fn id(&self) -> String {
        format!("{}+tier{}", self.inner.id(), self.tier)
    }

    fn retrieve(
        &self,
        test_id: usize,
        query: &str,
        k: usize,
    ) -> Result<Vec<RetrievalHit>, RetrievalError> {
        let pool = self.inner.retrieve(test_id, query, TIER_POOL)?;
        let [t0, t1, t2, t3] = partition_tiers(&pool);
        let mut band = [t0, t1, t2, t3]
            .into_iter()
            .nth(self.tier.into())
            .unwrap_or_default();
        band.truncate(k);
        Ok(band)
    }
}

impl<T: Retriever + ?Sized> Retriever for &T {
    fn id(&self) -> String {
        (**self).id()
    }

    fn retrieve(
        &self,
        test_id: usize,
        query: &str,
        k: usize,
    ) -> Result<Vec<RetrievalHit>, RetrievalError> {
        (**self).retrieve(test_id, query, k)
    }
}

impl<T: Retriever + ?Sized> Retriever for Box<T> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn retrieve(
        &self,
        test_id: usize,
        query: &str,
        k: usize,
    ) -> Result<Vec<RetrievalHit>, RetrievalError> {
        (**self).retrieve(test_id, query, k)
    }
}
