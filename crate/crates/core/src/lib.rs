//! Retrieval-augmented translation prompting for large language models.
//!
//! Three prompting modes share one pipeline: zero-shot, few-shot with BM25
//! retrieved parallel demonstrations, and style-learning, which re-prompts a
//! zero-shot draft with target-language sentences retrieved using the draft
//! itself as the query. Alongside the pipeline live the analysis tools used
//! to compare the modes: corpus BLEU, n-gram match rates against retrieved
//! demonstrations, and Zhang-Shasha tree edit distance over constituency and
//! dependency parses.

pub mod corpus;
pub mod exec;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod prompting;
pub mod retrieval;
pub mod styletree;
