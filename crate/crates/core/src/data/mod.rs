//! Embedding dictionaries, labeled corpora and the synthetic generators for
//! both experiments.

mod corpus;
mod dictionary;
mod seqpairs;

pub use corpus::{
    generate_sentences, generate_synthetic_corpus, tokenize, CorpusConfig, CueLayout, LabeledCorpus, Split,
    SyntheticCorpus,
};
pub use dictionary::{EmbeddingDictionary, MatrixFormat, OOV_WORD};
pub use seqpairs::{generate_correlated_pairs, CorrelationSource, SeqPairConfig, SeqPairMetadata, SeqPairSet};
