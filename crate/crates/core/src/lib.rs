//! Measures social bias in masked language models by querying the
//! model's own mask predictions: how much an attribute word shifts the
//! probability of a target (he/she, flower/insect, ...) relative to its
//! prior, aggregated into category-level statistics with permutation
//! significance. A cosine-similarity association baseline over static or
//! contextual embeddings, plus two downstream audits (pronoun resolution
//! and employment attributes), share the same machinery.

pub mod audit;
pub mod backend;
pub mod bias;
pub mod error;
pub mod report;
pub mod stats;
pub mod stimuli;
pub mod weat;

pub use backend::{
    BackendDescriptor, BackendKind, CachedBackend, EmbeddingVector, HttpBackend, MaskedQuery,
    MockBackend, MockConfig, ModelBackend, SlotRole, StaticVectorBackend, TokenDistribution,
};
pub use bias::{
    attribute_mean_bias, increased_log_probability, log_prob_bias_score, run_category_test,
    AssociationRecord, BiasTestResult, CategoryRun,
};
pub use error::{BiasError, Result};
pub use stats::{
    nmf, permutation_pvalue, spearman, top_terms, PermutationConfig, PermutationOutcome,
    TopicModel,
};
pub use stimuli::{
    balance_sets, filter_oov, load_category, render, Fill, NumberAgreement, Template, TargetSet,
    TargetWord, WeatCategory,
};
pub use weat::{
    contextual_word_sets, extract_masked_embedding, static_word_sets, weat_association, weat_test,
    EmbeddedWordSet,
};
