//! Downstream audits: gendered pronoun resolution over annotated
//! coreference data, and employment-attribute association measurements.

pub mod employment;
pub mod features;
pub mod gap;
pub mod mlp;
pub mod neither;
pub mod topics;

pub use employment::{employment_audit, load_attribute_list, AttributeFormat, EmploymentReport, EmploymentTemplate};
pub use features::extract_span_features;
pub use gap::{load_gap, GapCorpus, GapCounts, GapInstance, Gender, GoldLabel};
pub use mlp::{train_gpr, GprClassifier, GprModelConfig, CLASS_COUNT};
pub use neither::{neither_gap_analysis, NeitherReport, NeitherSample};
pub use topics::{topic_bias_correlation, TopicBiasReport};

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::ModelBackend;
use crate::error::Result;
use crate::stats::{build_doc_term_matrix, nmf, PermutationConfig};

/// Everything the pronoun-resolution audit produces in one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GprAuditReport {
    pub counts: GapCounts,
    pub skipped_rows: Vec<(usize, String)>,
    pub neither: NeitherReport,
    pub topics: TopicBiasReport,
    pub topic_count: usize,
    pub nmf_iterations: usize,
    pub nmf_converged: bool,
    pub model_config: GprModelConfig,
}

/// Label index for the classifier: entity A, entity B, or neither.
pub fn label_index(label: GoldLabel) -> usize {
    match label {
        GoldLabel::A => 0,
        GoldLabel::B => 1,
        GoldLabel::Neither => 2,
    }
}

/// Span features for every instance, fanned out across workers when the
/// backend allows it.
pub fn extract_all_features(
    backend: &dyn ModelBackend,
    instances: &[GapInstance],
) -> Result<Vec<Vec<f64>>> {
    if backend.concurrent() {
        instances
            .par_iter()
            .map(|i| extract_span_features(backend, i))
            .collect()
    } else {
        instances
            .iter()
            .map(|i| extract_span_features(backend, i))
            .collect()
    }
}

/// The full pipeline: features, classifier training, the neither-entity
/// probability gap, topic extraction, and topic-bias correlation.
/// Trains and reports on the same instances.
pub fn run_gpr_audit(
    backend: &dyn ModelBackend,
    corpus: &GapCorpus,
    model_config: &GprModelConfig,
    topic_count: usize,
    top_terms_per_topic: usize,
    permutation: &PermutationConfig,
    stopwords: &BTreeSet<String>,
) -> Result<GprAuditReport> {
    let instances = &corpus.instances;
    let features = extract_all_features(backend, instances)?;
    let labels: Vec<usize> = instances.iter().map(|i| label_index(i.label())).collect();

    let classifier = train_gpr(&features, &labels, model_config)?;
    let probs = classifier.predict_proba(&features)?;
    let neither_probs: Vec<f64> = probs.iter().map(|p| p[2]).collect();

    let samples: Vec<NeitherSample> = instances
        .iter()
        .zip(&neither_probs)
        .map(|(i, &p)| NeitherSample {
            gender: i.pronoun_gender,
            neither_probability: p,
            gold_is_neither: i.label() == GoldLabel::Neither,
        })
        .collect();
    let neither = neither_gap_analysis(&samples, permutation)?;

    let texts: Vec<String> = instances.iter().map(|i| i.text.clone()).collect();
    let matrix = build_doc_term_matrix(&texts, stopwords, 2)?;
    let factorization = nmf(
        &matrix.rows,
        &matrix.vocabulary,
        topic_count,
        200,
        1e-9,
        model_config.seed,
    )?;
    let topics = topic_bias_correlation(
        backend,
        instances,
        &factorization.model,
        &neither_probs,
        top_terms_per_topic,
    )?;

    Ok(GprAuditReport {
        counts: corpus.counts.clone(),
        skipped_rows: corpus.skipped.clone(),
        neither,
        topics,
        topic_count,
        nmf_iterations: factorization.iterations,
        nmf_converged: factorization.converged,
        model_config: model_config.clone(),
    })
}
