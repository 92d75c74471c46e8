//! Topic-level gender bias and its correlation with classifier
//! behavior: each topic's bias is the weight-weighted sum of
//! log-probability bias scores (men vs women) over its top terms under a
//! generic interest template; each sample inherits the weighted sum of
//! its topic biases.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::ModelBackend;
use crate::bias::log_prob_bias_score;
use crate::error::{BiasError, Result};
use crate::stats::{spearman, top_terms, TopicModel};
use crate::stimuli::{is_single_vocab_token, NumberAgreement, TargetWord, Template};

use super::gap::{GapInstance, Gender};

/// The fixed probe used for topic terms.
pub fn interest_template() -> Template {
    Template::new(
        "generic-interest",
        "[TARGET] are interested in [ATTRIBUTE]",
        NumberAgreement::Plural,
    )
    .expect("static template is valid")
}

pub fn gender_targets() -> (TargetWord, TargetWord) {
    (
        TargetWord::new("men", NumberAgreement::Plural),
        TargetWord::new("women", NumberAgreement::Plural),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicBiasReport {
    /// Male-vs-female bias per topic index.
    pub per_topic_bias: Vec<f64>,
    /// The scored top terms per topic: (term, topic weight, bias score).
    pub per_topic_terms: Vec<Vec<(String, f64, f64)>>,
    /// Instance id -> topic-weighted bias.
    pub per_sample_bias: BTreeMap<String, f64>,
    /// Spearman rho and two-sided p between female-instance sample bias
    /// and the classifier's NEITHER probability; absent when undefined.
    pub spearman_rho: Option<f64>,
    pub spearman_p: Option<f64>,
    pub spearman_note: Option<String>,
    pub spearman_n: usize,
    /// Terms skipped because they are not single vocabulary tokens.
    pub dropped_terms: Vec<String>,
}

/// Scores every topic of `model`, derives per-sample biases over `instances`
/// (aligned with the model's document rows), and correlates female-instance
/// sample bias with `neither_probabilities` (also instance-aligned).
pub fn topic_bias_correlation(
    backend: &dyn ModelBackend,
    instances: &[GapInstance],
    model: &TopicModel,
    neither_probabilities: &[f64],
    top_n: usize,
) -> Result<TopicBiasReport> {
    if model.w.len() != instances.len() {
        return Err(BiasError::Validation(format!(
            "topic model scores {} documents for {} instances",
            model.w.len(),
            instances.len()
        )));
    }
    if neither_probabilities.len() != instances.len() {
        return Err(BiasError::Validation(format!(
            "{} probabilities for {} instances",
            neither_probabilities.len(),
            instances.len()
        )));
    }
    let template = interest_template();
    let (men, women) = gender_targets();

    let mut per_topic_bias = Vec::with_capacity(model.k);
    let mut per_topic_terms = Vec::with_capacity(model.k);
    let mut dropped = BTreeMap::new();
    let mut term_scores: BTreeMap<String, f64> = BTreeMap::new();
    for topic in 0..model.k {
        let mut bias = 0.0;
        let mut scored_terms = Vec::new();
        for (term, weight) in top_terms(model, topic, top_n)? {
            if let Some(&score) = term_scores.get(&term) {
                bias += weight * score;
                scored_terms.push((term, weight, score));
                continue;
            }
            if dropped.contains_key(&term) {
                continue;
            }
            if !is_single_vocab_token(&term, backend)? {
                dropped.insert(term, ());
                continue;
            }
            let score = log_prob_bias_score(backend, &template, &men, &women, &term)?;
            term_scores.insert(term.clone(), score);
            bias += weight * score;
            scored_terms.push((term, weight, score));
        }
        per_topic_bias.push(bias);
        per_topic_terms.push(scored_terms);
    }

    // Per-sample bias: topic weights normalized per document, then the
    // weighted sum of topic biases.
    let mut per_sample_bias = BTreeMap::new();
    let mut sample_bias_by_index = Vec::with_capacity(instances.len());
    for (instance, weights) in instances.iter().zip(&model.w) {
        let total: f64 = weights.iter().sum();
        let bias = if total > 0.0 {
            weights
                .iter()
                .zip(&per_topic_bias)
                .map(|(w, b)| (w / total) * b)
                .sum()
        } else {
            0.0
        };
        per_sample_bias.insert(instance.id.clone(), bias);
        sample_bias_by_index.push(bias);
    }

    let female_bias: Vec<f64> = instances
        .iter()
        .zip(&sample_bias_by_index)
        .filter(|(i, _)| i.pronoun_gender == Gender::Female)
        .map(|(_, &b)| b)
        .collect();
    let female_neither: Vec<f64> = instances
        .iter()
        .zip(neither_probabilities)
        .filter(|(i, _)| i.pronoun_gender == Gender::Female)
        .map(|(_, &p)| p)
        .collect();

    let (spearman_rho, spearman_p, spearman_note) = if female_bias.len() < 3 {
        (
            None,
            None,
            Some(format!(
                "undefined: only {} female instances",
                female_bias.len()
            )),
        )
    } else {
        match spearman(&female_bias, &female_neither) {
            Ok((rho, p)) => (Some(rho), Some(p), None),
            Err(BiasError::UndefinedCorrelation(why)) => {
                (None, None, Some(format!("undefined: {why}")))
            }
            Err(e) => return Err(e),
        }
    };

    Ok(TopicBiasReport {
        per_topic_bias,
        per_topic_terms,
        per_sample_bias,
        spearman_rho,
        spearman_p,
        spearman_note,
        spearman_n: female_bias.len(),
        dropped_terms: dropped.into_keys().collect(),
    })
}
