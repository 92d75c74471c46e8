//! Shared numerical machinery: permutation significance testing,
//! Spearman rank correlation, multiplicative-update NMF, and the TF-IDF
//! weighting that feeds topic extraction.

mod nmf;
mod permutation;
mod spearman;
mod tfidf;

pub use nmf::{nmf, top_terms, NmfOutcome, TopicModel};
pub use permutation::{permutation_pvalue, PermutationConfig, PermutationOutcome};
pub use spearman::spearman;
pub use tfidf::{build_doc_term_matrix, default_stopwords, load_stopwords, DocTermMatrix};

/// Difference of group means and the effect size normalized by the
/// population standard deviation over the pooled values.
///
/// All-equal pools have zero spread and a zero statistic; the effect
/// size is defined as 0 there.
pub fn difference_effect(a: &[f64], b: &[f64]) -> (f64, f64) {
    let statistic = mean(a) - mean(b);
    let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let sd = population_std(&pooled);
    let effect = if statistic == 0.0 { 0.0 } else { statistic / sd };
    (statistic, effect)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard deviation with the population convention (divide by n).
pub fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
    var.sqrt()
}
