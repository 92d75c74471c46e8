//! The neither-entity probability gap: mean predicted NEITHER
//! probability per pronoun gender, gold-label priors, and a one-sided
//! permutation test (female mean exceeding male) obtained by shuffling
//! gender labels across instances.

use serde::{Deserialize, Serialize};

use crate::error::{BiasError, Result};
use crate::stats::{mean, permutation_pvalue, PermutationConfig};

use super::gap::Gender;

#[derive(Debug, Clone, Copy)]
pub struct NeitherSample {
    pub gender: Gender,
    pub neither_probability: f64,
    pub gold_is_neither: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeitherReport {
    pub n_male: usize,
    pub n_female: usize,
    /// Share of gold NEITHER labels per gender.
    pub male_prior: f64,
    pub female_prior: f64,
    /// Mean predicted NEITHER probability per gender.
    pub male_mean_predicted: f64,
    pub female_mean_predicted: f64,
    /// One-sided p for female mean > male mean.
    pub p_value: f64,
    pub exact: bool,
    pub n_permutations_used: u64,
}

pub fn neither_gap_analysis(
    samples: &[NeitherSample],
    config: &PermutationConfig,
) -> Result<NeitherReport> {
    let female: Vec<f64> = samples
        .iter()
        .filter(|s| s.gender == Gender::Female)
        .map(|s| s.neither_probability)
        .collect();
    let male: Vec<f64> = samples
        .iter()
        .filter(|s| s.gender == Gender::Male)
        .map(|s| s.neither_probability)
        .collect();
    if female.is_empty() || male.is_empty() {
        return Err(BiasError::Validation(
            "both pronoun genders must be present".into(),
        ));
    }
    let prior = |gender: Gender| {
        let of_gender: Vec<&NeitherSample> =
            samples.iter().filter(|s| s.gender == gender).collect();
        of_gender.iter().filter(|s| s.gold_is_neither).count() as f64 / of_gender.len() as f64
    };

    let outcome = permutation_pvalue(&female, &male, |f, m| mean(f) - mean(m), config)?;
    Ok(NeitherReport {
        n_male: male.len(),
        n_female: female.len(),
        male_prior: prior(Gender::Male),
        female_prior: prior(Gender::Female),
        male_mean_predicted: mean(&male),
        female_mean_predicted: mean(&female),
        p_value: outcome.p_value,
        exact: outcome.exact,
        n_permutations_used: outcome.n_used,
    })
}
