//! Log-probability bias measurement: the increased log probability of a
//! target given an attribute (relative to the both-masked prior), the
//! pairwise bias score between two targets, and category-level tests
//! with attribute-permutation significance.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{ModelBackend, SlotRole};
use crate::error::{BiasError, Result};
use crate::stats::{difference_effect, mean, permutation_pvalue, PermutationConfig};
use crate::stimuli::{
    balance_word_lists, filter_oov, filter_oov_targets, pair_targets, Fill, Template, TargetWord,
    WeatCategory,
};

/// One increased-log-probability measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationRecord {
    pub template_id: String,
    pub target: String,
    pub attribute: String,
    pub p_target: f64,
    pub p_prior: f64,
    /// ln(p_target) - ln(p_prior), natural log units.
    pub score: f64,
}

/// Category-level outcome shared by the log-probability test and the
/// cosine baseline. For kind `logprob` the per-item keys are attribute
/// words; for kind `weat` they are target words.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasTestResult {
    pub category_name: String,
    pub kind: String,
    pub per_attribute_bias: BTreeMap<String, f64>,
    pub statistic: f64,
    pub effect_size: f64,
    pub p_value: f64,
    pub n_permutations_used: u64,
    pub exact: bool,
    pub seed: u64,
    pub metadata: ResultMetadata,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ResultMetadata {
    /// Words removed because they are not single vocabulary tokens.
    pub dropped_oov: Vec<String>,
    /// Words removed to equalize set sizes, when any.
    pub balance_removed: Vec<String>,
    pub rebalanced: bool,
    /// Effect-size denominator convention.
    pub std_convention: String,
    pub notes: Vec<String>,
}

/// A category run: the summary plus every underlying measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryRun {
    pub result: BiasTestResult,
    pub records: Vec<AssociationRecord>,
}

fn check_agreement(template: &Template, target: &TargetWord) -> Result<()> {
    if !template.number.accepts(target.number) {
        return Err(BiasError::Agreement {
            template: template.text.clone(),
            template_number: template.number.to_string(),
            word: target.token.clone(),
            word_number: target.number.to_string(),
        });
    }
    Ok(())
}

/// How much more likely the target is once the attribute is visible:
/// p_target from the target-masked sentence, p_prior from the same
/// sentence with the attribute masked as well, score = ln of their ratio.
pub fn increased_log_probability(
    backend: &dyn ModelBackend,
    template: &Template,
    target: &TargetWord,
    attribute: &str,
) -> Result<AssociationRecord> {
    check_agreement(template, target)?;
    let target_token = target.token.to_lowercase();
    let attribute_lc = attribute.to_lowercase();

    let masked_target = crate::stimuli::render(
        backend,
        template,
        Fill::Mask,
        None,
        Fill::Word(&attribute_lc),
    )?;
    let p_target = backend.token_probability(&masked_target, SlotRole::Target, &target_token)?;

    let masked_both = crate::stimuli::render(backend, template, Fill::Mask, None, Fill::Mask)?;
    let p_prior = backend.token_probability(&masked_both, SlotRole::Target, &target_token)?;

    Ok(AssociationRecord {
        template_id: template.id.clone(),
        target: target_token,
        attribute: attribute_lc,
        p_target,
        p_prior,
        score: p_target.ln() - p_prior.ln(),
    })
}

/// Difference between the increased log probability scores of two
/// targets for one attribute. Swapping the targets negates the value
/// exactly; identical targets give exactly zero.
pub fn log_prob_bias_score(
    backend: &dyn ModelBackend,
    template: &Template,
    target_one: &TargetWord,
    target_two: &TargetWord,
    attribute: &str,
) -> Result<f64> {
    Ok(log_prob_bias_records(backend, template, target_one, target_two, attribute)?.0)
}

/// As [`log_prob_bias_score`], also returning both measurements.
pub fn log_prob_bias_records(
    backend: &dyn ModelBackend,
    template: &Template,
    target_one: &TargetWord,
    target_two: &TargetWord,
    attribute: &str,
) -> Result<(f64, [AssociationRecord; 2])> {
    let first = increased_log_probability(backend, template, target_one, attribute)?;
    let second = increased_log_probability(backend, template, target_two, attribute)?;
    let value = first.score - second.score;
    Ok((value, [first, second]))
}

fn attribute_bias_detail(
    backend: &dyn ModelBackend,
    templates: &[Template],
    pairs: &[(&TargetWord, &TargetWord)],
    attribute: &str,
) -> Result<(f64, Vec<AssociationRecord>)> {
    let mut scores = Vec::new();
    let mut records = Vec::new();
    for template in templates {
        for (x, y) in pairs {
            if !template.number.accepts(x.number) || !template.number.accepts(y.number) {
                continue;
            }
            let (value, pair_records) =
                log_prob_bias_records(backend, template, x, y, attribute)?;
            scores.push(value);
            records.extend(pair_records);
        }
    }
    if scores.is_empty() {
        return Err(BiasError::EmptyMeasurement(format!(
            "no agreement-valid (template, target pair) combination for `{attribute}`"
        )));
    }
    Ok((mean(&scores), records))
}

/// Mean log probability bias score for one attribute over every
/// agreement-valid (template, target-pair) combination; pairs match X
/// and Y words of the same grammatical number in file order.
pub fn attribute_mean_bias(
    backend: &dyn ModelBackend,
    category: &WeatCategory,
    attribute: &str,
) -> Result<f64> {
    let known = category
        .attributes
        .a
        .words
        .iter()
        .chain(category.attributes.b.words.iter())
        .any(|w| w == attribute);
    if !known {
        return Err(BiasError::Validation(format!(
            "attribute `{attribute}` is not in {} or {}",
            category.attributes.a.label, category.attributes.b.label
        )));
    }
    let pairs = pair_targets(&category.targets.x, &category.targets.y);
    attribute_bias_detail(backend, &category.templates, &pairs, attribute).map(|(m, _)| m)
}

/// Runs the full category test: per-attribute mean bias scores, the
/// A-vs-B statistic, the effect size over pooled per-attribute means,
/// and attribute-permutation significance.
pub fn run_category_test(
    backend: &dyn ModelBackend,
    category: &WeatCategory,
    config: &PermutationConfig,
    seed: u64,
) -> Result<CategoryRun> {
    category.validate()?;
    let mut metadata = ResultMetadata {
        std_convention: "population".into(),
        ..ResultMetadata::default()
    };

    let x = filter_oov_targets(&category.targets.x, backend)?;
    let y = filter_oov_targets(&category.targets.y, backend)?;
    for dropped in category
        .targets
        .x
        .words
        .iter()
        .filter(|w| !x.words.contains(w))
        .chain(category.targets.y.words.iter().filter(|w| !y.words.contains(w)))
    {
        metadata.dropped_oov.push(dropped.token.clone());
    }
    if x.words.is_empty() || y.words.is_empty() {
        return Err(BiasError::Validation(format!(
            "category `{}` has no in-vocabulary targets on one side",
            category.name
        )));
    }

    let mut a = filter_oov(&category.attributes.a.words, backend)?;
    let mut b = filter_oov(&category.attributes.b.words, backend)?;
    for dropped in category
        .attributes
        .a
        .words
        .iter()
        .filter(|w| !a.contains(w))
        .chain(category.attributes.b.words.iter().filter(|w| !b.contains(w)))
    {
        metadata.dropped_oov.push(dropped.clone());
    }
    if a.is_empty() || b.is_empty() {
        return Err(BiasError::Validation(format!(
            "category `{}` has no in-vocabulary attributes on one side",
            category.name
        )));
    }
    if a.len() != b.len() {
        let (ba, bb, removed) = balance_word_lists(&a, &b, seed);
        a = ba;
        b = bb;
        metadata.rebalanced = true;
        metadata.balance_removed = removed;
    }

    let pairs = pair_targets(&x, &y);
    if pairs.is_empty() {
        return Err(BiasError::EmptyMeasurement(format!(
            "category `{}` pairs no targets across X and Y",
            category.name
        )));
    }

    // Score every attribute; queries may fan out across workers when the
    // backend allows it, and results are reduced in canonical order.
    let all_attributes: Vec<&String> = a.iter().chain(b.iter()).collect();
    let scored: Vec<(String, (f64, Vec<AssociationRecord>))> = if backend.concurrent() {
        all_attributes
            .par_iter()
            .map(|attr| {
                attribute_bias_detail(backend, &category.templates, &pairs, attr)
                    .map(|detail| ((*attr).clone(), detail))
            })
            .collect::<Result<_>>()?
    } else {
        all_attributes
            .iter()
            .map(|attr| {
                attribute_bias_detail(backend, &category.templates, &pairs, attr)
                    .map(|detail| ((*attr).clone(), detail))
            })
            .collect::<Result<_>>()?
    };

    let mut per_attribute_bias = BTreeMap::new();
    let mut records = Vec::new();
    let mut combinations = 0;
    for (attr, (bias, recs)) in scored {
        per_attribute_bias.insert(attr, bias);
        combinations = recs.len() / 2;
        records.extend(recs);
    }
    metadata.notes.push(format!(
        "per-attribute bias averages {combinations} template x target-pair combinations"
    ));
    records.sort_by(|r1, r2| {
        (&r1.template_id, &r1.attribute, &r1.target)
            .cmp(&(&r2.template_id, &r2.attribute, &r2.target))
    });
    records.dedup();

    let a_scores: Vec<f64> = a.iter().map(|w| per_attribute_bias[w]).collect();
    let b_scores: Vec<f64> = b.iter().map(|w| per_attribute_bias[w]).collect();
    let (statistic, effect_size) = difference_effect(&a_scores, &b_scores);
    let perm_config = PermutationConfig { seed, ..*config };
    let outcome = permutation_pvalue(
        &a_scores,
        &b_scores,
        |p, q| mean(p) - mean(q),
        &perm_config,
    )?;

    Ok(CategoryRun {
        result: BiasTestResult {
            category_name: category.name.clone(),
            kind: "logprob".into(),
            per_attribute_bias,
            statistic,
            effect_size,
            p_value: outcome.p_value,
            n_permutations_used: outcome.n_used,
            exact: outcome.exact,
            seed,
            metadata,
        },
        records,
    })
}
