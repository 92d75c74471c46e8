//! Cosine-similarity association test over embedded word sets, applied
//! to static vectors or to contextual embeddings extracted under
//! masking (one role filled, the other masked).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendKind, EmbeddingVector, ModelBackend, SlotRole};
use crate::bias::{BiasTestResult, ResultMetadata};
use crate::error::{BiasError, Result};
use crate::stats::{difference_effect, mean, permutation_pvalue, PermutationConfig};
use crate::stimuli::{balance_sets, Fill, TargetSet, Template, WeatCategory};

const MIN_NORM: f64 = 1e-12;

/// Words with their embeddings; vectors share one dimension and none is
/// (near-)zero, so every pairwise cosine is defined.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddedWordSet {
    pub label: String,
    pub entries: Vec<(String, Vec<f64>)>,
}

impl EmbeddedWordSet {
    pub fn new(label: impl Into<String>, entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let label = label.into();
        if entries.is_empty() {
            return Err(BiasError::Validation(format!(
                "embedded set `{label}` is empty"
            )));
        }
        let dim = entries[0].1.len();
        for (word, vector) in &entries {
            if vector.len() != dim {
                return Err(BiasError::Validation(format!(
                    "vector for `{word}` has dimension {}, expected {dim}",
                    vector.len()
                )));
            }
            if !vector.iter().all(|v| v.is_finite()) {
                return Err(BiasError::Validation(format!(
                    "vector for `{word}` has non-finite entries"
                )));
            }
            if norm(vector) < MIN_NORM {
                return Err(BiasError::UndefinedCosine(format!(
                    "vector for `{word}` is numerically zero"
                )));
            }
        }
        Ok(EmbeddedWordSet { label, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(BiasError::Validation(format!(
            "cosine over dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm(a), norm(b));
    if na < MIN_NORM || nb < MIN_NORM {
        return Err(BiasError::UndefinedCosine("zero-norm vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

/// Association of a single vector with two attribute sets: mean cosine
/// against A minus mean cosine against B.
pub fn weat_association(t: &[f64], a: &EmbeddedWordSet, b: &EmbeddedWordSet) -> Result<f64> {
    let mut sims_a = Vec::with_capacity(a.len());
    for (_, v) in &a.entries {
        sims_a.push(cosine(t, v)?);
    }
    let mut sims_b = Vec::with_capacity(b.len());
    for (_, v) in &b.entries {
        sims_b.push(cosine(t, v)?);
    }
    Ok(mean(&sims_a) - mean(&sims_b))
}

/// The full association test on embedded sets: statistic S over X vs Y,
/// effect size d over pooled per-target associations, permutation p over
/// re-splits of X union Y. Callers balance |X| = |Y| first.
pub fn weat_test(
    x: &EmbeddedWordSet,
    y: &EmbeddedWordSet,
    a: &EmbeddedWordSet,
    b: &EmbeddedWordSet,
    config: &PermutationConfig,
    seed: u64,
    category_name: &str,
) -> Result<BiasTestResult> {
    if x.len() != y.len() {
        return Err(BiasError::Validation(format!(
            "target sets must have equal size, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let mut per_target = BTreeMap::new();
    let mut x_assoc = Vec::with_capacity(x.len());
    for (word, v) in &x.entries {
        let s = weat_association(v, a, b)?;
        per_target.insert(word.clone(), s);
        x_assoc.push(s);
    }
    let mut y_assoc = Vec::with_capacity(y.len());
    for (word, v) in &y.entries {
        let s = weat_association(v, a, b)?;
        per_target.insert(word.clone(), s);
        y_assoc.push(s);
    }

    let (statistic, effect_size) = difference_effect(&x_assoc, &y_assoc);
    let perm_config = PermutationConfig { seed, ..*config };
    let outcome = permutation_pvalue(
        &x_assoc,
        &y_assoc,
        |p, q| mean(p) - mean(q),
        &perm_config,
    )?;

    Ok(BiasTestResult {
        category_name: category_name.to_string(),
        kind: "weat".into(),
        per_attribute_bias: per_target,
        statistic,
        effect_size,
        p_value: outcome.p_value,
        n_permutations_used: outcome.n_used,
        exact: outcome.exact,
        seed,
        metadata: ResultMetadata {
            std_convention: "population".into(),
            ..ResultMetadata::default()
        },
    })
}

/// Contextual embedding of `word` in `template` with the word filling
/// `role` and the partner role masked; read at the filled position.
pub fn extract_masked_embedding(
    backend: &dyn ModelBackend,
    template: &Template,
    role: SlotRole,
    word: &str,
) -> Result<EmbeddingVector> {
    let lowered = word.to_lowercase();
    let query = match role {
        SlotRole::Target => crate::stimuli::render(
            backend,
            template,
            Fill::Word(&lowered),
            None,
            Fill::Mask,
        )?,
        SlotRole::Attribute => crate::stimuli::render(
            backend,
            template,
            Fill::Mask,
            None,
            Fill::Word(&lowered),
        )?,
    };
    let position = query.filled_position(role).ok_or_else(|| {
        BiasError::Validation(format!("template `{}` has no {role} slot", template.text))
    })?;
    backend.contextual_embedding(&query, position)
}

/// How the sets for a category were prepared, for the result metadata.
#[derive(Debug, Clone, Default)]
pub struct WeatPreparation {
    pub dropped_oov: Vec<String>,
    pub balance_removed: Vec<String>,
    pub rebalanced: bool,
    pub notes: Vec<String>,
}

/// Builds embedded sets from static vectors: targets are vocabulary
/// filtered and balanced to equal size; attributes are vocabulary
/// filtered.
pub fn static_word_sets(
    backend: &dyn ModelBackend,
    category: &WeatCategory,
    seed: u64,
) -> Result<(EmbeddedWordSet, EmbeddedWordSet, EmbeddedWordSet, EmbeddedWordSet, WeatPreparation)> {
    let mut prep = WeatPreparation::default();
    let lookup = |word: &str| backend.static_vector(&word.to_lowercase());

    let filter_targets = |set: &TargetSet, prep: &mut WeatPreparation| -> TargetSet {
        let mut out = set.clone();
        out.words.retain(|w| {
            if lookup(&w.token).is_ok() {
                true
            } else {
                prep.dropped_oov.push(w.token.clone());
                false
            }
        });
        out
    };
    let x = filter_targets(&category.targets.x, &mut prep);
    let y = filter_targets(&category.targets.y, &mut prep);
    if x.words.is_empty() || y.words.is_empty() {
        return Err(BiasError::Validation(format!(
            "category `{}` has no targets with vectors on one side",
            category.name
        )));
    }
    let (x, y) = if x.words.len() != y.words.len() {
        let (bx, by, removed) = balance_sets(&x, &y, seed)?;
        prep.rebalanced = true;
        prep.balance_removed = removed;
        (bx, by)
    } else {
        (x, y)
    };

    let embed_targets = |set: &TargetSet| -> Result<EmbeddedWordSet> {
        let entries = set
            .words
            .iter()
            .map(|w| Ok((w.token.clone(), lookup(&w.token)?.values)))
            .collect::<Result<Vec<_>>>()?;
        EmbeddedWordSet::new(set.label.clone(), entries)
    };
    let embed_attributes = |label: &str, words: &[String], prep: &mut WeatPreparation| -> Result<EmbeddedWordSet> {
        let mut entries = Vec::new();
        for w in words {
            match lookup(w) {
                Ok(v) => entries.push((w.clone(), v.values)),
                Err(BiasError::OutOfVocabulary(_)) => prep.dropped_oov.push(w.clone()),
                Err(e) => return Err(e),
            }
        }
        EmbeddedWordSet::new(label.to_string(), entries)
    };

    let ex = embed_targets(&x)?;
    let ey = embed_targets(&y)?;
    let ea = embed_attributes(
        &category.attributes.a.label.clone(),
        &category.attributes.a.words,
        &mut prep,
    )?;
    let eb = embed_attributes(
        &category.attributes.b.label.clone(),
        &category.attributes.b.words,
        &mut prep,
    )?;
    Ok((ex, ey, ea, eb, prep))
}

/// Builds embedded sets from a masked LM: each target word is embedded
/// under every agreement-valid template with the attribute masked (and
/// vice versa for attribute words), averaging across templates.
pub fn contextual_word_sets(
    backend: &dyn ModelBackend,
    category: &WeatCategory,
    seed: u64,
) -> Result<(EmbeddedWordSet, EmbeddedWordSet, EmbeddedWordSet, EmbeddedWordSet, WeatPreparation)> {
    if backend.descriptor().kind == BackendKind::StaticVectors {
        return Err(BiasError::Unsupported {
            kind: "static-vectors".into(),
            operation: "contextual embedding extraction".into(),
        });
    }
    let mut prep = WeatPreparation::default();
    prep.notes
        .push("embeddings averaged across templates".into());

    let x = crate::stimuli::filter_oov_targets(&category.targets.x, backend)?;
    let y = crate::stimuli::filter_oov_targets(&category.targets.y, backend)?;
    for set in [(&category.targets.x, &x), (&category.targets.y, &y)] {
        for w in &set.0.words {
            if !set.1.words.contains(w) {
                prep.dropped_oov.push(w.token.clone());
            }
        }
    }
    if x.words.is_empty() || y.words.is_empty() {
        return Err(BiasError::Validation(format!(
            "category `{}` has no in-vocabulary targets on one side",
            category.name
        )));
    }
    let (x, y) = if x.words.len() != y.words.len() {
        let (bx, by, removed) = balance_sets(&x, &y, seed)?;
        prep.rebalanced = true;
        prep.balance_removed = removed;
        (bx, by)
    } else {
        (x, y)
    };

    let average = |vectors: Vec<EmbeddingVector>| -> Vec<f64> {
        let dim = vectors[0].values.len();
        let mut acc = vec![0.0; dim];
        for v in &vectors {
            for (a, b) in acc.iter_mut().zip(&v.values) {
                *a += b;
            }
        }
        for a in &mut acc {
            *a /= vectors.len() as f64;
        }
        acc
    };

    let embed_target_set = |set: &TargetSet| -> Result<EmbeddedWordSet> {
        let mut entries = Vec::new();
        for w in &set.words {
            let mut vectors = Vec::new();
            for template in &category.templates {
                if !template.number.accepts(w.number) {
                    continue;
                }
                vectors.push(extract_masked_embedding(
                    backend,
                    template,
                    SlotRole::Target,
                    &w.token,
                )?);
            }
            if vectors.is_empty() {
                return Err(BiasError::EmptyMeasurement(format!(
                    "no agreement-valid template embeds target `{}`",
                    w.token
                )));
            }
            entries.push((w.token.to_lowercase(), average(vectors)));
        }
        EmbeddedWordSet::new(set.label.clone(), entries)
    };

    let embed_attribute_set =
        |label: &str, words: &[String], prep: &mut WeatPreparation| -> Result<EmbeddedWordSet> {
            let filtered = crate::stimuli::filter_oov(words, backend)?;
            for w in words {
                if !filtered.contains(w) {
                    prep.dropped_oov.push(w.clone());
                }
            }
            let mut entries = Vec::new();
            for w in &filtered {
                let mut vectors = Vec::new();
                for template in &category.templates {
                    if !template.has_attribute_slot() {
                        continue;
                    }
                    vectors.push(extract_masked_embedding(
                        backend,
                        template,
                        SlotRole::Attribute,
                        w,
                    )?);
                }
                if vectors.is_empty() {
                    return Err(BiasError::EmptyMeasurement(format!(
                        "no template embeds attribute `{w}`"
                    )));
                }
                entries.push((w.to_lowercase(), average(vectors)));
            }
            EmbeddedWordSet::new(label.to_string(), entries)
        };

    let ex = embed_target_set(&x)?;
    let ey = embed_target_set(&y)?;
    let ea = embed_attribute_set(
        &category.attributes.a.label.clone(),
        &category.attributes.a.words,
        &mut prep,
    )?;
    let eb = embed_attribute_set(
        &category.attributes.b.label.clone(),
        &category.attributes.b.words,
        &mut prep,
    )?;
    Ok((ex, ey, ea, eb, prep))
}
