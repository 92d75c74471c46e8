//! Span features for pronoun resolution: the pronoun and both entity
//! spans embedded in context, mean-pooled over their tokens and
//! concatenated.

use crate::backend::{MaskedQuery, ModelBackend};
use crate::error::{BiasError, Result};

use super::gap::GapInstance;

/// Lowercase per character, keeping the character count unchanged so
/// annotation offsets stay valid.
fn lowercase_aligned(text: &str) -> String {
    text.chars()
        .map(|c| c.to_lowercase().next().unwrap_or(c))
        .collect()
}

fn span_token_range(
    tokens: &[crate::backend::TokenSpan],
    start: usize,
    len: usize,
    surface: &str,
) -> Result<Vec<usize>> {
    let end = start + len;
    let covered: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.start >= start && t.end <= end)
        .map(|(i, _)| i)
        .collect();
    // Subword tokenizers mark word-internal pieces with a ## prefix;
    // strip it so the rejoined text compares against the raw surface.
    let rejoined: String = covered
        .iter()
        .map(|&i| tokens[i].token.trim_start_matches("##"))
        .collect::<Vec<_>>()
        .concat();
    let expected: String = lowercase_aligned(surface)
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect();
    if covered.is_empty() || rejoined != expected {
        return Err(BiasError::Alignment {
            span: surface.to_string(),
            detail: format!("tokens under the span read `{rejoined}`"),
        });
    }
    Ok(covered)
}

fn mean_pool(vectors: &[Vec<f64>], indices: &[usize]) -> Vec<f64> {
    let dim = vectors[indices[0]].len();
    let mut acc = vec![0.0; dim];
    for &i in indices {
        for (a, v) in acc.iter_mut().zip(&vectors[i]) {
            *a += v;
        }
    }
    for a in &mut acc {
        *a /= indices.len() as f64;
    }
    acc
}

/// Concatenation of the pronoun, entity A, and entity B span embeddings,
/// each the mean of its token vectors; length 3 x embedding dimension.
pub fn extract_span_features(backend: &dyn ModelBackend, instance: &GapInstance) -> Result<Vec<f64>> {
    let text = lowercase_aligned(&instance.text);
    let tokens = backend.encode(&text)?;
    let query = MaskedQuery::plain(
        tokens.iter().map(|t| t.token.clone()).collect(),
        format!("gap:{}", instance.id),
    );
    let embeddings: Vec<Vec<f64>> = backend
        .contextual_embeddings(&query)?
        .into_iter()
        .map(|e| e.values)
        .collect();
    if embeddings.len() != tokens.len() {
        return Err(BiasError::Validation(format!(
            "backend returned {} embeddings for {} tokens",
            embeddings.len(),
            tokens.len()
        )));
    }

    let mut feature = Vec::new();
    let spans = [
        (
            instance.pronoun.offset,
            instance.pronoun.surface.as_str(),
        ),
        (instance.entity_a.offset, instance.entity_a.surface.as_str()),
        (instance.entity_b.offset, instance.entity_b.surface.as_str()),
    ];
    for (offset, surface) in spans {
        let indices = span_token_range(&tokens, offset, surface.chars().count(), surface)?;
        feature.extend(mean_pool(&embeddings, &indices));
    }
    Ok(feature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::gap::{EntitySpan, Gender, Span};
    use crate::backend::MockBackend;

    fn instance(text: &str, pronoun: (&str, usize), a: (&str, usize), b: (&str, usize)) -> GapInstance {
        GapInstance {
            id: "t1".into(),
            text: text.into(),
            pronoun: Span {
                surface: pronoun.0.into(),
                offset: pronoun.1,
            },
            entity_a: EntitySpan {
                surface: a.0.into(),
                offset: a.1,
                gold_coreferent: true,
            },
            entity_b: EntitySpan {
                surface: b.0.into(),
                offset: b.1,
                gold_coreferent: false,
            },
            pronoun_gender: Gender::Female,
        }
    }

    fn backend() -> MockBackend {
        MockBackend::from_config(serde_json::from_value(serde_json::json!({
            "embedding_dim": 2,
            "embeddings": {
                "anna met beth carter and she smiled": {
                    "0": [1.0, 0.0],
                    "1": [0.0, 0.0],
                    "2": [0.0, 2.0],
                    "3": [0.0, 4.0],
                    "4": [0.0, 0.0],
                    "5": [5.0, 5.0],
                    "6": [0.0, 0.0]
                }
            }
        }))
        .unwrap())
        .unwrap()
    }

    #[test]
    fn single_token_spans_concatenate_lookups() {
        let inst = instance(
            "Anna met Beth Carter and she smiled",
            ("she", 25),
            ("Anna", 0),
            ("Beth Carter", 9),
        );
        let f = extract_span_features(&backend(), &inst).unwrap();
        assert_eq!(f.len(), 6);
        // pronoun "she" = token 5
        assert_eq!(&f[0..2], &[5.0, 5.0]);
        // entity a "anna" = token 0
        assert_eq!(&f[2..4], &[1.0, 0.0]);
        // entity b "beth carter" = mean of tokens 2 and 3
        assert_eq!(&f[4..6], &[0.0, 3.0]);
    }

    #[test]
    fn bad_offset_is_an_alignment_error() {
        let inst = instance(
            "Anna met Beth Carter and she smiled",
            ("she", 24),
            ("Anna", 0),
            ("Beth Carter", 9),
        );
        assert!(matches!(
            extract_span_features(&backend(), &inst),
            Err(BiasError::Alignment { .. })
        ));
    }
}
