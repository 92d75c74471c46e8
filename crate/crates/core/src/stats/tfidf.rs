//! TF-IDF document-term weighting for topic extraction: lowercase word
//! tokens, stopword removal, minimum document frequency, smoothed idf,
//! and L2-normalized rows.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::backend::tokenize_words;
use crate::error::{BiasError, Result};

#[derive(Debug, Clone)]
pub struct DocTermMatrix {
    /// docs x terms, nonnegative.
    pub rows: Vec<Vec<f64>>,
    pub vocabulary: Vec<String>,
}

/// The common-English stopword list shipped with the toolkit.
pub fn default_stopwords() -> BTreeSet<String> {
    include_str!("../../data/stopwords.txt")
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

/// Stopwords from a file, one per line.
pub fn load_stopwords(path: impl AsRef<std::path::Path>) -> Result<BTreeSet<String>> {
    Ok(crate::error::read_file(path.as_ref())?
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

fn content_tokens(text: &str, stopwords: &BTreeSet<String>) -> Vec<String> {
    tokenize_words(&text.to_lowercase())
        .into_iter()
        .map(|s| s.token)
        .filter(|t| {
            t.chars().any(|c| c.is_alphabetic())
                && t.chars().all(|c| c.is_alphanumeric() || c == '-' || c == '\'')
                && t.len() >= 2
                && !stopwords.contains(t)
        })
        .collect()
}

/// Builds the weighted matrix over all terms with document frequency at
/// least `min_df`. Vocabulary is sorted for determinism.
pub fn build_doc_term_matrix(
    documents: &[String],
    stopwords: &BTreeSet<String>,
    min_df: usize,
) -> Result<DocTermMatrix> {
    if documents.is_empty() {
        return Err(BiasError::Validation("no documents to weight".into()));
    }
    let tokenized: Vec<Vec<String>> = documents
        .iter()
        .map(|d| content_tokens(d, stopwords))
        .collect();

    let mut doc_freq: BTreeMap<&str, usize> = BTreeMap::new();
    for tokens in &tokenized {
        let unique: BTreeSet<&str> = tokens.iter().map(|t| t.as_str()).collect();
        for t in unique {
            *doc_freq.entry(t).or_insert(0) += 1;
        }
    }
    let vocabulary: Vec<String> = doc_freq
        .iter()
        .filter(|(_, &df)| df >= min_df)
        .map(|(t, _)| t.to_string())
        .collect();
    if vocabulary.is_empty() {
        return Err(BiasError::Validation(format!(
            "no term reaches document frequency {min_df}"
        )));
    }
    let index: HashMap<&str, usize> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();

    let n = documents.len() as f64;
    let idf: Vec<f64> = vocabulary
        .iter()
        .map(|t| ((1.0 + n) / (1.0 + doc_freq[t.as_str()] as f64)).ln() + 1.0)
        .collect();

    let mut rows = Vec::with_capacity(documents.len());
    for tokens in &tokenized {
        let mut row = vec![0.0; vocabulary.len()];
        for t in tokens {
            if let Some(&i) = index.get(t.as_str()) {
                row[i] += 1.0;
            }
        }
        for (i, value) in row.iter_mut().enumerate() {
            *value *= idf[i];
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for value in &mut row {
                *value /= norm;
            }
        }
        rows.push(row);
    }
    Ok(DocTermMatrix { rows, vocabulary })
}
