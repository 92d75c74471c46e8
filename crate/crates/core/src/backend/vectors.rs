//! Static word vectors read from the common text interchange format:
//! one word per line followed by its components, whitespace separated.
//! An optional `count dim` header line is detected and skipped.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{BiasError, Result};

use super::{
    BackendDescriptor, BackendKind, EmbeddingVector, MaskedQuery, ModelBackend, TokenDistribution,
};

pub struct StaticVectorBackend {
    descriptor: BackendDescriptor,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl StaticVectorBackend {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| BiasError::File {
            path: path.display().to_string(),
            source,
        })?;
        let reader = BufReader::new(file);
        let mut vectors = BTreeMap::new();
        let mut dim: Option<usize> = None;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            // word2vec-style header: exactly two integer fields on line 1.
            if lineno == 0
                && fields.len() == 2
                && fields.iter().all(|f| f.parse::<usize>().is_ok())
            {
                continue;
            }
            if fields.len() < 2 {
                return Err(BiasError::Parse {
                    path: path.display().to_string(),
                    detail: format!("line {}: expected word and components", lineno + 1),
                });
            }
            let word = fields[0].to_string();
            let values: Vec<f64> = fields[1..]
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|_| BiasError::Parse {
                        path: path.display().to_string(),
                        detail: format!("line {}: `{f}` is not a number", lineno + 1),
                    })
                })
                .collect::<Result<_>>()?;
            if !values.iter().all(|v| v.is_finite()) {
                return Err(BiasError::Parse {
                    path: path.display().to_string(),
                    detail: format!("line {}: non-finite component", lineno + 1),
                });
            }
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(BiasError::Parse {
                        path: path.display().to_string(),
                        detail: format!(
                            "line {}: dimension {} differs from {}",
                            lineno + 1,
                            values.len(),
                            d
                        ),
                    });
                }
                _ => {}
            }
            vectors.insert(word, values);
        }
        if vectors.is_empty() {
            return Err(BiasError::Validation(format!(
                "vector file {} holds no entries",
                path.display()
            )));
        }
        let descriptor = BackendDescriptor {
            name: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "static-vectors".into()),
            kind: BackendKind::StaticVectors,
            vocabulary_size: vectors.len(),
            embedding_dimension: dim.unwrap_or(0),
        };
        Ok(StaticVectorBackend { descriptor, vectors })
    }
}

impl ModelBackend for StaticVectorBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn mask_token(&self) -> &str {
        "[MASK]"
    }

    fn vocab_contains(&self, token: &str) -> Result<bool> {
        Ok(self.vectors.contains_key(token))
    }

    fn predict_mask(&self, _query: &MaskedQuery) -> Result<std::collections::BTreeMap<usize, TokenDistribution>> {
        Err(BiasError::Unsupported {
            kind: "static-vectors".into(),
            operation: "predict_mask".into(),
        })
    }

    fn contextual_embedding(&self, _query: &MaskedQuery, _position: usize) -> Result<EmbeddingVector> {
        Err(BiasError::Unsupported {
            kind: "static-vectors".into(),
            operation: "contextual_embedding".into(),
        })
    }

    fn static_vector(&self, word: &str) -> Result<EmbeddingVector> {
        match self.vectors.get(word) {
            Some(values) => Ok(EmbeddingVector {
                values: values.clone(),
                source_token_position: 0,
            }),
            None => Err(BiasError::OutOfVocabulary(word.to_string())),
        }
    }
}
