//! Deterministic mock backend driven by a JSON fixture.
//!
//! Distributions and embeddings are looked up by rendered sentence text.
//! Fixtures may instead (or additionally) carry derivation seeds, in which
//! case unlisted entries are synthesized as pure functions of
//! (seed, sentence, position), so large fixtures stay small on disk while
//! every value remains reproducible bit for bit.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BiasError, Result};

use super::{
    BackendDescriptor, BackendKind, EmbeddingVector, MaskedQuery, ModelBackend, TokenDistribution,
};

const DIST_SUM_TOL: f64 = 1e-4;

/// On-disk schema for mock fixtures.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MockConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub mask_token: Option<String>,
    /// When present, membership is strict and OOV checks apply; when
    /// absent the vocabulary is open (any single word token passes).
    #[serde(default)]
    pub vocabulary: Option<Vec<String>>,
    #[serde(default)]
    pub embedding_dim: Option<usize>,
    /// sentence text -> slot position -> token -> probability
    #[serde(default)]
    pub distributions: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    /// sentence text -> token position -> vector
    #[serde(default)]
    pub embeddings: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    #[serde(default)]
    pub static_vectors: BTreeMap<String, Vec<f64>>,
    /// Derive distributions over the (closed) vocabulary for sentences
    /// missing from the table.
    #[serde(default)]
    pub distribution_seed: Option<u64>,
    /// Derive embeddings for (sentence, position) pairs missing from the
    /// table.
    #[serde(default)]
    pub embedding_seed: Option<u64>,
    /// Declare the backend serial; engines then query sequentially.
    #[serde(default)]
    pub serial: bool,
}

pub struct MockBackend {
    descriptor: BackendDescriptor,
    mask_token: String,
    vocabulary: Option<BTreeSet<String>>,
    config: MockConfig,
}

impl MockBackend {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = crate::error::read_file(path)?;
        let config: MockConfig = serde_json::from_str(&raw).map_err(|e| BiasError::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Self::from_config(config)
    }

    pub fn from_config(config: MockConfig) -> Result<Self> {
        let mask_token = config.mask_token.clone().unwrap_or_else(|| "[MASK]".into());
        let vocabulary: Option<BTreeSet<String>> =
            config.vocabulary.as_ref().map(|v| v.iter().cloned().collect());

        // Validate every configured distribution row up front.
        for (text, slots) in &config.distributions {
            for (slot, row) in slots {
                let position: usize = slot.parse().map_err(|_| {
                    BiasError::Validation(format!("slot key `{slot}` for `{text}` is not an index"))
                })?;
                let dist = TokenDistribution {
                    slot_position: position,
                    probabilities: row.clone(),
                };
                dist.validate(DIST_SUM_TOL)
                    .map_err(|e| BiasError::Validation(format!("fixture `{text}`: {e}")))?;
            }
        }
        if let Some(dim) = config.embedding_dim {
            if dim == 0 {
                return Err(BiasError::Validation("embedding_dim must be positive".into()));
            }
            for (text, positions) in &config.embeddings {
                for (pos, vec) in positions {
                    if vec.len() != dim {
                        return Err(BiasError::Validation(format!(
                            "embedding for `{text}` position {pos} has length {}, expected {dim}",
                            vec.len()
                        )));
                    }
                }
            }
            for (word, vec) in &config.static_vectors {
                if vec.len() != dim {
                    return Err(BiasError::Validation(format!(
                        "static vector for `{word}` has length {}, expected {dim}",
                        vec.len()
                    )));
                }
            }
        } else if !config.embeddings.is_empty() || !config.static_vectors.is_empty() {
            return Err(BiasError::Validation(
                "embedding tables present but embedding_dim is unset".into(),
            ));
        }
        if config.distribution_seed.is_some() && vocabulary.is_none() {
            return Err(BiasError::Validation(
                "distribution_seed requires a closed vocabulary".into(),
            ));
        }
        if config.embedding_seed.is_some() && config.embedding_dim.is_none() {
            return Err(BiasError::Validation(
                "embedding_seed requires embedding_dim".into(),
            ));
        }

        let vocabulary_size = match &vocabulary {
            Some(v) => v.len(),
            None => {
                // Open vocabulary: report the count of distinct tokens the
                // fixture mentions anywhere.
                let mut seen: BTreeSet<&str> = BTreeSet::new();
                for slots in config.distributions.values() {
                    for row in slots.values() {
                        seen.extend(row.keys().map(|s| s.as_str()));
                    }
                }
                seen.extend(config.static_vectors.keys().map(|s| s.as_str()));
                seen.len()
            }
        };
        if vocabulary_size == 0 && config.embedding_seed.is_none() && config.embeddings.is_empty() {
            return Err(BiasError::Validation(
                "mock fixture defines no vocabulary, distributions, or embeddings".into(),
            ));
        }

        let descriptor = BackendDescriptor {
            name: config.name.clone().unwrap_or_else(|| "mock".into()),
            kind: BackendKind::Mock,
            vocabulary_size: vocabulary_size.max(1),
            embedding_dimension: config.embedding_dim.unwrap_or(0),
        };
        Ok(MockBackend {
            descriptor,
            mask_token,
            vocabulary,
            config,
        })
    }

    fn check_query_tokens(&self, query: &MaskedQuery) -> Result<()> {
        if let Some(vocab) = &self.vocabulary {
            for tok in &query.tokens {
                if tok != &self.mask_token && !vocab.contains(tok) {
                    return Err(BiasError::OutOfVocabulary(tok.clone()));
                }
            }
        }
        Ok(())
    }

    fn derived_distribution(&self, text: &str, position: usize) -> Option<TokenDistribution> {
        let seed = self.config.distribution_seed?;
        let vocab = self.vocabulary.as_ref()?;
        let mut weights = BTreeMap::new();
        let mut total = 0.0;
        for token in vocab {
            let u = stable_unit(seed, &[text, &position.to_string(), token]);
            let w = 0.05 + u; // keep every token's mass well above zero
            weights.insert(token.clone(), w);
            total += w;
        }
        for w in weights.values_mut() {
            *w /= total;
        }
        Some(TokenDistribution {
            slot_position: position,
            probabilities: weights,
        })
    }

    fn derived_embedding(&self, text: &str, position: usize) -> Option<EmbeddingVector> {
        let seed = self.config.embedding_seed?;
        let dim = self.config.embedding_dim?;
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(
            seed,
            &[text, &position.to_string()],
        ));
        let values = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        Some(EmbeddingVector {
            values,
            source_token_position: position,
        })
    }
}

/// First eight bytes of a SHA-256 over the seed and parts; stable across
/// platforms and runs, unlike the std hasher.
fn stable_hash(seed: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn stable_unit(seed: u64, parts: &[&str]) -> f64 {
    (stable_hash(seed, parts) >> 11) as f64 / (1u64 << 53) as f64
}

impl ModelBackend for MockBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn mask_token(&self) -> &str {
        &self.mask_token
    }

    fn vocab_contains(&self, token: &str) -> Result<bool> {
        Ok(match &self.vocabulary {
            Some(v) => v.contains(token),
            None => !token.is_empty() && !token.chars().any(|c| c.is_whitespace()),
        })
    }

    fn predict_mask(&self, query: &MaskedQuery) -> Result<BTreeMap<usize, TokenDistribution>> {
        query.validate(&self.mask_token)?;
        self.check_query_tokens(query)?;
        let mut out = BTreeMap::new();
        if query.mask_slots.is_empty() {
            return Ok(out);
        }
        let text = query.text();
        let table = self.config.distributions.get(&text);
        for &(pos, _) in &query.mask_slots {
            let dist = table
                .and_then(|slots| slots.get(&pos.to_string()))
                .map(|row| TokenDistribution {
                    slot_position: pos,
                    probabilities: row.clone(),
                })
                .or_else(|| self.derived_distribution(&text, pos));
            match dist {
                Some(d) => {
                    out.insert(pos, d);
                }
                None => {
                    return Err(BiasError::FixtureMiss(format!("{text} (slot {pos})")));
                }
            }
        }
        Ok(out)
    }

    fn contextual_embedding(&self, query: &MaskedQuery, position: usize) -> Result<EmbeddingVector> {
        if position >= query.tokens.len() {
            return Err(BiasError::Validation(format!(
                "embedding position {position} out of range for {} tokens",
                query.tokens.len()
            )));
        }
        if self.config.embedding_dim.is_none() {
            return Err(BiasError::Unsupported {
                kind: "mock".into(),
                operation: "contextual_embedding (no embedding_dim configured)".into(),
            });
        }
        let text = query.text();
        if let Some(vec) = self
            .config
            .embeddings
            .get(&text)
            .and_then(|positions| positions.get(&position.to_string()))
        {
            return Ok(EmbeddingVector {
                values: vec.clone(),
                source_token_position: position,
            });
        }
        self.derived_embedding(&text, position)
            .ok_or_else(|| BiasError::FixtureMiss(format!("{text} (embedding at {position})")))
    }

    fn static_vector(&self, word: &str) -> Result<EmbeddingVector> {
        match self.config.static_vectors.get(word) {
            Some(vec) => Ok(EmbeddingVector {
                values: vec.clone(),
                source_token_position: 0,
            }),
            None => Err(BiasError::OutOfVocabulary(word.to_string())),
        }
    }

    fn concurrent(&self) -> bool {
        !self.config.serial
    }
}
