//! Model backends: every source of model evidence (masked-token
//! distributions, contextual embeddings, static word vectors) behind one
//! trait, with a deterministic mock for offline runs.

mod http;
mod mock;
mod vectors;

pub use http::HttpBackend;
pub use mock::{MockBackend, MockConfig};
pub use vectors::StaticVectorBackend;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{BiasError, Result};

/// What kind of evidence a backend serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    MaskedLm,
    StaticVectors,
    Mock,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendKind::MaskedLm => write!(f, "masked-lm"),
            BackendKind::StaticVectors => write!(f, "static-vectors"),
            BackendKind::Mock => write!(f, "mock"),
        }
    }
}

/// Identity and shape of a backend, recorded in run manifests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub kind: BackendKind,
    pub vocabulary_size: usize,
    pub embedding_dimension: usize,
}

/// Which probe role a mask slot plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotRole {
    Target,
    Attribute,
}

impl fmt::Display for SlotRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotRole::Target => write!(f, "target"),
            SlotRole::Attribute => write!(f, "attribute"),
        }
    }
}

/// A rendered template sentence with role-tagged mask slots.
///
/// `filled_slots` records where non-masked role words landed, which the
/// embedding extraction path needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedQuery {
    pub tokens: Vec<String>,
    pub mask_slots: Vec<(usize, SlotRole)>,
    pub filled_slots: Vec<(usize, SlotRole)>,
    pub template_id: String,
}

impl MaskedQuery {
    /// Space-joined token sequence; the key mock tables are indexed by.
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    /// A query over raw text with no mask slots (used for span embeddings).
    pub fn plain(tokens: Vec<String>, id: impl Into<String>) -> Self {
        MaskedQuery {
            tokens,
            mask_slots: Vec::new(),
            filled_slots: Vec::new(),
            template_id: id.into(),
        }
    }

    pub fn slot_position(&self, role: SlotRole) -> Option<usize> {
        self.mask_slots
            .iter()
            .find(|(_, r)| *r == role)
            .map(|(p, _)| *p)
    }

    pub fn filled_position(&self, role: SlotRole) -> Option<usize> {
        self.filled_slots
            .iter()
            .find(|(_, r)| *r == role)
            .map(|(p, _)| *p)
    }

    /// Checks the structural invariants: slot positions in range, mask
    /// tokens in place, at most one slot per role.
    pub fn validate(&self, mask_token: &str) -> Result<()> {
        let mut seen = Vec::new();
        for &(pos, role) in &self.mask_slots {
            if pos >= self.tokens.len() {
                return Err(BiasError::Validation(format!(
                    "mask slot {pos} out of range for {} tokens",
                    self.tokens.len()
                )));
            }
            if self.tokens[pos] != mask_token {
                return Err(BiasError::Validation(format!(
                    "token at slot {pos} is `{}`, expected mask token `{mask_token}`",
                    self.tokens[pos]
                )));
            }
            if seen.contains(&role) {
                return Err(BiasError::Validation(format!(
                    "duplicate {role} slot in query"
                )));
            }
            seen.push(role);
        }
        Ok(())
    }
}

/// Softmax output over the vocabulary at one mask slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    pub slot_position: usize,
    pub probabilities: BTreeMap<String, f64>,
}

impl TokenDistribution {
    /// Entries must lie in [0,1] and sum to 1 within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let mut sum = 0.0;
        for (token, &p) in &self.probabilities {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(BiasError::Validation(format!(
                    "probability {p} for `{token}` outside [0,1]"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > tol {
            return Err(BiasError::Validation(format!(
                "distribution at slot {} sums to {sum}, expected 1 within {tol}",
                self.slot_position
            )));
        }
        Ok(())
    }
}

/// A contextual or static embedding, tagged with the token position it
/// was read from (0 for static vectors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source_token_position: usize,
}

/// A token together with its character span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub token: String,
    pub start: usize,
    pub end: usize,
}

/// Word-level tokenizer used by the mock and static backends: bracketed
/// specials like `[MASK]` stay whole, words keep inner apostrophes and
/// hyphens, anything else is a single-character token. Offsets are in
/// characters.
pub fn tokenize_words(text: &str) -> Vec<TokenSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '[' {
            if let Some(close) = chars[i..].iter().position(|&x| x == ']') {
                if !chars[i..=i + close].iter().any(|x| x.is_whitespace()) {
                    out.push(TokenSpan {
                        token: chars[i..=i + close].iter().collect(),
                        start: i,
                        end: i + close + 1,
                    });
                    i += close + 1;
                    continue;
                }
            }
        }
        if c.is_alphanumeric() {
            let start = i;
            while i < chars.len()
                && (chars[i].is_alphanumeric() || chars[i] == '\'' || chars[i] == '-')
            {
                i += 1;
            }
            out.push(TokenSpan {
                token: chars[start..i].iter().collect(),
                start,
                end: i,
            });
            continue;
        }
        out.push(TokenSpan {
            token: c.to_string(),
            start: i,
            end: i + 1,
        });
        i += 1;
    }
    out
}

/// One interface over every source of model evidence.
///
/// Implementations are read-only after construction; every operation is a
/// pure function of its arguments. Backends that cannot be queried from
/// multiple workers return `false` from [`ModelBackend::concurrent`] and
/// the engines fall back to sequential querying.
pub trait ModelBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// The literal mask token rendered into queries.
    fn mask_token(&self) -> &str;

    /// Tokenize text into vocabulary units with character offsets.
    fn encode(&self, text: &str) -> Result<Vec<TokenSpan>> {
        let _ = text;
        Ok(tokenize_words(text))
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        Ok(self.encode(text)?.into_iter().map(|s| s.token).collect())
    }

    /// Whether `token` is a single unit of the backend vocabulary.
    /// Fallible because remote backends answer over a transport.
    fn vocab_contains(&self, token: &str) -> Result<bool>;

    /// One distribution per mask slot; empty map for slot-free queries.
    fn predict_mask(&self, query: &MaskedQuery) -> Result<BTreeMap<usize, TokenDistribution>>;

    /// Probability of `candidate` at the slot tagged `role`.
    fn token_probability(&self, query: &MaskedQuery, role: SlotRole, candidate: &str) -> Result<f64> {
        if !self.vocab_contains(candidate)? {
            return Err(BiasError::OutOfVocabulary(candidate.to_string()));
        }
        let pos = query.slot_position(role).ok_or_else(|| {
            BiasError::Validation(format!("query has no {role} slot: `{}`", query.text()))
        })?;
        let dists = self.predict_mask(query)?;
        let dist = dists.get(&pos).ok_or_else(|| {
            BiasError::Validation(format!("no distribution returned for slot {pos}"))
        })?;
        match dist.probabilities.get(candidate) {
            Some(&p) if p > 0.0 => Ok(p),
            Some(_) => Err(BiasError::Validation(format!(
                "candidate `{candidate}` has zero probability at slot {pos} of `{}`",
                query.text()
            ))),
            None => Err(BiasError::Validation(format!(
                "candidate `{candidate}` missing from distribution at slot {pos} of `{}`",
                query.text()
            ))),
        }
    }

    /// Final-layer representation of the token at `position`.
    fn contextual_embedding(&self, query: &MaskedQuery, position: usize) -> Result<EmbeddingVector>;

    /// Final-layer representations for every token position. Remote
    /// backends override this to answer in one round trip.
    fn contextual_embeddings(&self, query: &MaskedQuery) -> Result<Vec<EmbeddingVector>> {
        (0..query.tokens.len())
            .map(|pos| self.contextual_embedding(query, pos))
            .collect()
    }

    /// Stored vector for `word`, unmodified.
    fn static_vector(&self, word: &str) -> Result<EmbeddingVector>;

    /// Whether operations may be issued from concurrent workers.
    fn concurrent(&self) -> bool {
        true
    }
}

impl ModelBackend for Box<dyn ModelBackend> {
    fn descriptor(&self) -> &BackendDescriptor {
        (**self).descriptor()
    }
    fn mask_token(&self) -> &str {
        (**self).mask_token()
    }
    fn encode(&self, text: &str) -> Result<Vec<TokenSpan>> {
        (**self).encode(text)
    }
    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        (**self).tokenize(text)
    }
    fn vocab_contains(&self, token: &str) -> Result<bool> {
        (**self).vocab_contains(token)
    }
    fn predict_mask(&self, query: &MaskedQuery) -> Result<BTreeMap<usize, TokenDistribution>> {
        (**self).predict_mask(query)
    }
    fn token_probability(&self, query: &MaskedQuery, role: SlotRole, candidate: &str) -> Result<f64> {
        (**self).token_probability(query, role, candidate)
    }
    fn contextual_embedding(&self, query: &MaskedQuery, position: usize) -> Result<EmbeddingVector> {
        (**self).contextual_embedding(query, position)
    }
    fn contextual_embeddings(&self, query: &MaskedQuery) -> Result<Vec<EmbeddingVector>> {
        (**self).contextual_embeddings(query)
    }
    fn static_vector(&self, word: &str) -> Result<EmbeddingVector> {
        (**self).static_vector(word)
    }
    fn concurrent(&self) -> bool {
        (**self).concurrent()
    }
}

/// Memoizes `predict_mask` by query text. Real runs repeat the same
/// prior (both-masked) query once per attribute; caching collapses that
/// to one model call per template.
pub struct CachedBackend<B: ModelBackend> {
    inner: B,
    cache: Mutex<std::collections::HashMap<String, BTreeMap<usize, TokenDistribution>>>,
}

impl<B: ModelBackend> CachedBackend<B> {
    pub fn new(inner: B) -> Self {
        CachedBackend {
            inner,
            cache: Mutex::new(std::collections::HashMap::new()),
        }
    }
}

impl<B: ModelBackend> ModelBackend for CachedBackend<B> {
    fn descriptor(&self) -> &BackendDescriptor {
        self.inner.descriptor()
    }

    fn mask_token(&self) -> &str {
        self.inner.mask_token()
    }

    fn encode(&self, text: &str) -> Result<Vec<TokenSpan>> {
        self.inner.encode(text)
    }

    fn vocab_contains(&self, token: &str) -> Result<bool> {
        self.inner.vocab_contains(token)
    }

    fn predict_mask(&self, query: &MaskedQuery) -> Result<BTreeMap<usize, TokenDistribution>> {
        let key = query.text();
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let fresh = self.inner.predict_mask(query)?;
        self.cache.lock().unwrap().insert(key, fresh.clone());
        Ok(fresh)
    }

    fn contextual_embedding(&self, query: &MaskedQuery, position: usize) -> Result<EmbeddingVector> {
        self.inner.contextual_embedding(query, position)
    }

    fn contextual_embeddings(&self, query: &MaskedQuery) -> Result<Vec<EmbeddingVector>> {
        self.inner.contextual_embeddings(query)
    }

    fn static_vector(&self, word: &str) -> Result<EmbeddingVector> {
        self.inner.static_vector(word)
    }

    fn concurrent(&self) -> bool {
        self.inner.concurrent()
    }
}
