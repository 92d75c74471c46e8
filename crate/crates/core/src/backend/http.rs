//! Out-of-process masked-LM adapter speaking a small JSON protocol over
//! HTTP. A reference server wrapping a pretrained model lives in
//! `python/serve_mlm.py`; any server implementing the same five routes
//! works.
//!
//! Routes:
//!   GET  /descriptor      -> {name, mask_token, vocabulary_size, embedding_dimension}
//!   POST /encode          {text} -> {tokens: [{token, start, end}]}
//!   POST /contains        {token} -> {contains}
//!   POST /predict_mask    {tokens, mask_positions} -> {distributions: {pos: {token: p}}}
//!   POST /embeddings      {tokens} -> {vectors: [[f64]]}

use std::collections::BTreeMap;
use std::time::Duration;

use serde::Deserialize;

use crate::error::{BiasError, Result};

use super::{
    BackendDescriptor, BackendKind, EmbeddingVector, MaskedQuery, ModelBackend, TokenDistribution,
    TokenSpan,
};

pub struct HttpBackend {
    base: String,
    client: reqwest::blocking::Client,
    descriptor: BackendDescriptor,
    mask_token: String,
}

#[derive(Deserialize)]
struct DescriptorBody {
    name: String,
    mask_token: String,
    vocabulary_size: usize,
    embedding_dimension: usize,
}

#[derive(Deserialize)]
struct EncodeBody {
    tokens: Vec<EncodedToken>,
}

#[derive(Deserialize)]
struct EncodedToken {
    token: String,
    start: usize,
    end: usize,
}

#[derive(Deserialize)]
struct ContainsBody {
    contains: bool,
}

#[derive(Deserialize)]
struct PredictBody {
    distributions: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Deserialize)]
struct EmbeddingsBody {
    vectors: Vec<Vec<f64>>,
}

fn transport(e: impl std::fmt::Display) -> BiasError {
    BiasError::Transport(e.to_string())
}

impl HttpBackend {
    /// Connects and fetches the descriptor; failure to reach the server
    /// is a transport error.
    pub fn connect(base_url: &str) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(transport)?;
        let base = base_url.trim_end_matches('/').to_string();
        let body: DescriptorBody = client
            .get(format!("{base}/descriptor"))
            .send()
            .map_err(transport)?
            .error_for_status()
            .map_err(transport)?
            .json()
            .map_err(transport)?;
        let descriptor = BackendDescriptor {
            name: body.name,
            kind: BackendKind::MaskedLm,
            vocabulary_size: body.vocabulary_size,
            embedding_dimension: body.embedding_dimension,
        };
        Ok(HttpBackend {
            base,
            client,
            descriptor,
            mask_token: body.mask_token,
        })
    }

    fn post<T: serde::de::DeserializeOwned>(
        &self,
        route: &str,
        payload: &serde_json::Value,
    ) -> Result<T> {
        self.client
            .post(format!("{}/{route}", self.base))
            .json(payload)
            .send()
            .map_err(transport)?
            .error_for_status()
            .map_err(transport)?
            .json()
            .map_err(transport)
    }
}

impl ModelBackend for HttpBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn mask_token(&self) -> &str {
        &self.mask_token
    }

    fn encode(&self, text: &str) -> Result<Vec<TokenSpan>> {
        let body: EncodeBody = self.post("encode", &serde_json::json!({ "text": text }))?;
        Ok(body
            .tokens
            .into_iter()
            .map(|t| TokenSpan {
                token: t.token,
                start: t.start,
                end: t.end,
            })
            .collect())
    }

    fn vocab_contains(&self, token: &str) -> Result<bool> {
        let body: ContainsBody = self.post("contains", &serde_json::json!({ "token": token }))?;
        Ok(body.contains)
    }

    fn predict_mask(&self, query: &MaskedQuery) -> Result<BTreeMap<usize, TokenDistribution>> {
        query.validate(&self.mask_token)?;
        if query.mask_slots.is_empty() {
            return Ok(BTreeMap::new());
        }
        let positions: Vec<usize> = query.mask_slots.iter().map(|(p, _)| *p).collect();
        let body: PredictBody = self.post(
            "predict_mask",
            &serde_json::json!({ "tokens": query.tokens, "mask_positions": positions }),
        )?;
        let mut out = BTreeMap::new();
        for pos in positions {
            let row = body.distributions.get(&pos.to_string()).ok_or_else(|| {
                BiasError::Transport(format!("server returned no distribution for slot {pos}"))
            })?;
            let dist = TokenDistribution {
                slot_position: pos,
                probabilities: row.clone(),
            };
            dist.validate(1e-4)?;
            out.insert(pos, dist);
        }
        Ok(out)
    }

    fn contextual_embedding(&self, query: &MaskedQuery, position: usize) -> Result<EmbeddingVector> {
        let all = self.contextual_embeddings(query)?;
        all.into_iter()
            .nth(position)
            .ok_or_else(|| BiasError::Transport(format!("no embedding at position {position}")))
    }

    fn contextual_embeddings(&self, query: &MaskedQuery) -> Result<Vec<EmbeddingVector>> {
        let body: EmbeddingsBody =
            self.post("embeddings", &serde_json::json!({ "tokens": query.tokens }))?;
        if body.vectors.len() != query.tokens.len() {
            return Err(BiasError::Transport(format!(
                "server returned {} vectors for {} tokens",
                body.vectors.len(),
                query.tokens.len()
            )));
        }
        Ok(body
            .vectors
            .into_iter()
            .enumerate()
            .map(|(i, values)| EmbeddingVector {
                values,
                source_token_position: i,
            })
            .collect())
    }

    fn static_vector(&self, word: &str) -> Result<EmbeddingVector> {
        let _ = word;
        Err(BiasError::Unsupported {
            kind: "masked-lm".into(),
            operation: "static_vector".into(),
        })
    }
}
