//! Run manifests and report serialization. Result files are a pure
//! function of inputs and seed, so identical runs are byte-identical;
//! wall-clock time lives only in the manifest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::BackendDescriptor;
use crate::bias::BiasTestResult;
use crate::error::{BiasError, Result};
use crate::stats::PermutationConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub backend: BackendDescriptor,
    /// sha-256 digest per input file.
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub permutation: PermutationConfig,
    pub toolkit_version: String,
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn new(
        command: Vec<String>,
        backend: BackendDescriptor,
        seed: u64,
        permutation: PermutationConfig,
    ) -> Self {
        RunManifest {
            command,
            backend,
            inputs: BTreeMap::new(),
            seed,
            permutation,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn record_input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| BiasError::File {
            path: path.display().to_string(),
            source,
        })?;
        let digest = Sha256::digest(&bytes);
        self.inputs.insert(
            path.display().to_string(),
            digest.iter().map(|b| format!("{b:02x}")).collect(),
        );
        Ok(())
    }
}

/// Pretty JSON with a trailing newline; map keys are ordered, so the
/// bytes are stable for equal values.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut body = serde_json::to_vec_pretty(value).map_err(|e| {
        BiasError::Validation(format!("serialization failed: {e}"))
    })?;
    body.push(b'\n');
    std::fs::write(path, body)?;
    Ok(())
}

/// Summary rows: category, kind, statistic, effect size, p, exactness,
/// permutation count, seed.
pub fn results_csv(results: &[BiasTestResult]) -> String {
    let mut out = String::from("category,kind,statistic,effect_size,p_value,exact,n_permutations,seed\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            escape_csv(&r.category_name),
            r.kind,
            r.statistic,
            r.effect_size,
            r.p_value,
            r.exact,
            r.n_permutations_used,
            r.seed
        ));
    }
    out
}

fn escape_csv(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}
