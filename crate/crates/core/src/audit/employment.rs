//! Employment-attribute audits: he-vs-she bias scores over job titles,
//! trait adjectives, or skills, plus ingestion of the attribute lists
//! themselves.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::ModelBackend;
use crate::bias::log_prob_bias_score;
use crate::error::{BiasError, Result};
use crate::stimuli::{is_single_vocab_token, NumberAgreement, TargetWord, Template};

/// Which probe sentence the audit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmploymentTemplate {
    /// "TARGET is ATTRIBUTE" (titles and traits)
    Is,
    /// "TARGET can do ATTRIBUTE" (skills)
    CanDo,
}

impl EmploymentTemplate {
    pub fn template(self) -> Template {
        let text = match self {
            EmploymentTemplate::Is => "[TARGET] is [ATTRIBUTE]",
            EmploymentTemplate::CanDo => "[TARGET] can do [ATTRIBUTE]",
        };
        Template::new("employment", text, NumberAgreement::Singular).expect("static template")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmploymentReport {
    /// Share of scored attributes with a positive (male-leaning) score,
    /// in percent.
    pub percentage_male: f64,
    /// he-vs-she score per scored attribute.
    pub per_attribute: BTreeMap<String, f64>,
    pub total_attributes: usize,
    pub scored_attributes: usize,
    /// Attributes dropped for not being single vocabulary tokens.
    pub dropped: Vec<String>,
}

/// Scores each single-token attribute with the he/she bias under the
/// designated template; multi-word phrases only survive when the full
/// phrase is one vocabulary token.
pub fn employment_audit(
    backend: &dyn ModelBackend,
    attributes: &[String],
    kind: EmploymentTemplate,
) -> Result<EmploymentReport> {
    let template = kind.template();
    let he = TargetWord::new("he", NumberAgreement::Singular);
    let she = TargetWord::new("she", NumberAgreement::Singular);

    let mut scored_words = Vec::new();
    let mut dropped = Vec::new();
    for attribute in attributes {
        if is_single_vocab_token(attribute, backend)? {
            scored_words.push(attribute.clone());
        } else {
            dropped.push(attribute.clone());
        }
    }
    if scored_words.is_empty() {
        return Err(BiasError::Validation(
            "no attribute survives single-token filtering".into(),
        ));
    }

    let score_one = |attribute: &String| -> Result<(String, f64)> {
        log_prob_bias_score(backend, &template, &he, &she, attribute)
            .map(|s| (attribute.clone(), s))
    };
    let scored: Vec<(String, f64)> = if backend.concurrent() {
        scored_words.par_iter().map(score_one).collect::<Result<_>>()?
    } else {
        scored_words.iter().map(score_one).collect::<Result<_>>()?
    };

    let per_attribute: BTreeMap<String, f64> = scored.into_iter().collect();
    let positive = per_attribute.values().filter(|&&s| s > 0.0).count();
    Ok(EmploymentReport {
        percentage_male: 100.0 * positive as f64 / per_attribute.len() as f64,
        total_attributes: attributes.len(),
        scored_attributes: per_attribute.len(),
        per_attribute,
        dropped,
    })
}

/// How an attribute file is laid out.
#[derive(Debug, Clone)]
pub enum AttributeFormat {
    /// One attribute per line.
    Lines,
    /// A delimited column, optionally sorted by a numeric column first
    /// and truncated to the top rows.
    CsvColumn {
        column: String,
        delimiter: u8,
        sort_by: Option<String>,
        descending: bool,
        limit: Option<usize>,
    },
}

fn parse_numeric(raw: &str) -> Option<f64> {
    let cleaned: String = raw
        .chars()
        .filter(|c| c.is_ascii_digit() || *c == '.' || *c == '-')
        .collect();
    cleaned.parse().ok()
}

/// Reads an ordered, deduplicated, lowercased attribute list.
pub fn load_attribute_list(path: impl AsRef<Path>, format: &AttributeFormat) -> Result<Vec<String>> {
    let path = path.as_ref();
    let values: Vec<String> = match format {
        AttributeFormat::Lines => crate::error::read_file(path)?
            .lines()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect(),
        AttributeFormat::CsvColumn {
            column,
            delimiter,
            sort_by,
            descending,
            limit,
        } => {
            let mut reader = csv::ReaderBuilder::new()
                .delimiter(*delimiter)
                .from_path(path)
                .map_err(|e| BiasError::Parse {
                    path: path.display().to_string(),
                    detail: e.to_string(),
                })?;
            let headers = reader
                .headers()
                .map_err(|e| BiasError::Parse {
                    path: path.display().to_string(),
                    detail: e.to_string(),
                })?
                .clone();
            let find = |name: &str| -> Result<usize> {
                headers.iter().position(|h| h == name).ok_or_else(|| BiasError::Schema {
                    path: path.display().to_string(),
                    detail: format!("missing column `{name}`"),
                })
            };
            let value_idx = find(column)?;
            let sort_idx = sort_by.as_deref().map(find).transpose()?;

            let mut rows: Vec<(Option<f64>, String)> = Vec::new();
            for (row_number, record) in reader.records().enumerate() {
                let record = record.map_err(|e| BiasError::Parse {
                    path: path.display().to_string(),
                    detail: format!("row {}: {e}", row_number + 1),
                })?;
                let value = record.get(value_idx).unwrap_or("").trim().to_string();
                if value.is_empty() {
                    continue;
                }
                let key = match sort_idx {
                    Some(i) => {
                        let raw = record.get(i).unwrap_or("");
                        Some(parse_numeric(raw).ok_or_else(|| BiasError::Parse {
                            path: path.display().to_string(),
                            detail: format!(
                                "row {}: `{raw}` in `{}` is not numeric",
                                row_number + 1,
                                sort_by.as_deref().unwrap_or("")
                            ),
                        })?)
                    }
                    None => None,
                };
                rows.push((key, value));
            }
            if sort_idx.is_some() {
                // Stable sort keeps file order among equal keys.
                if *descending {
                    rows.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
                } else {
                    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
                }
            }
            if let Some(n) = limit {
                rows.truncate(*n);
            }
            rows.into_iter().map(|(_, v)| v).collect()
        }
    };

    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for value in values {
        let lowered = value.to_lowercase();
        if seen.insert(lowered.clone()) {
            out.push(lowered);
        }
    }
    Ok(out)
}
