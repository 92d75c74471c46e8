//! Ingestion of ambiguous-pronoun coreference data in the published
//! tab-separated layout: ID, Text, Pronoun, Pronoun-offset, A, A-offset,
//! A-coref, B, B-offset, B-coref, URL. Offsets are character offsets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BiasError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl std::fmt::Display for Gender {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Gender::Male => write!(f, "male"),
            Gender::Female => write!(f, "female"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GoldLabel {
    A,
    B,
    Neither,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Span {
    pub surface: String,
    /// Character offset into the instance text.
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntitySpan {
    pub surface: String,
    pub offset: usize,
    pub gold_coreferent: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapInstance {
    pub id: String,
    pub text: String,
    pub pronoun: Span,
    pub entity_a: EntitySpan,
    pub entity_b: EntitySpan,
    pub pronoun_gender: Gender,
}

impl GapInstance {
    pub fn label(&self) -> GoldLabel {
        match (self.entity_a.gold_coreferent, self.entity_b.gold_coreferent) {
            (true, false) => GoldLabel::A,
            (false, true) => GoldLabel::B,
            _ => GoldLabel::Neither,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GapCounts {
    pub male: usize,
    pub female: usize,
    pub neither_male: usize,
    pub neither_female: usize,
}

#[derive(Debug, Clone)]
pub struct GapCorpus {
    pub instances: Vec<GapInstance>,
    /// (1-based data row, reason) for every skipped row.
    pub skipped: Vec<(usize, String)>,
    pub counts: GapCounts,
}

fn pronoun_gender(surface: &str) -> Option<Gender> {
    match surface.to_lowercase().as_str() {
        "he" | "him" | "his" => Some(Gender::Male),
        "she" | "her" | "hers" => Some(Gender::Female),
        _ => None,
    }
}

/// The substring of `text` starting at character `offset` must equal
/// `surface`.
fn offset_matches(text: &str, offset: usize, surface: &str) -> bool {
    let got: String = text.chars().skip(offset).take(surface.chars().count()).collect();
    got == surface
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

const REQUIRED_COLUMNS: [&str; 11] = [
    "ID",
    "Text",
    "Pronoun",
    "Pronoun-offset",
    "A",
    "A-offset",
    "A-coref",
    "B",
    "B-offset",
    "B-coref",
    "URL",
];

/// Loads and validates instances; malformed rows are reported with their
/// row number and skipped rather than aborting the run.
pub fn load_gap(path: impl AsRef<Path>) -> Result<GapCorpus> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .flexible(true)
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
    let mut column = std::collections::HashMap::new();
    for (i, name) in headers.iter().enumerate() {
        column.insert(name.to_string(), i);
    }
    for required in REQUIRED_COLUMNS {
        if !column.contains_key(required) {
            return Err(BiasError::Schema {
                path: path.display().to_string(),
                detail: format!("missing column `{required}`"),
            });
        }
    }
    let idx = |name: &str| column[name];

    let mut corpus = GapCorpus {
        instances: Vec::new(),
        skipped: Vec::new(),
        counts: GapCounts::default(),
    };
    for (row_number, record) in reader.records().enumerate() {
        let row = row_number + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                corpus.skipped.push((row, format!("unreadable row: {e}")));
                continue;
            }
        };
        let field = |name: &str| record.get(idx(name)).unwrap_or("").to_string();
        let parse_offset = |name: &str| -> std::result::Result<usize, String> {
            field(name)
                .parse::<usize>()
                .map_err(|_| format!("`{name}` is not an offset: `{}`", field(name)))
        };
        let outcome = (|| -> std::result::Result<GapInstance, String> {
            let text = field("Text");
            let pronoun_surface = field("Pronoun");
            let pronoun_offset = parse_offset("Pronoun-offset")?;
            let gender = pronoun_gender(&pronoun_surface)
                .ok_or_else(|| format!("ungendered pronoun `{pronoun_surface}`"))?;
            if !offset_matches(&text, pronoun_offset, &pronoun_surface) {
                return Err(format!(
                    "pronoun offset {pronoun_offset} does not point at `{pronoun_surface}`"
                ));
            }
            let entity = |surface_col: &str, offset_col: &str, coref_col: &str| {
                let surface = field(surface_col);
                let offset = parse_offset(offset_col)?;
                if !offset_matches(&text, offset, &surface) {
                    return Err(format!(
                        "{surface_col} offset {offset} does not point at `{surface}`"
                    ));
                }
                let gold = parse_bool(&field(coref_col))
                    .ok_or_else(|| format!("`{coref_col}` is not TRUE/FALSE"))?;
                Ok(EntitySpan {
                    surface,
                    offset,
                    gold_coreferent: gold,
                })
            };
            let entity_a = entity("A", "A-offset", "A-coref")?;
            let entity_b = entity("B", "B-offset", "B-coref")?;
            if entity_a.gold_coreferent && entity_b.gold_coreferent {
                return Err("both entities marked coreferent".into());
            }
            Ok(GapInstance {
                id: field("ID"),
                text,
                pronoun: Span {
                    surface: pronoun_surface,
                    offset: pronoun_offset,
                },
                entity_a,
                entity_b,
                pronoun_gender: gender,
            })
        })();
        match outcome {
            Ok(instance) => {
                match instance.pronoun_gender {
                    Gender::Male => corpus.counts.male += 1,
                    Gender::Female => corpus.counts.female += 1,
                }
                if instance.label() == GoldLabel::Neither {
                    match instance.pronoun_gender {
                        Gender::Male => corpus.counts.neither_male += 1,
                        Gender::Female => corpus.counts.neither_female += 1,
                    }
                }
                corpus.instances.push(instance);
            }
            Err(reason) => corpus.skipped.push((row, reason)),
        }
    }
    Ok(corpus)
}
