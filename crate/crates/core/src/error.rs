//! Error taxonomy shared across the toolkit.
//!
//! Validation-style failures (bad input, OOV words, agreement mismatches)
//! are kept distinct from transport failures so the CLI can map them to
//! different exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BiasError {
    /// A word is not a member of the backend vocabulary.
    #[error("out-of-vocabulary token `{0}`")]
    OutOfVocabulary(String),

    /// A word tokenizes to more than one vocabulary unit.
    #[error("`{word}` tokenizes to {pieces} pieces; only single-token words are scored")]
    MultiToken { word: String, pieces: usize },

    /// Grammatical number of a target word does not fit the template.
    #[error("agreement mismatch: template `{template}` is {template_number}, target `{word}` is {word_number}")]
    Agreement {
        template: String,
        template_number: String,
        word: String,
        word_number: String,
    },

    /// Input file could not be parsed.
    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },

    /// Structurally invalid input or configuration.
    #[error("validation: {0}")]
    Validation(String),

    /// A file is missing a required column.
    #[error("schema error in {path}: {detail}")]
    Schema { path: String, detail: String },

    /// The backend could not be reached or answered malformed data.
    #[error("backend transport: {0}")]
    Transport(String),

    /// The backend kind does not support the requested operation.
    #[error("backend `{kind}` does not support {operation}")]
    Unsupported { kind: String, operation: String },

    /// A mock backend has no table entry for the requested query.
    #[error("mock fixture has no entry for `{0}`")]
    FixtureMiss(String),

    /// No agreement-valid (template, target pair) combination produced a score.
    #[error("no valid measurements: {0}")]
    EmptyMeasurement(String),

    /// Correlation is undefined (constant input).
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    /// Cosine similarity is undefined for (near-)zero vectors.
    #[error("undefined cosine: {0}")]
    UndefinedCosine(String),

    /// A character span could not be aligned to token boundaries.
    #[error("span alignment failed for `{span}`: {detail}")]
    Alignment { span: String, detail: String },

    /// File access failure, carrying the path it concerned.
    #[error("cannot access `{path}`: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `std::fs::read_to_string` with the path baked into the error.
pub fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| BiasError::File {
        path: path.display().to_string(),
        source,
    })
}

impl BiasError {
    /// Exit code the CLI maps this error to: transport errors are 2,
    /// everything else is a validation-style 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            BiasError::Transport(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, BiasError>;
