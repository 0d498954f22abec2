use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while reading, validating or generating corpora.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed JSON: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {slot} span [{start}, {end}) out of range for {len} tokens")]
    SpanOutOfRange {
        line: usize,
        slot: &'static str,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("line {line}: {slot} entity type is empty")]
    EmptyType { line: usize, slot: &'static str },
    #[error("line {line}: head span [{head_start}, {head_end}) overlaps tail span [{tail_start}, {tail_end})")]
    OverlappingSpans {
        line: usize,
        head_start: usize,
        head_end: usize,
        tail_start: usize,
        tail_end: usize,
    },
    #[error("line {line}: pos has {pos_len} tags but the sentence has {tokens_len} tokens")]
    PosLengthMismatch {
        line: usize,
        pos_len: usize,
        tokens_len: usize,
    },
    #[error("{path}:{line}: {source}")]
    InFile {
        path: PathBuf,
        line: usize,
        #[source]
        source: Box<CorpusError>,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid synthetic corpus config: {0}")]
    InvalidSynthConfig(String),
}

impl CorpusError {
    /// The 1-based input line the error refers to, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            CorpusError::Json { line, .. }
            | CorpusError::SpanOutOfRange { line, .. }
            | CorpusError::EmptyType { line, .. }
            | CorpusError::OverlappingSpans { line, .. }
            | CorpusError::PosLengthMismatch { line, .. }
            | CorpusError::InFile { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction has {pred} labels but gold has {gold}")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("no labelled instances to evaluate")]
    Empty,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("feature dimension {got} does not match classifier input dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("entity id {id} out of range for {n_entities} entities")]
    InvalidEntity { id: usize, n_entities: usize },
    #[error("posterior has {got} slots but the model has {expected} relations")]
    PosteriorSize { expected: usize, got: usize },
    #[error("empty negative list for the {0} position while K > 0")]
    EmptyNegatives(&'static str),
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty entity type string")]
    EmptyType,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("dev corpus has no labelled instances")]
    UnlabelledDev,
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("oracle setting {setting} needs gold labels but instance {index} has none")]
    MissingLabel { setting: String, index: usize },
    #[error("oracle setting {setting}: {detail}")]
    OracleSetting { setting: String, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint holds {found} parameters, expected {expected}")]
    Dtype { expected: String, found: String },
    #[error("checkpoint shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint vocabulary hash mismatch: recorded {recorded}, computed {computed}")]
    VocabularyHash { recorded: String, computed: String },
    #[error("checkpoint feature-index hash mismatch: recorded {recorded}, computed {computed}")]
    FeatureIndexHash { recorded: String, computed: String },
}
