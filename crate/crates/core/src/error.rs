use std::path::PathBuf;

use thiserror::Error;

use crate::relation::{BiasType, RelationLabel};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown relation label `{0}`")]
    UnknownLabel(String),

    #[error("unknown bias type `{0}`")]
    UnknownBiasType(String),

    /// A record failed to load; carries the 1-based line number and field path.
    #[error("line {line}: {field}: {message}")]
    Record {
        line: usize,
        field: String,
        message: String,
    },

    #[error("threshold {threshold} for {bias_type}:{relation} is outside [0, 1]")]
    ThresholdRange {
        bias_type: BiasType,
        relation: RelationLabel,
        threshold: f64,
    },

    #[error(
        "invalid threshold for {bias_type}:{relation}: {threshold} exceeds marginal frequency {marginal}"
    )]
    InvalidThreshold {
        bias_type: BiasType,
        relation: RelationLabel,
        threshold: f64,
        marginal: f64,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("relation `{relation}` is not supported by {context}")]
    UnsupportedRelation {
        relation: RelationLabel,
        context: &'static str,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("unknown template `{0}`")]
    UnknownTemplate(String),

    #[error("template {template} cannot render a {kind} instance")]
    TemplateMismatch {
        template: &'static str,
        kind: &'static str,
    },

    #[error("no replay fixture for prompt {0}")]
    MissingFixture(String),

    #[error("generation failed for `{id}`: {message}")]
    Generation { id: String, message: String },

    #[error("transport: {0}")]
    Transport(String),

    #[error("parse: {0}")]
    Parse(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier, used by the CLI for machine-readable errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::UnknownLabel(_) => "unknown_label",
            Error::UnknownBiasType(_) => "unknown_bias_type",
            Error::Record { .. } => "record",
            Error::ThresholdRange { .. } => "threshold_range",
            Error::InvalidThreshold { .. } => "invalid_threshold",
            Error::EmptyCorpus => "empty_corpus",
            Error::UnsupportedRelation { .. } => "unsupported_relation",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::UnknownTemplate(_) => "unknown_template",
            Error::TemplateMismatch { .. } => "template_mismatch",
            Error::MissingFixture(_) => "missing_fixture",
            Error::Generation { .. } => "generation",
            Error::Transport(_) => "transport",
            Error::Parse(_) => "parse",
            Error::Config(_) => "config",
            Error::Json(_) => "json",
        }
    }
}
