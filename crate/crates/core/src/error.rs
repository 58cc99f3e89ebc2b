use std::path::PathBuf;

use thiserror::Error;

use crate::domain::Pair;
use crate::geo::GeoError;
use crate::llm::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error(transparent)]
    Geo(#[from] GeoError),

    #[error("{pair}: {source}")]
    AtPair {
        pair: Pair,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate research report: {len} characters, minimum is {min}")]
    DegenerateReport { len: usize, min: usize },

    #[error("invalid factor set after {attempts} attempts: {}", violations.join("; "))]
    InvalidFactorSet {
        attempts: usize,
        violations: Vec<String>,
    },

    #[error("extractor {pair} returned unusable output: {detail}")]
    ParseFailure { pair: Pair, detail: String },

    #[error("variant field keys differ: {detail}")]
    KeyMismatch { detail: String },

    #[error("refiner failed on field `{field}`: {source}")]
    RefineFailed {
        field: String,
        #[source]
        source: Box<Error>,
    },

    #[error("inference output failed schema validation after {attempts} attempts: {detail}")]
    SchemaFailure { attempts: usize, detail: String },

    #[error("inference needs all four dimension/level records, missing: {}", missing.join(", "))]
    MissingRecords { missing: Vec<String> },

    #[error("predictions and ground truth are not aligned (no truth for [{}], no prediction for [{}])", no_truth.join(", "), no_prediction.join(", "))]
    Alignment {
        no_truth: Vec<String>,
        no_prediction: Vec<String>,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },

    #[error("no factor cache for task `{task}` at {}; run the `factors` stage first", path.display())]
    MissingFactorCache { task: String, path: PathBuf },

    #[error("config: {0}")]
    Config(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn at(self, pair: Pair) -> Self {
        Error::AtPair {
            pair,
            source: Box::new(self),
        }
    }
}
