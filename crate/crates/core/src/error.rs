use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest row {row}, field `{field}`: {message}")]
    Manifest {
        row: usize,
        field: String,
        message: String,
    },

    #[error("audio {path}: {message}")]
    Audio { path: PathBuf, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("clip has {samples} samples, fewer than the {needed} required")]
    ClipTooShort { samples: usize, needed: usize },

    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),

    #[error("no frame rises above the silence threshold")]
    AllSilent,

    #[error("frame is all zeros")]
    ZeroFrame,

    #[error("autocorrelation is singular (all-zero frame)")]
    SingularAutocorrelation,

    #[error("only {found} of 5 formants could be estimated")]
    PartialFormants { found: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("class {0} has no samples")]
    MissingClass(u8),

    #[error("severity label {0} is outside 1..=5")]
    LabelOutOfRange(i64),

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("feature matrix contains a non-finite value at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: usize },

    #[error("expected {expected} values, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("speaker {speaker} has no `{kind}` utterance")]
    MissingUtterance { speaker: String, kind: String },

    #[error("stage-1 model {model_id} has no eligible training speakers")]
    EmptyTrainingSubset { model_id: u8 },

    #[error("stage-1 model {model_id} sees only one binary class")]
    DegenerateTrainingSubset { model_id: u8 },

    #[error("speaker {speaker}: {source}")]
    Speaker {
        speaker: String,
        #[source]
        source: Box<Error>,
    },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("hierarchy config line {line}: {message}")]
    Config { line: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn for_speaker(speaker: &str, source: Error) -> Self {
        Error::Speaker {
            speaker: speaker.to_owned(),
            source: Box::new(source),
        }
    }
}
