use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: no header")]
    NoHeader { path: PathBuf },

    #[error("{path}: row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("{path}: duplicate column name {name:?}")]
    DuplicateColumn { path: PathBuf, name: String },

    #[error("cannot open {path}: {source}")]
    Open { path: PathBuf, source: std::io::Error },

    #[error("missing table file {0}")]
    MissingTable(PathBuf),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("sequence {sequence}: positions are not consecutive from 0 (found {found:?})")]
    PositionGap { sequence: String, found: Vec<usize> },

    #[error("cannot parse program {text:?}: {msg}")]
    ProgramSyntax { text: String, msg: String },

    #[error("illegal action {action} after {state:?}")]
    IllegalAction { state: String, action: String },

    #[error("program uses the previous answer but none was supplied: {0}")]
    MissingPrevAnswer(String),

    #[error("program enumeration exceeded the cap of {cap} (reached {reached})")]
    EnumerationCap { cap: usize, reached: usize },

    #[error("degenerate shaped policy: every product of behavior and critique is zero")]
    DegenerateShapedPolicy,

    #[error("distribution over {0} programs does not sum to one")]
    NotNormalized(usize),

    #[error("non-finite value in update for example {example}")]
    NonFinite { example: String },

    #[error("training diverged at epoch {epoch}, example {example}: non-finite parameter")]
    Diverged { epoch: usize, example: String },

    #[error("no examples")]
    NoExamples,

    #[error("stability needs at least two epochs, got {0}")]
    TooFewEpochs(usize),

    #[error("unknown update spec {0:?}")]
    UnknownUpdateSpec(String),

    #[error("checkpoint feature {0:?} does not belong to this model")]
    FeatureMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
