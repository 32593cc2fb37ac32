use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("batch norm needs at least 2 samples in train mode, got {0}")]
    BatchTooSmall(usize),

    #[error("joint {joint} ({name}) has non-positive depth {depth}")]
    Depth {
        joint: usize,
        name: String,
        depth: f64,
    },

    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("unsupported checkpoint format_version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("joint weights: {0}")]
    Weights(String),

    #[error("split: {0}")]
    Split(String),

    #[error("table: {0}")]
    Table(String),

    #[error("training diverged at epoch {epoch} (non-finite loss); model restored to end of epoch {restored_epoch}")]
    Diverged {
        epoch: usize,
        restored_epoch: usize,
        log: Box<crate::train::TrainLog>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
