use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("episode length {episode_length} exceeds profile length {profile_length}")]
    EpisodeTooLong {
        episode_length: usize,
        profile_length: usize,
    },
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: missing column `{column}`", path.display())]
    MissingColumn { path: PathBuf, column: String },
    #[error("{}: row {row}, column `{column}`: {reason}", path.display())]
    BadCell {
        path: PathBuf,
        row: usize,
        column: String,
        reason: String,
    },
    #[error("{}: {reason}", path.display())]
    Malformed { path: PathBuf, reason: String },
    #[error("load series has zero mean; cannot rescale")]
    ZeroLoad,
    #[error("load and pv series differ in length ({load} vs {pv})")]
    LengthMismatch { load: usize, pv: usize },
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("action index {index} out of range for {count} joint actions")]
    ActionOutOfRange { index: usize, count: usize },
    #[error("episode is done; call reset before stepping")]
    EpisodeDone,
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint format: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint parameters do not match their config: {0}")]
    Shape(String),
}
