//! Readers and writers for every on-disk format.
//!
//! | artifact | format |
//! |---|---|
//! | annotations | JSON Lines, one frame per line ([`annotation`]) |
//! | flow / deformation grids | Middlebury `.flo` ([`flo`]) |
//! | segmentation / occlusion / depth | binary PGM, `P5` ([`pgm`]) |
//! | lexicon | one word per line ([`lexicon`]) |
//! | configuration | `key = value` lines ([`config`]) |
//!
//! Per-video files follow a fixed naming contract, see [`paths`].

pub mod annotation;
pub mod config;
pub mod flo;
pub mod lexicon;
pub mod paths;
pub mod pgm;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use annotation::{
    read_annotations, write_annotations, CharBox, FrameRecord, TextInstance, VideoAnnotation,
};
pub use config::{read_config, ConfigMap, ConfigValue, Settings};
pub use flo::{read_flow, write_flow};
pub use lexicon::read_lexicon;
pub use pgm::{read_depth, read_mask, write_mask, FloatGrid, LabelGrid};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Line {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path} (byte {offset}): {msg}")]
    Bytes {
        path: PathBuf,
        offset: u64,
        msg: String,
    },
    #[error("{path}:{line}: unknown config key `{key}`")]
    UnknownKey {
        path: PathBuf,
        line: usize,
        key: String,
    },
    #[error("{path}: {msg}")]
    Invalid { path: PathBuf, msg: String },
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn line(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        DataError::Line {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn bytes(path: &Path, offset: u64, msg: impl Into<String>) -> Self {
        DataError::Bytes {
            path: path.to_path_buf(),
            offset,
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(path: &Path, msg: impl Into<String>) -> Self {
        DataError::Invalid {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, DataError>;

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| DataError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| DataError::io(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| DataError::io(path, e))
}
