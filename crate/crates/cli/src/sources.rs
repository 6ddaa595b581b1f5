//! Resolving `--input` / `--gt` / `--pred` paths into per-video work items.

use std::fs;
use std::path::{Path, PathBuf};

use vtforge_core::dataio::paths;

use crate::Failure;

/// One video found under an input path.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSource {
    pub name: String,
    /// Video directory, when the input was not a bare file.
    pub dir: Option<PathBuf>,
    /// The file that made this a video: annotations or seeds.
    pub file: PathBuf,
}

/// Inputs naming one video write straight into `--out`; a directory of
/// videos gets one subdirectory per video.
#[derive(Debug, Clone, PartialEq)]
pub struct Sources {
    pub videos: Vec<VideoSource>,
    pub nested: bool,
}

impl Sources {
    pub fn out_dir(&self, out: &Path, video: &VideoSource) -> PathBuf {
        if self.nested {
            out.join(&video.name)
        } else {
            out.to_path_buf()
        }
    }
}

fn dir_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "video".into())
}

/// `marker` is the file name identifying a video directory.
fn discover(path: &Path, marker: &str, allow_file: bool) -> Result<Sources, Failure> {
    if path.is_file() {
        if !allow_file {
            return Err(Failure::input(format!("{}: expected a video directory", path.display())));
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "video".into());
        return Ok(Sources {
            videos: vec![VideoSource {
                name,
                dir: None,
                file: path.to_path_buf(),
            }],
            nested: false,
        });
    }
    if !path.is_dir() {
        return Err(Failure::input(format!("{}: no such file or directory", path.display())));
    }
    let own = path.join(marker);
    if own.is_file() {
        return Ok(Sources {
            videos: vec![VideoSource {
                name: dir_name(path),
                dir: Some(path.to_path_buf()),
                file: own,
            }],
            nested: false,
        });
    }
    let entries = fs::read_dir(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let mut subdirs: Vec<PathBuf> = Vec::new();
    for e in entries {
        let e = e.map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let p = e.path();
        if p.is_dir() && p.join(marker).is_file() {
            subdirs.push(p);
        }
    }
    subdirs.sort();
    if subdirs.is_empty() {
        return Err(Failure::input(format!(
            "{}: no {marker} here or in any subdirectory",
            path.display()
        )));
    }
    Ok(Sources {
        videos: subdirs
            .into_iter()
            .map(|d| VideoSource {
                name: dir_name(&d),
                file: d.join(marker),
                dir: Some(d),
            })
            .collect(),
        nested: true,
    })
}

/// Annotation file, a video directory holding one, or a directory of those.
pub fn annotations(path: &Path) -> Result<Sources, Failure> {
    discover(path, paths::ANNOTATIONS, true)
}

/// Video directories holding a seed layout.
pub fn scenes(path: &Path) -> Result<Sources, Failure> {
    discover(path, paths::SEEDS, false)
}
