//! File naming contract inside a video directory.

use std::path::{Path, PathBuf};

pub const ANNOTATIONS: &str = "annotations.jsonl";
/// Text layout at the seed / canonical frame, same JSONL schema.
pub const SEEDS: &str = "seeds.jsonl";

pub fn forward_flow(video_dir: &Path, frame: usize) -> PathBuf {
    video_dir.join(format!("{frame:06}.fwd.flo"))
}

pub fn backward_flow(video_dir: &Path, frame: usize) -> PathBuf {
    video_dir.join(format!("{frame:06}.bwd.flo"))
}

pub fn deformation(video_dir: &Path, frame: usize) -> PathBuf {
    video_dir.join(format!("{frame:06}.def.flo"))
}

pub fn mask(video_dir: &Path, frame: usize) -> PathBuf {
    video_dir.join("mask").join(format!("{frame:06}.pgm"))
}

pub fn annotations(video_dir: &Path) -> PathBuf {
    video_dir.join(ANNOTATIONS)
}

pub fn seeds(video_dir: &Path) -> PathBuf {
    video_dir.join(SEEDS)
}

/// Count consecutive frames `0, 1, ...` for which `f(dir, k)` exists.
pub fn count_frames(video_dir: &Path, f: impl Fn(&Path, usize) -> PathBuf) -> usize {
    let mut k = 0;
    while f(video_dir, k).is_file() {
        k += 1;
    }
    k
}
