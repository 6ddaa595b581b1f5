use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "vtforge", version, about = "Synthesize, track and evaluate video scene-text annotations")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Root seed; falls back to $VTFORGE_SEED, then to the config.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Evaluation IoU threshold, strictly between 0 and 1.
    #[arg(long, global = true, value_name = "T")]
    pub iou: Option<f64>,
    /// Worker threads for per-video work.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct InputArg {
    /// Annotation file, video directory, or directory of video directories.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    pub gt: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub pred: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate analytic scenes: layout, ground truth, flows, deformation.
    GenScene {
        /// Number of videos.
        #[arg(long, default_value_t = 1)]
        videos: usize,
        /// e.g. `static`, `translate:3,-2`, `projective:tx,ty,rot,scale,px,py`.
        #[arg(long)]
        motion: Option<String>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        /// Flow noise standard deviation, pixels.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Propagate seed text through optical flow.
    SynthFlow(InputArg),
    /// Propagate seed text through a deformation field.
    SynthDeform(InputArg),
    /// Associate per-frame detections into tracks.
    Track(InputArg),
    /// Detection precision / recall / F-measure (plus tracking counters).
    EvalDet(EvalArgs),
    /// End-to-end spotting scores.
    EvalE2e(EvalArgs),
    /// MOTA / MOTP / IDF1.
    EvalTrack(EvalArgs),
    /// Optimal prediction/ground-truth matching and composite loss.
    Match(InputArg),
    /// One SVG per frame with polygons and transcriptions.
    RenderOverlay {
        #[command(flatten)]
        input: InputArg,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenScene { .. } => "gen-scene",
            Command::SynthFlow(_) => "synth-flow",
            Command::SynthDeform(_) => "synth-deform",
            Command::Track(_) => "track",
            Command::EvalDet(_) => "eval-det",
            Command::EvalE2e(_) => "eval-e2e",
            Command::EvalTrack(_) => "eval-track",
            Command::Match(_) => "match",
            Command::RenderOverlay { .. } => "render-overlay",
        }
    }
}
