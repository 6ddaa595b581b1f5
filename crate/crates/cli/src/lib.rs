//! `vtforge` command-line driver.
//!
//! [`run`] parses arguments, loads configuration, dispatches per-video work
//! to a bounded thread pool and returns the exit code together with the
//! [`RunReport`] that the binary prints on standard output. Per-video
//! results are collected in input order, so the report does not depend on
//! `--jobs`.

mod args;
mod commands;
pub mod overlay;
pub mod report;
pub mod sources;

use std::ffi::OsString;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind as ClapKind;
use clap::Parser;
use rayon::prelude::*;
use vtforge_core::dataio::{DataError, Settings};

use args::{Cli, Command, Common};
pub use overlay::render_overlay;
pub use report::{ErrorInfo, ErrorKind, RunReport, SynthesisSummary, VideoReport};

/// Environment variable consulted when `--seed` is absent.
pub const SEED_ENV: &str = "VTFORGE_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub kind: ErrorKind,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Usage,
            message: message.into(),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Input,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Internal,
            message: message.into(),
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::input(e.to_string())
    }
}

/// What the binary prints and returns.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub report: RunReport,
    /// Lines for standard error.
    pub diagnostics: Vec<String>,
}

/// Everything a command needs besides its own arguments.
pub(crate) struct Context {
    pub settings: Settings,
    pub out: Option<PathBuf>,
    pool: rayon::ThreadPool,
}

impl Context {
    pub fn require_out(&self) -> Result<&Path, Failure> {
        self.out
            .as_deref()
            .ok_or_else(|| Failure::usage("this command requires --out <dir>"))
    }

    /// Map over work items on the pool; results keep input order and the
    /// first failure in that order wins.
    pub fn par_map<T, R, F>(&self, items: &[T], f: F) -> Result<Vec<R>, Failure>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> Result<R, Failure> + Sync + Send,
    {
        let results: Vec<Result<R, Failure>> = self.pool.install(|| items.par_iter().map(&f).collect());
        results.into_iter().collect()
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Failure::input(format!("{SEED_ENV}={v:?} is not an unsigned 64-bit integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Failure::input(format!("{SEED_ENV}: {e}"))),
    }
}

fn load_settings(common: &Common, command: &Command, seed: Option<u64>) -> Result<Settings, Failure> {
    let mut s = match &common.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    if let Some(seed) = seed {
        s.placement.seed = seed;
        s.ransac.seed = seed;
        s.propagation.ransac.seed = seed;
    }
    if let Some(t) = common.iou {
        if !(t > 0.0 && t < 1.0) {
            return Err(Failure::input(format!("--iou must lie strictly between 0 and 1, got {t}")));
        }
        s.eval.iou_threshold = t;
    }
    match command {
        Command::GenScene {
            motion,
            frames,
            width,
            height,
            noise,
            ..
        } => {
            if let Some(m) = motion {
                s.scene.motion = m.clone();
            }
            if let Some(n) = frames {
                s.scene.frames = *n;
            }
            if let Some(w) = width {
                s.scene.width = *w;
            }
            if let Some(h) = height {
                s.scene.height = *h;
            }
            if let Some(n) = noise {
                s.scene.flow_noise_sigma = *n;
            }
        }
        Command::RenderOverlay { width, height, .. } => {
            if let Some(w) = width {
                s.scene.width = *w;
            }
            if let Some(h) = height {
                s.scene.height = *h;
            }
        }
        _ => {}
    }
    Ok(s)
}

fn execute(cli: &Cli, report: &mut RunReport) -> Result<(), Failure> {
    if cli.common.jobs == 0 {
        return Err(Failure::input("--jobs must be >= 1"));
    }
    let seed = resolve_seed(cli.common.seed)?;
    report.seed = seed;
    let settings = load_settings(&cli.common, &cli.command, seed)?;
    report.config = settings.snapshot();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.jobs)
        .build()
        .map_err(|e| Failure::internal(format!("thread pool: {e}")))?;
    let ctx = Context {
        settings,
        out: cli.common.out.clone(),
        pool,
    };
    let body = commands::dispatch(&ctx, &cli.command)?;
    report.videos = body.videos;
    report.aggregate = body.aggregate;
    report.result = body.result;
    Ok(())
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_owned()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".into()
    }
}

fn finish(mut report: RunReport, result: Result<(), Failure>, start: Instant, diagnostics: Vec<String>) -> Outcome {
    let code = match result {
        Ok(()) => 0,
        Err(f) => {
            report.videos.clear();
            report.aggregate = None;
            report.result = None;
            let code = f.kind.exit_code();
            report.error = Some(ErrorInfo {
                kind: f.kind,
                message: f.message,
            });
            code
        }
    };
    report.exit_status = code;
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    Outcome {
        code,
        report,
        diagnostics,
    }
}

/// Run one command line. `argv[0]` is the program name.
pub fn run<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let start = Instant::now();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            let (name, result) = match e.kind() {
                ClapKind::DisplayHelp | ClapKind::DisplayVersion => ("help", Ok(())),
                _ => {
                    let first = text.lines().next().unwrap_or("invalid arguments");
                    let msg = first.trim_start_matches("error: ").to_owned();
                    ("usage", Err(Failure::usage(msg)))
                }
            };
            return finish(RunReport::new(name), result, start, vec![text.trim_end().to_owned()]);
        }
    };
    let mut report = RunReport::new(cli.command.name());
    let result = match panic::catch_unwind(AssertUnwindSafe(|| execute(&cli, &mut report))) {
        Ok(r) => r,
        Err(payload) => Err(Failure::internal(format!("internal error: {}", panic_message(&*payload)))),
    };
    let diagnostics = match &result {
        Err(f) => vec![format!("error: {}", f.message)],
        Ok(()) => Vec::new(),
    };
    finish(report, result, start, diagnostics)
}
