use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{json, Value};
use vtforge_core::assign::{self, Alphabet, GroundTruthRecord, MatchWeights, PredictionRecord};
use vtforge_core::dataio::{self, paths, LabelGrid};
use vtforge_core::metrics::{evaluate_video, MetricReport, Protocol, VideoCounts};
use vtforge_core::rng::derive_seed;
use vtforge_core::scenegen::{gen_layout, gen_motion, MotionKind, MotionSpec};
use vtforge_core::textprop::{
    drop_counts, filter_instances, propagate_deformation, propagate_flow, to_annotation, DeformationField,
    FlowSequence,
};
use vtforge_core::trackersim::run_sequence;
use vtforge_core::{AABox, FlowField, Point2, Polygon, VideoAnnotation};

use crate::args::{Command, EvalArgs};
use crate::report::{SynthesisSummary, VideoReport};
use crate::sources::{self, Sources, VideoSource};
use crate::{overlay, Context, Failure};

#[derive(Debug, Default)]
pub(crate) struct Body {
    pub videos: Vec<VideoReport>,
    pub aggregate: Option<MetricReport>,
    pub result: Option<Value>,
}

pub(crate) fn dispatch(ctx: &Context, command: &Command) -> Result<Body, Failure> {
    match command {
        Command::GenScene { videos, .. } => gen_scene(ctx, *videos),
        Command::SynthFlow(a) => synthesize(ctx, &a.input, false),
        Command::SynthDeform(a) => synthesize(ctx, &a.input, true),
        Command::Track(a) => track(ctx, &a.input),
        Command::EvalDet(a) => evaluate(ctx, a, Protocol::Detection),
        Command::EvalE2e(a) => evaluate(ctx, a, Protocol::EndToEnd),
        Command::EvalTrack(a) => evaluate(ctx, a, Protocol::Detection),
        Command::Match(a) => match_file(ctx, &a.input),
        Command::RenderOverlay { input, .. } => render(ctx, &input.input),
    }
}

fn input_err(e: impl std::fmt::Display) -> Failure {
    Failure::input(e.to_string())
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Refuse to overwrite an input with an output.
fn guard_overwrite(target: &Path, input: &Path) -> Result<(), Failure> {
    if same_file(target, input) {
        return Err(Failure::input(format!(
            "{}: output would overwrite an input; choose another --out",
            target.display()
        )));
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn gen_scene(ctx: &Context, videos: usize) -> Result<Body, Failure> {
    let out = ctx.require_out()?;
    if videos == 0 {
        return Err(Failure::input("--videos must be >= 1"));
    }
    let s = &ctx.settings;
    let kind: MotionKind = s.scene.motion.parse().map_err(input_err)?;
    let root = s.placement.seed;
    let nested = videos > 1;
    let items: Vec<usize> = (0..videos).collect();
    let reports = ctx.par_map(&items, |&i| {
        let name = format!("video_{i:03}");
        let dir = if nested { out.join(&name) } else { out.to_path_buf() };
        let mut placement = s.placement.clone();
        placement.seed = derive_seed(root, &[i as u64, 0]);
        let layout = gen_layout(s.scene.width, s.scene.height, &placement, s.scene.margin).map_err(input_err)?;
        let mut spec = MotionSpec::new(kind, s.scene.frames, s.scene.width, s.scene.height);
        spec.seed = derive_seed(root, &[i as u64, 1]);
        spec.flow_noise_sigma = s.scene.flow_noise_sigma;
        let scene = gen_motion(layout, &spec).map_err(input_err)?;
        create_dir(&dir)?;
        scene.write(&dir, &name, true, true).map_err(input_err)?;
        let mut r = VideoReport::new(name);
        r.synthesis = Some(SynthesisSummary {
            instances: scene.layout.len(),
            frames: scene.frame_count(),
            drops: Default::default(),
        });
        r.outputs.push(display(&dir));
        Ok(r)
    })?;
    Ok(Body {
        videos: reports,
        ..Body::default()
    })
}

fn read_flows(files: impl Iterator<Item = PathBuf>) -> Result<Vec<FlowField>, Failure> {
    files.map(|p| dataio::read_flow(&p).map_err(Failure::from)).collect()
}

/// Occlusion masks, used only when frame 0 has one.
fn read_masks(dir: &Path, frames: usize) -> Result<Option<Vec<LabelGrid>>, Failure> {
    if !paths::mask(dir, 0).is_file() {
        return Ok(None);
    }
    (0..frames)
        .map(|k| dataio::read_mask(&paths::mask(dir, k)).map_err(Failure::from))
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn synthesize_one(ctx: &Context, sources: &Sources, v: &VideoSource, deform: bool) -> Result<VideoReport, Failure> {
    let out = ctx.require_out()?;
    let dir = v.dir.as_deref().expect("scene sources are directories");
    let out_dir = sources.out_dir(out, v);
    guard_overwrite(&paths::annotations(&out_dir), &paths::annotations(dir))?;
    let cfg = &ctx.settings.propagation;
    let seeds = dataio::read_annotations(&v.file)?;
    let seed_frame = seeds.frame(cfg.seed_frame).ok_or_else(|| {
        Failure::input(format!(
            "{}: no layout recorded for seed frame {}",
            v.file.display(),
            cfg.seed_frame
        ))
    })?;
    let layout = &seed_frame.instances;

    let (props, dims, frames) = if deform {
        let n = paths::count_frames(dir, paths::deformation);
        if n == 0 {
            return Err(Failure::input(format!("{}: no deformation files", dir.display())));
        }
        let d = DeformationField::new(read_flows((0..n).map(|k| paths::deformation(dir, k)))?)
            .map_err(input_err)?;
        let dims = (d.width(), d.height());
        (propagate_deformation(layout, &d, cfg).map_err(input_err)?, dims, n)
    } else {
        let nf = paths::count_frames(dir, paths::forward_flow);
        if nf == 0 {
            return Err(Failure::input(format!("{}: no forward flow files", dir.display())));
        }
        let n = nf + 1;
        let forward = read_flows((0..nf).map(|k| paths::forward_flow(dir, k)))?;
        let backward = read_flows((1..n).map(|k| paths::backward_flow(dir, k)))?;
        let flows = FlowSequence::new(forward, backward).map_err(input_err)?;
        let dims = (flows.width(), flows.height());
        (propagate_flow(layout, &flows, cfg).map_err(input_err)?, dims, n)
    };
    let masks = read_masks(dir, frames)?;
    let kept = filter_instances(props, cfg, dims, masks.as_deref());
    let annotation = to_annotation(&seeds.video_id, &kept, frames);
    create_dir(&out_dir)?;
    let target = paths::annotations(&out_dir);
    dataio::write_annotations(&target, &annotation)?;

    let mut drops: std::collections::BTreeMap<String, usize> =
        drop_counts(&kept).into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
    let removed = layout.len() - kept.len();
    if removed > 0 {
        drops.insert("seed_frame_lost".into(), removed);
    }
    let mut r = VideoReport::new(v.name.clone());
    r.synthesis = Some(SynthesisSummary {
        instances: kept.iter().filter(|p| p.present_frames().next().is_some()).count(),
        frames,
        drops,
    });
    r.outputs.push(display(&target));
    Ok(r)
}

fn synthesize(ctx: &Context, input: &Path, deform: bool) -> Result<Body, Failure> {
    ctx.require_out()?;
    ctx.settings.propagation.ransac.validate().map_err(input_err)?;
    let sources = sources::scenes(input)?;
    let videos = ctx.par_map(&sources.videos, |v| synthesize_one(ctx, &sources, v, deform))?;
    Ok(Body {
        videos,
        ..Body::default()
    })
}

fn frame_span(a: &VideoAnnotation) -> usize {
    a.frames.last().map_or(0, |f| f.frame_index + 1)
}

fn track(ctx: &Context, input: &Path) -> Result<Body, Failure> {
    let out = ctx.require_out()?;
    ctx.settings.assoc.validate().map_err(Failure::input)?;
    let sources = sources::annotations(input)?;
    let videos = ctx.par_map(&sources.videos, |v| {
        let detections = dataio::read_annotations(&v.file)?;
        let out_dir = sources.out_dir(out, v);
        let target = paths::annotations(&out_dir);
        guard_overwrite(&target, &v.file)?;
        let tracked = run_sequence(&detections, &ctx.settings.assoc);
        create_dir(&out_dir)?;
        dataio::write_annotations(&target, &tracked)?;
        let mut r = VideoReport::new(v.name.clone());
        r.synthesis = Some(SynthesisSummary {
            instances: tracked.ids().len(),
            frames: frame_span(&tracked),
            drops: Default::default(),
        });
        r.outputs.push(display(&target));
        Ok(r)
    })?;
    Ok(Body {
        videos,
        ..Body::default()
    })
}

/// Ground-truth videos paired with their predictions (if any).
fn pair_sources(gt: &Sources, pred: &Sources) -> Result<Vec<(VideoSource, Option<VideoSource>)>, Failure> {
    match (gt.nested, pred.nested) {
        (false, false) => Ok(vec![(gt.videos[0].clone(), Some(pred.videos[0].clone()))]),
        (true, true) => {
            if let Some(extra) = pred
                .videos
                .iter()
                .find(|p| !gt.videos.iter().any(|g| g.name == p.name))
            {
                return Err(Failure::input(format!(
                    "prediction video {:?} has no ground truth",
                    extra.name
                )));
            }
            Ok(gt
                .videos
                .iter()
                .map(|g| (g.clone(), pred.videos.iter().find(|p| p.name == g.name).cloned()))
                .collect())
        }
        _ => Err(Failure::input(
            "--gt and --pred must both name a single video or both name directories of videos",
        )),
    }
}

fn evaluate(ctx: &Context, a: &EvalArgs, protocol: Protocol) -> Result<Body, Failure> {
    let cfg = &ctx.settings.eval;
    cfg.validate().map_err(input_err)?;
    let pairs = pair_sources(&sources::annotations(&a.gt)?, &sources::annotations(&a.pred)?)?;
    let counts = ctx.par_map(&pairs, |(g, p)| {
        let gt = dataio::read_annotations(&g.file)?;
        let pred = match p {
            Some(p) => dataio::read_annotations(&p.file)?,
            None => VideoAnnotation::new(gt.video_id.clone()),
        };
        let c = evaluate_video(&gt, &pred, cfg, protocol).map_err(|e| {
            Failure::input(format!("{}: {e}", p.as_ref().map_or(&g.file, |p| &p.file).display()))
        })?;
        Ok((g.name.clone(), c))
    })?;
    let mut total = VideoCounts::default();
    let mut videos = Vec::with_capacity(counts.len());
    for (name, c) in &counts {
        total.add(c);
        let mut r = VideoReport::new(name.clone());
        r.metrics = Some(MetricReport::from_counts(c));
        videos.push(r);
    }
    Ok(Body {
        videos,
        aggregate: Some(MetricReport::from_counts(&total)),
        result: None,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionIn {
    class_prob: f64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    #[serde(default)]
    polygon: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    char_distributions: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundTruthIn {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    polygon: Vec<[f64; 2]>,
    transcription: String,
}

/// Input of `match`: normalized coordinates throughout.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchInput {
    predictions: Vec<PredictionIn>,
    ground_truth: Vec<GroundTruthIn>,
    #[serde(default)]
    alphabet: Option<String>,
}

fn polygon_in(v: &[[f64; 2]], what: &str) -> Result<Polygon, Failure> {
    Polygon::new(v.iter().map(|&[x, y]| Point2::new(x, y)).collect())
        .map_err(|e| Failure::input(format!("{what}: {e}")))
}

fn box_in(b: [f64; 4], what: &str) -> Result<AABox, Failure> {
    AABox::new(b[0], b[1], b[2], b[3]).map_err(|e| Failure::input(format!("{what}: {e}")))
}

fn match_file(ctx: &Context, input: &Path) -> Result<Body, Failure> {
    let bytes = fs::read(input).map_err(|e| Failure::input(format!("{}: {e}", input.display())))?;
    let m: MatchInput =
        serde_json::from_slice(&bytes).map_err(|e| Failure::input(format!("{}: {e}", input.display())))?;
    let preds = m
        .predictions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let what = format!("prediction {i}");
            Ok(PredictionRecord {
                class_prob: p.class_prob,
                bbox: box_in(p.bbox, &what)?,
                polygon: p.polygon.as_deref().map(|v| polygon_in(v, &what)).transpose()?,
                char_distributions: p.char_distributions.clone(),
            })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let mut gts = m
        .ground_truth
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let what = format!("ground truth {i}");
            Ok(GroundTruthRecord::Text {
                bbox: box_in(g.bbox, &what)?,
                polygon: polygon_in(&g.polygon, &what)?,
                transcription: g.transcription.clone(),
            })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let objects = gts.len();
    // every prediction slot is matched; surplus slots go to no-object rows
    while gts.len() < preds.len() {
        gts.push(GroundTruthRecord::NoObject);
    }
    let alphabet = m.alphabet.as_deref().map(Alphabet::new).transpose().map_err(input_err)?;
    let w: &MatchWeights = &ctx.settings.matching;
    let cost = assign::cost_matrix(&preds, &gts, w).map_err(input_err)?;
    let a = assign::hungarian(&cost).map_err(input_err)?;
    let pairs: Vec<(usize, usize)> = a.pairs().collect();
    let matched: Vec<(&PredictionRecord, &GroundTruthRecord)> = pairs.iter().map(|&(r, c)| (&preds[c], &gts[r])).collect();
    let loss = assign::set_loss(&matched, w, alphabet.as_ref()).map_err(input_err)?;
    let assignment: Vec<Value> = pairs
        .iter()
        .map(|&(r, c)| {
            json!({
                "gt": r,
                "pred": c,
                "no_object": r >= objects,
                "cost": cost.get(r, c),
            })
        })
        .collect();
    let unmatched_gt: Vec<usize> = a
        .row_to_col
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.is_none().then_some(r))
        .collect();
    Ok(Body {
        result: Some(json!({
            "assignment": assignment,
            "total_cost": a.total,
            "unmatched_gt": unmatched_gt,
            "loss": {
                "classification": loss.classification,
                "bbox": loss.bbox,
                "polygon": loss.polygon,
                "recognition": loss.recognition,
                "total": loss.total,
                "missing_terms": loss.missing_terms,
                "recognition_clamped": loss.recognition_clamped,
            },
        })),
        ..Body::default()
    })
}

fn render(ctx: &Context, input: &Path) -> Result<Body, Failure> {
    let out = ctx.require_out()?;
    let dims = (ctx.settings.scene.width, ctx.settings.scene.height);
    if dims.0 == 0 || dims.1 == 0 {
        return Err(Failure::input("overlay dimensions must be >= 1"));
    }
    let sources = sources::annotations(input)?;
    let videos = ctx.par_map(&sources.videos, |v| {
        let a = dataio::read_annotations(&v.file)?;
        let out_dir = sources.out_dir(out, v);
        let files =
            overlay::render_overlay(&a, dims, &out_dir).map_err(|e| Failure::input(format!("{}: {e}", out_dir.display())))?;
        let mut r = VideoReport::new(v.name.clone());
        r.synthesis = Some(SynthesisSummary {
            instances: a.ids().len(),
            frames: files.len(),
            drops: Default::default(),
        });
        r.outputs.push(display(&out_dir));
        Ok(r)
    })?;
    Ok(Body {
        videos,
        ..Body::default()
    })
}
