//! Carry seed text geometry to every frame of a video.
//!
//! Two sources of motion are supported:
//!
//! * a dense deformation field per frame mapping canonical coordinates to
//!   frame coordinates ([`propagate_deformation`]);
//! * frame-to-frame optical flow, accumulated one step at a time forward and
//!   backward from a seed frame ([`propagate_flow`]).
//!
//! In both cases the moved boundary samples of each quad are re-fitted with
//! a RANSAC homography, and the frame polygon is the seed polygon mapped
//! through that homography, so straight edges stay straight.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dataio::{CharBox, FrameRecord, LabelGrid, TextInstance, VideoAnnotation};
use crate::geometry::{FlowField, GeometryError, Homography, Point2, Polygon};
use crate::homest::{ransac_homography, EstimationError, PointPair, RansacParams};
use crate::rng::derive_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid propagation config: {0}")]
    InvalidConfig(String),
    #[error("instance {0} has no character polygons")]
    MissingCharacters(u32),
}

/// Per-frame displacement grids, canonical to frame coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    width: usize,
    height: usize,
    frames: Vec<FlowField>,
}

impl DeformationField {
    pub fn new(frames: Vec<FlowField>) -> Result<Self, PropagationError> {
        let first = frames
            .first()
            .ok_or_else(|| PropagationError::DimensionMismatch("no deformation frames".into()))?;
        let (width, height) = (first.width(), first.height());
        if let Some(k) = frames.iter().position(|f| f.width() != width || f.height() != height) {
            return Err(PropagationError::DimensionMismatch(format!(
                "deformation frame {k} is {}x{}, expected {width}x{height}",
                frames[k].width(),
                frames[k].height()
            )));
        }
        Ok(Self {
            width,
            height,
            frames,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[FlowField] {
        &self.frames
    }
}

/// `forward[k]` is `F_{k->k+1}`; `backward[k-1]` is `F_{k->k-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSequence {
    width: usize,
    height: usize,
    forward: Vec<FlowField>,
    backward: Vec<FlowField>,
}

impl FlowSequence {
    pub fn new(forward: Vec<FlowField>, backward: Vec<FlowField>) -> Result<Self, PropagationError> {
        if forward.len() != backward.len() {
            return Err(PropagationError::DimensionMismatch(format!(
                "{} forward vs {} backward flows",
                forward.len(),
                backward.len()
            )));
        }
        let (width, height) = forward.first().map(|f| (f.width(), f.height())).unwrap_or((0, 0));
        for f in forward.iter().chain(&backward) {
            if f.width() != width || f.height() != height {
                return Err(PropagationError::DimensionMismatch(format!(
                    "flow {}x{} vs {width}x{height}",
                    f.width(),
                    f.height()
                )));
            }
        }
        Ok(Self {
            width,
            height,
            forward,
            backward,
        })
    }

    /// Sequence for a single frame (no flows).
    pub fn single_frame() -> Self {
        Self {
            width: 0,
            height: 0,
            forward: Vec::new(),
            backward: Vec::new(),
        }
    }

    pub fn frame_count(&self) -> usize {
        self.forward.len() + 1
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn forward(&self) -> &[FlowField] {
        &self.forward
    }

    pub fn backward(&self) -> &[FlowField] {
        &self.backward
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    pub seed_frame: usize,
    pub samples_per_edge: usize,
    pub max_oob_fraction: f64,
    /// Median reprojection residual bound, pixels.
    pub max_restore_error: f64,
    pub ransac: RansacParams,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            seed_frame: 0,
            samples_per_edge: 5,
            max_oob_fraction: 0.3,
            max_restore_error: 3.0,
            ransac: RansacParams::default(),
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self, frame_count: usize) -> Result<(), PropagationError> {
        let bad = |m: String| Err(PropagationError::InvalidConfig(m));
        if self.seed_frame >= frame_count {
            return bad(format!("seed_frame {} outside 0..{frame_count}", self.seed_frame));
        }
        if self.samples_per_edge == 0 {
            return bad("samples_per_edge must be >= 1".into());
        }
        if !(self.max_oob_fraction > 0.0 && self.max_oob_fraction <= 1.0) {
            return bad("max_oob_fraction must lie in (0, 1]".into());
        }
        if !(self.max_restore_error > 0.0) {
            return bad("max_restore_error must be > 0".into());
        }
        self.ransac
            .validate()
            .map_err(|e| PropagationError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provenance {
    Deformation,
    Flow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    OutOfBounds,
    NoConsensus,
    Residual,
    Occlusion,
    Degenerate,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::OutOfBounds => "out_of_bounds",
            DropReason::NoConsensus => "no_consensus",
            DropReason::Residual => "residual",
            DropReason::Occlusion => "occlusion",
            DropReason::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropEvent {
    pub frame: usize,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameGeometry {
    pub polygon: Polygon,
    pub chars: Option<Vec<Polygon>>,
    /// Source geometry to this frame.
    pub homography: Homography,
    /// Median distance between restored and moved samples, pixels.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedInstance {
    pub id: u32,
    pub transcription: String,
    pub seed_frame: usize,
    pub provenance: Provenance,
    /// Indexed by frame; `None` where absent.
    pub frames: Vec<Option<FrameGeometry>>,
    pub drops: Vec<DropEvent>,
}

impl PropagatedInstance {
    pub fn present_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.frames
            .iter()
            .enumerate()
            .filter_map(|(k, f)| f.as_ref().map(|_| k))
    }

    /// Whether presence is one contiguous run containing the seed frame.
    pub fn is_contiguous(&self) -> bool {
        let present: Vec<usize> = self.present_frames().collect();
        match (present.first(), present.last()) {
            (Some(&a), Some(&b)) => {
                b - a + 1 == present.len() && (a..=b).contains(&self.seed_frame)
            }
            _ => true,
        }
    }

    fn drop_frame(&mut self, frame: usize, reason: DropReason) {
        self.frames[frame] = None;
        self.drops.push(DropEvent { frame, reason });
    }
}

/// Moved boundary samples of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrack {
    /// Samples on the source polygon.
    pub source: Vec<Point2>,
    /// Same samples moved into each frame.
    pub frames: Vec<Vec<Point2>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Restored {
    pub homography: Homography,
    pub polygon: Polygon,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RestoreFailure {
    Estimation(EstimationError),
    Degenerate(GeometryError),
}

impl RestoreFailure {
    pub fn reason(&self) -> DropReason {
        match self {
            RestoreFailure::Estimation(EstimationError::NoConsensus { .. }) => DropReason::NoConsensus,
            RestoreFailure::Estimation(EstimationError::InsufficientPairs(_)) => DropReason::OutOfBounds,
            _ => DropReason::Degenerate,
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::INFINITY;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fit `source -> raw` robustly and map `polygon` (given in source
/// coordinates) through the fit.
pub fn restore_projective(
    source: &[Point2],
    raw: &[Point2],
    polygon: &Polygon,
    ransac: &RansacParams,
) -> Result<Restored, RestoreFailure> {
    let pairs: Vec<PointPair> = source
        .iter()
        .zip(raw)
        .filter(|(s, r)| s.is_finite() && r.is_finite())
        .map(|(&s, &r)| PointPair::new(s, r))
        .collect();
    let fit = ransac_homography(&pairs, ransac).map_err(RestoreFailure::Estimation)?;
    let h = fit.homography;
    let residual = median(
        pairs
            .iter()
            .map(|p| h.apply(p.src).map(|q| q.dist(p.dst)).unwrap_or(f64::INFINITY))
            .collect(),
    );
    let polygon = polygon.transform(&h).map_err(RestoreFailure::Degenerate)?;
    Ok(Restored {
        homography: h,
        polygon,
        residual,
    })
}

/// Move the boundary samples of every seed through each deformation frame.
pub fn reconstruct_via_deformation(
    seeds: &[Polygon],
    d: &DeformationField,
    samples_per_edge: usize,
) -> Result<Vec<RawTrack>, PropagationError> {
    let (w, h) = (d.width as f64, d.height as f64);
    seeds
        .iter()
        .enumerate()
        .map(|(i, poly)| {
            if let Some(v) = poly
                .vertices()
                .iter()
                .find(|v| v.x < 0.0 || v.y < 0.0 || v.x > w || v.y > h)
            {
                return Err(PropagationError::DimensionMismatch(format!(
                    "seed {i} vertex ({}, {}) outside the {}x{} deformation grid",
                    v.x, v.y, d.width, d.height
                )));
            }
            let source = poly.boundary_samples(samples_per_edge);
            let frames = d
                .frames
                .iter()
                .map(|f| {
                    source
                        .iter()
                        .map(|&p| {
                            let (u, v) = f.sample_clamped(p);
                            Point2::new(p.x + u, p.y + v)
                        })
                        .collect()
                })
                .collect();
            Ok(RawTrack { source, frames })
        })
        .collect()
}

/// Map seed character quads through every present frame's homography.
pub fn propagate_characters(
    inst: &PropagatedInstance,
    seed_chars: &[Polygon],
) -> Result<Vec<Option<Vec<Polygon>>>, PropagationError> {
    if seed_chars.is_empty() && !inst.transcription.is_empty() {
        return Err(PropagationError::MissingCharacters(inst.id));
    }
    Ok(inst
        .frames
        .iter()
        .map(|f| {
            f.as_ref().and_then(|g| {
                seed_chars
                    .iter()
                    .map(|c| c.transform(&g.homography).ok())
                    .collect::<Option<Vec<_>>>()
            })
        })
        .collect())
}

fn seed_chars(inst: &TextInstance) -> Option<Vec<Polygon>> {
    inst.chars
        .as_ref()
        .map(|cs| cs.iter().map(|c| c.polygon.clone()).collect())
}

fn attach_chars(out: &mut PropagatedInstance, chars: Option<Vec<Polygon>>) {
    if let Some(chars) = chars {
        if let Ok(per_frame) = propagate_characters(out, &chars) {
            for (f, c) in out.frames.iter_mut().zip(per_frame) {
                if let Some(g) = f {
                    g.chars = c;
                }
            }
        }
    }
}

fn oob_fraction(points: &[Point2], width: f64, height: f64) -> f64 {
    if points.is_empty() {
        return 1.0;
    }
    let out = points
        .iter()
        .filter(|p| !(p.x >= 0.0 && p.y >= 0.0 && p.x <= width && p.y <= height))
        .count();
    out as f64 / points.len() as f64
}

/// Deformation path: reconstruct, then restore every frame. Instances are
/// anchored at `cfg.seed_frame` for the contiguity rule.
pub fn propagate_deformation(
    seeds: &[TextInstance],
    d: &DeformationField,
    cfg: &PropagationConfig,
) -> Result<Vec<PropagatedInstance>, PropagationError> {
    cfg.validate(d.frame_count())?;
    let polys: Vec<Polygon> = seeds.iter().map(|s| s.polygon.clone()).collect();
    let raw = reconstruct_via_deformation(&polys, d, cfg.samples_per_edge)?;
    let (w, h) = (d.width as f64, d.height as f64);
    let mut out = Vec::with_capacity(seeds.len());
    for (seed, track) in seeds.iter().zip(raw) {
        let mut inst = PropagatedInstance {
            id: seed.id,
            transcription: seed.transcription.clone(),
            seed_frame: cfg.seed_frame,
            provenance: Provenance::Deformation,
            frames: vec![None; d.frame_count()],
            drops: Vec::new(),
        };
        for (k, moved) in track.frames.iter().enumerate() {
            if oob_fraction(moved, w, h) > cfg.max_oob_fraction {
                inst.drops.push(DropEvent {
                    frame: k,
                    reason: DropReason::OutOfBounds,
                });
                continue;
            }
            let params = RansacParams {
                seed: derive_seed(cfg.ransac.seed, &[u64::from(seed.id), k as u64]),
                ..cfg.ransac
            };
            match restore_projective(&track.source, moved, &seed.polygon, &params) {
                Ok(r) if r.residual <= cfg.max_restore_error => {
                    inst.frames[k] = Some(FrameGeometry {
                        polygon: r.polygon,
                        chars: None,
                        homography: r.homography,
                        residual: r.residual,
                    });
                }
                Ok(_) => inst.drops.push(DropEvent {
                    frame: k,
                    reason: DropReason::Residual,
                }),
                Err(e) => inst.drops.push(DropEvent {
                    frame: k,
                    reason: e.reason(),
                }),
            }
        }
        attach_chars(&mut inst, seed_chars(seed));
        out.push(inst);
    }
    Ok(out)
}

/// Flow path: accumulate flow one frame at a time from `cfg.seed_frame`,
/// forward then backward. After each step the samples are replaced by their
/// restored (projective) positions before the next step; a direction stops
/// at the first dropped frame.
pub fn propagate_flow(
    seeds: &[TextInstance],
    flows: &FlowSequence,
    cfg: &PropagationConfig,
) -> Result<Vec<PropagatedInstance>, PropagationError> {
    let n = flows.frame_count();
    cfg.validate(n)?;
    let t = cfg.seed_frame;
    let (w, h) = (flows.width as f64, flows.height as f64);
    let mut out = Vec::with_capacity(seeds.len());
    for seed in seeds {
        let source = seed.polygon.boundary_samples(cfg.samples_per_edge);
        let mut inst = PropagatedInstance {
            id: seed.id,
            transcription: seed.transcription.clone(),
            seed_frame: t,
            provenance: Provenance::Flow,
            frames: vec![None; n],
            drops: Vec::new(),
        };
        inst.frames[t] = Some(FrameGeometry {
            polygon: seed.polygon.clone(),
            chars: None,
            homography: Homography::identity(),
            residual: 0.0,
        });
        let forward = (t..n - 1).map(|k| (k + 1, &flows.forward[k]));
        let backward = (1..=t).rev().map(|k| (k - 1, &flows.backward[k - 1]));
        let directions: [Box<dyn Iterator<Item = (usize, &FlowField)>>; 2] = [Box::new(forward), Box::new(backward)];
        for steps in directions {
            let mut points = source.clone();
            for (dst, flow) in steps {
                let mut moved = Vec::with_capacity(points.len());
                let mut src = Vec::with_capacity(points.len());
                for (&s, &p) in source.iter().zip(&points) {
                    let inside = p.x >= 0.0 && p.y >= 0.0 && p.x <= w && p.y <= h;
                    if inside {
                        let (u, v) = flow.sample_clamped(p);
                        src.push(s);
                        moved.push(Point2::new(p.x + u, p.y + v));
                    }
                }
                let oob = 1.0 - moved.len() as f64 / points.len() as f64;
                let moved_oob = oob_fraction(&moved, w, h);
                if oob > cfg.max_oob_fraction || moved_oob > cfg.max_oob_fraction {
                    inst.drops.push(DropEvent {
                        frame: dst,
                        reason: DropReason::OutOfBounds,
                    });
                    break;
                }
                let params = RansacParams {
                    seed: derive_seed(cfg.ransac.seed, &[u64::from(seed.id), dst as u64]),
                    ..cfg.ransac
                };
                let r = match restore_projective(&src, &moved, &seed.polygon, &params) {
                    Ok(r) if r.residual <= cfg.max_restore_error => r,
                    Ok(_) => {
                        inst.drops.push(DropEvent {
                            frame: dst,
                            reason: DropReason::Residual,
                        });
                        break;
                    }
                    Err(e) => {
                        inst.drops.push(DropEvent {
                            frame: dst,
                            reason: e.reason(),
                        });
                        break;
                    }
                };
                let reseeded: Option<Vec<Point2>> = source.iter().map(|&s| r.homography.apply(s).ok()).collect();
                let Some(reseeded) = reseeded else {
                    inst.drops.push(DropEvent {
                        frame: dst,
                        reason: DropReason::Degenerate,
                    });
                    break;
                };
                points = reseeded;
                inst.frames[dst] = Some(FrameGeometry {
                    polygon: r.polygon,
                    chars: None,
                    homography: r.homography,
                    residual: r.residual,
                });
            }
        }
        attach_chars(&mut inst, seed_chars(seed));
        out.push(inst);
    }
    Ok(out)
}

/// Apply the drop rules to every present frame, then keep only the run of
/// frames around the seed frame. Instances absent at their seed frame are
/// removed.
pub fn filter_instances(
    candidates: Vec<PropagatedInstance>,
    cfg: &PropagationConfig,
    dims: (usize, usize),
    masks: Option<&[LabelGrid]>,
) -> Vec<PropagatedInstance> {
    let (w, h) = (dims.0 as f64, dims.1 as f64);
    let mut out = Vec::with_capacity(candidates.len());
    for mut inst in candidates {
        for k in 0..inst.frames.len() {
            let Some(g) = &inst.frames[k] else { continue };
            let samples = g.polygon.boundary_samples(cfg.samples_per_edge);
            let reason = if oob_fraction(&samples, w, h) > cfg.max_oob_fraction {
                Some(DropReason::OutOfBounds)
            } else if g.residual > cfg.max_restore_error {
                Some(DropReason::Residual)
            } else if let Some(m) = masks.and_then(|m| m.get(k)) {
                let pix: Vec<(usize, usize)> = g
                    .polygon
                    .interior_pixels()
                    .into_iter()
                    .filter(|&(i, j)| i < m.width() && j < m.height())
                    .collect();
                let covered = pix.iter().filter(|&&(i, j)| m.get(i, j) != 0).count();
                (!pix.is_empty() && covered as f64 / pix.len() as f64 > cfg.max_oob_fraction)
                    .then_some(DropReason::Occlusion)
            } else {
                None
            };
            if let Some(r) = reason {
                inst.drop_frame(k, r);
            }
        }
        let t = inst.seed_frame;
        if inst.frames.get(t).is_none_or(|f| f.is_none()) {
            continue;
        }
        let mut lo = t;
        while lo > 0 && inst.frames[lo - 1].is_some() {
            lo -= 1;
        }
        let mut hi = t;
        while hi + 1 < inst.frames.len() && inst.frames[hi + 1].is_some() {
            hi += 1;
        }
        for k in (0..lo).chain(hi + 1..inst.frames.len()) {
            inst.frames[k] = None;
        }
        inst.drops.sort_by_key(|d| (d.frame, d.reason));
        inst.drops.dedup();
        out.push(inst);
    }
    out
}

/// Drop events by reason, over all instances.
pub fn drop_counts(instances: &[PropagatedInstance]) -> BTreeMap<&'static str, usize> {
    let mut m = BTreeMap::new();
    for i in instances {
        for d in &i.drops {
            *m.entry(d.reason.as_str()).or_insert(0) += 1;
        }
    }
    m
}

/// Frame-indexed annotation with one record per frame (possibly empty).
pub fn to_annotation(video_id: &str, instances: &[PropagatedInstance], frame_count: usize) -> VideoAnnotation {
    let mut frames: Vec<FrameRecord> = (0..frame_count)
        .map(|k| FrameRecord {
            frame_index: k,
            instances: Vec::new(),
        })
        .collect();
    for inst in instances {
        for (k, g) in inst.frames.iter().enumerate().take(frame_count) {
            let Some(g) = g else { continue };
            let chars = g.chars.as_ref().map(|cs| {
                cs.iter()
                    .zip(inst.transcription.chars())
                    .map(|(p, c)| CharBox {
                        polygon: p.clone(),
                        label: c.to_string(),
                    })
                    .collect()
            });
            frames[k].instances.push(TextInstance {
                id: inst.id,
                polygon: g.polygon.clone(),
                transcription: inst.transcription.clone(),
                ignore: false,
                chars,
            });
        }
    }
    for f in &mut frames {
        f.instances.sort_by_key(|i| i.id);
    }
    VideoAnnotation {
        video_id: video_id.to_owned(),
        frames,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textplace::split_characters;

    fn quad(x: f64, y: f64, w: f64, h: f64) -> Polygon {
        Polygon::rect(x, y, x + w, y + h).unwrap()
    }

    fn seed(id: u32, p: Polygon, text: &str) -> TextInstance {
        let chars = split_characters(&p, text.chars().count())
            .into_iter()
            .zip(text.chars())
            .map(|(polygon, c)| CharBox {
                polygon,
                label: c.to_string(),
            })
            .collect();
        TextInstance {
            chars: Some(chars),
            ..TextInstance::new(id, p, text)
        }
    }

    fn constant(w: usize, h: usize, u: f64, v: f64) -> FlowField {
        FlowField::from_fn(w, h, |_, _| (u, v))
    }

    fn max_vertex_err(a: &Polygon, b: &Polygon) -> f64 {
        a.vertices()
            .iter()
            .zip(b.vertices())
            .map(|(p, q)| p.dist(*q))
            .fold(0.0, f64::max)
    }

    fn planted() -> Homography {
        Homography::from_rows([[1.02, 0.03, 4.0], [-0.02, 0.98, -3.0], [4e-5, -2e-5, 1.0]]).unwrap()
    }

    #[test]
    fn zero_deformation_is_identity() {
        let p = quad(10.0, 10.0, 30.0, 12.0);
        let d = DeformationField::new(vec![FlowField::zeros(64, 48); 3]).unwrap();
        let raw = reconstruct_via_deformation(&[p.clone()], &d, 5).unwrap();
        for f in &raw[0].frames {
            assert_eq!(f, &raw[0].source);
        }
    }

    #[test]
    fn constant_deformation_translates() {
        let p = quad(10.0, 10.0, 30.0, 12.0);
        let mut frames = vec![FlowField::zeros(64, 48); 4];
        frames[3] = constant(64, 48, 4.0, -1.0);
        let d = DeformationField::new(frames).unwrap();
        let raw = reconstruct_via_deformation(&[p], &d, 5).unwrap();
        for (s, m) in raw[0].source.iter().zip(&raw[0].frames[3]) {
            assert!((m.x - s.x - 4.0).abs() < 1e-12 && (m.y - s.y + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn seed_outside_deformation_grid() {
        let d = DeformationField::new(vec![FlowField::zeros(20, 20)]).unwrap();
        assert!(matches!(
            reconstruct_via_deformation(&[quad(10.0, 10.0, 30.0, 5.0)], &d, 5),
            Err(PropagationError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn restore_exact_projective() {
        let p = quad(50.0, 60.0, 80.0, 20.0);
        let src = p.boundary_samples(5);
        let h = planted();
        let raw: Vec<Point2> = src.iter().map(|&s| h.apply(s).unwrap()).collect();
        let r = restore_projective(&src, &raw, &p, &RansacParams::default()).unwrap();
        assert!(max_vertex_err(&r.polygon, &p.transform(&h).unwrap()) < 1e-6);
    }

    #[test]
    fn restore_with_noise() {
        use rand_distr::{Distribution, Normal};
        let p = quad(50.0, 60.0, 120.0, 30.0);
        let src = p.boundary_samples(5);
        let h = planted();
        let truth = p.transform(&h).unwrap();
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut total = 0.0;
        let trials = 400;
        for t in 0..trials {
            let mut rng = crate::rng::rng_for(9, &[t]);
            let raw: Vec<Point2> = src
                .iter()
                .map(|&s| {
                    let q = h.apply(s).unwrap();
                    Point2::new(q.x + noise.sample(&mut rng), q.y + noise.sample(&mut rng))
                })
                .collect();
            let r = restore_projective(&src, &raw, &p, &RansacParams { seed: t, ..Default::default() }).unwrap();
            total += r
                .polygon
                .vertices()
                .iter()
                .zip(truth.vertices())
                .map(|(a, b)| a.dist(*b))
                .sum::<f64>()
                / 4.0;
        }
        assert!(total / (trials as f64) < 1.0, "{}", total / trials as f64);
    }

    #[test]
    fn restore_mostly_garbage_fails() {
        let p = quad(50.0, 60.0, 80.0, 20.0);
        let src = p.boundary_samples(5);
        let raw: Vec<Point2> = src
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                if i % 5 < 3 {
                    Point2::new((i * 37 % 101) as f64 * 6.0, (i * 53 % 97) as f64 * 5.0)
                } else {
                    s
                }
            })
            .collect();
        let e = restore_projective(&src, &raw, &p, &RansacParams::default()).unwrap_err();
        assert_eq!(e.reason(), DropReason::NoConsensus);
    }

    #[test]
    fn zero_flow_keeps_geometry() {
        let p = quad(20.0, 20.0, 40.0, 10.0);
        let flows = FlowSequence::new(vec![FlowField::zeros(100, 80); 4], vec![FlowField::zeros(100, 80); 4]).unwrap();
        let cfg = PropagationConfig {
            seed_frame: 2,
            ..Default::default()
        };
        let out = propagate_flow(&[seed(1, p.clone(), "ab")], &flows, &cfg).unwrap();
        for f in &out[0].frames {
            let g = f.as_ref().unwrap();
            assert!(max_vertex_err(&g.polygon, &p) < 1e-9);
        }
    }

    #[test]
    fn constant_flow_accumulates() {
        let p = quad(20.0, 40.0, 30.0, 10.0);
        let flows = FlowSequence::new(
            vec![constant(120, 100, 3.0, -2.0); 5],
            vec![constant(120, 100, -3.0, 2.0); 5],
        )
        .unwrap();
        let out = propagate_flow(&[seed(1, p.clone(), "x")], &flows, &PropagationConfig::default()).unwrap();
        for k in 0..=5 {
            let g = out[0].frames[k].as_ref().unwrap();
            let want = p.translate(3.0 * k as f64, -2.0 * k as f64);
            assert!(max_vertex_err(&g.polygon, &want) < 1e-6, "frame {k}");
            let c = &g.chars.as_ref().unwrap()[0];
            assert!(max_vertex_err(c, &want) < 1e-6);
        }
    }

    #[test]
    fn forward_then_backward_round_trip() {
        let p = quad(30.0, 30.0, 40.0, 12.0);
        let n = 8;
        let flows = FlowSequence::new(
            vec![constant(160, 120, 2.5, 1.25); n - 1],
            vec![constant(160, 120, -2.5, -1.25); n - 1],
        )
        .unwrap();
        let fwd = propagate_flow(&[seed(1, p.clone(), "a")], &flows, &PropagationConfig::default()).unwrap();
        let last = fwd[0].frames[n - 1].as_ref().unwrap().polygon.clone();
        let cfg = PropagationConfig {
            seed_frame: n - 1,
            ..Default::default()
        };
        let back = propagate_flow(&[seed(1, last, "a")], &flows, &cfg).unwrap();
        let first = &back[0].frames[0].as_ref().unwrap().polygon;
        assert!(max_vertex_err(first, &p) < 1e-3);
    }

    #[test]
    fn exit_trajectory_trimmed() {
        let p = quad(5.0, 20.0, 20.0, 10.0);
        let n = 10;
        let flows = FlowSequence::new(vec![constant(60, 60, 8.0, 0.0); n - 1], vec![constant(60, 60, -8.0, 0.0); n - 1]).unwrap();
        let cfg = PropagationConfig::default();
        let out = propagate_flow(&[seed(1, p, "a")], &flows, &cfg).unwrap();
        let out = filter_instances(out, &cfg, (60, 60), None);
        let present: Vec<usize> = out[0].present_frames().collect();
        let k = present.len();
        assert!(k >= 1 && k < n);
        assert_eq!(present, (0..k).collect::<Vec<_>>());
        assert!(out[0].drops.iter().any(|d| d.reason == DropReason::OutOfBounds));
    }

    #[test]
    fn filter_exit_all_samples_oob() {
        // fabricated presence with the quad fully outside from frame 3 on
        let p = quad(10.0, 10.0, 20.0, 10.0);
        let frames = (0..6)
            .map(|k| {
                let dx = if k >= 3 { 500.0 } else { 0.0 };
                Some(FrameGeometry {
                    polygon: p.translate(dx, 0.0),
                    chars: None,
                    homography: Homography::translation(dx, 0.0),
                    residual: 0.0,
                })
            })
            .collect();
        let inst = PropagatedInstance {
            id: 1,
            transcription: "a".into(),
            seed_frame: 0,
            provenance: Provenance::Flow,
            frames,
            drops: vec![],
        };
        let cfg = PropagationConfig::default();
        let untouched = filter_instances(vec![inst.clone()], &cfg, (1000, 100), None);
        assert_eq!(untouched[0].frames, inst.frames);
        let out = filter_instances(vec![inst], &cfg, (100, 100), None);
        assert_eq!(out[0].present_frames().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn occlusion_ends_presence() {
        let p = quad(10.0, 10.0, 20.0, 10.0);
        let n = 7;
        let flows = FlowSequence::new(vec![FlowField::zeros(50, 40); n - 1], vec![FlowField::zeros(50, 40); n - 1]).unwrap();
        let cfg = PropagationConfig {
            seed_frame: 1,
            ..Default::default()
        };
        let out = propagate_flow(&[seed(1, p, "a")], &flows, &cfg).unwrap();
        let mut masks = vec![LabelGrid::filled(50, 40, 0); n];
        masks[4] = LabelGrid::filled(50, 40, 1);
        let out = filter_instances(out, &cfg, (50, 40), Some(&masks));
        assert_eq!(out[0].present_frames().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(out[0].drops, vec![DropEvent { frame: 4, reason: DropReason::Occlusion }]);
        assert!(out[0].is_contiguous());
    }

    #[test]
    fn occluded_seed_removes_instance() {
        let p = quad(10.0, 10.0, 20.0, 10.0);
        let flows = FlowSequence::new(vec![FlowField::zeros(50, 40); 2], vec![FlowField::zeros(50, 40); 2]).unwrap();
        let cfg = PropagationConfig::default();
        let out = propagate_flow(&[seed(1, p, "a")], &flows, &cfg).unwrap();
        let masks = vec![LabelGrid::filled(50, 40, 1); 3];
        assert!(filter_instances(out, &cfg, (50, 40), Some(&masks)).is_empty());
    }

    #[test]
    fn characters_follow_parent() {
        let p = quad(40.0, 40.0, 60.0, 20.0);
        let h = planted();
        let chars = split_characters(&p, 3);
        let inst = PropagatedInstance {
            id: 2,
            transcription: "abc".into(),
            seed_frame: 0,
            provenance: Provenance::Deformation,
            frames: vec![
                Some(FrameGeometry {
                    polygon: p.clone(),
                    chars: None,
                    homography: Homography::identity(),
                    residual: 0.0,
                }),
                Some(FrameGeometry {
                    polygon: p.transform(&h).unwrap(),
                    chars: None,
                    homography: h,
                    residual: 0.0,
                }),
            ],
            drops: vec![],
        };
        let out = propagate_characters(&inst, &chars).unwrap();
        for (a, b) in out[0].as_ref().unwrap().iter().zip(&chars) {
            assert_eq!(a, b);
        }
        for (a, b) in out[1].as_ref().unwrap().iter().zip(&chars) {
            assert!(max_vertex_err(a, &b.transform(&h).unwrap()) < 1e-6);
        }
        // subdividing the mapped parent matches mapping the subdivision
        // only up to projective foreshortening; the affine part commutes
        let affine = Homography::from_rows([[1.1, 0.2, 3.0], [-0.1, 0.9, 1.0], [0.0, 0.0, 1.0]]).unwrap();
        let mapped_then_split = split_characters(&p.transform(&affine).unwrap(), 3);
        for (a, b) in mapped_then_split.iter().zip(&chars) {
            assert!(max_vertex_err(a, &b.transform(&affine).unwrap()) < 1e-6);
        }
        let empty = PropagatedInstance { transcription: "abc".into(), ..inst };
        assert!(propagate_characters(&empty, &[]).is_err());
    }

    #[test]
    fn deformation_pipeline_planted() {
        let (w, h) = (200, 150);
        let hm = planted();
        let field = FlowField::from_fn(w, h, |x, y| {
            let q = hm.apply(Point2::new(x as f64, y as f64)).unwrap();
            (q.x - x as f64, q.y - y as f64)
        });
        let d = DeformationField::new(vec![FlowField::zeros(w, h), field]).unwrap();
        let p = quad(40.0, 50.0, 60.0, 20.0);
        let out = propagate_deformation(&[seed(1, p.clone(), "ab")], &d, &PropagationConfig::default()).unwrap();
        let g = out[0].frames[1].as_ref().unwrap();
        assert!(max_vertex_err(&g.polygon, &p.transform(&hm).unwrap()) < 0.5);
        assert_eq!(g.chars.as_ref().unwrap().len(), 2);
    }

    #[test]
    fn mismatched_flows_rejected() {
        assert!(FlowSequence::new(vec![FlowField::zeros(4, 4)], vec![]).is_err());
        assert!(FlowSequence::new(vec![FlowField::zeros(4, 4)], vec![FlowField::zeros(5, 4)]).is_err());
        let flows = FlowSequence::new(vec![FlowField::zeros(4, 4)], vec![FlowField::zeros(4, 4)]).unwrap();
        let cfg = PropagationConfig {
            seed_frame: 5,
            ..Default::default()
        };
        assert!(propagate_flow(&[], &flows, &cfg).is_err());
    }

    #[test]
    fn annotation_export() {
        let p = quad(10.0, 10.0, 20.0, 10.0);
        let flows = FlowSequence::new(vec![FlowField::zeros(50, 40); 2], vec![FlowField::zeros(50, 40); 2]).unwrap();
        let out = propagate_flow(&[seed(3, p, "ab")], &flows, &PropagationConfig::default()).unwrap();
        let a = to_annotation("v", &out, 3);
        assert_eq!(a.frames.len(), 3);
        assert!(a.frames.iter().all(|f| f.instances.len() == 1 && f.instances[0].id == 3));
        assert!(a.validate().is_ok());
    }
}
