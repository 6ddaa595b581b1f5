//! Rule-based tracking by detection.
//!
//! Each frame, active tracks are matched to detections with the Hungarian
//! solver on a cost mixing polygon overlap and transcription edit distance.
//! Unmatched detections start new tracks, unmatched tracks age out after
//! `patience` consecutive misses, and every track keeps a per-position
//! majority transcription over its observations.

use std::cmp::Ordering;

use crate::assign::{hungarian, CostMatrix, MatchWeights};
use crate::dataio::{FrameRecord, TextInstance, VideoAnnotation};
use crate::geometry::{polygon_iou, AABox, Polygon};

/// Stand-in for an infinite (gated) cost; the solver needs finite entries.
const GATED: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssocConfig {
    pub iou_gate: f64,
    pub text_weight: f64,
    pub cost_threshold: f64,
    pub patience: usize,
    /// Carried for configuration completeness; association uses the
    /// overlap/text cost above.
    pub weights: MatchWeights,
}

impl Default for AssocConfig {
    fn default() -> Self {
        Self {
            iou_gate: 0.3,
            text_weight: 0.5,
            cost_threshold: 0.7,
            patience: 5,
            weights: MatchWeights::default(),
        }
    }
}

impl AssocConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("iou_gate", self.iou_gate),
            ("text_weight", self.text_weight),
            ("cost_threshold", self.cost_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u32,
    pub polygon: Polygon,
    pub bbox: AABox,
    /// Consensus over `observations`.
    pub transcription: String,
    pub observations: Vec<String>,
    pub age: usize,
    pub miss_count: usize,
}

impl Track {
    fn observe(&mut self, det: &TextInstance) {
        self.polygon = det.polygon.clone();
        self.bbox = det.polygon.aabb();
        self.observations.push(det.transcription.clone());
        self.transcription = consensus(&self.observations);
        self.miss_count = 0;
    }
}

/// Levenshtein distance divided by the longer length; 0 for two empty
/// strings.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()] as f64 / longest as f64
}

/// Majority length, then per-position majority character among the
/// observations of that length. Ties go to the earliest observation.
pub fn consensus(observations: &[String]) -> String {
    let obs: Vec<Vec<char>> = observations.iter().map(|s| s.chars().collect()).collect();
    let Some(len) = majority(obs.iter().map(|o| o.len())) else {
        return String::new();
    };
    let same: Vec<&Vec<char>> = obs.iter().filter(|o| o.len() == len).collect();
    (0..len)
        .map(|i| majority(same.iter().map(|o| o[i])).expect("nonempty"))
        .collect()
}

/// Most frequent item; ties resolved by first occurrence.
fn majority<T: PartialEq + Copy>(items: impl Iterator<Item = T>) -> Option<T> {
    let mut counts: Vec<(T, usize)> = Vec::new();
    for it in items {
        match counts.iter_mut().find(|(v, _)| *v == it) {
            Some((_, c)) => *c += 1,
            None => counts.push((it, 1)),
        }
    }
    let mut best: Option<(T, usize)> = None;
    for (v, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((v, c));
        }
    }
    best.map(|(v, _)| v)
}

/// Association cost between a track and a detection; `None` when gated.
pub fn association_cost(track: &Track, det: &TextInstance, cfg: &AssocConfig) -> Option<f64> {
    let iou = polygon_iou(&track.polygon, &det.polygon).unwrap_or(0.0);
    if iou < cfg.iou_gate {
        return None;
    }
    let text = normalized_edit_distance(&track.transcription, &det.transcription);
    Some((1.0 - iou) * (1.0 - cfg.text_weight) + text * cfg.text_weight)
}

fn canonical_cmp(a: &TextInstance, b: &TextInstance) -> Ordering {
    let va = a.polygon.vertices();
    let vb = b.polygon.vertices();
    for (p, q) in va.iter().zip(vb) {
        let o = p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y));
        if o != Ordering::Equal {
            return o;
        }
    }
    va.len()
        .cmp(&vb.len())
        .then_with(|| a.transcription.cmp(&b.transcription))
        .then(a.ignore.cmp(&b.ignore))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    cfg: AssocConfig,
    tracks: Vec<Track>,
    next_id: u32,
}

impl Tracker {
    pub fn new(cfg: AssocConfig) -> Self {
        Self {
            cfg,
            tracks: Vec::new(),
            next_id: 1,
        }
    }

    /// Active tracks in creation order.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Associate one frame of detections; returns the id given to each
    /// detection, in input order.
    pub fn step(&mut self, detections: &[TextInstance]) -> Vec<u32> {
        let mut order: Vec<usize> = (0..detections.len()).collect();
        order.sort_by(|&a, &b| canonical_cmp(&detections[a], &detections[b]));
        let dets: Vec<&TextInstance> = order.iter().map(|&i| &detections[i]).collect();

        let m = CostMatrix::from_fn(self.tracks.len(), dets.len(), |r, c| {
            association_cost(&self.tracks[r], dets[c], &self.cfg).unwrap_or(GATED)
        });
        let mut det_track: Vec<Option<usize>> = vec![None; dets.len()];
        if let Ok(a) = hungarian(&m) {
            for (r, c) in a.pairs() {
                if m.get(r, c) <= self.cfg.cost_threshold {
                    det_track[c] = Some(r);
                }
            }
        }

        let mut matched = vec![false; self.tracks.len()];
        let mut ids = vec![0; dets.len()];
        for (c, t) in det_track.iter().enumerate() {
            if let Some(r) = *t {
                matched[r] = true;
                self.tracks[r].observe(dets[c]);
                ids[c] = self.tracks[r].id;
            }
        }
        for (r, t) in self.tracks.iter_mut().enumerate() {
            t.age += 1;
            if !matched[r] {
                t.miss_count += 1;
            }
        }
        let patience = self.cfg.patience;
        self.tracks.retain(|t| t.miss_count <= patience);
        for (c, t) in det_track.iter().enumerate() {
            if t.is_none() {
                let id = self.next_id;
                self.next_id += 1;
                let det = dets[c];
                self.tracks.push(Track {
                    id,
                    polygon: det.polygon.clone(),
                    bbox: det.polygon.aabb(),
                    transcription: det.transcription.clone(),
                    observations: vec![det.transcription.clone()],
                    age: 1,
                    miss_count: 0,
                });
                ids[c] = id;
            }
        }

        let mut out = vec![0; detections.len()];
        for (c, &i) in order.iter().enumerate() {
            out[i] = ids[c];
        }
        out
    }

    pub fn transcription_of(&self, id: u32) -> Option<&str> {
        self.tracks
            .iter()
            .find(|t| t.id == id)
            .map(|t| t.transcription.as_str())
    }
}

/// Assign persistent ids to per-frame detections (input ids are ignored).
/// Missing frame indices between records count as empty frames. Output
/// transcriptions are the track consensus at that frame.
pub fn run_sequence(detections: &VideoAnnotation, cfg: &AssocConfig) -> VideoAnnotation {
    let mut tracker = Tracker::new(*cfg);
    let mut out = VideoAnnotation::new(detections.video_id.clone());
    let mut prev: Option<usize> = None;
    for rec in &detections.frames {
        if let Some(p) = prev {
            for _ in p + 1..rec.frame_index {
                tracker.step(&[]);
            }
        }
        prev = Some(rec.frame_index);
        let ids = tracker.step(&rec.instances);
        let mut instances: Vec<TextInstance> = rec
            .instances
            .iter()
            .zip(&ids)
            .map(|(d, &id)| TextInstance {
                id,
                transcription: tracker
                    .transcription_of(id)
                    .map(str::to_owned)
                    .unwrap_or_else(|| d.transcription.clone()),
                ..d.clone()
            })
            .collect();
        instances.sort_by_key(|i| i.id);
        out.frames.push(FrameRecord {
            frame_index: rec.frame_index,
            instances,
        });
    }
    out
}
