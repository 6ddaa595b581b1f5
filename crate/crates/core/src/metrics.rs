//! Video text spotting evaluation.
//!
//! * detection and end-to-end precision / recall / F-measure with
//!   don't-care regions;
//! * CLEAR-MOT (MOTA, MOTP, FP, FN, ID switches);
//! * IDF1 from a global trajectory matching;
//! * mostly tracked / mostly lost counts.
//!
//! All percentages are in `[0, 100]` except MOTA, which can be negative.
//! Ratios with an empty denominator are reported as 100 and flagged.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::assign::{hungarian, CostMatrix};
use crate::dataio::{TextInstance, VideoAnnotation};
use crate::geometry::{iou_aabb, polygon_iou};

/// Cost of an inadmissible pair; larger than any sum of admissible costs
/// for the matrix sizes used here.
const BIG: f64 = 1e6;

pub const MOSTLY_TRACKED: f64 = 0.8;
pub const MOSTLY_LOST: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction frame {0} has no ground-truth frame")]
    UnknownFrame(usize),
    #[error("invalid eval config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapKind {
    Aabb,
    Polygon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub overlap_kind: OverlapKind,
    pub case_sensitive: bool,
    pub ignore_token: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            overlap_kind: OverlapKind::Polygon,
            case_sensitive: false,
            ignore_token: "###".into(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(MetricsError::InvalidConfig(format!(
                "iou_threshold must lie in (0, 1), got {}",
                self.iou_threshold
            )));
        }
        Ok(())
    }

    fn is_ignored(&self, i: &TextInstance) -> bool {
        i.ignore || i.transcription == self.ignore_token
    }

    fn text_eq(&self, a: &str, b: &str) -> bool {
        if self.case_sensitive {
            a == b
        } else {
            a.to_lowercase() == b.to_lowercase()
        }
    }
}

pub fn overlap(a: &TextInstance, b: &TextInstance, kind: OverlapKind) -> f64 {
    match kind {
        OverlapKind::Aabb => iou_aabb(&a.polygon.aabb(), &b.polygon.aabb()).unwrap_or(0.0),
        OverlapKind::Polygon => polygon_iou(&a.polygon, &b.polygon).unwrap_or(0.0),
    }
}

/// Maximum-cardinality, then maximum-overlap, one-to-one matching among
/// admissible pairs. Returns `(row, col, iou)` triples.
fn match_pairs(rows: usize, cols: usize, mut admissible: impl FnMut(usize, usize) -> Option<f64>) -> Vec<(usize, usize, f64)> {
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let mut iou = vec![None; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            iou[r * cols + c] = admissible(r, c);
        }
    }
    let m = CostMatrix::from_fn(rows, cols, |r, c| iou[r * cols + c].map_or(BIG, |v| 1.0 - v));
    let a = hungarian(&m).expect("finite costs");
    a.pairs()
        .filter_map(|(r, c)| iou[r * cols + c].map(|v| (r, c, v)))
        .collect()
}

/// Precision / recall counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct PrfCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl PrfCounts {
    pub fn add(&mut self, o: &PrfCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    pub fn precision(&self) -> (f64, bool) {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> (f64, bool) {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn prf(&self) -> Prf {
        let (p, pv) = self.precision();
        let (r, rv) = self.recall();
        Prf {
            precision: p,
            recall: r,
            fmeasure: harmonic(p, r),
            vacuous_precision: pv,
            vacuous_recall: rv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub fmeasure: f64,
    pub vacuous_precision: bool,
    pub vacuous_recall: bool,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (100.0, true)
    } else {
        (100.0 * num as f64 / den as f64, false)
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

struct FrameMatch {
    counts: PrfCounts,
    /// Unmatched predictions lying on don't-care GT.
    excluded: Vec<bool>,
}

fn detection_frame(preds: &[TextInstance], gts: &[TextInstance], cfg: &EvalConfig) -> FrameMatch {
    let care: Vec<&TextInstance> = gts.iter().filter(|g| !cfg.is_ignored(g)).collect();
    let ignored: Vec<&TextInstance> = gts.iter().filter(|g| cfg.is_ignored(g)).collect();
    let thr = cfg.iou_threshold;
    let matched = match_pairs(preds.len(), care.len(), |p, g| {
        let v = overlap(&preds[p], care[g], cfg.overlap_kind);
        (v >= thr).then_some(v)
    });
    let mut used = vec![false; preds.len()];
    for &(p, _, _) in &matched {
        used[p] = true;
    }
    let excluded: Vec<bool> = (0..preds.len())
        .map(|p| !used[p] && ignored.iter().any(|g| overlap(&preds[p], g, cfg.overlap_kind) >= thr))
        .collect();
    let n_excluded = excluded.iter().filter(|&&e| e).count();
    FrameMatch {
        counts: PrfCounts {
            tp: matched.len(),
            fp: preds.len() - matched.len() - n_excluded,
            fn_: care.len() - matched.len(),
        },
        excluded,
    }
}

fn e2e_frame(preds: &[TextInstance], gts: &[TextInstance], cfg: &EvalConfig) -> PrfCounts {
    let det = detection_frame(preds, gts, cfg);
    let care: Vec<&TextInstance> = gts.iter().filter(|g| !cfg.is_ignored(g)).collect();
    let live: Vec<usize> = (0..preds.len()).filter(|&p| !det.excluded[p]).collect();
    let thr = cfg.iou_threshold;
    let matched = match_pairs(live.len(), care.len(), |p, g| {
        let pred = &preds[live[p]];
        let v = overlap(pred, care[g], cfg.overlap_kind);
        (v >= thr && cfg.text_eq(&pred.transcription, &care[g].transcription)).then_some(v)
    });
    PrfCounts {
        tp: matched.len(),
        fp: live.len() - matched.len(),
        fn_: care.len() - matched.len(),
    }
}

/// Single-frame detection counts.
pub fn detection_counts(preds: &[TextInstance], gts: &[TextInstance], cfg: &EvalConfig) -> PrfCounts {
    detection_frame(preds, gts, cfg).counts
}

/// Single-frame end-to-end counts. Predictions set aside by the detection
/// protocol are set aside here too, so end-to-end never exceeds detection.
pub fn e2e_counts(preds: &[TextInstance], gts: &[TextInstance], cfg: &EvalConfig) -> PrfCounts {
    e2e_frame(preds, gts, cfg)
}

pub fn detection_prf(preds: &[TextInstance], gts: &[TextInstance], cfg: &EvalConfig) -> Prf {
    detection_counts(preds, gts, cfg).prf()
}

pub fn e2e_prf(preds: &[TextInstance], gts: &[TextInstance], cfg: &EvalConfig) -> Prf {
    e2e_counts(preds, gts, cfg).prf()
}

/// Pair up frames; prediction frames must exist in the ground truth.
fn aligned<'a>(
    gt: &'a VideoAnnotation,
    pred: &'a VideoAnnotation,
) -> Result<Vec<(&'a [TextInstance], &'a [TextInstance])>, MetricsError> {
    let gt_frames: BTreeSet<usize> = gt.frames.iter().map(|f| f.frame_index).collect();
    if let Some(f) = pred.frames.iter().find(|f| !gt_frames.contains(&f.frame_index)) {
        return Err(MetricsError::UnknownFrame(f.frame_index));
    }
    Ok(gt
        .frames
        .iter()
        .map(|f| (f.instances.as_slice(), pred.instances_at(f.frame_index)))
        .collect())
}

pub fn detection_counts_video(gt: &VideoAnnotation, pred: &VideoAnnotation, cfg: &EvalConfig) -> Result<PrfCounts, MetricsError> {
    let mut c = PrfCounts::default();
    for (g, p) in aligned(gt, pred)? {
        c.add(&detection_counts(p, g, cfg));
    }
    Ok(c)
}

pub fn e2e_counts_video(gt: &VideoAnnotation, pred: &VideoAnnotation, cfg: &EvalConfig) -> Result<PrfCounts, MetricsError> {
    let mut c = PrfCounts::default();
    for (g, p) in aligned(gt, pred)? {
        c.add(&e2e_counts(p, g, cfg));
    }
    Ok(c)
}

/// Additive counters; ratios are recomputed after merging.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MotCounts {
    pub gt: usize,
    pub pred: usize,
    pub matches: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub idsw: usize,
    pub iou_sum: f64,
    pub idtp: usize,
    pub id_gt: usize,
    pub id_pred: usize,
    pub tracks: usize,
    pub mostly_tracked: usize,
    pub mostly_lost: usize,
}

impl MotCounts {
    pub fn add(&mut self, o: &MotCounts) {
        self.gt += o.gt;
        self.pred += o.pred;
        self.matches += o.matches;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.idsw += o.idsw;
        self.iou_sum += o.iou_sum;
        self.idtp += o.idtp;
        self.id_gt += o.id_gt;
        self.id_pred += o.id_pred;
        self.tracks += o.tracks;
        self.mostly_tracked += o.mostly_tracked;
        self.mostly_lost += o.mostly_lost;
    }

    /// `(MOTA, vacuous)`; the denominator is `max(gt, 1)`.
    pub fn mota(&self) -> (f64, bool) {
        let errors = (self.fn_ + self.fp + self.idsw) as f64;
        (100.0 * (1.0 - errors / self.gt.max(1) as f64), self.gt == 0)
    }

    pub fn motp(&self) -> (f64, bool) {
        if self.matches == 0 {
            let vacuous = self.gt == 0 && self.pred == 0;
            (if vacuous { 100.0 } else { 0.0 }, vacuous)
        } else {
            (100.0 * self.iou_sum / self.matches as f64, false)
        }
    }

    pub fn idf1(&self) -> (f64, bool) {
        let den = self.id_gt + self.id_pred;
        if den == 0 {
            (100.0, true)
        } else {
            (100.0 * 2.0 * self.idtp as f64 / den as f64, false)
        }
    }
}

/// CLEAR-MOT, IDF1 and MT/ML for one video.
pub fn mot_counts(gt: &VideoAnnotation, pred: &VideoAnnotation, cfg: &EvalConfig) -> Result<MotCounts, MetricsError> {
    let frames = aligned(gt, pred)?;
    let thr = cfg.iou_threshold;
    let mut c = MotCounts::default();
    let mut last: BTreeMap<u32, u32> = BTreeMap::new();
    // per GT id: (frames present, frames matched)
    let mut coverage: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    // trajectories for IDF1: id -> frame -> instance
    let mut gt_tracks: BTreeMap<u32, BTreeMap<usize, &TextInstance>> = BTreeMap::new();
    let mut pred_tracks: BTreeMap<u32, BTreeMap<usize, &TextInstance>> = BTreeMap::new();

    for (k, (g, p)) in frames.iter().enumerate() {
        let care: Vec<&TextInstance> = g.iter().filter(|x| !cfg.is_ignored(x)).collect();
        let ignored: Vec<&TextInstance> = g.iter().filter(|x| cfg.is_ignored(x)).collect();
        let preds: Vec<&TextInstance> = p.iter().collect();
        c.gt += care.len();
        for gi in &care {
            coverage.entry(gi.id).or_default().0 += 1;
            gt_tracks.entry(gi.id).or_default().insert(k, gi);
        }

        let mut gt_match: Vec<Option<(usize, f64)>> = vec![None; care.len()];
        let mut taken = vec![false; preds.len()];
        let mut order: Vec<usize> = (0..care.len()).collect();
        order.sort_by_key(|&i| care[i].id);
        for gi in order {
            let Some(&pid) = last.get(&care[gi].id) else { continue };
            if let Some(pj) = (0..preds.len()).find(|&j| !taken[j] && preds[j].id == pid) {
                let v = overlap(care[gi], preds[pj], cfg.overlap_kind);
                if v >= thr {
                    taken[pj] = true;
                    gt_match[gi] = Some((pj, v));
                }
            }
        }
        let rest_g: Vec<usize> = (0..care.len()).filter(|&i| gt_match[i].is_none()).collect();
        let rest_p: Vec<usize> = (0..preds.len()).filter(|&j| !taken[j]).collect();
        for (a, b, v) in match_pairs(rest_g.len(), rest_p.len(), |a, b| {
            let v = overlap(care[rest_g[a]], preds[rest_p[b]], cfg.overlap_kind);
            (v >= thr).then_some(v)
        }) {
            gt_match[rest_g[a]] = Some((rest_p[b], v));
        }

        let mut matched = 0;
        for (gi, m) in gt_match.iter().enumerate() {
            let Some((pj, v)) = *m else { continue };
            matched += 1;
            c.iou_sum += v;
            let gid = care[gi].id;
            let pid = preds[pj].id;
            if last.get(&gid).is_some_and(|&prev| prev != pid) {
                c.idsw += 1;
            }
            last.insert(gid, pid);
            coverage.entry(gid).or_default().1 += 1;
        }
        let mut used = vec![false; preds.len()];
        for &(pj, _) in gt_match.iter().flatten() {
            used[pj] = true;
        }
        // unmatched predictions on don't-care regions are neither FP nor tracks
        let mut excluded = 0;
        for (j, pi) in preds.iter().enumerate() {
            if !used[j] && ignored.iter().any(|g| overlap(pi, g, cfg.overlap_kind) >= thr) {
                excluded += 1;
            } else {
                pred_tracks.entry(pi.id).or_default().insert(k, pi);
            }
        }
        c.pred += preds.len() - excluded;
        c.matches += matched;
        c.fn_ += care.len() - matched;
        c.fp += preds.len() - excluded - matched;
    }

    for &(len, hit) in coverage.values() {
        c.tracks += 1;
        let cov = hit as f64 / len as f64;
        if cov >= MOSTLY_TRACKED {
            c.mostly_tracked += 1;
        }
        if cov <= MOSTLY_LOST {
            c.mostly_lost += 1;
        }
    }

    c.id_gt = gt_tracks.values().map(|t| t.len()).sum();
    c.id_pred = pred_tracks.values().map(|t| t.len()).sum();
    c.idtp = global_id_matches(&gt_tracks, &pred_tracks, cfg);
    Ok(c)
}

type Trajectories<'a> = BTreeMap<u32, BTreeMap<usize, &'a TextInstance>>;

/// IDTP of the optimal one-to-one trajectory pairing.
fn global_id_matches(gt: &Trajectories, pred: &Trajectories, cfg: &EvalConfig) -> usize {
    let g: Vec<&BTreeMap<usize, &TextInstance>> = gt.values().collect();
    let h: Vec<&BTreeMap<usize, &TextInstance>> = pred.values().collect();
    let (ng, nh) = (g.len(), h.len());
    if ng == 0 || nh == 0 {
        return 0;
    }
    let mut overlap_frames = vec![0usize; ng * nh];
    for (i, gt_t) in g.iter().enumerate() {
        for (j, pr_t) in h.iter().enumerate() {
            overlap_frames[i * nh + j] = gt_t
                .iter()
                .filter(|(k, a)| {
                    pr_t.get(k)
                        .is_some_and(|b| overlap(a, b, cfg.overlap_kind) >= cfg.iou_threshold)
                })
                .count();
        }
    }
    // rows: GT then dummy-per-prediction; cols: prediction then dummy-per-GT
    let n = ng + nh;
    let m = CostMatrix::from_fn(n, n, |r, c| match (r < ng, c < nh) {
        (true, true) => {
            let o = overlap_frames[r * nh + c];
            if o == 0 {
                BIG
            } else {
                (g[r].len() + h[c].len() - 2 * o) as f64
            }
        }
        (true, false) => {
            if c - nh == r {
                g[r].len() as f64
            } else {
                BIG
            }
        }
        (false, true) => {
            if r - ng == c {
                h[c].len() as f64
            } else {
                BIG
            }
        }
        (false, false) => 0.0,
    });
    let a = hungarian(&m).expect("finite costs");
    a.pairs()
        .filter(|&(r, c)| r < ng && c < nh)
        .map(|(r, c)| overlap_frames[r * nh + c])
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClearMot {
    pub mota: f64,
    pub motp: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub idsw: usize,
}

pub fn clear_mot(gt: &VideoAnnotation, pred: &VideoAnnotation, cfg: &EvalConfig) -> Result<ClearMot, MetricsError> {
    let c = mot_counts(gt, pred, cfg)?;
    Ok(ClearMot {
        mota: c.mota().0,
        motp: c.motp().0,
        fp: c.fp,
        fn_: c.fn_,
        idsw: c.idsw,
    })
}

pub fn idf1(gt: &VideoAnnotation, pred: &VideoAnnotation, cfg: &EvalConfig) -> Result<f64, MetricsError> {
    Ok(mot_counts(gt, pred, cfg)?.idf1().0)
}

pub fn mostly_tracked_lost(gt: &VideoAnnotation, pred: &VideoAnnotation, cfg: &EvalConfig) -> Result<(usize, usize), MetricsError> {
    let c = mot_counts(gt, pred, cfg)?;
    Ok((c.mostly_tracked, c.mostly_lost))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Detection,
    EndToEnd,
}

/// Everything needed to build a report; sums across videos.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct VideoCounts {
    pub prf: PrfCounts,
    pub mot: MotCounts,
}

impl VideoCounts {
    pub fn add(&mut self, o: &VideoCounts) {
        self.prf.add(&o.prf);
        self.mot.add(&o.mot);
    }
}

pub fn evaluate_video(
    gt: &VideoAnnotation,
    pred: &VideoAnnotation,
    cfg: &EvalConfig,
    protocol: Protocol,
) -> Result<VideoCounts, MetricsError> {
    cfg.validate()?;
    let prf = match protocol {
        Protocol::Detection => detection_counts_video(gt, pred, cfg)?,
        Protocol::EndToEnd => e2e_counts_video(gt, pred, cfg)?,
    };
    Ok(VideoCounts {
        prf,
        mot: mot_counts(gt, pred, cfg)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub fmeasure: f64,
    pub mota: f64,
    pub motp: f64,
    pub idf1: f64,
    pub idsw: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub gt_count: usize,
    pub pred_count: usize,
    pub mostly_tracked: usize,
    pub mostly_lost: usize,
    pub track_count: usize,
    /// Names of ratios computed over an empty denominator.
    pub vacuous: Vec<&'static str>,
}

impl MetricReport {
    pub fn from_counts(c: &VideoCounts) -> Self {
        let prf = c.prf.prf();
        let (mota, mota_v) = c.mot.mota();
        let (motp, motp_v) = c.mot.motp();
        let (idf1, idf1_v) = c.mot.idf1();
        let vacuous = [
            ("precision", prf.vacuous_precision),
            ("recall", prf.vacuous_recall),
            ("mota", mota_v),
            ("motp", motp_v),
            ("idf1", idf1_v),
        ]
        .into_iter()
        .filter_map(|(n, v)| v.then_some(n))
        .collect();
        Self {
            precision: prf.precision,
            recall: prf.recall,
            fmeasure: prf.fmeasure,
            mota,
            motp,
            idf1,
            idsw: c.mot.idsw,
            fp: c.mot.fp,
            fn_: c.mot.fn_,
            gt_count: c.mot.gt,
            pred_count: c.mot.pred,
            mostly_tracked: c.mot.mostly_tracked,
            mostly_lost: c.mot.mostly_lost,
            track_count: c.mot.tracks,
            vacuous,
        }
    }
}
