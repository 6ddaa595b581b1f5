//! Analytic test scenes.
//!
//! A scene is a frame-0 text layout plus one homography `H_k` per frame
//! (`H_0` is the identity). Ground truth, forward/backward flow and
//! deformation grids are all derived from the same `H_k`, so they agree
//! with each other exactly (up to `f32` storage and optional noise).

use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dataio::{self, paths, CharBox, FrameRecord, LabelGrid, TextInstance, VideoAnnotation};
use crate::geometry::{FlowField, Homography, Point2};
use crate::rng::rng_for;
use crate::textplace::{place_text, CanonicalAssets, PlacementConfig};
use crate::textprop::{DeformationField, FlowSequence};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid motion spec: {0}")]
    InvalidSpec(String),
    #[error("homography for frame {0} is not invertible over the image")]
    NonInvertible(usize),
    #[error(transparent)]
    Data(#[from] dataio::DataError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotionKind {
    Static,
    /// Pixels per frame.
    Translate { dx: f64, dy: f64 },
    /// Degrees per frame about the image center.
    Rotate { deg: f64 },
    /// Relative scale change per frame about the image center.
    Zoom { rate: f64 },
    /// Per-frame increments of translation, rotation (degrees), scale and
    /// perspective terms, about the image center.
    Projective {
        tx: f64,
        ty: f64,
        rot: f64,
        scale: f64,
        px: f64,
        py: f64,
    },
    /// Independent random offset per frame, uniform in `[-max, max]`.
    RandomShift { max: f64 },
}

impl FromStr for MotionKind {
    type Err = SceneError;

    /// `static`, `translate:dx,dy`, `rotate:deg`, `zoom:rate`,
    /// `projective:tx,ty,rot,scale,px,py`, `random_shift:max`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<f64> = if args.trim().is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|a| a.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| SceneError::InvalidSpec(format!("{s:?}: {e}")))?
        };
        if nums.iter().any(|v| !v.is_finite()) {
            return Err(SceneError::InvalidSpec(format!("{s:?}: non-finite parameter")));
        }
        let want = |n: usize| {
            if nums.len() == n {
                Ok(())
            } else {
                Err(SceneError::InvalidSpec(format!("{name} takes {n} parameters, got {}", nums.len())))
            }
        };
        Ok(match name.trim() {
            "static" => {
                want(0)?;
                MotionKind::Static
            }
            "translate" => {
                want(2)?;
                MotionKind::Translate { dx: nums[0], dy: nums[1] }
            }
            "rotate" => {
                want(1)?;
                MotionKind::Rotate { deg: nums[0] }
            }
            "zoom" => {
                want(1)?;
                MotionKind::Zoom { rate: nums[0] }
            }
            "projective" => {
                want(6)?;
                MotionKind::Projective {
                    tx: nums[0],
                    ty: nums[1],
                    rot: nums[2],
                    scale: nums[3],
                    px: nums[4],
                    py: nums[5],
                }
            }
            "random_shift" => {
                want(1)?;
                MotionKind::RandomShift { max: nums[0].abs() }
            }
            other => return Err(SceneError::InvalidSpec(format!("unknown motion kind {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSpec {
    pub kind: MotionKind,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Standard deviation of additive flow noise, pixels.
    pub flow_noise_sigma: f64,
}

impl MotionSpec {
    pub fn new(kind: MotionKind, frame_count: usize, width: usize, height: usize) -> Self {
        Self {
            kind,
            frame_count,
            width,
            height,
            seed: 0,
            flow_noise_sigma: 0.0,
        }
    }
}

fn about_center(m: [[f64; 3]; 3], cx: f64, cy: f64) -> Result<Homography, crate::geometry::GeometryError> {
    let to = Homography::translation(cx, cy);
    let from = Homography::translation(-cx, -cy);
    to.compose(&Homography::from_rows(m)?)?.compose(&from)
}

/// `H_k` for every frame.
pub fn homographies(spec: &MotionSpec) -> Result<Vec<Homography>, SceneError> {
    if spec.frame_count == 0 || spec.width == 0 || spec.height == 0 {
        return Err(SceneError::InvalidSpec("frame_count and dimensions must be >= 1".into()));
    }
    if !(spec.flow_noise_sigma >= 0.0 && spec.flow_noise_sigma.is_finite()) {
        return Err(SceneError::InvalidSpec("flow_noise_sigma must be >= 0".into()));
    }
    let (cx, cy) = (spec.width as f64 / 2.0, spec.height as f64 / 2.0);
    let mut out = Vec::with_capacity(spec.frame_count);
    for k in 0..spec.frame_count {
        let kf = k as f64;
        let rows = match spec.kind {
            MotionKind::Static => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            MotionKind::Translate { dx, dy } => [[1.0, 0.0, kf * dx], [0.0, 1.0, kf * dy], [0.0, 0.0, 1.0]],
            MotionKind::Rotate { deg } => {
                let (s, c) = (kf * deg).to_radians().sin_cos();
                [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
            }
            MotionKind::Zoom { rate } => {
                let z = (1.0 + rate).powf(kf);
                [[z, 0.0, 0.0], [0.0, z, 0.0], [0.0, 0.0, 1.0]]
            }
            MotionKind::Projective { tx, ty, rot, scale, px, py } => {
                let (s, c) = (kf * rot).to_radians().sin_cos();
                let z = 1.0 + kf * scale;
                [[z * c, -z * s, kf * tx], [z * s, z * c, kf * ty], [kf * px, kf * py, 1.0]]
            }
            MotionKind::RandomShift { max } => {
                if k == 0 || max == 0.0 {
                    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
                } else {
                    let mut rng = rng_for(spec.seed, &[0x5c1f7, k as u64]);
                    let dx = rng.random_range(-max..=max);
                    let dy = rng.random_range(-max..=max);
                    [[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]]
                }
            }
        };
        let h = about_center(rows, cx, cy).map_err(|_| SceneError::NonInvertible(k))?;
        // the projective denominator must stay positive over the whole image
        let m = h.matrix();
        let corners = [(0.0, 0.0), (spec.width as f64, 0.0), (0.0, spec.height as f64), (spec.width as f64, spec.height as f64)];
        if corners
            .iter()
            .any(|&(x, y)| m[(2, 0)] * x + m[(2, 1)] * y + m[(2, 2)] <= 1e-6)
        {
            return Err(SceneError::NonInvertible(k));
        }
        out.push(h);
    }
    Ok(out)
}

/// Frame-0 layout on a fully valid canvas, `margin` pixels kept clear at the
/// border. Ids start at 1 in placement order.
pub fn gen_layout(width: usize, height: usize, cfg: &PlacementConfig, margin: usize) -> Result<Vec<TextInstance>, SceneError> {
    let seg = LabelGrid::from_fn(width, height, |x, y| {
        u32::from(x >= margin && y >= margin && x + margin < width && y + margin < height)
    });
    let assets = CanonicalAssets::new(seg, None).map_err(|e| SceneError::InvalidSpec(e.to_string()))?;
    let seeds = place_text(&assets, cfg, 1).map_err(|e| SceneError::InvalidSpec(e.to_string()))?;
    Ok(seeds
        .iter()
        .enumerate()
        .map(|(i, s)| s.to_instance(i as u32 + 1))
        .collect())
}

/// A generated scene. Dense products are built on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: MotionSpec,
    pub layout: Vec<TextInstance>,
    pub homographies: Vec<Homography>,
}

fn displacement(h: &Homography, x: f64, y: f64) -> (f64, f64) {
    let q = h.apply(Point2::new(x, y)).expect("denominator checked positive");
    (q.x - x, q.y - y)
}

impl Scene {
    pub fn frame_count(&self) -> usize {
        self.homographies.len()
    }

    fn noisy(&self, mut f: FlowField, stream: u64, k: usize) -> FlowField {
        let sigma = self.spec.flow_noise_sigma;
        if sigma > 0.0 {
            let mut rng = rng_for(self.spec.seed, &[stream, k as u64]);
            let n = Normal::new(0.0, sigma).expect("sigma checked");
            for d in f.data_mut() {
                d[0] += n.sample(&mut rng) as f32;
                d[1] += n.sample(&mut rng) as f32;
            }
        }
        f
    }

    /// `F_{k->k+1}(p) = H_{k+1} H_k^-1 (p) - p`.
    pub fn forward_flow(&self, k: usize) -> FlowField {
        let m = self.homographies[k + 1]
            .compose(&self.homographies[k].inverse().expect("invertible"))
            .expect("invertible");
        let f = FlowField::from_fn(self.spec.width, self.spec.height, |x, y| displacement(&m, x as f64, y as f64));
        self.noisy(f, 1, k)
    }

    /// `F_{k->k-1}(p) = H_{k-1} H_k^-1 (p) - p`.
    pub fn backward_flow(&self, k: usize) -> FlowField {
        let m = self.homographies[k - 1]
            .compose(&self.homographies[k].inverse().expect("invertible"))
            .expect("invertible");
        let f = FlowField::from_fn(self.spec.width, self.spec.height, |x, y| displacement(&m, x as f64, y as f64));
        self.noisy(f, 2, k)
    }

    /// `D_k(p) = H_k(p) - p` on the canonical (frame-0) grid.
    pub fn deformation_frame(&self, k: usize) -> FlowField {
        let h = &self.homographies[k];
        FlowField::from_fn(self.spec.width, self.spec.height, |x, y| displacement(h, x as f64, y as f64))
    }

    pub fn flows(&self) -> FlowSequence {
        let n = self.frame_count();
        FlowSequence::new(
            (0..n - 1).map(|k| self.forward_flow(k)).collect(),
            (1..n).map(|k| self.backward_flow(k)).collect(),
        )
        .expect("consistent dimensions")
    }

    pub fn deformation(&self) -> DeformationField {
        DeformationField::new((0..self.frame_count()).map(|k| self.deformation_frame(k)).collect())
            .expect("consistent dimensions")
    }

    /// Layout mapped through `H_k`; an instance appears in a frame only
    /// when all its vertices lie inside the image.
    pub fn ground_truth(&self, video_id: &str) -> VideoAnnotation {
        let (w, h) = (self.spec.width as f64, self.spec.height as f64);
        let frames = self
            .homographies
            .iter()
            .enumerate()
            .map(|(k, hk)| FrameRecord {
                frame_index: k,
                instances: self
                    .layout
                    .iter()
                    .filter_map(|inst| {
                        let polygon = inst.polygon.transform(hk).ok()?;
                        let inside = polygon
                            .vertices()
                            .iter()
                            .all(|v| v.x >= 0.0 && v.y >= 0.0 && v.x <= w && v.y <= h);
                        if !inside {
                            return None;
                        }
                        let chars = match &inst.chars {
                            None => None,
                            Some(cs) => Some(
                                cs.iter()
                                    .map(|c| {
                                        Some(CharBox {
                                            polygon: c.polygon.transform(hk).ok()?,
                                            label: c.label.clone(),
                                        })
                                    })
                                    .collect::<Option<Vec<_>>>()?,
                            ),
                        };
                        Some(TextInstance {
                            polygon,
                            chars,
                            ..inst.clone()
                        })
                    })
                    .collect(),
            })
            .collect();
        VideoAnnotation {
            video_id: video_id.to_owned(),
            frames,
        }
    }

    /// Write ground truth, the frame-0 layout, and the requested dense
    /// products under `dir` following the naming contract.
    pub fn write(&self, dir: &Path, video_id: &str, flows: bool, deformation: bool) -> Result<(), SceneError> {
        dataio::write_annotations(&paths::annotations(dir), &self.ground_truth(video_id))?;
        let seeds = VideoAnnotation {
            video_id: video_id.to_owned(),
            frames: vec![FrameRecord {
                frame_index: 0,
                instances: self.layout.clone(),
            }],
        };
        dataio::write_annotations(&paths::seeds(dir), &seeds)?;
        let n = self.frame_count();
        if flows {
            for k in 0..n.saturating_sub(1) {
                dataio::write_flow(&paths::forward_flow(dir, k), &self.forward_flow(k))?;
            }
            for k in 1..n {
                dataio::write_flow(&paths::backward_flow(dir, k), &self.backward_flow(k))?;
            }
        }
        if deformation {
            for k in 0..n {
                dataio::write_flow(&paths::deformation(dir, k), &self.deformation_frame(k))?;
            }
        }
        Ok(())
    }
}

pub fn gen_motion(layout: Vec<TextInstance>, spec: &MotionSpec) -> Result<Scene, SceneError> {
    Ok(Scene {
        spec: *spec,
        homographies: homographies(spec)?,
        layout,
    })
}
