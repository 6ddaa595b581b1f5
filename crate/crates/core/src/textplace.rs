//! Text geometry placement on a canonical image.
//!
//! Produces quads (plus per-character quads) that sit on valid segmentation
//! regions without overlapping each other. Only geometry and transcription
//! are produced; nothing is rendered.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataio::{CharBox, FloatGrid, LabelGrid, TextInstance};
use crate::geometry::{polygon_iou, AABox, Point2, Polygon};
use crate::rng::rng_for;

/// Average character advance relative to the text height.
pub const CHAR_ASPECT: f64 = 0.6;
/// Clearance kept between placed instances, pixels.
pub const CLEARANCE: f64 = 2.0;
pub const MAX_ATTEMPTS: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum PlacementError {
    #[error("invalid placement config: {0}")]
    InvalidConfig(String),
    #[error("asset dimensions disagree: {0}")]
    AssetMismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalAssets {
    pub width: usize,
    pub height: usize,
    /// Region labels, 0 = no text allowed.
    pub segmentation: LabelGrid,
    pub depth: Option<FloatGrid>,
}

impl CanonicalAssets {
    pub fn new(segmentation: LabelGrid, depth: Option<FloatGrid>) -> Result<Self, PlacementError> {
        let (width, height) = (segmentation.width(), segmentation.height());
        if let Some(d) = &depth {
            if d.width != width || d.height != height || d.data.len() != width * height {
                return Err(PlacementError::AssetMismatch(format!(
                    "segmentation {width}x{height}, depth {}x{}",
                    d.width, d.height
                )));
            }
            if d.data.iter().any(|v| !v.is_finite()) {
                return Err(PlacementError::AssetMismatch("non-finite depth".into()));
            }
        }
        Ok(Self {
            width,
            height,
            segmentation,
            depth,
        })
    }

    /// Every pixel valid, single region, no depth.
    pub fn uniform(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            segmentation: LabelGrid::filled(width, height, 1),
            depth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementConfig {
    pub lexicon: Vec<String>,
    /// Instances per frame.
    pub density_target: f64,
    /// Characters per word.
    pub mean_word_length_target: f64,
    /// `[min, max]` text height, pixels.
    pub font_height_range: [f64; 2],
    pub min_region_area: usize,
    /// Maximum absolute rotation, degrees.
    pub max_rotation_deg: f64,
    pub seed: u64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            lexicon: default_lexicon(),
            density_target: 6.44,
            mean_word_length_target: 4.14,
            font_height_range: [16.0, 40.0],
            min_region_area: 400,
            max_rotation_deg: 15.0,
            seed: 0,
        }
    }
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<(), PlacementError> {
        let bad = |m: &str| Err(PlacementError::InvalidConfig(m.into()));
        if self.lexicon.is_empty() || self.lexicon.iter().any(|w| w.is_empty()) {
            return bad("lexicon must be nonempty and contain no empty words");
        }
        if !(self.density_target >= 0.0 && self.density_target.is_finite()) {
            return bad("density_target must be finite and >= 0");
        }
        if !(self.mean_word_length_target > 0.0 && self.mean_word_length_target.is_finite()) {
            return bad("mean_word_length_target must be > 0");
        }
        let [lo, hi] = self.font_height_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("font_height_range must satisfy 0 < min <= max");
        }
        if !(0.0..=45.0).contains(&self.max_rotation_deg) {
            return bad("max_rotation_deg must lie in [0, 45]");
        }
        Ok(())
    }
}

/// One placed word in canonical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TextInstanceSeed {
    /// Quad in TL, TR, BR, BL order.
    pub polygon: Polygon,
    pub transcription: String,
    /// One quad per character of `transcription`.
    pub char_polygons: Vec<Polygon>,
}

impl TextInstanceSeed {
    pub fn to_instance(&self, id: u32) -> TextInstance {
        TextInstance {
            id,
            polygon: self.polygon.clone(),
            transcription: self.transcription.clone(),
            ignore: false,
            chars: Some(
                self.char_polygons
                    .iter()
                    .zip(self.transcription.chars())
                    .map(|(p, c)| CharBox {
                        polygon: p.clone(),
                        label: c.to_string(),
                    })
                    .collect(),
            ),
        }
    }

    /// Rebuild from an annotation instance; characters are re-derived by
    /// uniform subdivision when the instance carries none.
    pub fn from_instance(inst: &TextInstance) -> Self {
        let char_polygons = match &inst.chars {
            Some(cs) if cs.len() == inst.transcription.chars().count() => {
                cs.iter().map(|c| c.polygon.clone()).collect()
            }
            _ => split_characters(&inst.polygon, inst.transcription.chars().count()),
        };
        Self {
            polygon: inst.polygon.clone(),
            transcription: inst.transcription.clone(),
            char_polygons,
        }
    }
}

/// Connected component of equal, nonzero labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub label: u32,
    pub area: usize,
    /// Pixel-aligned bounding box (edges, not centers).
    pub bbox: AABox,
    pixels: Vec<(usize, usize)>,
}

impl Region {
    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }
}

/// 4-connected components with label != 0 and area >= `min_area`, largest
/// first (ties by label, then by first pixel in raster order).
pub fn select_regions(assets: &CanonicalAssets, min_area: usize) -> Vec<Region> {
    let seg = &assets.segmentation;
    let (w, h) = (seg.width(), seg.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        let label = seg.data()[start];
        if label == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(k) = stack.pop() {
            let (x, y) = (k % w, k / w);
            pixels.push((x, y));
            let mut visit = |n: usize| {
                if !seen[n] && seg.data()[n] == label {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if x > 0 {
                visit(k - 1);
            }
            if x + 1 < w {
                visit(k + 1);
            }
            if y > 0 {
                visit(k - w);
            }
            if y + 1 < h {
                visit(k + w);
            }
        }
        if pixels.len() < min_area.max(1) {
            continue;
        }
        pixels.sort_by_key(|&(x, y)| (y, x));
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for &(x, y) in &pixels {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x + 1);
            y1 = y1.max(y + 1);
        }
        out.push(Region {
            label,
            area: pixels.len(),
            bbox: AABox {
                x0: x0 as f64,
                y0: y0 as f64,
                x1: x1 as f64,
                y1: y1 as f64,
            },
            pixels,
        });
    }
    out.sort_by(|a, b| {
        b.area
            .cmp(&a.area)
            .then(a.label.cmp(&b.label))
            .then(a.pixels[0].1.cmp(&b.pixels[0].1))
            .then(a.pixels[0].0.cmp(&b.pixels[0].0))
    });
    out
}

/// Split a quad (TL, TR, BR, BL) into `n` character quads by uniform
/// subdivision of its top and bottom edges.
pub fn split_characters(quad: &Polygon, n: usize) -> Vec<Polygon> {
    let v = quad.vertices();
    if v.len() != 4 || n == 0 {
        return Vec::new();
    }
    let (tl, tr, br, bl) = (v[0], v[1], v[2], v[3]);
    (0..n)
        .filter_map(|i| {
            let (a, b) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
            Polygon::new(vec![tl.lerp(tr, a), tl.lerp(tr, b), bl.lerp(br, b), bl.lerp(br, a)]).ok()
        })
        .collect()
}

/// Exponential tilt `exp(beta * len)` over lexicon entries so the weighted
/// mean word length equals `target` (clamped to the achievable range).
pub fn length_weights(lexicon: &[String], target: f64) -> Vec<f64> {
    let lens: Vec<f64> = lexicon.iter().map(|w| w.chars().count() as f64).collect();
    let max_len = lens.iter().cloned().fold(0.0, f64::max);
    let weights = |beta: f64| -> Vec<f64> { lens.iter().map(|&l| (beta * (l - max_len)).exp()).collect() };
    let mean = |beta: f64| -> f64 {
        let w = weights(beta);
        let s: f64 = w.iter().sum();
        w.iter().zip(&lens).map(|(w, l)| w * l).sum::<f64>() / s
    };
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    weights(0.5 * (lo + hi))
}

/// Least-squares depth plane `z = a x + b y + c` over a region.
fn fit_plane(depth: &FloatGrid, pixels: &[(usize, usize)]) -> Option<[f64; 3]> {
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for &(x, y) in pixels {
        let r = nalgebra::Vector3::new(x as f64 + 0.5, y as f64 + 0.5, 1.0);
        ata += r * r.transpose();
        atb += r * depth.get(x, y);
    }
    let s = ata.lu().solve(&atb)?;
    s.iter().all(|v| v.is_finite()).then(|| [s[0], s[1], s[2]])
}

struct Candidate {
    quad: Polygon,
    inflated: Polygon,
}

fn build_quad(c: Point2, half_w: f64, half_h: f64, angle: f64, plane: Option<[f64; 3]>) -> Option<Polygon> {
    let (s, co) = angle.sin_cos();
    let depth_at = |p: Point2| plane.map(|[a, b, k]| a * p.x + b * p.y + k);
    let zc = depth_at(c);
    let corners = [(-half_w, -half_h), (half_w, -half_h), (half_w, half_h), (-half_w, half_h)];
    let v = corners
        .iter()
        .map(|&(dx, dy)| {
            let p = Point2::new(c.x + dx * co - dy * s, c.y + dx * s + dy * co);
            match (zc, depth_at(p)) {
                // nearer surface (smaller depth) appears larger
                (Some(zc), Some(zp)) if zc > 0.0 && zp > 0.0 => {
                    let k = (zc / zp).clamp(0.5, 2.0);
                    c + (p - c) * k
                }
                _ => p,
            }
        })
        .collect();
    Polygon::new(v).ok()
}

fn fits(assets: &CanonicalAssets, region: &Region, quad: &Polygon) -> bool {
    let (w, h) = (assets.width as f64, assets.height as f64);
    let seg = &assets.segmentation;
    let inside = |p: &Point2| p.x >= 0.0 && p.y >= 0.0 && p.x <= w && p.y <= h;
    if !quad.vertices().iter().all(inside) {
        return false;
    }
    let ok_pixel = |x: f64, y: f64| {
        let (i, j) = ((x.floor() as usize).min(assets.width - 1), (y.floor() as usize).min(assets.height - 1));
        seg.get(i, j) == region.label
    };
    let interior = quad.interior_pixels();
    !interior.is_empty()
        && interior.iter().all(|&(i, j)| i < assets.width && j < assets.height && seg.get(i, j) == region.label)
        && quad.boundary_samples(8).iter().all(|p| ok_pixel(p.x, p.y))
}

fn try_place(
    assets: &CanonicalAssets,
    cfg: &PlacementConfig,
    region: &Region,
    plane: Option<[f64; 3]>,
    word: &str,
    rng: &mut ChaCha8Rng,
) -> Option<Candidate> {
    let n = word.chars().count() as f64;
    let [lo, hi] = cfg.font_height_range;
    let mut height = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let max_w = region.bbox.width().min(assets.width as f64);
    if CHAR_ASPECT * height * n > max_w {
        height = max_w / (CHAR_ASPECT * n);
        if height < lo {
            return None;
        }
    }
    height = height.min(region.bbox.height());
    let width = CHAR_ASPECT * height * n;
    let rot = cfg.max_rotation_deg.to_radians();
    let angle = if rot > 0.0 { rng.random_range(-rot..=rot) } else { 0.0 };
    let (px, py) = region.pixels[rng.random_range(0..region.pixels.len())];
    let c = Point2::new(px as f64 + 0.5, py as f64 + 0.5);
    let quad = build_quad(c, width / 2.0, height / 2.0, angle, plane)?;
    if !fits(assets, region, &quad) {
        return None;
    }
    let inflated = build_quad(c, width / 2.0 + CLEARANCE, height / 2.0 + CLEARANCE, angle, plane)?;
    Some(Candidate { quad, inflated })
}

/// Place roughly `density_target * frame_count` words. Returns fewer when
/// space runs out; an empty list when no region qualifies.
pub fn place_text(
    assets: &CanonicalAssets,
    cfg: &PlacementConfig,
    frame_count: usize,
) -> Result<Vec<TextInstanceSeed>, PlacementError> {
    cfg.validate()?;
    let regions = select_regions(assets, cfg.min_region_area);
    if regions.is_empty() || cfg.density_target == 0.0 || frame_count == 0 {
        return Ok(Vec::new());
    }
    let mut rng = rng_for(cfg.seed, &[0x7e47]);
    let expected = cfg.density_target * frame_count as f64;
    let frac = expected - expected.floor();
    let count = expected.floor() as usize + usize::from(frac > 0.0 && rng.random_bool(frac));

    let planes: Vec<Option<[f64; 3]>> = regions
        .iter()
        .map(|r| assets.depth.as_ref().and_then(|d| fit_plane(d, &r.pixels)))
        .collect();
    let region_pick = WeightedIndex::new(regions.iter().map(|r| r.area as f64)).expect("nonempty regions");
    let word_pick = WeightedIndex::new(length_weights(&cfg.lexicon, cfg.mean_word_length_target))
        .map_err(|e| PlacementError::InvalidConfig(e.to_string()))?;

    let mut placed: Vec<Candidate> = Vec::new();
    let mut words: Vec<String> = Vec::new();
    for _ in 0..count {
        let word = &cfg.lexicon[word_pick.sample(&mut rng)];
        for _ in 0..MAX_ATTEMPTS {
            let ri = region_pick.sample(&mut rng);
            let Some(cand) = try_place(assets, cfg, &regions[ri], planes[ri], word, &mut rng) else {
                continue;
            };
            let clear = placed
                .iter()
                .all(|p| polygon_iou(&cand.inflated, &p.quad).map(|v| v == 0.0).unwrap_or(false));
            if clear {
                placed.push(cand);
                words.push(word.clone());
                break;
            }
        }
    }
    Ok(placed
        .into_iter()
        .zip(words)
        .map(|(c, w)| TextInstanceSeed {
            char_polygons: split_characters(&c.quad, w.chars().count()),
            polygon: c.quad,
            transcription: w,
        })
        .collect())
}

/// Built-in word list with lengths from 1 to 13 characters.
pub fn default_lexicon() -> Vec<String> {
    const WORDS: &str = "a I A to of in on at by up no go we it is OK TV UK \
        the and for you are not but all can her was one our out day get has him his how man new now old see two way who boy did its let put say she too use \
        open sale shop exit push pull stop free cafe taxi park menu room best city road east west food gate bank time home more work news book life back hour \
        hotel price today metro sushi pizza coffee store north south smart phone light water ticket train world music sport video bread fresh sweet \
        market station street police center garden coffee bakery office airport pharmacy library welcome parking special opening kitchen service \
        discount platform entrance delivery hospital shopping building business festival showroom \
        restaurant university department apartment electronics supermarket information \
        international construction";
    let mut seen = std::collections::BTreeSet::new();
    WORDS
        .split_whitespace()
        .filter(|w| seen.insert(*w))
        .map(str::to_owned)
        .collect()
}
