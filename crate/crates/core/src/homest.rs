//! Homography estimation from point correspondences.
//!
//! [`dlt`] is the normalized direct linear transform; [`ransac_homography`]
//! wraps it in a seeded consensus loop. Each RANSAC iteration draws its
//! sample from a stream derived from `(seed, iteration)`, so the result is
//! independent of how iterations are scheduled.

use nalgebra::{DMatrix, Matrix3};
use rand::Rng;
use thiserror::Error;

use crate::geometry::{GeometryError, Homography, Point2};
use crate::rng::rng_for;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("need at least 4 point pairs, got {0}")]
    InsufficientPairs(usize),
    #[error("degenerate configuration: source points (nearly) collinear")]
    Degenerate,
    #[error("rank-deficient DLT system")]
    RankDeficient,
    #[error("no consensus: best inlier fraction {best:.3} below {required:.3}")]
    NoConsensus { best: f64, required: f64 },
    #[error("invalid RANSAC parameters: {0}")]
    InvalidParams(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPair {
    pub src: Point2,
    pub dst: Point2,
}

impl PointPair {
    pub fn new(src: Point2, dst: Point2) -> Self {
        Self { src, dst }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    /// Upper bound on sampling rounds; the loop stops earlier once the
    /// consensus is large enough to make a better sample unlikely.
    pub iterations: usize,
    /// Symmetric transfer error bound, pixels.
    pub inlier_threshold: f64,
    pub min_inlier_fraction: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 2000,
            inlier_threshold: 2.0,
            min_inlier_fraction: 0.5,
            seed: 0,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<(), EstimationError> {
        if self.iterations == 0 {
            return Err(EstimationError::InvalidParams("iterations must be >= 1"));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(EstimationError::InvalidParams("inlier_threshold must be > 0"));
        }
        if !(self.min_inlier_fraction > 0.0 && self.min_inlier_fraction <= 1.0) {
            return Err(EstimationError::InvalidParams(
                "min_inlier_fraction must lie in (0, 1]",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub homography: Homography,
    pub inliers: Vec<bool>,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Confidence used by the adaptive stopping rule.
const STOP_CONFIDENCE: f64 = 0.999;
/// Resampling attempts per iteration when a minimal sample is degenerate.
const MAX_RESAMPLE: usize = 16;

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Isotropic (Hartley) normalization: centroid to the origin, mean distance
/// sqrt(2). Returns the normalized points and the 3x3 transform.
fn normalize(points: &[Point2]) -> Option<(Vec<Point2>, Matrix3<f64>)> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = points
        .iter()
        .map(|p| (p.x - cx).hypot(p.y - cy))
        .sum::<f64>()
        / n;
    if !(mean_dist > 1e-300) || !mean_dist.is_finite() {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let out = points
        .iter()
        .map(|p| Point2::new(s * (p.x - cx), s * (p.y - cy)))
        .collect();
    Some((out, t))
}

/// True when at least `n - 1` of the points lie on one line. Any such line
/// passes through two of the first three points, so three candidates cover
/// every case.
fn mostly_collinear(points: &[Point2], tol: f64) -> bool {
    let n = points.len();
    if n < 3 {
        return true;
    }
    let candidates = [(0usize, 1usize), (0, 2), (1, 2)];
    candidates.iter().any(|&(i, j)| {
        let (a, b) = (points[i], points[j]);
        let len = a.dist(b);
        if len < tol {
            return false;
        }
        let on_line = points
            .iter()
            .filter(|&&p| (cross(a, b, p) / len).abs() <= tol)
            .count();
        on_line + 1 >= n
    })
}

fn any_three_collinear(points: &[Point2], tol: f64) -> bool {
    let n = points.len();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let (a, b, c) = (points[i], points[j], points[k]);
                let scale = a.dist(b).max(a.dist(c)).max(b.dist(c)).max(1e-300);
                if (cross(a, b, c) / scale).abs() <= tol * scale {
                    return true;
                }
            }
        }
    }
    false
}

/// Normalized DLT. Exact for four non-degenerate pairs, algebraic least
/// squares for more.
pub fn dlt(pairs: &[PointPair]) -> Result<Homography, EstimationError> {
    let n = pairs.len();
    if n < 4 {
        return Err(EstimationError::InsufficientPairs(n));
    }
    if pairs.iter().any(|p| !p.src.is_finite() || !p.dst.is_finite()) {
        return Err(GeometryError::NonFinite.into());
    }
    let src: Vec<Point2> = pairs.iter().map(|p| p.src).collect();
    let dst: Vec<Point2> = pairs.iter().map(|p| p.dst).collect();
    let (src_n, t_src) = normalize(&src).ok_or(EstimationError::Degenerate)?;
    let (dst_n, t_dst) = normalize(&dst).ok_or(EstimationError::Degenerate)?;
    if mostly_collinear(&src_n, 1e-9) {
        return Err(EstimationError::Degenerate);
    }

    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (s, d)) in src_n.iter().zip(&dst_n).enumerate() {
        let (x, y, u, v) = (s.x, s.y, d.x, d.y);
        let r = 2 * i;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(EstimationError::RankDeficient)?;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let largest = svd.singular_values[order[0]];
    let second_smallest = svd.singular_values[order[7]];
    if !(largest > 0.0) || second_smallest <= 1e-12 * largest {
        return Err(EstimationError::RankDeficient);
    }
    let h = v_t.row(order[8]);
    let hn = Matrix3::from_fn(|r, c| h[3 * r + c]);
    let t_dst_inv = t_dst.try_inverse().ok_or(EstimationError::RankDeficient)?;
    let m = t_dst_inv * hn * t_src;
    Homography::from_matrix(m).map_err(|e| match e {
        GeometryError::Singular => EstimationError::RankDeficient,
        other => other.into(),
    })
}

/// Mean of the forward (`|H s - d|`) and backward (`|H^-1 d - s|`) transfer
/// distances. Points that map to infinity get `f64::INFINITY`.
pub fn symmetric_transfer_error(h: &Homography, h_inv: &Homography, pair: &PointPair) -> f64 {
    match (h.apply(pair.src), h_inv.apply(pair.dst)) {
        (Ok(fwd), Ok(bwd)) => 0.5 * (fwd.dist(pair.dst) + bwd.dist(pair.src)),
        _ => f64::INFINITY,
    }
}

fn score(h: &Homography, pairs: &[PointPair], threshold: f64) -> Option<(Vec<bool>, usize, f64)> {
    let h_inv = h.inverse().ok()?;
    let mut flags = Vec::with_capacity(pairs.len());
    let mut count = 0;
    let mut err_sum = 0.0;
    for p in pairs {
        let e = symmetric_transfer_error(h, &h_inv, p);
        let ok = e <= threshold;
        if ok {
            count += 1;
            err_sum += e;
        }
        flags.push(ok);
    }
    Some((flags, count, err_sum))
}

fn draw_minimal_sample(n: usize, rng: &mut impl Rng) -> [usize; 4] {
    let mut idx = [0usize; 4];
    let mut k = 0;
    while k < 4 {
        let c = rng.random_range(0..n);
        if !idx[..k].contains(&c) {
            idx[k] = c;
            k += 1;
        }
    }
    idx
}

fn required_iterations(inlier_fraction: f64, cap: usize) -> usize {
    let w4 = inlier_fraction.powi(4);
    if w4 >= 1.0 - 1e-12 {
        return 1;
    }
    if w4 <= 0.0 {
        return cap;
    }
    let k = (1.0 - STOP_CONFIDENCE).ln() / (1.0 - w4).ln();
    (k.ceil() as usize).clamp(1, cap)
}

/// Robust homography fit. The best minimal-sample model is re-fitted on its
/// inliers (repeated while the consensus grows); the returned flags are
/// recomputed under the returned matrix.
pub fn ransac_homography(
    pairs: &[PointPair],
    params: &RansacParams,
) -> Result<RansacResult, EstimationError> {
    params.validate()?;
    let n = pairs.len();
    if n < 4 {
        return Err(EstimationError::InsufficientPairs(n));
    }

    let mut best: Option<(Homography, usize, f64)> = None;
    let mut budget = params.iterations;
    let mut it = 0;
    while it < budget {
        let mut rng = rng_for(params.seed, &[it as u64]);
        it += 1;
        let mut model = None;
        for _ in 0..MAX_RESAMPLE {
            let idx = draw_minimal_sample(n, &mut rng);
            let sample: Vec<PointPair> = idx.iter().map(|&i| pairs[i]).collect();
            let srcs: Vec<Point2> = sample.iter().map(|p| p.src).collect();
            if any_three_collinear(&srcs, 1e-9) {
                continue;
            }
            if let Ok(h) = dlt(&sample) {
                model = Some(h);
                break;
            }
        }
        let Some(h) = model else { continue };
        let Some((_, count, err)) = score(&h, pairs, params.inlier_threshold) else {
            continue;
        };
        let better = match &best {
            None => count > 0,
            Some((_, bc, be)) => count > *bc || (count == *bc && err < *be),
        };
        if better {
            best = Some((h, count, err));
            budget = budget.min(required_iterations(count as f64 / n as f64, params.iterations));
        }
    }

    let Some((mut h, mut count, _)) = best else {
        return Err(EstimationError::NoConsensus {
            best: 0.0,
            required: params.min_inlier_fraction,
        });
    };
    let (mut flags, _, _) = score(&h, pairs, params.inlier_threshold).expect("scored before");

    // Local refinement on the consensus set.
    for _ in 0..5 {
        let inl: Vec<PointPair> = pairs
            .iter()
            .zip(&flags)
            .filter(|(_, &f)| f)
            .map(|(p, _)| *p)
            .collect();
        let Ok(refit) = dlt(&inl) else { break };
        let Some((rf, rc, _)) = score(&refit, pairs, params.inlier_threshold) else {
            break;
        };
        if rc < count {
            break;
        }
        let grew = rc > count;
        h = refit;
        count = rc;
        flags = rf;
        if !grew {
            break;
        }
    }

    let fraction = count as f64 / n as f64;
    if fraction < params.min_inlier_fraction {
        return Err(EstimationError::NoConsensus {
            best: fraction,
            required: params.min_inlier_fraction,
        });
    }
    Ok(RansacResult {
        homography: h,
        inliers: flags,
    })
}
