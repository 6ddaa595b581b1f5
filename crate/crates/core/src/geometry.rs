//! Planar geometry in continuous pixel coordinates.
//!
//! The origin is the top-left corner of pixel (0, 0), x grows rightward and
//! y downward. Pixel (i, j) covers `[i, i+1) x [j, j+1)`; its center is
//! `(i + 0.5, j + 0.5)`. Flow grids are the exception: their samples sit on
//! integer coordinates, so grid entry (i, j) is the displacement at `(i, j)`.

use std::ops::{Add, Mul, Sub};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("polygon has zero area")]
    Degenerate,
    #[error("polygon edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("invalid box ({x0}, {y0}, {x1}, {y1})")]
    InvalidBox { x0: f64, y0: f64, x1: f64, y1: f64 },
    #[error("box has zero area")]
    DegenerateBox,
    #[error("union area is zero")]
    ZeroUnion,
    #[error("homography is singular")]
    Singular,
    #[error("point maps to infinity (w = {0:e})")]
    PointAtInfinity(f64),
    #[error("query ({x}, {y}) outside flow grid {width}x{height}")]
    OutOfBounds { x: f64, y: f64, width: usize, height: usize },
    #[error("flow grid {width}x{height} expects {expected} entries, got {got}")]
    FlowSize { width: usize, height: usize, expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: Point2, t: f64) -> Point2 {
        Point2::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Shoelace sum; positive for clockwise order in image coordinates.
fn signed_area(v: &[Point2]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

fn span(v: &[Point2]) -> f64 {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in v {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    (x1 - x0).max(y1 - y0)
}

/// Absolute shoelace area of a raw vertex list.
pub fn polygon_area(vertices: &[Point2]) -> Result<f64> {
    if vertices.len() < 3 {
        return Err(GeometryError::TooFewVertices(vertices.len()));
    }
    if !vertices.iter().all(Point2::is_finite) {
        return Err(GeometryError::NonFinite);
    }
    let a = signed_area(vertices).abs();
    let s = span(vertices);
    if a <= 1e-12 * s.max(1.0).powi(2) {
        return Err(GeometryError::Degenerate);
    }
    Ok(a)
}

fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on_seg = |a: Point2, b: Point2, p: Point2| {
        p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
    };
    (d1 == 0.0 && on_seg(q1, q2, p1))
        || (d2 == 0.0 && on_seg(q1, q2, p2))
        || (d3 == 0.0 && on_seg(p1, p2, q1))
        || (d4 == 0.0 && on_seg(p1, p2, q2))
}

/// Simple polygon with at least three vertices, stored clockwise in image
/// coordinates (positive shoelace sum).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    /// Validate and normalize orientation. A counter-clockwise input is
    /// reversed while keeping its first vertex in place.
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self> {
        polygon_area(&vertices)?;
        let n = vertices.len();
        for i in 0..n {
            for j in (i + 1)..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                if segments_intersect(
                    vertices[i],
                    vertices[(i + 1) % n],
                    vertices[j],
                    vertices[(j + 1) % n],
                ) {
                    return Err(GeometryError::SelfIntersecting(i, j));
                }
            }
        }
        if signed_area(&vertices) < 0.0 {
            vertices[1..].reverse();
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle as a clockwise quad starting at the top-left.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new(vec![
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn centroid(&self) -> Point2 {
        let n = self.vertices.len() as f64;
        let s = self
            .vertices
            .iter()
            .fold(Point2::default(), |acc, &p| acc + p);
        s * (1.0 / n)
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            cross(
                self.vertices[i],
                self.vertices[(i + 1) % n],
                self.vertices[(i + 2) % n],
            ) >= -1e-12
        })
    }

    /// Even-odd containment test.
    pub fn contains(&self, p: Point2) -> bool {
        let v = &self.vertices;
        let n = v.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (v[i], v[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn aabb(&self) -> AABox {
        aabb(self)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Polygon {
        Polygon {
            vertices: self
                .vertices
                .iter()
                .map(|p| Point2::new(p.x + dx, p.y + dy))
                .collect(),
        }
    }

    /// Map every vertex through `h`; the result is re-validated.
    pub fn transform(&self, h: &Homography) -> Result<Polygon> {
        let v = self
            .vertices
            .iter()
            .map(|&p| h.apply(p))
            .collect::<Result<Vec<_>>>()?;
        Polygon::new(v)
    }

    /// `samples_per_edge` evenly spaced points per edge, starting at each
    /// vertex, walking the boundary in vertex order.
    pub fn boundary_samples(&self, samples_per_edge: usize) -> Vec<Point2> {
        let n = self.vertices.len();
        let mut out = Vec::with_capacity(n * samples_per_edge);
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            for s in 0..samples_per_edge {
                out.push(a.lerp(b, s as f64 / samples_per_edge as f64));
            }
        }
        out
    }

    /// Indices `(col, row)` of pixels whose centers fall inside the polygon.
    pub fn interior_pixels(&self) -> Vec<(usize, usize)> {
        let b = self.aabb();
        let i0 = b.x0.floor().max(0.0) as usize;
        let j0 = b.y0.floor().max(0.0) as usize;
        let i1 = b.x1.ceil().max(0.0) as usize;
        let j1 = b.y1.ceil().max(0.0) as usize;
        let mut out = Vec::new();
        for j in j0..j1 {
            for i in i0..i1 {
                if self.contains(Point2::new(i as f64 + 0.5, j as f64 + 0.5)) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Tightest axis-aligned box around the polygon.
pub fn aabb(p: &Polygon) -> AABox {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for v in p.vertices() {
        x0 = x0.min(v.x);
        y0 = y0.min(v.y);
        x1 = x1.max(v.x);
        y1 = y1.max(v.y);
    }
    AABox { x0, y0, x1, y1 }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AABox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl AABox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let finite = [x0, y0, x1, y1].iter().all(|v| v.is_finite());
        if !finite || x0 > x1 || y0 > y1 {
            return Err(GeometryError::InvalidBox { x0, y0, x1, y1 });
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point2 {
        Point2::new((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> AABox {
        AABox {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }

    fn intersection_area(&self, o: &AABox) -> f64 {
        let w = (self.x1.min(o.x1) - self.x0.max(o.x0)).max(0.0);
        let h = (self.y1.min(o.y1) - self.y0.max(o.y0)).max(0.0);
        w * h
    }
}

pub fn iou_aabb(a: &AABox, b: &AABox) -> Result<f64> {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return Err(GeometryError::ZeroUnion);
    }
    Ok(inter / union)
}

/// Generalized IoU: `IoU - |C \ (A u B)| / |C|` with `C` the enclosing box.
pub fn giou(a: &AABox, b: &AABox) -> Result<f64> {
    if a.area() <= 0.0 || b.area() <= 0.0 {
        return Err(GeometryError::DegenerateBox);
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let hull = (a.x1.max(b.x1) - a.x0.min(b.x0)) * (a.y1.max(b.y1) - a.y0.min(b.y0));
    Ok(inter / union - (hull - union) / hull)
}

/// Sutherland-Hodgman clip of `subject` against a convex clockwise `clip`.
fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut output = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let input = std::mem::take(&mut output);
        let m = input.len();
        for k in 0..m {
            let cur = input[k];
            let prev = input[(k + m - 1) % m];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

fn line_intersection(p: Point2, q: Point2, a: Point2, b: Point2) -> Point2 {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let t = dp / (dp - dq);
    p.lerp(q, t)
}

/// Exact intersection area of two convex polygons.
pub fn convex_intersection_area(a: &Polygon, b: &Polygon) -> f64 {
    let clipped = clip_convex(a.vertices(), b.vertices());
    if clipped.len() < 3 {
        return 0.0;
    }
    signed_area(&clipped).max(0.0)
}

/// Polygon IoU. Convex pairs are clipped exactly; anything else is
/// estimated by sampling pixel centers on a 1-px grid over the joint box.
pub fn polygon_iou(a: &Polygon, b: &Polygon) -> Result<f64> {
    if a.is_convex() && b.is_convex() {
        let inter = convex_intersection_area(a, b);
        let union = a.area() + b.area() - inter;
        if union <= 0.0 {
            return Err(GeometryError::ZeroUnion);
        }
        Ok((inter / union).clamp(0.0, 1.0))
    } else {
        polygon_iou_raster(a, b)
    }
}

/// Rasterized IoU: counts pixel centers inside each polygon.
pub fn polygon_iou_raster(a: &Polygon, b: &Polygon) -> Result<f64> {
    let (ba, bb) = (a.aabb(), b.aabb());
    if ba.intersection_area(&bb) <= 0.0 {
        return Ok(0.0);
    }
    let x0 = ba.x0.min(bb.x0).floor() as i64;
    let y0 = ba.y0.min(bb.y0).floor() as i64;
    let x1 = ba.x1.max(bb.x1).ceil() as i64;
    let y1 = ba.y1.max(bb.y1).ceil() as i64;
    let (mut inter, mut union) = (0u64, 0u64);
    for j in y0..y1 {
        for i in x0..x1 {
            let p = Point2::new(i as f64 + 0.5, j as f64 + 0.5);
            let (ia, ib) = (a.contains(p), b.contains(p));
            if ia && ib {
                inter += 1;
            }
            if ia || ib {
                union += 1;
            }
        }
    }
    if union == 0 {
        return Err(GeometryError::ZeroUnion);
    }
    Ok(inter as f64 / union as f64)
}

/// Projective transform of the plane, stored scale-normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    /// Normalize so `m[2][2] = 1` (or unit Frobenius norm when that entry
    /// is ~0) and reject singular matrices.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let corner = m[(2, 2)];
        let m = if corner.abs() > 1e-9 {
            m / corner
        } else {
            let n = m.norm();
            if n == 0.0 {
                return Err(GeometryError::Singular);
            }
            m / n
        };
        if m.determinant().abs() <= 1e-12 {
            return Err(GeometryError::Singular);
        }
        Ok(Self { m })
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0),
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.m;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub fn inverse(&self) -> Result<Homography> {
        let inv = self.m.try_inverse().ok_or(GeometryError::Singular)?;
        Homography::from_matrix(inv)
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Homography) -> Result<Homography> {
        Homography::from_matrix(self.m * other.m)
    }

    pub fn apply(&self, p: Point2) -> Result<Point2> {
        let v = self.m * Vector3::new(p.x, p.y, 1.0);
        if v.z.abs() < 1e-12 {
            return Err(GeometryError::PointAtInfinity(v.z));
        }
        Ok(Point2::new(v.x / v.z, v.y / v.z))
    }
}

pub fn apply_homography(h: &Homography, p: Point2) -> Result<Point2> {
    h.apply(p)
}

/// Dense per-pixel displacement grid, row-major, single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    data: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, data: Vec<[f32; 2]>) -> Result<Self> {
        let expected = width * height;
        if width == 0 || height == 0 || data.len() != expected {
            return Err(GeometryError::FlowSize {
                width,
                height,
                expected,
                got: data.len(),
            });
        }
        if data.iter().any(|d| !d[0].is_finite() || !d[1].is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "flow field must be non-empty");
        Self {
            width,
            height,
            data: vec![[0.0; 2]; width * height],
        }
    }

    /// Build a field by evaluating `f(x, y)` at every grid point.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Self {
        assert!(width > 0 && height > 0, "flow field must be non-empty");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(x, y);
                data.push([u as f32, v as f32]);
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[[f32; 2]] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [[f32; 2]] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        self.data[y * self.width + x]
    }

    /// Whether `p` lies in the sampling domain `[0, w-1] x [0, h-1]`.
    pub fn in_domain(&self, p: Point2) -> bool {
        p.x >= 0.0
            && p.y >= 0.0
            && p.x <= (self.width - 1) as f64
            && p.y <= (self.height - 1) as f64
    }

    /// Bilinear displacement at `p`.
    pub fn sample(&self, p: Point2) -> Result<(f64, f64)> {
        if !p.is_finite() || !self.in_domain(p) {
            return Err(GeometryError::OutOfBounds {
                x: p.x,
                y: p.y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.sample_unchecked(p))
    }

    /// Bilinear displacement at `p` clamped into the grid domain.
    pub fn sample_clamped(&self, p: Point2) -> (f64, f64) {
        let q = Point2::new(
            p.x.clamp(0.0, (self.width - 1) as f64),
            p.y.clamp(0.0, (self.height - 1) as f64),
        );
        self.sample_unchecked(q)
    }

    fn sample_unchecked(&self, p: Point2) -> (f64, f64) {
        let x0 = (p.x.floor() as usize).min(self.width - 1);
        let y0 = (p.y.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = p.x - x0 as f64;
        let fy = p.y - y0 as f64;
        let g = |x: usize, y: usize| {
            let d = self.get(x, y);
            (d[0] as f64, d[1] as f64)
        };
        let (a, b, c, d) = (g(x0, y0), g(x1, y0), g(x0, y1), g(x1, y1));
        let u = a.0 * (1.0 - fx) * (1.0 - fy) + b.0 * fx * (1.0 - fy) + c.0 * (1.0 - fx) * fy + d.0 * fx * fy;
        let v = a.1 * (1.0 - fx) * (1.0 - fy) + b.1 * fx * (1.0 - fy) + c.1 * (1.0 - fx) * fy + d.1 * fx * fy;
        (u, v)
    }
}

pub fn sample_flow(f: &FlowField, p: Point2) -> Result<(f64, f64)> {
    f.sample(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point2> {
        v.iter().map(|&(x, y)| Point2::new(x, y)).collect()
    }

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> AABox {
        AABox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn area_examples() {
        let sq = pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        assert_eq!(polygon_area(&sq).unwrap(), 1.0);
        let tri = pts(&[(0.0, 0.0), (4.0, 0.0), (0.0, 3.0)]);
        assert_eq!(polygon_area(&tri).unwrap(), 6.0);
        let line = pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]);
        assert_eq!(polygon_area(&line), Err(GeometryError::Degenerate));
        assert_eq!(
            polygon_area(&line[..2]),
            Err(GeometryError::TooFewVertices(2))
        );
    }

    #[test]
    fn orientation_is_normalized() {
        let ccw = Polygon::new(pts(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)])).unwrap();
        assert!(ccw.area() > 0.0);
        assert_eq!(ccw.vertices()[0], Point2::new(0.0, 0.0));
        assert_eq!(ccw.vertices()[1], Point2::new(1.0, 0.0));
    }

    #[test]
    fn bowtie_rejected() {
        let bow = pts(&[(0.0, 0.0), (2.0, 2.0), (2.0, 0.0), (0.0, 3.0)]);
        assert!(matches!(
            Polygon::new(bow),
            Err(GeometryError::SelfIntersecting(..))
        ));
    }

    #[test]
    fn aabb_examples() {
        let sq = Polygon::rect(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(aabb(&sq), bx(0.0, 0.0, 1.0, 1.0));
        let diamond = Polygon::new(pts(&[(1.0, 0.0), (2.0, 1.0), (1.0, 2.0), (0.0, 1.0)])).unwrap();
        assert_eq!(aabb(&diamond), bx(0.0, 0.0, 2.0, 2.0));
        assert_eq!(aabb(&diamond.translate(3.0, -1.0)), bx(3.0, -1.0, 5.0, 1.0));
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou_aabb(&a, &a).unwrap(), 1.0);
        assert!((iou_aabb(&a, &bx(1.0, 1.0, 3.0, 3.0)).unwrap() - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(iou_aabb(&a, &bx(5.0, 5.0, 6.0, 6.0)).unwrap(), 0.0);
        let p = bx(1.0, 1.0, 1.0, 1.0);
        assert_eq!(iou_aabb(&p, &p), Err(GeometryError::ZeroUnion));
    }

    #[test]
    fn giou_examples() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(giou(&a, &a).unwrap(), 1.0);
        let g = giou(&a, &bx(1.0, 1.0, 3.0, 3.0)).unwrap();
        assert!((g + 5.0 / 63.0).abs() < 1e-12);
        let g = giou(&bx(0.0, 0.0, 1.0, 1.0), &bx(10.0, 0.0, 11.0, 1.0)).unwrap();
        assert!((g + 9.0 / 11.0).abs() < 1e-12);
        assert_eq!(
            giou(&a, &bx(0.0, 0.0, 0.0, 1.0)),
            Err(GeometryError::DegenerateBox)
        );
    }

    #[test]
    fn polygon_iou_examples() {
        let a = Polygon::rect(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(polygon_iou(&a, &a).unwrap(), 1.0);
        let b = a.translate(0.5, 0.0);
        assert!((polygon_iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(polygon_iou(&a, &a.translate(3.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn nonconvex_iou_uses_raster() {
        // L-shape 20x20 minus a 10x10 corner: area 300.
        let l = Polygon::new(pts(&[
            (0.0, 0.0),
            (20.0, 0.0),
            (20.0, 10.0),
            (10.0, 10.0),
            (10.0, 20.0),
            (0.0, 20.0),
        ]))
        .unwrap();
        assert!(!l.is_convex());
        let sq = Polygon::rect(0.0, 0.0, 20.0, 20.0).unwrap();
        assert!((polygon_iou(&l, &sq).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(polygon_iou(&l, &l).unwrap(), 1.0);
    }

    #[test]
    fn homography_examples() {
        let p = Point2::new(3.5, -2.0);
        assert_eq!(apply_homography(&Homography::identity(), p).unwrap(), p);
        let t = Homography::translation(3.0, -2.0);
        assert_eq!(t.apply(Point2::new(1.0, 1.0)).unwrap(), Point2::new(4.0, -1.0));

        let rows = [[1.2, 0.1, 5.0], [-0.05, 0.9, 2.0], [0.001, 0.002, 1.0]];
        let h = Homography::from_rows(rows).unwrap();
        for (x, y) in [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)] {
            let w = rows[2][0] * x + rows[2][1] * y + rows[2][2];
            let ex = (rows[0][0] * x + rows[0][1] * y + rows[0][2]) / w;
            let ey = (rows[1][0] * x + rows[1][1] * y + rows[1][2]) / w;
            let q = h.apply(Point2::new(x, y)).unwrap();
            assert!((q.x - ex).abs() < 1e-12 && (q.y - ey).abs() < 1e-12);
        }
    }

    #[test]
    fn homography_normalization_and_errors() {
        let h = Homography::from_rows([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
        assert_eq!(h, Homography::identity());
        let f = Homography::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0], [0.0, 1.0, 0.0]]).unwrap();
        assert!((f.matrix().norm() - 1.0).abs() < 1e-12);
        assert_eq!(
            Homography::from_rows([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]]),
            Err(GeometryError::Singular)
        );
        let h = Homography::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(
            h.apply(Point2::new(-1.0, 0.0)),
            Err(GeometryError::PointAtInfinity(_))
        ));
    }

    #[test]
    fn flow_examples() {
        let f = FlowField::from_fn(10, 10, |x, y| (x as f64 * 0.5, -(y as f64)));
        assert_eq!(sample_flow(&f, Point2::new(3.0, 4.0)).unwrap(), (1.5, -4.0));
        let g = FlowField::from_fn(10, 10, |x, _| (x as f64, 0.0));
        let (du, dv) = g.sample(Point2::new(2.5, 7.3)).unwrap();
        assert!((du - 2.5).abs() < 1e-12 && dv == 0.0);
        assert!(matches!(
            g.sample(Point2::new(-1.0, 0.0)),
            Err(GeometryError::OutOfBounds { .. })
        ));
        // Far edge of the domain is valid.
        assert_eq!(g.sample(Point2::new(9.0, 9.0)).unwrap(), (9.0, 0.0));
        assert!(FlowField::new(2, 2, vec![[0.0; 2]; 3]).is_err());
    }

    fn arb_box() -> impl Strategy<Value = AABox> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.1..40.0f64, 0.1..40.0f64)
            .prop_map(|(x, y, w, h)| bx(x, y, x + w, y + h))
    }

    fn arb_homography() -> impl Strategy<Value = Homography> {
        (
            0.5..1.5f64,
            -0.3..0.3f64,
            -20.0..20.0f64,
            -0.3..0.3f64,
            0.5..1.5f64,
            -20.0..20.0f64,
            -1e-3..1e-3f64,
            -1e-3..1e-3f64,
        )
            .prop_filter_map("singular", |(a, b, c, d, e, f, g, h)| {
                Homography::from_rows([[a, b, c], [d, e, f], [g, h, 1.0]]).ok()
            })
            .prop_filter("ill-conditioned", |h| {
                let det = h.matrix().determinant().abs();
                det > 0.1
            })
    }

    /// Random convex quad: one vertex per quadrant around a center.
    fn arb_convex_quad() -> impl Strategy<Value = Polygon> {
        (
            20.0..80.0f64,
            20.0..80.0f64,
            proptest::array::uniform4((10.0..25.0f64, 0.2..1.37f64)),
        )
            .prop_filter_map("non-convex", |(cx, cy, arms)| {
                let v: Vec<Point2> = arms
                    .iter()
                    .enumerate()
                    .map(|(k, &(r, a))| {
                        let t = a + k as f64 * std::f64::consts::FRAC_PI_2;
                        Point2::new(cx + r * t.cos(), cy + r * t.sin())
                    })
                    .collect();
                let p = Polygon::new(v).ok()?;
                p.is_convex().then_some(p)
            })
    }

    proptest! {
        #[test]
        fn self_overlap_is_one(a in arb_box(), q in arb_convex_quad()) {
            prop_assert_eq!(giou(&a, &a).unwrap(), 1.0);
            prop_assert!((polygon_iou(&q, &q).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn giou_bounded_by_iou_and_symmetric(a in arb_box(), b in arb_box()) {
            let (g, i) = (giou(&a, &b).unwrap(), iou_aabb(&a, &b).unwrap());
            prop_assert!(g <= i + 1e-15);
            prop_assert!(g > -1.0 && g <= 1.0);
            prop_assert_eq!(g, giou(&b, &a).unwrap());
            prop_assert_eq!(i, iou_aabb(&b, &a).unwrap());
        }

        #[test]
        fn homography_inverse_round_trip(h in arb_homography(), x in 0.0..200.0f64, y in 0.0..200.0f64) {
            let p = Point2::new(x, y);
            prop_assert_eq!(Homography::identity().apply(p).unwrap(), p);
            let q = h.apply(p).unwrap();
            let back = h.inverse().unwrap().apply(q).unwrap();
            prop_assert!(back.dist(p) < 1e-9);
        }

        #[test]
        fn homography_preserves_collinearity(
            h in arb_homography(),
            a in (0.0..200.0f64, 0.0..200.0f64),
            b in (0.0..200.0f64, 0.0..200.0f64),
            t in -1.0..2.0f64,
        ) {
            let a = Point2::new(a.0, a.1);
            let b = Point2::new(b.0, b.1);
            let c = a.lerp(b, t);
            let (ha, hb, hc) = (h.apply(a).unwrap(), h.apply(b).unwrap(), h.apply(c).unwrap());
            let s = ha.dist(hb).max(ha.dist(hc)).max(hb.dist(hc)).max(1.0);
            prop_assert!(cross(ha, hb, hc).abs() * 0.5 < 1e-6 * s * s);
        }

        #[test]
        fn bilinear_reproduces_affine_fields(
            c in proptest::array::uniform6(-2.0..2.0f64),
            x in 0.0..15.0f64,
            y in 0.0..11.0f64,
        ) {
            let f = FlowField::from_fn(16, 12, |i, j| {
                let (i, j) = (i as f64, j as f64);
                (c[0] * i + c[1] * j + c[2], c[3] * i + c[4] * j + c[5])
            });
            let (u, v) = f.sample(Point2::new(x, y)).unwrap();
            // f32 storage bounds the agreement.
            prop_assert!((u - (c[0] * x + c[1] * y + c[2])).abs() < 1e-4);
            prop_assert!((v - (c[3] * x + c[4] * y + c[5])).abs() < 1e-4);
        }

        #[test]
        fn clipping_agrees_with_raster(a in arb_convex_quad(), b in arb_convex_quad()) {
            let exact = polygon_iou(&a, &b).unwrap();
            let approx = polygon_iou_raster(&a, &b).unwrap();
            prop_assert!((exact - approx).abs() < 0.02, "exact {exact} raster {approx}");
        }
    }
}
