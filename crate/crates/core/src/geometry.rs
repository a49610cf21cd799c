//! Planar primitives in a world-fixed metric frame.
//!
//! Everything here is a small `Copy` or immutable value. Distances to
//! polylines always include the segment endpoints, so points beyond the
//! extent of a line still get a finite distance.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A position in meters (x east, y north).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(&self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z component of the 3-D cross product.
    pub fn cross(&self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: Point2) -> f64 {
        (*self - other).norm()
    }

    pub fn lerp(&self, other: Point2, t: f64) -> Point2 {
        Point2::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }

    pub fn midpoint(&self, other: Point2) -> Point2 {
        Point2::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    /// Arithmetic mean; `None` for an empty input.
    pub fn mean<'a>(points: impl IntoIterator<Item = &'a Point2>) -> Option<Point2> {
        let mut n = 0usize;
        let mut sum = Point2::ORIGIN;
        for p in points {
            sum += *p;
            n += 1;
        }
        (n > 0).then(|| sum * (1.0 / n as f64))
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Point2 {
    fn add_assign(&mut self, rhs: Point2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// A unit vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Direction2 {
    dx: f64,
    dy: f64,
}

impl Direction2 {
    /// Normalizes `(dx, dy)`. Fails for zero-length or non-finite input.
    pub fn new(dx: f64, dy: f64) -> Result<Self> {
        let n = dx.hypot(dy);
        if !n.is_finite() || n <= f64::MIN_POSITIVE {
            return Err(Error::Geometry(format!(
                "cannot normalize direction ({dx}, {dy})"
            )));
        }
        Ok(Direction2 {
            dx: dx / n,
            dy: dy / n,
        })
    }

    pub fn from_vector(v: Point2) -> Result<Self> {
        Self::new(v.x, v.y)
    }

    pub fn from_angle(theta: f64) -> Self {
        Direction2 {
            dx: theta.cos(),
            dy: theta.sin(),
        }
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn as_vector(&self) -> Point2 {
        Point2::new(self.dx, self.dy)
    }

    /// Heading in `[0, 2π)`.
    pub fn angle(&self) -> f64 {
        normalize_angle(self.dy.atan2(self.dx))
    }

    pub fn dot(&self, other: Direction2) -> f64 {
        self.dx * other.dx + self.dy * other.dy
    }

    pub fn reversed(&self) -> Direction2 {
        Direction2 {
            dx: -self.dx,
            dy: -self.dy,
        }
    }

    /// Rotated by +90° (to the left).
    pub fn left_normal(&self) -> Direction2 {
        Direction2 {
            dx: -self.dy,
            dy: self.dx,
        }
    }

    /// Rotated by -90° (to the right).
    pub fn right_normal(&self) -> Direction2 {
        Direction2 {
            dx: self.dy,
            dy: -self.dx,
        }
    }

    /// Normalized vector sum, i.e. the circular mean. `None` when the inputs
    /// cancel out or the iterator is empty.
    pub fn circular_mean(dirs: impl IntoIterator<Item = Direction2>) -> Option<Direction2> {
        let sum = dirs
            .into_iter()
            .fold(Point2::ORIGIN, |acc, d| acc + d.as_vector());
        if sum.norm() < 1e-12 {
            return None;
        }
        Direction2::from_vector(sum).ok()
    }
}

impl TryFrom<[f64; 2]> for Direction2 {
    type Error = Error;
    fn try_from(v: [f64; 2]) -> Result<Self> {
        Direction2::new(v[0], v[1])
    }
}

impl From<Direction2> for [f64; 2] {
    fn from(d: Direction2) -> Self {
        [d.dx, d.dy]
    }
}

/// Angle between two unit vectors in `[0, π]`. `atan2` keeps full precision
/// near 0 and π, where `acos` of the inner product loses half the digits.
pub fn angle_between(u: Direction2, v: Direction2) -> f64 {
    let (a, b) = (u.as_vector(), v.as_vector());
    a.cross(b).abs().atan2(a.dot(b))
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    // rem_euclid can return exactly 2π for tiny negative inputs
    if t >= 2.0 * PI {
        0.0
    } else {
        t
    }
}

/// Smallest absolute difference between two headings, in `[0, π]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = normalize_angle(a - b);
    d.min(2.0 * PI - d)
}

/// Result of projecting a point onto a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentProjection {
    pub distance: f64,
    /// Position along the segment in `[0, 1]`.
    pub t: f64,
    pub closest: Point2,
}

/// Projection of `p` onto the segment `[a, b]`, falling back to the
/// endpoints outside it. Degenerate segments behave like a single point.
pub fn project_on_segment(p: Point2, a: Point2, b: Point2) -> SegmentProjection {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let closest = a + ab * t;
    SegmentProjection {
        distance: p.distance(closest),
        t,
        closest,
    }
}

pub fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    project_on_segment(p, a, b).distance
}

/// Nearest location on a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolylineProjection {
    pub distance: f64,
    pub segment: usize,
    pub t: f64,
    pub closest: Point2,
    /// Arc length from the first point to `closest`.
    pub arc_length: f64,
    /// Signed lateral offset, positive to the left of the segment direction.
    pub signed_offset: f64,
}

/// An ordered chain of at least two distinct consecutive points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct Polyline {
    points: Vec<Point2>,
}

impl Polyline {
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Geometry(format!(
                "polyline needs at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::Geometry(format!("non-finite polyline point {p:?}")));
        }
        if let Some(w) = points.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Geometry(format!(
                "repeated consecutive polyline point {:?}",
                w[0]
            )));
        }
        Ok(Polyline { points })
    }

    /// Builds a polyline after dropping consecutive duplicates.
    pub fn new_dedup(mut points: Vec<Point2>) -> Result<Self> {
        points.dedup();
        Self::new(points)
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point2> {
        self.points
    }

    pub fn first(&self) -> Point2 {
        self.points[0]
    }

    pub fn last(&self) -> Point2 {
        self.points[self.points.len() - 1]
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| a.distance(b)).sum()
    }

    pub fn reversed(&self) -> Polyline {
        let mut points = self.points.clone();
        points.reverse();
        Polyline { points }
    }

    pub fn orthogonal_distance(&self, p: Point2) -> f64 {
        orthogonal_distance(p, self)
    }

    /// Closest point on the polyline with its arc length and signed offset.
    pub fn project(&self, p: Point2) -> PolylineProjection {
        project_on_points(p, &self.points)
    }

    /// Points at arc lengths `start, start + step, ...` not beyond the end.
    pub fn sample_every(&self, start: f64, step: f64) -> Vec<Point2> {
        debug_assert!(step > 0.0 && start >= 0.0);
        let mut out = Vec::new();
        let mut station = start;
        let mut seg_start = 0.0;
        for (a, b) in self.segments() {
            let len = a.distance(b);
            while station <= seg_start + len {
                out.push(a.lerp(b, (station - seg_start) / len));
                station += step;
            }
            seg_start += len;
        }
        out
    }

    /// Direction of the segment closest to `p`.
    pub fn direction_near(&self, p: Point2) -> Direction2 {
        let proj = self.project(p);
        let a = self.points[proj.segment];
        let b = self.points[proj.segment + 1];
        Direction2::from_vector(b - a).expect("polyline segments have positive length")
    }
}

impl TryFrom<Vec<Point2>> for Polyline {
    type Error = Error;
    fn try_from(points: Vec<Point2>) -> Result<Self> {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<Point2> {
    fn from(line: Polyline) -> Self {
        line.points
    }
}

/// Minimum Euclidean distance from `p` to any segment of `line`.
pub fn orthogonal_distance(p: Point2, line: &Polyline) -> f64 {
    points_distance(p, line.points())
}

/// Same as [`orthogonal_distance`] on a raw point slice (at least one point).
pub fn points_distance(p: Point2, points: &[Point2]) -> f64 {
    match points {
        [] => f64::INFINITY,
        [only] => p.distance(*only),
        _ => points
            .windows(2)
            .map(|w| segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Projection onto a raw point slice with at least two points.
pub fn project_on_points(p: Point2, points: &[Point2]) -> PolylineProjection {
    debug_assert!(points.len() >= 2);
    let mut best: Option<(usize, SegmentProjection)> = None;
    for (i, w) in points.windows(2).enumerate() {
        let proj = project_on_segment(p, w[0], w[1]);
        if best.is_none_or(|(_, b)| proj.distance < b.distance) {
            best = Some((i, proj));
        }
    }
    let (segment, proj) = best.expect("at least one segment");
    let arc_before: f64 = points[..=segment]
        .windows(2)
        .map(|w| w[0].distance(w[1]))
        .sum();
    let a = points[segment];
    let b = points[segment + 1];
    let seg_len = a.distance(b);
    let signed_offset = if seg_len > 0.0 {
        (b - a).cross(p - a) / seg_len
    } else {
        proj.distance
    };
    PolylineProjection {
        distance: proj.distance,
        segment,
        t: proj.t,
        closest: proj.closest,
        arc_length: arc_before + proj.t * seg_len,
        signed_offset,
    }
}

/// Resamples `line` so consecutive outputs are `spacing` apart in arc
/// length. The first and last input points are kept; the final gap may be
/// shorter. Lines shorter than `spacing` collapse to their endpoints.
pub fn resample_equidistant(line: &Polyline, spacing: f64) -> Result<Polyline> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::Geometry(format!(
            "resample spacing must be positive, got {spacing}"
        )));
    }
    let total = line.length();
    let mut out = vec![line.first()];
    // Stations at k * spacing strictly before the end; a station within a
    // hair of the end is dropped in favour of the exact endpoint.
    let eps = 1e-9 * spacing.max(1.0);
    let mut station = spacing;
    let mut seg_start = 0.0;
    let mut segs = line.segments().peekable();
    while station < total - eps {
        let Some(&(a, b)) = segs.peek() else { break };
        let len = a.distance(b);
        if station <= seg_start + len {
            let t = (station - seg_start) / len;
            out.push(a.lerp(b, t));
            station += spacing;
        } else {
            seg_start += len;
            segs.next();
        }
    }
    out.push(line.last());
    Polyline::new_dedup(out)
}

/// A proper rigid motion (rotation then translation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rigid2 {
    pub rotation: f64,
    pub translation: Point2,
}

impl Rigid2 {
    pub fn new(rotation: f64, translation: Point2) -> Self {
        Rigid2 {
            rotation,
            translation,
        }
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let (s, c) = self.rotation.sin_cos();
        Point2::new(c * p.x - s * p.y, s * p.x + c * p.y) + self.translation
    }

    pub fn rotate(&self, d: Direction2) -> Direction2 {
        let (s, c) = self.rotation.sin_cos();
        Direction2::new(c * d.dx() - s * d.dy(), s * d.dx() + c * d.dy())
            .expect("rotation preserves unit length")
    }

    pub fn apply_polyline(&self, line: &Polyline) -> Polyline {
        Polyline::new_dedup(line.points().iter().map(|p| self.apply(*p)).collect())
            .expect("rigid motions preserve polyline validity")
    }
}
