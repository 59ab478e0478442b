//! Planar geometry shared by the simulator, the renderer and the benchmark.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(angle: f64) -> Self {
        Self::new(angle.cos(), angle.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            self
        }
    }

    /// Counter-clockwise perpendicular (left normal for a direction vector).
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Distance from `p` to segment `a`–`b`, plus the clamped parameter along the segment.
pub fn point_segment(p: Vec2, a: Vec2, b: Vec2) -> (f64, f64) {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((a + ab * t).dist(p), t)
}

/// Proper or touching intersection of two closed segments.
pub fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
        (b - a).cross(c - a)
    }
    fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
        p.x >= a.x.min(b.x) - 1e-12
            && p.x <= a.x.max(b.x) + 1e-12
            && p.y >= a.y.min(b.y) - 1e-12
            && p.y <= a.y.max(b.y) + 1e-12
    }
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Closest point on a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point.
    pub s: f64,
    /// Unsigned distance to the foot point.
    pub dist: f64,
    /// Signed lateral offset, positive to the left of the travel direction.
    pub lateral: f64,
    /// Unit tangent at the foot point.
    pub tangent: Vec2,
    pub point: Vec2,
    pub segment: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pts: Vec<Vec2>,
    cum: Vec<f64>,
}

impl Polyline {
    /// Builds a polyline, dropping consecutive duplicate vertices.
    pub fn new(points: Vec<Vec2>) -> Self {
        let mut pts: Vec<Vec2> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last().map_or(true, |q| q.dist(p) > 1e-9) {
                pts.push(p);
            }
        }
        let mut cum = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        for (i, p) in pts.iter().enumerate() {
            if i > 0 {
                acc += p.dist(pts[i - 1]);
            }
            cum.push(acc);
        }
        Self { pts, cum }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.pts
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.cum.last().copied().unwrap_or(0.0)
    }

    pub fn segment_count(&self) -> usize {
        self.pts.len().saturating_sub(1)
    }

    pub fn segment(&self, i: usize) -> (Vec2, Vec2) {
        (self.pts[i], self.pts[i + 1])
    }

    pub fn segment_tangent(&self, i: usize) -> Vec2 {
        let (a, b) = self.segment(i);
        (b - a).normalized()
    }

    /// Projection onto segment `i` only.
    pub fn project_segment(&self, p: Vec2, i: usize) -> Projection {
        let (a, b) = self.segment(i);
        let (dist, t) = point_segment(p, a, b);
        let tangent = (b - a).normalized();
        let point = a + (b - a) * t;
        let lateral = tangent.cross(p - point).signum() * dist;
        Projection {
            s: self.cum[i] + t * a.dist(b),
            dist,
            lateral,
            tangent,
            point,
            segment: i,
        }
    }

    pub fn project(&self, p: Vec2) -> Projection {
        (0..self.segment_count())
            .map(|i| self.project_segment(p, i))
            .min_by(|a, b| a.dist.total_cmp(&b.dist))
            .expect("polyline with at least one segment")
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.length());
        let i = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.segment_count() - 1),
            Err(i) => (i - 1).min(self.segment_count() - 1),
        };
        (i, s - self.cum[i])
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        let (i, rem) = self.locate(s);
        let (a, b) = self.segment(i);
        a + (b - a).normalized() * rem
    }

    pub fn tangent_at(&self, s: f64) -> Vec2 {
        let (i, _) = self.locate(s);
        self.segment_tangent(i)
    }

    /// Parallel curve at signed distance `d` (positive = left), using mitred vertex normals.
    pub fn offset(&self, d: f64) -> Polyline {
        let n = self.pts.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let normal = if i == 0 {
                self.segment_tangent(0).perp()
            } else if i == n - 1 {
                self.segment_tangent(n - 2).perp()
            } else {
                let n0 = self.segment_tangent(i - 1).perp();
                let n1 = self.segment_tangent(i).perp();
                let m = (n0 + n1).normalized();
                let c = m.dot(n1).max(0.2);
                m * (1.0 / c)
            };
            out.push(self.pts[i] + normal * d);
        }
        Polyline::new(out)
    }

    /// True when no two non-adjacent segments intersect.
    pub fn is_simple(&self) -> bool {
        let m = self.segment_count();
        for i in 0..m {
            for j in (i + 2)..m {
                let (a, b) = self.segment(i);
                let (c, e) = self.segment(j);
                if segments_intersect(a, b, c, e) {
                    return false;
                }
            }
        }
        true
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.pts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn from_points(pts: &[Vec2]) -> Self {
        let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Self { min, max }
    }

    pub fn expand(self, m: f64) -> Self {
        Self {
            min: Vec2::new(self.min.x - m, self.min.y - m),
            max: Vec2::new(self.max.x + m, self.max.y + m),
        }
    }

    pub fn union(self, o: Aabb) -> Self {
        Self {
            min: Vec2::new(self.min.x.min(o.min.x), self.min.y.min(o.min.y)),
            max: Vec2::new(self.max.x.max(o.max.x), self.max.y.max(o.max.y)),
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// Oriented rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub center: Vec2,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl Obb {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            heading,
            half_length: 0.5 * length,
            half_width: 0.5 * width,
        }
    }

    pub fn axes(&self) -> (Vec2, Vec2) {
        let f = Vec2::from_angle(self.heading);
        (f, f.perp())
    }

    /// Corners in counter-clockwise order starting front-left.
    pub fn corners(&self) -> [Vec2; 4] {
        let (f, l) = self.axes();
        let fl = f * self.half_length;
        let lw = l * self.half_width;
        [
            self.center + fl + lw,
            self.center - fl + lw,
            self.center - fl - lw,
            self.center + fl - lw,
        ]
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let (f, l) = self.axes();
        let d = p - self.center;
        d.dot(f).abs() <= self.half_length && d.dot(l).abs() <= self.half_width
    }

    /// Separating-axis overlap test; touching counts as overlap.
    pub fn overlaps(&self, o: &Obb) -> bool {
        let (a0, a1) = self.axes();
        let (b0, b1) = o.axes();
        let d = o.center - self.center;
        for axis in [a0, a1, b0, b1] {
            let ra = self.half_length * a0.dot(axis).abs() + self.half_width * a1.dot(axis).abs();
            let rb = o.half_length * b0.dot(axis).abs() + o.half_width * b1.dot(axis).abs();
            if d.dot(axis).abs() > ra + rb {
                return false;
            }
        }
        true
    }
}
