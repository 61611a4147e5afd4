//! Planar and spatial primitives shared by every planning stage.

use serde::{Deserialize, Serialize};

/// Tolerance used for geometric predicates, in meters.
pub const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn with_z(&self, z: f64) -> Point3 {
        Point3::new(self.x, self.y, z)
    }

    fn sub(&self, other: &Point2) -> Point2 {
        Point2::new(self.x - other.x, self.y - other.y)
    }

    fn cross(&self, other: &Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn xy(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// Linear interpolation, `frac` in `[0, 1]`.
    pub fn lerp(&self, other: &Point3, frac: f64) -> Point3 {
        Point3::new(
            self.x + (other.x - self.x) * frac,
            self.y + (other.y - self.y) * frac,
            self.z + (other.z - self.z) * frac,
        )
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(v: [f64; 3]) -> Self {
        Point3::new(v[0], v[1], v[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        [p.x, p.y, p.z]
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub fn new(min: Point2, max: Point2) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
}

/// Simple polygon given by its vertices in order (either orientation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon {
    pub vertices: Vec<Point2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Self {
        Self { vertices }
    }

    /// Axis-aligned square centred on `center` with half side `half`.
    pub fn square(center: Point2, half: f64) -> Self {
        Self::new(vec![
            Point2::new(center.x - half, center.y - half),
            Point2::new(center.x + half, center.y - half),
            Point2::new(center.x + half, center.y + half),
            Point2::new(center.x - half, center.y + half),
        ])
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn signed_area(&self) -> f64 {
        self.edges().map(|(a, b)| a.cross(&b)).sum::<f64>() / 2.0
    }

    /// Strict interior test (points on the boundary are outside).
    pub fn contains(&self, p: &Point2) -> bool {
        if self.on_boundary(p) {
            return false;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x_at = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x_at {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn on_boundary(&self, p: &Point2) -> bool {
        self.edges().any(|(a, b)| point_on_segment(p, &a, &b))
    }

    /// True when no two non-adjacent edges intersect.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 || self.signed_area().abs() < GEOM_EPS {
            return false;
        }
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(&edges[i].0, &edges[i].1, &edges[j].0, &edges[j].1) {
                    return false;
                }
            }
        }
        true
    }

    /// True when the open segment `a`–`b` passes through the polygon interior.
    pub fn blocks_segment(&self, a: &Point2, b: &Point2) -> bool {
        for (p, q) in self.edges() {
            if segments_cross_properly(a, b, &p, &q) {
                return true;
            }
        }
        // Segments touching vertices or running along edges: probe interior samples.
        const PROBES: usize = 8;
        (1..PROBES).any(|k| {
            let t = k as f64 / PROBES as f64;
            let m = Point2::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
            self.contains(&m)
        })
    }

    /// Vertices pushed outward by `margin` along the miter direction.
    pub fn inflated_vertices(&self, margin: f64) -> Vec<Point2> {
        let n = self.vertices.len();
        let ccw = self.signed_area() > 0.0;
        let outward = |a: &Point2, b: &Point2| {
            let d = b.sub(a);
            let len = d.x.hypot(d.y);
            if ccw {
                Point2::new(d.y / len, -d.x / len)
            } else {
                Point2::new(-d.y / len, d.x / len)
            }
        };
        (0..n)
            .map(|i| {
                let prev = self.vertices[(i + n - 1) % n];
                let cur = self.vertices[i];
                let next = self.vertices[(i + 1) % n];
                let n1 = outward(&prev, &cur);
                let n2 = outward(&cur, &next);
                let mut dir = Point2::new(n1.x + n2.x, n1.y + n2.y);
                let len = dir.x.hypot(dir.y);
                if len < GEOM_EPS {
                    dir = n1;
                } else {
                    dir = Point2::new(dir.x / len, dir.y / len);
                }
                let cos_half = (dir.x * n1.x + dir.y * n1.y).max(0.2);
                let scale = margin / cos_half;
                Point2::new(cur.x + dir.x * scale, cur.y + dir.y * scale)
            })
            .collect()
    }
}

fn orientation(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    b.sub(a).cross(&c.sub(a))
}

pub fn point_on_segment(p: &Point2, a: &Point2, b: &Point2) -> bool {
    let len = a.distance(b);
    if orientation(a, b, p).abs() > GEOM_EPS * len.max(1.0) {
        return false;
    }
    p.x >= a.x.min(b.x) - GEOM_EPS
        && p.x <= a.x.max(b.x) + GEOM_EPS
        && p.y >= a.y.min(b.y) - GEOM_EPS
        && p.y <= a.y.max(b.y) + GEOM_EPS
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect(a: &Point2, b: &Point2, c: &Point2, d: &Point2) -> bool {
    if segments_cross_properly(a, b, c, d) {
        return true;
    }
    point_on_segment(c, a, b)
        || point_on_segment(d, a, b)
        || point_on_segment(a, c, d)
        || point_on_segment(b, c, d)
}

/// Proper crossing: the segments intersect at a single point interior to both.
pub fn segments_cross_properly(a: &Point2, b: &Point2, c: &Point2, d: &Point2) -> bool {
    let o1 = orientation(a, b, c);
    let o2 = orientation(a, b, d);
    let o3 = orientation(c, d, a);
    let o4 = orientation(c, d, b);
    let eps = GEOM_EPS;
    ((o1 > eps && o2 < -eps) || (o1 < -eps && o2 > eps))
        && ((o3 > eps && o4 < -eps) || (o3 < -eps && o4 > eps))
}

/// Length of a flight leg that climbs or descends vertically at the endpoints
/// and flies level in between.
pub fn leg_length(from: &Point3, to: &Point3) -> f64 {
    (from.z - to.z).abs() + from.xy().distance(&to.xy())
}

/// Total length of a 3-D polyline.
pub fn polyline_length(points: &[Point3]) -> f64 {
    points.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// Point at arc length `s` along a polyline (clamped to its ends).
pub fn point_along(points: &[Point3], s: f64) -> Point3 {
    let mut remaining = s.max(0.0);
    for w in points.windows(2) {
        let len = w[0].distance(&w[1]);
        if remaining <= len {
            if len <= 0.0 {
                return w[1];
            }
            return w[0].lerp(&w[1], remaining / len);
        }
        remaining -= len;
    }
    *points.last().expect("non-empty polyline")
}
