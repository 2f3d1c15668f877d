//! Planar/3D geometric primitives shared by graph construction, the world
//! simulator and both planners.
//!
//! Conventions:
//! - Positions are metric ([`Point3`], meters). Angles are radians normalized
//!   to `(-pi, pi]`.
//! - Polygons ([`Polygon2`]) are simple, counter-clockwise, and validated on
//!   construction; containment is planar (z is ignored) and boundary points
//!   count as inside.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for geometric predicates (on-boundary tests, collinearity).
pub const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("non-finite coordinate encountered")]
    NonFinite,
    #[error("polygon is self-intersecting (edges {0} and {1} cross)")]
    SelfIntersecting(usize, usize),
    #[error("degenerate geometry: points are collinear or polygon has zero area")]
    Degenerate,
}

/// A 3D position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Euclidean distance between two points.
pub fn euclidean(a: Point3, b: Point3) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Planar (xy) distance, used by the simulator's range checks.
pub fn planar_distance(a: Point3, b: Point3) -> f64 {
    let (dx, dy) = (a.x - b.x, a.y - b.y);
    (dx * dx + dy * dy).sqrt()
}

/// Normalize an angle to `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// A 6D pose: position plus yaw/pitch/roll. Only yaw is exercised by the
/// planar simulator but the full rotation is carried through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose6 {
    pub position: Point3,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Pose6 {
    /// Build a pose, normalizing all angles to `(-pi, pi]`.
    pub fn new(position: Point3, yaw: f64, pitch: f64, roll: f64) -> Self {
        Self {
            position,
            yaw: normalize_angle(yaw),
            pitch: normalize_angle(pitch),
            roll: normalize_angle(roll),
        }
    }

    pub fn level(position: Point3, yaw: f64) -> Self {
        Self::new(position, yaw, 0.0, 0.0)
    }

    pub fn identity() -> Self {
        Self::new(Point3::ORIGIN, 0.0, 0.0, 0.0)
    }
}

fn cross2(ox: f64, oy: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)
}

fn on_segment(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    let cross = cross2(ax, ay, bx, by, px, py);
    let len = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
    if cross.abs() > GEOM_EPS * len.max(1.0) {
        return false;
    }
    px >= ax.min(bx) - GEOM_EPS
        && px <= ax.max(bx) + GEOM_EPS
        && py >= ay.min(by) - GEOM_EPS
        && py <= ay.max(by) + GEOM_EPS
}

/// Proper or touching intersection of segments `a0-a1` and `b0-b1`.
pub(crate) fn segments_intersect(a0: [f64; 2], a1: [f64; 2], b0: [f64; 2], b1: [f64; 2]) -> bool {
    let d1 = cross2(b0[0], b0[1], b1[0], b1[1], a0[0], a0[1]);
    let d2 = cross2(b0[0], b0[1], b1[0], b1[1], a1[0], a1[1]);
    let d3 = cross2(a0[0], a0[1], a1[0], a1[1], b0[0], b0[1]);
    let d4 = cross2(a0[0], a0[1], a1[0], a1[1], b1[0], b1[1]);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    on_segment(a0[0], a0[1], b0[0], b0[1], b1[0], b1[1])
        || on_segment(a1[0], a1[1], b0[0], b0[1], b1[0], b1[1])
        || on_segment(b0[0], b0[1], a0[0], a0[1], a1[0], a1[1])
        || on_segment(b1[0], b1[1], a0[0], a0[1], a1[0], a1[1])
}

/// A simple counter-clockwise polygon in the xy plane.
///
/// Construction validates the invariants; deserialization goes through the
/// same validation, so every in-memory `Polygon2` is well-formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Polygon2 {
    vertices: Vec<[f64; 2]>,
}

impl TryFrom<Vec<[f64; 2]>> for Polygon2 {
    type Error = GeometryError;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        Polygon2::new(v)
    }
}

impl From<Polygon2> for Vec<[f64; 2]> {
    fn from(p: Polygon2) -> Self {
        p.vertices
    }
}

impl Polygon2 {
    /// Validate and build a polygon. Clockwise input is reversed so the
    /// stored winding is always counter-clockwise.
    pub fn new(mut vertices: Vec<[f64; 2]>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        if vertices
            .iter()
            .any(|v| !v[0].is_finite() || !v[1].is_finite())
        {
            return Err(GeometryError::NonFinite);
        }
        let area2 = signed_area2(&vertices);
        if area2.abs() < GEOM_EPS {
            return Err(GeometryError::Degenerate);
        }
        if area2 < 0.0 {
            vertices.reverse();
        }
        // Non-adjacent edge pairs must not touch.
        let n = vertices.len();
        for i in 0..n {
            let (a0, a1) = (vertices[i], vertices[(i + 1) % n]);
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let (b0, b1) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect(a0, a1, b0, b1) {
                    return Err(GeometryError::SelfIntersecting(i, j));
                }
            }
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle helper.
    pub fn rect(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self, GeometryError> {
        Self::new(vec![[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]])
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    /// Planar containment, boundary inclusive. The z coordinate of `p` is
    /// ignored.
    pub fn contains(&self, p: Point3) -> bool {
        let (px, py) = (p.x, p.y);
        let n = self.vertices.len();
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if on_segment(px, py, a[0], a[1], b[0], b[1]) {
                return true;
            }
        }
        // Ray cast toward +x.
        let mut inside = false;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let crosses = (a[1] > py) != (b[1] > py);
            if crosses {
                let x_at = a[0] + (py - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if x_at > px {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn area(&self) -> f64 {
        signed_area2(&self.vertices) / 2.0
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
            })
            .sum()
    }

    /// Area centroid, z = 0.
    pub fn centroid(&self) -> Point3 {
        let n = self.vertices.len();
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut acc = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let w = a[0] * b[1] - b[0] * a[1];
            cx += (a[0] + b[0]) * w;
            cy += (a[1] + b[1]) * w;
            acc += w;
        }
        Point3::xy(cx / (3.0 * acc), cy / (3.0 * acc))
    }

    /// Distance from a point to the polygon: 0 inside or on the boundary,
    /// otherwise the minimum distance to any edge. Equivalent to membership
    /// in the polygon dilated by that radius.
    pub fn distance_to(&self, p: Point3) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        let n = self.vertices.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            best = best.min(point_segment_distance(p.x, p.y, a, b));
        }
        best
    }

    /// True when every corner turns left (counter-clockwise convexity).
    pub fn is_convex(&self) -> bool {
        let v = &self.vertices;
        let n = v.len();
        (0..n).all(|i| {
            let a = v[i];
            let b = v[(i + 1) % n];
            let c = v[(i + 2) % n];
            cross2(a[0], a[1], b[0], b[1], c[0], c[1]) > -GEOM_EPS
        })
    }

    /// Dilate the polygon outward by `margin`, beveling the corners (each
    /// vertex expands to the two points offset along its adjacent edge
    /// normals). Only sound for convex polygons; non-convex input is
    /// rejected (a reflex corner would fold the offset boundary back across
    /// the shape).
    pub fn offset(&self, margin: f64) -> Result<Polygon2, GeometryError> {
        if !self.is_convex() {
            return Err(GeometryError::Degenerate);
        }
        if margin <= 0.0 || !margin.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        let v = &self.vertices;
        let n = v.len();
        let normal = |a: [f64; 2], b: [f64; 2]| -> [f64; 2] {
            let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
            let len = (ex * ex + ey * ey).sqrt();
            [ey / len, -ex / len]
        };
        let mut out: Vec<[f64; 2]> = Vec::with_capacity(2 * n);
        for i in 0..n {
            let prev = v[(i + n - 1) % n];
            let cur = v[i];
            let next = v[(i + 1) % n];
            let n_in = normal(prev, cur);
            let n_out = normal(cur, next);
            let a = [cur[0] + margin * n_in[0], cur[1] + margin * n_in[1]];
            let b = [cur[0] + margin * n_out[0], cur[1] + margin * n_out[1]];
            out.push(a);
            if (a[0] - b[0]).abs() > GEOM_EPS || (a[1] - b[1]).abs() > GEOM_EPS {
                out.push(b);
            }
        }
        Polygon2::new(out)
    }

    /// Point on the boundary at fraction `frac` of the perimeter (measured
    /// counter-clockwise from vertex 0), together with the outward unit
    /// normal of the edge it lies on.
    pub fn boundary_sample(&self, frac: f64) -> ([f64; 2], [f64; 2]) {
        let frac = frac.rem_euclid(1.0);
        let target = frac * self.perimeter();
        let n = self.vertices.len();
        let mut walked = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
            let len = (ex * ex + ey * ey).sqrt();
            if walked + len >= target || i == n - 1 {
                let t = if len > 0.0 {
                    ((target - walked) / len).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let point = [a[0] + t * ex, a[1] + t * ey];
                // CCW winding: the interior is left of the edge, outward is right.
                let normal = [ey / len, -ex / len];
                return (point, normal);
            }
            walked += len;
        }
        unreachable!("perimeter walk always terminates");
    }

    /// True when the segment `a-b` touches the polygon (boundary or interior).
    pub fn segment_intersects(&self, a: Point3, b: Point3) -> bool {
        if self.contains(a) || self.contains(b) {
            return true;
        }
        let (s0, s1) = ([a.x, a.y], [b.x, b.y]);
        let n = self.vertices.len();
        (0..n).any(|i| segments_intersect(s0, s1, self.vertices[i], self.vertices[(i + 1) % n]))
    }
}

fn point_segment_distance(px: f64, py: f64, a: [f64; 2], b: [f64; 2]) -> f64 {
    let (abx, aby) = (b[0] - a[0], b[1] - a[1]);
    let len2 = abx * abx + aby * aby;
    let t = if len2 <= 0.0 {
        0.0
    } else {
        (((px - a[0]) * abx + (py - a[1]) * aby) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + t * abx, a[1] + t * aby);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

fn signed_area2(vertices: &[[f64; 2]]) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|i| {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum()
}

/// Point-in-polygon check; boundary points count as inside.
pub fn point_in_polygon(p: Point3, poly: &Polygon2) -> bool {
    poly.contains(p)
}

/// Counter-clockwise convex hull of the xy projections (monotone chain,
/// strictly convex output: collinear boundary points are dropped).
pub fn convex_hull(points: &[Point3]) -> Result<Polygon2, GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::TooFewVertices(points.len()));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let mut pts: Vec<[f64; 2]> = points.iter().map(|p| [p.x, p.y]).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() <= GEOM_EPS && (a[1] - b[1]).abs() <= GEOM_EPS);
    if pts.len() < 3 {
        return Err(GeometryError::Degenerate);
    }

    let build = |iter: &mut dyn Iterator<Item = [f64; 2]>| -> Vec<[f64; 2]> {
        let mut chain: Vec<[f64; 2]> = Vec::new();
        for p in iter {
            while chain.len() >= 2 {
                let a = chain[chain.len() - 2];
                let b = chain[chain.len() - 1];
                if cross2(a[0], a[1], b[0], b[1], p[0], p[1]) <= GEOM_EPS {
                    chain.pop();
                } else {
                    break;
                }
            }
            chain.push(p);
        }
        chain
    };

    let mut hull = build(&mut pts.iter().copied());
    let mut upper = build(&mut pts.iter().rev().copied());
    hull.pop();
    upper.pop();
    hull.extend(upper);
    if hull.len() < 3 {
        return Err(GeometryError::Degenerate);
    }
    Polygon2::new(hull)
}
