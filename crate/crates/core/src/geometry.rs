//! Floorplans, virtual anchors and reflection-path visibility.
//!
//! A virtual anchor (VA) is the image of a physical node after mirroring it
//! across a sequence of walls. The distance from an agent to a VA equals the
//! length of the corresponding specular reflection path, provided the path
//! actually exists inside the floorplan, which [`reflection_path`] checks.

use std::f64::consts::PI;

use nalgebra::Vector2;

use crate::error::{Error, Result};

/// A point or displacement in the plane, in meters.
pub type Point = Vector2<f64>;

/// Distance below which two points or a point and a line are considered to
/// coincide.
pub const GEOMETRY_EPS: f64 = 1e-9;

/// 2-D cross product (z component).
#[inline]
pub(crate) fn cross(a: &Point, b: &Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// A straight, opaque, reflecting wall segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Wall {
    a: Point,
    b: Point,
    angle: f64,
}

impl Wall {
    pub fn new(a: Point, b: Point) -> Result<Self> {
        let d = b - a;
        if !(d.x.is_finite() && d.y.is_finite()) || d.norm() < GEOMETRY_EPS {
            return Err(Error::InvalidGeometry(format!(
                "degenerate wall from ({}, {}) to ({}, {})",
                a.x, a.y, b.x, b.y
            )));
        }
        // Orientation of the wall line, reduced to [0, pi).
        let mut angle = d.y.atan2(d.x).rem_euclid(PI);
        if angle >= PI {
            angle = 0.0;
        }
        Ok(Self { a, b, angle })
    }

    pub fn a(&self) -> Point {
        self.a
    }

    pub fn b(&self) -> Point {
        self.b
    }

    /// Orientation of the wall line in `[0, pi)`, measured from the +x axis.
    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    /// Distance from `p` to the closest point of the segment.
    pub fn distance_to(&self, p: &Point) -> f64 {
        let d = self.b - self.a;
        let t = ((p - self.a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
        (self.a + d * t - p).norm()
    }
}

/// Reflection of `p` across the infinite line through `wall`.
pub fn mirror_point(p: &Point, wall: &Wall) -> Point {
    let u = (wall.b - wall.a).normalize();
    let foot = wall.a + u * (p - wall.a).dot(&u);
    foot * 2.0 - p
}

/// Alternating sum of wall angles `γ_1 − γ_2 + γ_3 − …` along a reflection
/// sequence. The empty sequence gives zero.
pub fn effective_wall_angle<I>(angles: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    angles
        .into_iter()
        .enumerate()
        .map(|(q, g)| if q % 2 == 0 { g } else { -g })
        .sum()
}

/// Walls plus the boundary polygon used for point-in-room tests and grids.
#[derive(Debug, Clone)]
pub struct Floorplan {
    walls: Vec<Wall>,
    boundary: Vec<Point>,
}

impl Floorplan {
    pub fn new(walls: Vec<Wall>, boundary: Vec<Point>) -> Result<Self> {
        if boundary.len() < 3 {
            return Err(Error::InvalidGeometry(
                "boundary polygon needs at least three vertices".into(),
            ));
        }
        if !polygon_is_simple(&boundary) {
            return Err(Error::InvalidGeometry(
                "boundary polygon is self-intersecting".into(),
            ));
        }
        let plan = Self { walls, boundary };
        for (i, w) in plan.walls.iter().enumerate() {
            let mid = (w.a + w.b) * 0.5;
            for p in [w.a, w.b, mid] {
                if !plan.contains(&p) && plan.distance_to_boundary(&p) > 1e-6 {
                    return Err(Error::InvalidGeometry(format!(
                        "wall {i} leaves the boundary polygon"
                    )));
                }
            }
        }
        Ok(plan)
    }

    /// Rectangular room whose four sides are the walls.
    pub fn rectangle(x0: f64, y0: f64, width: f64, height: f64) -> Result<Self> {
        let boundary = vec![
            Point::new(x0, y0),
            Point::new(x0 + width, y0),
            Point::new(x0 + width, y0 + height),
            Point::new(x0, y0 + height),
        ];
        let walls = polygon_edges(&boundary)?;
        Self::new(walls, boundary)
    }

    /// The 10 m x 7.2 m example room, placed at x in [0.2, 10.2] so that an
    /// anchor at (10, 7) sits 0.2 m from the two nearest walls.
    pub fn example_room() -> Self {
        Self::rectangle(0.2, 0.0, 10.0, 7.2).expect("example room is valid")
    }

    pub fn walls(&self) -> &[Wall] {
        &self.walls
    }

    pub fn boundary(&self) -> &[Point] {
        &self.boundary
    }

    /// Axis-aligned bounding box `(min, max)` of the boundary polygon.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.boundary {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Even-odd point-in-polygon test. Points on the boundary are not
    /// reliably classified; callers that care should also check
    /// [`Floorplan::distance_to_boundary`].
    pub fn contains(&self, p: &Point) -> bool {
        let n = self.boundary.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (pi, pj) = (self.boundary[i], self.boundary[j]);
            if (pi.y > p.y) != (pj.y > p.y) {
                let x = pj.x + (p.y - pj.y) / (pi.y - pj.y) * (pi.x - pj.x);
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn distance_to_boundary(&self, p: &Point) -> f64 {
        let n = self.boundary.len();
        (0..n)
            .map(|i| segment_distance(p, &self.boundary[i], &self.boundary[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance to the nearest wall, `inf` without walls.
    pub fn distance_to_nearest_wall(&self, p: &Point) -> f64 {
        self.walls
            .iter()
            .map(|w| w.distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Walls along every edge of a closed polygon.
pub fn polygon_edges(polygon: &[Point]) -> Result<Vec<Wall>> {
    let n = polygon.len();
    (0..n)
        .map(|i| Wall::new(polygon[i], polygon[(i + 1) % n]))
        .collect()
}

fn segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&d) / len2).clamp(0.0, 1.0);
    (a + d * t - p).norm()
}

/// Proper crossing of two closed segments (shared endpoints of adjacent
/// polygon edges do not count).
fn segments_cross(a: &Point, b: &Point, c: &Point, d: &Point) -> bool {
    let o1 = cross(&(b - a), &(c - a));
    let o2 = cross(&(b - a), &(d - a));
    let o3 = cross(&(d - c), &(a - c));
    let o4 = cross(&(d - c), &(b - c));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

fn polygon_is_simple(poly: &[Point]) -> bool {
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (b - a).norm() < GEOMETRY_EPS {
            return false;
        }
        for j in i + 1..n {
            // skip neighbouring edges
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if segments_cross(&a, &b, &c, &d) {
                return false;
            }
        }
    }
    true
}

/// Mirror image of a physical node across a sequence of walls.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualAnchor {
    /// Image position in meters.
    pub position: Point,
    /// Position of the physical node the image was built from.
    pub source: Point,
    /// Index of the physical node.
    pub parent: usize,
    /// Wall indices in the order the signal meets them, starting at the
    /// transmitter.
    pub walls: Vec<usize>,
    /// Alternating sum of the wall angles along `walls`.
    pub effective_angle: f64,
}

impl VirtualAnchor {
    /// The physical node itself (order zero).
    pub fn physical(position: Point, parent: usize) -> Self {
        Self {
            position,
            source: position,
            parent,
            walls: Vec::new(),
            effective_angle: 0.0,
        }
    }

    /// Number of reflections.
    pub fn order(&self) -> usize {
        self.walls.len()
    }
}

/// All virtual anchors of `node` up to order `q_max`, ordered by increasing
/// order and then lexicographically by wall sequence. Consecutive reflections
/// off the same wall cancel and are not generated.
pub fn build_vas(node: Point, parent: usize, plan: &Floorplan, q_max: usize) -> Vec<VirtualAnchor> {
    let mut out = vec![VirtualAnchor::physical(node, parent)];
    let mut frontier = 0..1;
    for _ in 0..q_max {
        let start = out.len();
        for idx in frontier.clone() {
            let base = out[idx].clone();
            for (w, wall) in plan.walls().iter().enumerate() {
                if base.walls.last() == Some(&w) {
                    continue;
                }
                let mut walls = base.walls.clone();
                walls.push(w);
                let sign = if base.order() % 2 == 0 { 1.0 } else { -1.0 };
                out.push(VirtualAnchor {
                    position: mirror_point(&base.position, wall),
                    source: node,
                    parent,
                    walls,
                    effective_angle: base.effective_angle + sign * wall.angle(),
                });
            }
        }
        frontier = start..out.len();
    }
    out
}

/// Unfold the straight agent-to-VA line back through the mirror sequence.
///
/// Returns the physical polyline `[source, r_1, ..., r_Q, agent]` when every
/// reflection point lies strictly inside its wall segment and no wall blocks
/// any leg of the path; `Ok(None)` when the path does not exist.
pub fn reflection_path(
    agent: &Point,
    va: &VirtualAnchor,
    plan: &Floorplan,
) -> Result<Option<Vec<Point>>> {
    let walls = plan.walls();
    if let Some(&bad) = va.walls.iter().find(|&&w| w >= walls.len()) {
        return Err(Error::InvalidGeometry(format!(
            "virtual anchor references missing wall {bad}"
        )));
    }

    // images[q] is the source mirrored across the first q walls
    let mut images = Vec::with_capacity(va.order() + 1);
    images.push(va.source);
    for &w in &va.walls {
        let last = *images.last().unwrap();
        images.push(mirror_point(&last, &walls[w]));
    }

    let mut path = Vec::with_capacity(va.order() + 2);
    path.push(*agent);
    let mut from = *agent;
    for q in (0..va.order()).rev() {
        let wall = &walls[va.walls[q]];
        let image = images[q + 1];
        let d = image - from;
        let len = d.norm();
        let w = wall.b - wall.a;
        let denom = cross(&d, &w);
        if len < GEOMETRY_EPS || denom.abs() < 1e-15 * len * wall.length() {
            return Ok(None);
        }
        let rel = wall.a - from;
        let t = cross(&rel, &w) / denom;
        let s = cross(&rel, &d) / denom;
        let s_eps = GEOMETRY_EPS / wall.length();
        if t * len <= GEOMETRY_EPS || (1.0 - t) * len <= GEOMETRY_EPS || s <= s_eps || s >= 1.0 - s_eps
        {
            return Ok(None);
        }
        let r = from + d * t;
        path.push(r);
        from = r;
    }
    path.push(va.source);
    path.reverse();

    for leg in path.windows(2) {
        if leg_blocked(&leg[0], &leg[1], walls) {
            return Ok(None);
        }
    }
    Ok(Some(path))
}

fn leg_blocked(u: &Point, v: &Point, walls: &[Wall]) -> bool {
    let d = v - u;
    let len = d.norm();
    if len < GEOMETRY_EPS {
        return false;
    }
    walls.iter().any(|wall| {
        let w = wall.b - wall.a;
        let denom = cross(&d, &w);
        if denom.abs() < 1e-15 * len * wall.length() {
            return false;
        }
        let rel = wall.a - u;
        let t = cross(&rel, &w) / denom;
        let s = cross(&rel, &d) / denom;
        let s_eps = GEOMETRY_EPS / wall.length();
        t * len > GEOMETRY_EPS && (1.0 - t) * len > GEOMETRY_EPS && s >= -s_eps && s <= 1.0 + s_eps
    })
}

/// Total length of a polyline.
pub fn path_length(path: &[Point]) -> f64 {
    path.windows(2).map(|l| (l[1] - l[0]).norm()).sum()
}
