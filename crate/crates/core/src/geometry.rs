//! Planar geometry: mirror-image virtual anchors, path lengths and bearings.
//!
//! All angles are azimuths in radians, wrapped to the half-open interval
//! `[-π, π)`.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A point (or displacement) in the plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

/// Velocities and displacements share the point representation.
pub type Vector2 = Point2;

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(radius * c, radius * s)
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    /// Direction angle `atan2(y, x)`; zero for the zero vector.
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
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

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
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

/// A reflecting surface, represented by two distinct points on it.
///
/// Reflections use the infinite line through the endpoints; visibility of the
/// specular point on the finite segment is not checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallSegment {
    pub endpoint_a: Point2,
    pub endpoint_b: Point2,
}

impl WallSegment {
    pub fn new(endpoint_a: Point2, endpoint_b: Point2) -> Result<Self> {
        let wall = Self {
            endpoint_a,
            endpoint_b,
        };
        wall.direction()?;
        Ok(wall)
    }

    /// Unit direction along the wall.
    pub fn direction(&self) -> Result<Vector2> {
        let d = self.endpoint_b - self.endpoint_a;
        let len = d.norm();
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::DegenerateWall);
        }
        Ok(d * (1.0 / len))
    }
}

/// Environment geometry used to synthesize propagation paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// Physical anchor position.
    pub anchor: Point2,
    /// Reference orientation of the anchor array for departure angles.
    pub anchor_aod_orientation: f64,
    pub walls: Vec<WallSegment>,
    pub scatterers: Vec<Point2>,
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(angle: f64) -> f64 {
    let w = angle - TAU * ((angle + PI) / TAU).floor();
    // Rounding can land exactly on +π for inputs just below an odd multiple.
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// Array orientation of the agent, given by its direction of motion.
pub fn orientation_from_velocity(v: Vector2) -> Result<f64> {
    if v.x == 0.0 && v.y == 0.0 {
        return Err(Error::UndefinedOrientation);
    }
    Ok(wrap_angle(v.angle()))
}

/// Reflection of `p` across the line through `wall`.
pub fn mirror_point(p: Point2, wall: &WallSegment) -> Result<Point2> {
    let u = wall.direction()?;
    let rel = p - wall.endpoint_a;
    let along = u * rel.dot(u);
    let foot = wall.endpoint_a + along;
    Ok(foot * 2.0 - p)
}

/// Virtual anchor for a reflection sequence: the anchor is mirrored at
/// `walls[0]` first, then at `walls[1]`, and so on.
pub fn virtual_anchor(anchor: Point2, walls: &[WallSegment]) -> Result<Point2> {
    walls.iter().try_fold(anchor, |p, w| mirror_point(p, w))
}

/// Intersection of the line through `p` and `q` with the line through `wall`.
fn intersect_with_wall(p: Point2, q: Point2, wall: &WallSegment) -> Option<Point2> {
    let u = wall.direction().ok()?;
    let d = q - p;
    let denom = d.cross(u);
    if denom.abs() < 1e-12 * d.norm().max(1.0) {
        return None;
    }
    let t = (wall.endpoint_a - p).cross(u) / denom;
    Some(p + d * t)
}

/// Specular reflection points of the path anchor → walls → agent, ordered
/// from the anchor side. Empty for the line-of-sight path.
pub fn reflection_points(
    anchor: Point2,
    walls: &[WallSegment],
    agent: Point2,
) -> Result<Vec<Point2>> {
    let mut images = Vec::with_capacity(walls.len());
    let mut img = anchor;
    for w in walls {
        img = mirror_point(img, w)?;
        images.push(img);
    }
    let mut points = vec![Point2::ORIGIN; walls.len()];
    let mut target = agent;
    for i in (0..walls.len()).rev() {
        let r = intersect_with_wall(target, images[i], &walls[i]).ok_or_else(|| {
            Error::InvalidScenario("reflection path parallel to wall".to_string())
        })?;
        points[i] = r;
        target = r;
    }
    Ok(points)
}

/// Path length of a virtual-anchor path (equal to the distance to the image).
pub fn dist_va(p_agent: Point2, p_va: Point2) -> f64 {
    p_agent.distance(p_va)
}

/// Path length anchor → scatterer → agent.
pub fn dist_ps(p_agent: Point2, p_ps: Point2, p_anchor: Point2) -> f64 {
    p_anchor.distance(p_ps) + p_ps.distance(p_agent)
}

/// Direction from `p_from` to `p_to`, relative to an array oriented at
/// `orientation`.
pub fn bearing(p_from: Point2, p_to: Point2, orientation: f64) -> Result<f64> {
    let d = p_to - p_from;
    if d.x == 0.0 && d.y == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok(wrap_angle(d.angle() - orientation))
}

/// Virtual-anchor position consistent with a distance and arrival angle
/// observed from `p_agent`.
pub fn invert_va(p_agent: Point2, orientation: f64, dist: f64, aoa: f64) -> Point2 {
    p_agent + Point2::from_polar(dist, aoa + orientation)
}

/// Scatterer position on the arrival ray whose anchor → scatterer → agent
/// path length equals `dist`. `None` when the path is not longer than the
/// direct anchor–agent distance.
pub fn invert_ps(
    p_agent: Point2,
    orientation: f64,
    p_anchor: Point2,
    dist: f64,
    aoa: f64,
) -> Option<Point2> {
    let e = Point2::from_polar(1.0, aoa + orientation);
    let w = p_anchor - p_agent;
    let denom = 2.0 * (dist - w.dot(e));
    let num = dist * dist - w.norm_squared();
    if !(num > 0.0) || !(denom > 0.0) {
        return None;
    }
    let t = num / denom;
    if !(t > 0.0 && t < dist) {
        return None;
    }
    Some(p_agent + e * t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn x_axis() -> WallSegment {
        WallSegment::new(Point2::new(-1.0, 0.0), Point2::new(1.0, 0.0)).unwrap()
    }

    #[test]
    fn orientation_examples() {
        assert_eq!(
            orientation_from_velocity(Point2::new(1.0, 0.0)).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            orientation_from_velocity(Point2::new(1.0, 1.0)).unwrap(),
            PI / 4.0,
            epsilon = 1e-15
        );
        assert_eq!(
            orientation_from_velocity(Point2::ORIGIN),
            Err(Error::UndefinedOrientation)
        );
    }

    #[test]
    fn mirror_examples() {
        let m = mirror_point(Point2::new(1.0, 1.0), &x_axis()).unwrap();
        assert_abs_diff_eq!(m.x, 1.0);
        assert_abs_diff_eq!(m.y, -1.0);
        let y1 = WallSegment::new(Point2::new(0.0, 1.0), Point2::new(3.0, 1.0)).unwrap();
        let m = mirror_point(Point2::new(0.0, 2.0), &y1).unwrap();
        assert_abs_diff_eq!(m.x, 0.0);
        assert_abs_diff_eq!(m.y, 0.0);
        assert!(WallSegment::new(Point2::ORIGIN, Point2::ORIGIN).is_err());
    }

    #[test]
    fn distance_examples() {
        assert_eq!(dist_va(Point2::ORIGIN, Point2::new(3.0, 4.0)), 5.0);
        assert_eq!(dist_va(Point2::new(2.0, 7.0), Point2::new(2.0, 7.0)), 0.0);
        let d = dist_ps(Point2::new(3.0, 0.0), Point2::new(3.0, 4.0), Point2::ORIGIN);
        assert_abs_diff_eq!(d, 9.0);
        let a = Point2::new(1.0, 2.0);
        let p = Point2::new(-4.0, 0.5);
        assert_abs_diff_eq!(dist_ps(p, a, a), dist_va(p, a));
    }

    #[test]
    fn bearing_examples() {
        assert_eq!(
            bearing(Point2::ORIGIN, Point2::new(1.0, 0.0), 0.0).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            bearing(Point2::ORIGIN, Point2::new(0.0, 1.0), PI / 2.0).unwrap(),
            0.0
        );
        assert_eq!(
            bearing(Point2::ORIGIN, Point2::new(-1.0, 0.0), 0.0).unwrap(),
            -PI
        );
        assert!(bearing(Point2::ORIGIN, Point2::ORIGIN, 0.0).is_err());
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert!(wrap_angle(PI - 1e-12) < PI);
    }

    #[test]
    fn reflection_point_lies_on_wall_and_gives_path_length() {
        let wall = WallSegment::new(Point2::new(0.0, -3.0), Point2::new(5.0, -3.0)).unwrap();
        let anchor = Point2::new(0.0, 6.0);
        let agent = Point2::new(4.0, 0.0);
        let va = virtual_anchor(anchor, &[wall]).unwrap();
        let r = reflection_points(anchor, &[wall], agent).unwrap();
        assert_abs_diff_eq!(r[0].y, -3.0, epsilon = 1e-12);
        let len = anchor.distance(r[0]) + r[0].distance(agent);
        assert_abs_diff_eq!(len, dist_va(agent, va), epsilon = 1e-12);
    }

    #[test]
    fn second_order_reflection_path_length() {
        let w1 = WallSegment::new(Point2::new(0.0, -3.0), Point2::new(5.0, -3.0)).unwrap();
        let w2 = WallSegment::new(Point2::new(15.0, -10.0), Point2::new(15.0, 20.0)).unwrap();
        let anchor = Point2::new(0.0, 6.0);
        let agent = Point2::new(4.0, 0.0);
        // Perpendicular walls: the image does not depend on the order.
        let va = virtual_anchor(anchor, &[w1, w2]).unwrap();
        assert_abs_diff_eq!(va.x, 30.0, epsilon = 1e-12);
        assert_abs_diff_eq!(va.y, -12.0, epsilon = 1e-12);
        // Only the order x = 15 first, then y = -3 is a valid specular path.
        let r = reflection_points(anchor, &[w2, w1], agent).unwrap();
        assert_abs_diff_eq!(r[0].x, 15.0, epsilon = 1e-12);
        assert!(r[0].y > -3.0);
        assert_abs_diff_eq!(r[1].y, -3.0, epsilon = 1e-12);
        let len = anchor.distance(r[0]) + r[0].distance(r[1]) + r[1].distance(agent);
        assert_abs_diff_eq!(len, dist_va(agent, va), epsilon = 1e-10);
    }

    #[test]
    fn ps_inversion_recovers_scatterer() {
        let anchor = Point2::new(0.0, 6.0);
        let ps = Point2::new(6.0, 3.0);
        let agent = Point2::new(2.0, 0.0);
        let orient = 0.3;
        let d = dist_ps(agent, ps, anchor);
        let aoa = bearing(agent, ps, orient).unwrap();
        let back = invert_ps(agent, orient, anchor, d, aoa).unwrap();
        assert_abs_diff_eq!(back.x, ps.x, epsilon = 1e-9);
        assert_abs_diff_eq!(back.y, ps.y, epsilon = 1e-9);
        // Shorter than line of sight: no scatterer can explain it.
        assert!(invert_ps(agent, orient, anchor, 0.9 * agent.distance(anchor), aoa).is_none());
    }

    fn point() -> impl Strategy<Value = Point2> {
        (-50.0..50.0f64, -50.0..50.0f64).prop_map(|(x, y)| Point2::new(x, y))
    }

    proptest! {
        #[test]
        fn mirror_is_involution(p in point(), a in point(), b in point()) {
            prop_assume!(a.distance(b) > 1e-3);
            let w = WallSegment::new(a, b).unwrap();
            let back = mirror_point(mirror_point(p, &w).unwrap(), &w).unwrap();
            prop_assert!(back.distance(p) < 1e-9);
        }

        #[test]
        fn ps_path_not_shorter_than_direct(agent in point(), ps in point(), anchor in point()) {
            prop_assert!(dist_ps(agent, ps, anchor) >= dist_va(agent, anchor) - 1e-12);
        }

        #[test]
        fn bearing_range_and_periodicity(a in point(), b in point(), theta in -10.0..10.0f64) {
            prop_assume!(a.distance(b) > 1e-6);
            let x = bearing(a, b, theta).unwrap();
            prop_assert!((-PI..PI).contains(&x));
            let y = bearing(a, b, theta + TAU).unwrap();
            let diff = wrap_angle(x - y).abs();
            prop_assert!(diff < 1e-9);
        }
    }
}
