//! Planar vectors and collision cones between pairs of robots.
//!
//! A collision cone `C_ij` is anchored at robot `i`, points toward robot `j`
//! and opens with half-angle `asin(D / |R_j - R_i|)`. The relative velocity
//! `v_i - v_j` lying strictly inside the cone means the two robots, holding
//! their velocities, will come closer than `D` at some future time.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when checking that a direction is unit length.
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-finite {what}: ({x}, {y})")]
    NonFinite { what: &'static str, x: f64, y: f64 },
    #[error("safety distance must be positive and finite, got {0}")]
    SafetyDistance(f64),
}

/// A 2-D vector. Positions are in meters, velocities in meters per second.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Checked constructor, rejects NaN and infinities.
    pub fn try_new(x: f64, y: f64) -> Result<Self, GeometryError> {
        Self::new(x, y).checked("vector")
    }

    pub fn checked(self, what: &'static str) -> Result<Self, GeometryError> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(GeometryError::NonFinite { what, x: self.x, y: self.y })
        }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (other - self).norm()
    }

    /// Unit vector in the same direction, `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self / n)
    }

    /// Unit vector, or the zero vector when `self` has no direction.
    pub fn unit_or_zero(self) -> Vec2 {
        self.normalized().unwrap_or(Vec2::ZERO)
    }

    /// Counterclockwise rotation by `theta` radians.
    pub fn rotated(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Unsigned angle to `other` in `[0, π]`, via atan2 of cross and dot.
    pub fn angle_to(self, other: Vec2) -> f64 {
        self.cross(other).abs().atan2(self.dot(other))
    }

    /// Rescales to at most `max_norm`, keeping direction.
    pub fn clamp_norm(self, max_norm: f64) -> Vec2 {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self * (max_norm / n)
        } else {
            self
        }
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, k: f64) -> Vec2 {
        Vec2::new(self.x / k, self.y / k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Cone of relative-velocity directions that lead robot `i` to within the
/// safety distance of robot `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionCone {
    /// Position of robot `i`.
    pub apex: Vec2,
    /// Unit vector from `i` toward `j`.
    pub axis: Vec2,
    pub half_angle: f64,
    pub center_distance: f64,
    pub safety_distance: f64,
}

impl CollisionCone {
    /// Strict angular membership; the boundary and the zero vector are outside.
    pub fn contains(&self, relative_velocity: Vec2) -> bool {
        if relative_velocity.norm_squared() == 0.0 {
            return false;
        }
        self.axis.angle_to(relative_velocity) < self.half_angle
    }
}

/// Result of [`build_cone`]. `Degenerate` means the robots are already inside
/// each other's safety disk, which is treated as a predicted collision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cone {
    Proper(CollisionCone),
    Degenerate,
}

impl Cone {
    pub fn contains(&self, relative_velocity: Vec2) -> bool {
        match self {
            Cone::Proper(cone) => cone.contains(relative_velocity),
            Cone::Degenerate => true,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Cone::Degenerate)
    }
}

pub fn build_cone(r_i: Vec2, r_j: Vec2, safety_distance: f64) -> Result<Cone, GeometryError> {
    r_i.checked("position")?;
    r_j.checked("position")?;
    if !(safety_distance > 0.0 && safety_distance.is_finite()) {
        return Err(GeometryError::SafetyDistance(safety_distance));
    }
    let offset = r_j - r_i;
    let center_distance = offset.norm();
    if center_distance <= safety_distance {
        return Ok(Cone::Degenerate);
    }
    Ok(Cone::Proper(CollisionCone {
        apex: r_i,
        axis: offset / center_distance,
        half_angle: (safety_distance / center_distance).asin().min(FRAC_PI_2),
        center_distance,
        safety_distance,
    }))
}

/// Tests whether `v_i - v_j` lies in `cone`.
pub fn relative_velocity_in_cone(cone: &Cone, v_i: Vec2, v_j: Vec2) -> bool {
    cone.contains(v_i - v_j)
}

/// Smallest distance between two robots moving at constant velocity over
/// `t >= 0`.
pub fn min_future_separation(r_i: Vec2, v_i: Vec2, r_j: Vec2, v_j: Vec2) -> f64 {
    let p = r_i - r_j;
    let v = v_i - v_j;
    let vv = v.norm_squared();
    if vv == 0.0 {
        return p.norm();
    }
    let t = (-p.dot(v) / vv).max(0.0);
    (p + v * t).norm()
}
