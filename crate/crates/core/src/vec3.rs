// SPDX-License-Identifier: Apache-2.0

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cartesian three-vector. Used for momenta, positions and directions alike;
/// the physical meaning comes from the call site.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y).hypot(self.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Unit vector along `self`; fails for zero or non-finite input.
    pub fn unit(self) -> Result<Vec3> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::invalid(
                "vector",
                "cannot normalize a zero or non-finite vector",
            ));
        }
        Ok(self / n)
    }

    /// Two unit vectors completing `self` (assumed unit) to a right-handed
    /// orthonormal frame `(e1, e2, self)`.
    pub fn orthonormal_frame(self) -> (Vec3, Vec3) {
        let helper = if self.x.abs() <= self.y.abs() && self.x.abs() <= self.z.abs() {
            Vec3::X
        } else if self.y.abs() <= self.z.abs() {
            Vec3::Y
        } else {
            Vec3::Z
        };
        let e1 = (helper - self * helper.dot(self)) / (helper - self * helper.dot(self)).norm();
        let e2 = self.cross(e1);
        (e1, e2)
    }

    /// Component of `self` perpendicular to the unit vector `axis`.
    pub fn perpendicular_to(self, axis: Vec3) -> Vec3 {
        self - axis * self.dot(axis)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_is_orthonormal() {
        for v in [
            Vec3::Z,
            Vec3::new(1.0, 2.0, -0.5),
            Vec3::new(-3.0, 1e-9, 0.2),
        ] {
            let u = v.unit().unwrap();
            let (e1, e2) = u.orthonormal_frame();
            assert!((e1.norm() - 1.0).abs() < 1e-15);
            assert!((e2.norm() - 1.0).abs() < 1e-15);
            assert!(e1.dot(u).abs() < 1e-15);
            assert!(e2.dot(u).abs() < 1e-15);
            assert!(e1.dot(e2).abs() < 1e-15);
            assert!((e1.cross(e2) - u).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_vector_has_no_direction() {
        assert!(Vec3::ZERO.unit().is_err());
        assert!(Vec3::new(f64::NAN, 0.0, 1.0).unit().is_err());
    }
}
