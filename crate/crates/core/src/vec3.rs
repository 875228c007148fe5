//! Real and complex 3-vectors in the convention used throughout: the dot
//! product `(a | b)` of two complex vectors pairs `a` with the conjugate of
//! `b`.

use num_complex::Complex64 as C64;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3([
            self.0[1] * o.0[2] - self.0[2] * o.0[1],
            self.0[2] * o.0[0] - self.0[0] * o.0[2],
            self.0[0] * o.0[1] - self.0[1] * o.0[0],
        ])
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector along `self`; panics on the zero vector.
    pub fn unit(self) -> Vec3 {
        let n = self.norm();
        assert!(n > 0.0, "unit() of zero vector");
        self * (1.0 / n)
    }

    pub fn as_complex(self) -> CVec3 {
        CVec3([self.0[0].into(), self.0[1].into(), self.0[2].into()])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        self * -1.0
    }
}

/// Complex 3-vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CVec3(pub [C64; 3]);

impl CVec3 {
    pub const ZERO: CVec3 = CVec3([C64::new(0.0, 0.0); 3]);

    /// `(self | other)`: dot product with the conjugate of `other`.
    pub fn dot_conj(self, o: CVec3) -> C64 {
        self.0[0] * o.0[0].conj() + self.0[1] * o.0[1].conj() + self.0[2] * o.0[2].conj()
    }

    /// Plain bilinear dot product (no conjugation).
    pub fn dot(self, o: CVec3) -> C64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn norm_sq(self) -> f64 {
        self.dot_conj(self).re
    }

    pub fn cross(self, o: CVec3) -> CVec3 {
        CVec3([
            self.0[1] * o.0[2] - self.0[2] * o.0[1],
            self.0[2] * o.0[0] - self.0[0] * o.0[2],
            self.0[0] * o.0[1] - self.0[1] * o.0[0],
        ])
    }

    /// Component of `self` parallel to the real unit vector `dir`.
    pub fn parallel_to(self, dir: Vec3) -> CVec3 {
        let amp = self.dot(dir.as_complex());
        dir.as_complex() * amp
    }

    /// Component of `self` orthogonal to the real unit vector `dir`.
    pub fn perp_to(self, dir: Vec3) -> CVec3 {
        self - self.parallel_to(dir)
    }
}

impl Add for CVec3 {
    type Output = CVec3;
    fn add(self, o: CVec3) -> CVec3 {
        CVec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for CVec3 {
    type Output = CVec3;
    fn sub(self, o: CVec3) -> CVec3 {
        CVec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Mul<C64> for CVec3 {
    type Output = CVec3;
    fn mul(self, s: C64) -> CVec3 {
        CVec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Mul<f64> for CVec3 {
    type Output = CVec3;
    fn mul(self, s: f64) -> CVec3 {
        CVec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Neg for CVec3 {
    type Output = CVec3;
    fn neg(self) -> CVec3 {
        self * -1.0
    }
}

/// `i k x v` for a real wavevector `k` and complex `v`.
pub fn ik_cross(k: Vec3, v: CVec3) -> CVec3 {
    let i = C64::new(0.0, 1.0);
    CVec3([
        i * (k.0[1] * v.0[2] - k.0[2] * v.0[1]),
        i * (k.0[2] * v.0[0] - k.0[0] * v.0[2]),
        i * (k.0[0] * v.0[1] - k.0[1] * v.0[0]),
    ])
}

/// `i k . v` for a real wavevector `k` and complex `v`.
pub fn ik_dot(k: Vec3, v: CVec3) -> C64 {
    C64::new(0.0, 1.0) * (v.0[0] * k.0[0] + v.0[1] * k.0[1] + v.0[2] * k.0[2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_is_orthogonal() {
        let a = Vec3::new(1.0, 2.0, 3.0);
        let b = Vec3::new(-0.3, 0.5, 2.0);
        let c = a.cross(b);
        assert!(c.dot(a).abs() < 1e-14);
        assert!(c.dot(b).abs() < 1e-14);
    }

    #[test]
    fn ik_cross_twice_on_transverse_vector() {
        // i k x (i k x v) = |k|^2 v for v orthogonal to k
        let k = Vec3::new(0.4, -1.1, 0.7);
        let v0 = CVec3([C64::new(1.0, 0.5), C64::new(-0.2, 0.3), C64::new(0.0, -1.0)]);
        let v = v0.perp_to(k.unit());
        let w = ik_cross(k, ik_cross(k, v));
        let expect = v * k.dot(k);
        for j in 0..3 {
            assert!((w.0[j] - expect.0[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn parallel_perp_decomposition() {
        let d = Vec3::new(0.0, 0.0, 1.0);
        let v = CVec3([C64::new(1.0, 0.0), C64::new(2.0, 1.0), C64::new(3.0, -1.0)]);
        let par = v.parallel_to(d);
        let perp = v.perp_to(d);
        assert_eq!(par.0[0], C64::new(0.0, 0.0));
        assert_eq!(perp.0[2], C64::new(0.0, 0.0));
        for j in 0..3 {
            assert!(((par + perp).0[j] - v.0[j]).norm() < 1e-15);
        }
    }
}
