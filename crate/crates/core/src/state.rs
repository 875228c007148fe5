//! The per-mode spectral state of the linearized system.

use num_complex::Complex64 as C64;

use crate::vec3::{ik_dot, CVec3, Vec3};

/// Fourier coefficients `[rho, u, E, B]` of the linearized fields at one
/// wavevector: 10 complex components.
///
/// Compatible states satisfy the Gauss constraints `i k . E = -rho` and
/// `k . B = 0`; both are preserved exactly by the evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralState {
    pub k: Vec3,
    pub rho: C64,
    pub u: CVec3,
    pub e: CVec3,
    pub b: CVec3,
}

impl SpectralState {
    pub fn zero(k: Vec3) -> Self {
        SpectralState { k, rho: C64::new(0.0, 0.0), u: CVec3::ZERO, e: CVec3::ZERO, b: CVec3::ZERO }
    }

    /// Unweighted modulus squared `|rho|^2 + |u|^2 + |E|^2 + |B|^2`.
    pub fn norm_sq(&self) -> f64 {
        self.rho.norm_sqr() + self.u.norm_sq() + self.e.norm_sq() + self.b.norm_sq()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Gamma-weighted modulus squared (the base energy).
    pub fn weighted_norm_sq(&self, gamma: f64) -> f64 {
        gamma * self.rho.norm_sqr() + self.u.norm_sq() + self.e.norm_sq() + self.b.norm_sq()
    }

    /// Residuals of the two compatibility constraints:
    /// `(|i k.E + rho|, |k.B|)`.
    pub fn compat_residual(&self) -> (f64, f64) {
        let gauss = (ik_dot(self.k, self.e) + self.rho).norm();
        let div_b = self.k.as_complex().dot(self.b).norm();
        (gauss, div_b)
    }

    /// Largest constraint residual relative to the state size.
    pub fn compat_residual_rel(&self) -> f64 {
        let (g, d) = self.compat_residual();
        let scale = self.norm().max(1e-300) * (1.0 + self.k.norm());
        g.max(d) / scale
    }

    pub fn scaled(&self, s: C64) -> Self {
        SpectralState { k: self.k, rho: self.rho * s, u: self.u * s, e: self.e * s, b: self.b * s }
    }

    pub fn add(&self, o: &SpectralState) -> Self {
        SpectralState {
            k: self.k,
            rho: self.rho + o.rho,
            u: self.u + o.u,
            e: self.e + o.e,
            b: self.b + o.b,
        }
    }

    pub fn sub(&self, o: &SpectralState) -> Self {
        self.add(&o.scaled(C64::new(-1.0, 0.0)))
    }

    /// Flattens to 20 reals in the order `rho, u, E, B` (re/im interleaved).
    pub fn to_flat(&self) -> [f64; 20] {
        let mut out = [0.0; 20];
        let mut idx = 0;
        let push = |c: C64, out: &mut [f64; 20], idx: &mut usize| {
            out[*idx] = c.re;
            out[*idx + 1] = c.im;
            *idx += 2;
        };
        push(self.rho, &mut out, &mut idx);
        for v in [self.u, self.e, self.b] {
            for j in 0..3 {
                push(v.0[j], &mut out, &mut idx);
            }
        }
        out
    }

    pub fn from_flat(k: Vec3, y: &[f64]) -> Self {
        assert!(y.len() >= 20);
        let c = |i: usize| C64::new(y[2 * i], y[2 * i + 1]);
        SpectralState {
            k,
            rho: c(0),
            u: CVec3([c(1), c(2), c(3)]),
            e: CVec3([c(4), c(5), c(6)]),
            b: CVec3([c(7), c(8), c(9)]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SpectralState {
        SpectralState {
            k: Vec3::new(0.3, -0.4, 1.2),
            rho: C64::new(0.1, -0.2),
            u: CVec3([C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-0.5, 0.5)]),
            e: CVec3([C64::new(0.2, 0.1), C64::new(-0.3, 0.0), C64::new(0.0, 0.7)]),
            b: CVec3([C64::new(0.0, -0.1), C64::new(0.4, 0.0), C64::new(0.6, 0.2)]),
        }
    }

    #[test]
    fn flat_round_trip() {
        let s = sample();
        let t = SpectralState::from_flat(s.k, &s.to_flat());
        assert_eq!(s, t);
    }

    #[test]
    fn weighted_norm_reduces_to_plain_at_gamma_one() {
        let s = sample();
        assert!((s.weighted_norm_sq(1.0) - s.norm_sq()).abs() < 1e-14);
    }
}
