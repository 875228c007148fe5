//! Roots of the characteristic cubic of the transverse electromagnetic block,
//!
//! ```text
//! F(x) = x^3 + x^2 + (1 + |k|^2) x + |k|^2 .
//! ```
//!
//! `F' = 3x^2 + 2x + 1 + |k|^2 > 0` everywhere, so `F` has exactly one real
//! root `sigma`, and `F(0) = |k|^2 > 0`, `F(-1) = -1 < 0` bracket it inside
//! `(-1, 0)`.  The conjugate pair `beta +- i omega` follows in closed form:
//!
//! ```text
//! beta  = -(sigma + 1) / 2,
//! omega = sqrt(3 sigma^2 + 2 sigma + 3 + 4 |k|^2) / 2 .
//! ```

use crate::{Error, Result};

/// Characteristic root triple at a given wavenumber modulus.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CharTriple {
    /// Wavenumber modulus `|k| > 0`.
    pub kmag: f64,
    /// The unique real root, in `(-1, 0)`.
    pub sigma: f64,
    /// Real part of the complex pair, in `(-1/2, 0)`.
    pub beta: f64,
    /// Imaginary part of the complex pair, `> sqrt(6)/3`.
    pub omega: f64,
}

impl CharTriple {
    /// Normalized cubic residual `|F(sigma)| / (1 + |k|^2)`.
    pub fn residual(&self) -> f64 {
        eval_cubic(self.sigma, self.kmag).abs() / (1.0 + self.kmag * self.kmag)
    }
}

/// Evaluates `F(chi) = chi^3 + chi^2 + (1 + |k|^2) chi + |k|^2`.
pub fn eval_cubic(chi: f64, kmag: f64) -> f64 {
    let k2 = kmag * kmag;
    ((chi + 1.0) * chi + (1.0 + k2)) * chi + k2
}

fn eval_cubic_deriv(chi: f64, kmag: f64) -> f64 {
    (3.0 * chi + 2.0) * chi + 1.0 + kmag * kmag
}

/// Below this wavenumber the Newton residual floor dominates; the root is
/// `-|k|^2` to double precision (the next correction is `O(|k|^6)`).
const KMAG_SERIES: f64 = 1e-8;

fn beta_omega(sigma: f64, kmag: f64) -> (f64, f64) {
    let beta = -(sigma + 1.0) / 2.0;
    let omega = 0.5 * ((3.0 * sigma + 2.0) * sigma + 3.0 + 4.0 * kmag * kmag).sqrt();
    (beta, omega)
}

/// Solves `F = 0` for the root triple at `|k| = kmag`.
///
/// Bracketed Newton from the initial guess `-|k|^2 / (1 + |k|^2)` (accurate in
/// both asymptotic regimes), falling back to bisection whenever an iterate
/// would leave the current bracket.  The residual is driven below
/// `1e-14 * (1 + |k|^2)`.
pub fn solve_characteristic(kmag: f64) -> Result<CharTriple> {
    if !(kmag > 0.0) || !kmag.is_finite() {
        return Err(Error::invalid(format!("kmag must be positive, got {kmag}")));
    }
    if kmag < KMAG_SERIES {
        let sigma = -kmag * kmag;
        let (beta, omega) = beta_omega(sigma, kmag);
        return Ok(CharTriple { kmag, sigma, beta, omega });
    }

    let k2 = kmag * kmag;
    let (mut lo, mut hi) = (-1.0, 0.0);
    if !(eval_cubic(lo, kmag) < 0.0 && eval_cubic(hi, kmag) > 0.0) {
        return Err(Error::RootBracketing { kmag });
    }

    let mut x = -k2 / (1.0 + k2);
    let mut best = (f64::INFINITY, x);
    for _ in 0..100 {
        let f = eval_cubic(x, kmag);
        if f.abs() < best.0 {
            best = (f.abs(), x);
        }
        // evaluation noise floor of the Horner sum
        let floor = f64::EPSILON * (k2 + x.abs() * (1.0 + k2));
        if f.abs() <= floor {
            break;
        }
        if f > 0.0 {
            hi = x;
        } else if f < 0.0 {
            lo = x;
        } else {
            break;
        }
        let mut next = x - f / eval_cubic_deriv(x, kmag);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == x {
            break; // interval exhausted at machine precision
        }
        x = next;
    }
    let sigma = if eval_cubic(x, kmag).abs() <= best.0 { x } else { best.1 };
    let (beta, omega) = beta_omega(sigma, kmag);
    let t = CharTriple { kmag, sigma, beta, omega };
    // contract: |F(sigma)| <= 1e-14 (1 + |k|^2), with large margin in practice
    if t.residual() <= 1e-14 {
        Ok(t)
    } else {
        Err(Error::RootBracketing { kmag })
    }
}

/// `d sigma / d|k|` by implicit differentiation of `F(sigma(|k|)) = 0`:
///
/// ```text
/// sigma' = -2 |k| (1 + sigma) / (3 sigma^2 + 2 sigma + 1 + |k|^2) < 0 .
/// ```
pub fn sigma_derivative(kmag: f64) -> Result<f64> {
    let t = solve_characteristic(kmag)?;
    Ok(-2.0 * kmag * (1.0 + t.sigma) / eval_cubic_deriv(t.sigma, kmag))
}
