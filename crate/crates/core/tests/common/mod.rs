//! Shared test oracles, independent of the implementation paths they check.

use emlab::state::SpectralState;
use emlab::vec3::{ik_dot, CVec3, Vec3};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bisection root of `x^3 + x^2 + (1+k^2) x + k^2` on `(-1, 0)`, driven to an
/// interval of width `tol`.  Shares nothing with the production solver.
pub fn bisect_root(kmag: f64, tol: f64) -> f64 {
    let k2 = kmag * kmag;
    let f = |x: f64| x * x * x + x * x + (1.0 + k2) * x + k2;
    let (mut lo, mut hi) = (-1.0, 0.0);
    assert!(f(lo) < 0.0 && f(hi) > 0.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit_dir(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
        );
        if v.norm() > 1e-2 {
            return v.unit();
        }
    }
}

pub fn random_cvec(rng: &mut ChaCha8Rng) -> CVec3 {
    let mut c = || C64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0);
    CVec3([c(), c(), c()])
}

/// Random compatible state at `|k| = kmag` with a random direction.
pub fn random_compatible_state(rng: &mut ChaCha8Rng, kmag: f64) -> SpectralState {
    let dir = random_unit_dir(rng);
    let k = dir * kmag;
    let e = random_cvec(rng);
    SpectralState {
        k,
        rho: -ik_dot(k, e),
        u: random_cvec(rng),
        e,
        b: random_cvec(rng).perp_to(dir),
    }
}

/// Random transverse triple at wavevector `k`.
pub fn random_transverse(rng: &mut ChaCha8Rng, k: Vec3) -> emlab::propagator::TransverseTriple {
    let kt = k.unit();
    emlab::propagator::TransverseTriple {
        m1: random_cvec(rng).perp_to(kt),
        m2: random_cvec(rng).perp_to(kt),
        m3: random_cvec(rng).perp_to(kt),
    }
}
