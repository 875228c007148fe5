//! Time-frequency Lyapunov functional of the linearized system.
//!
//! The functional augments the gamma-weighted base energy with three small
//! interactive cross terms,
//!
//! ```text
//! E(U) = gamma|rho|^2 + |u|^2 + |E|^2 + |B|^2
//!      + k1 Re(u | ik rho) / (1+|k|^2)
//!      + k2 |k|^2 Re(u | E) / (1+|k|^2)^2
//!      + k3 Re(-ik x B | E) / (1+|k|^2)^2 ,
//! ```
//!
//! where `(a | b)` pairs `a` with the conjugate of `b`.  For admissible
//! weights it is equivalent to `|U|^2` and satisfies
//! `dE/dt + lambda w(|k|) E <= 0` with the regularity-loss weight
//! `w(|k|) = |k|^2 / (1+|k|^2)^2`.  The constants are nowhere explicit in the
//! theory; this module fits them numerically and asserts only positivity.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::oracle::{integrate_linear, Trajectory};
use crate::state::SpectralState;
use crate::util::linear_fit;
use crate::vec3::{ik_cross, ik_dot};
use crate::{Error, Result};

/// Weights of the three interactive terms.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KappaWeights {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
}

impl Default for KappaWeights {
    fn default() -> Self {
        // kappa2^{3/2} = 1e-3 < kappa3, kappa2 <= kappa1/10, kappa1 <= 1/2.
        KappaWeights { kappa1: 0.1, kappa2: 0.01, kappa3: 0.005 }
    }
}

impl KappaWeights {
    pub const ZERO: KappaWeights = KappaWeights { kappa1: 0.0, kappa2: 0.0, kappa3: 0.0 };

    /// Operational admissibility: `0 < k3`, `k2^{3/2} < k3`, `k2 <= k1/10`,
    /// `k1 <= 1/2`.
    pub fn is_admissible(&self) -> bool {
        self.kappa1 > 0.0
            && self.kappa2 > 0.0
            && self.kappa3 > 0.0
            && self.kappa2.powf(1.5) < self.kappa3
            && self.kappa2 <= self.kappa1 / 10.0
            && self.kappa1 <= 0.5
    }
}

/// The regularity-loss dissipation weight `|k|^2 / (1 + |k|^2)^2`.
pub fn dissipation_weight(kmag: f64) -> f64 {
    let k2 = kmag * kmag;
    k2 / ((1.0 + k2) * (1.0 + k2))
}

/// Evaluates the Lyapunov functional at one spectral state.
pub fn lyapunov_value(state: &SpectralState, kappa: &KappaWeights, gamma: f64) -> f64 {
    let k = state.k;
    let k2 = k.dot(k);
    let base = state.weighted_norm_sq(gamma);

    // (u | ik rho): conjugate goes on the second argument.
    let ikrho = k.as_complex() * (C64::new(0.0, 1.0) * state.rho);
    let t1 = state.u.dot_conj(ikrho).re / (1.0 + k2);

    let t2 = k2 * state.u.dot_conj(state.e).re / ((1.0 + k2) * (1.0 + k2));

    let mikxb = -ik_cross(k, state.b);
    let t3 = mikxb.dot_conj(state.e).re / ((1.0 + k2) * (1.0 + k2));

    base + kappa.kappa1 * t1 + kappa.kappa2 * t2 + kappa.kappa3 * t3
}

/// Result of the equivalence scan `c_low |U|^2 <= E(U) <= c_high |U|^2`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EquivalenceScan {
    pub c_low: f64,
    pub c_high: f64,
    pub samples: usize,
}

/// Minimizes and maximizes `E/|U|^2` over random states and log-spaced
/// wavenumbers.
pub fn equivalence_scan(
    kappa: &KappaWeights,
    gamma: f64,
    samples: usize,
    k_range: (f64, f64),
    seed: u64,
) -> EquivalenceScan {
    use rand::SeedableRng;
    let ratios: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let kmag = log_uniform(&mut rng, k_range);
            let st = random_state(&mut rng, kmag, false);
            lyapunov_value(&st, kappa, gamma) / st.norm_sq()
        })
        .collect();
    let c_low = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let c_high = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    EquivalenceScan { c_low, c_high, samples }
}

fn log_uniform(rng: &mut impl rand::Rng, range: (f64, f64)) -> f64 {
    let (a, b) = (range.0.ln(), range.1.ln());
    (a + (b - a) * rng.random::<f64>()).exp()
}

/// Random unit-norm state at `|k| = kmag` with a random direction;
/// compatible if `compatible` is set.
pub fn random_state(rng: &mut impl rand::Rng, kmag: f64, compatible: bool) -> SpectralState {
    use crate::vec3::{CVec3, Vec3};
    use rand_distr::StandardNormal;
    let mut n = || -> f64 { rng.sample(StandardNormal) };
    let dir = loop {
        let v = Vec3::new(n(), n(), n());
        if v.norm() > 1e-3 {
            break v.unit();
        }
    };
    let k = dir * kmag;
    let mut cv = |_| CVec3([C64::new(n(), n()), C64::new(n(), n()), C64::new(n(), n())]);
    let u = cv(());
    let e = cv(());
    let mut b = cv(());
    let mut rho = C64::new(n(), n());
    if compatible {
        b = b.perp_to(dir);
        rho = -ik_dot(k, e);
    }
    let st = SpectralState { k, rho, u, e, b };
    st.scaled(C64::new(1.0 / st.norm(), 0.0))
}

/// Outcome of the dissipation-inequality fit.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DissipationReport {
    /// Largest `lambda` such that `dE/dt + lambda w E <= eps_num` on every
    /// sample; nonpositive values mean the inequality failed somewhere.
    pub lambda_fitted: f64,
    pub modes: usize,
    pub eps_num: f64,
    /// `(|k|, t, (eps - dE/dt)/(w E))` of the binding sample.
    pub worst: Option<(f64, f64, f64)>,
    /// Number of samples where the measured `dE/dt` exceeded `eps_num`.
    pub violations: usize,
}

/// Numerical slack absorbing finite-difference and integration noise.
pub const EPS_NUM: f64 = 1e-9;

/// Step of the uniform dense-output grid used for `dE/dt`.
pub const FD_STEP: f64 = 1e-3;

/// Measures `dE/dt` along oracle trajectories by fourth-order central
/// differences on a uniform grid with step [`FD_STEP`] and returns the
/// largest `lambda` with `dE/dt + lambda w(|k|) E <= eps_num` on all samples.
///
/// Trajectories start from random compatible unit states at the supplied
/// wavenumbers.
pub fn verify_dissipation(
    kappa: &KappaWeights,
    k_samples: &[f64],
    gamma: f64,
    t_end: f64,
    seed: u64,
) -> Result<DissipationReport> {
    if k_samples.is_empty() {
        return Err(Error::invalid("verify_dissipation needs at least one mode"));
    }
    let per_mode: Vec<(f64, f64, f64, usize)> = k_samples
        .par_iter()
        .enumerate()
        .map(|(i, &kmag)| -> Result<(f64, f64, f64, usize)> {
            use rand::SeedableRng;
            let mut rng =
                rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x2545_f491_4f6c_dd1d));
            let st = random_state(&mut rng, kmag, true);
            let traj = integrate_linear(st.k, &st, t_end, 1e-12, gamma)?;
            let w = dissipation_weight(kmag);
            let h = FD_STEP;
            let n = (t_end / h).floor() as usize;
            let energies: Vec<f64> = (0..=n)
                .map(|j| lyapunov_value(&traj.sample(j as f64 * h), kappa, gamma))
                .collect();
            let mut lambda = f64::INFINITY;
            let mut worst_t = 0.0;
            let mut viol = 0usize;
            for j in 2..(n - 1) {
                let de = (-energies[j + 2] + 8.0 * energies[j + 1] - 8.0 * energies[j - 1]
                    + energies[j - 2])
                    / (12.0 * h);
                let we = w * energies[j];
                if we <= 0.0 {
                    continue;
                }
                let lam = (EPS_NUM - de) / we;
                if lam < lambda {
                    lambda = lam;
                    worst_t = j as f64 * h;
                }
                if de > EPS_NUM {
                    viol += 1;
                }
            }
            Ok((kmag, worst_t, lambda, viol))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut lambda_fitted = f64::INFINITY;
    let mut worst = None;
    let mut violations = 0;
    for &(kmag, t, lam, viol) in &per_mode {
        violations += viol;
        if lam < lambda_fitted {
            lambda_fitted = lam;
            worst = Some((kmag, t, lam));
        }
    }
    Ok(DissipationReport {
        lambda_fitted,
        modes: k_samples.len(),
        eps_num: EPS_NUM,
        worst,
        violations,
    })
}

/// Fitted constants of the pointwise bound
/// `|U(t,k)| <= C exp(-lambda w(|k|) t) |U(0,k)|`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BoundFit {
    pub c: f64,
    pub lambda: f64,
    /// Worst-case excess of `log|U| - log(C) + lambda w t` on the validation
    /// set; nonpositive means the bound holds everywhere.
    pub max_violation: f64,
    pub train_trajectories: usize,
    pub validation_trajectories: usize,
}

/// Sampled modulus history of one trajectory, for bound fitting.
#[derive(Debug, Clone)]
pub struct ModulusHistory {
    pub kmag: f64,
    pub times: Vec<f64>,
    /// `|U(t)| / |U(0)|`.
    pub ratios: Vec<f64>,
}

impl ModulusHistory {
    pub fn from_trajectory(traj: &Trajectory, times: &[f64]) -> Self {
        let u0 = traj.sample(0.0).norm();
        ModulusHistory {
            kmag: traj.k.norm(),
            times: times.to_vec(),
            ratios: times.iter().map(|&t| traj.sample(t).norm() / u0).collect(),
        }
    }
}

/// Two-stage fit: `lambda` from the worst-case decay slope of
/// `log ratio` against `w(|k|) t` (shrunk by 0.8 for a safety margin), then
/// `C` as the smallest constant covering every training sample with a 25%
/// margin.  `max_violation` is evaluated on the held-out set.
pub fn fit_pointwise_bound(train: &[ModulusHistory], validate: &[ModulusHistory]) -> BoundFit {
    let mut lambda = f64::INFINITY;
    for h in train {
        let w = dissipation_weight(h.kmag);
        let x: Vec<f64> = h.times.iter().map(|&t| w * t).collect();
        let y: Vec<f64> = h.ratios.iter().map(|&r| r.max(1e-300).ln()).collect();
        let (slope, _) = linear_fit(&x, &y);
        if -slope < lambda {
            lambda = -slope;
        }
    }
    lambda = (0.8 * lambda).max(0.0);

    let mut c: f64 = 1.0; // t = 0 forces C >= 1
    for h in train {
        let w = dissipation_weight(h.kmag);
        for (i, &t) in h.times.iter().enumerate() {
            c = c.max(h.ratios[i] * (lambda * w * t).exp());
        }
    }
    c *= 1.25;

    let mut max_violation = f64::NEG_INFINITY;
    for h in validate {
        let w = dissipation_weight(h.kmag);
        for (i, &t) in h.times.iter().enumerate() {
            let excess = h.ratios[i].max(1e-300).ln() - c.ln() + lambda * w * t;
            max_violation = max_violation.max(excess);
        }
    }
    BoundFit {
        c,
        lambda,
        max_violation,
        train_trajectories: train.len(),
        validation_trajectories: validate.len(),
    }
}
